"""The co-training loop.

Two SC-Nets train on overlapping subsets of the image pool.  Every
``ema_period`` epochs each model predicts the *other* model's subset; those
predictions are folded into per-image running averages by ``pointprop ema``
and merged with the cluster labels by ``pointprop merge``, and the resulting
pseudo labels supervise the peer through the KL term.  The toolkit is only
ever touched through subprocesses and files.

``prepare`` builds everything ``train`` assumes: the pipeline artifacts
(h/vor/clu per image) and the id splits (test/val/pool, then pool ->
part_a/part_b via ``pointprop split``).
"""

import os
from dataclasses import dataclass, field

import numpy as np
import torch

from . import data, formats, losses
from .data import MissingArtifact
from .model import ScNet
from .toolkit import Toolkit


class TrainAbort(RuntimeError):
    pass


@dataclass(frozen=True)
class Layout:
    """Directory layout; inputs on the left, ``out`` owns all run state."""

    images: str
    points: str
    artifacts: str
    splits: str
    out: str
    gt: str = ""

    def split_file(self, name):
        return os.path.join(self.splits, name + ".txt")

    def artifact(self, name, suffix):
        return os.path.join(self.artifacts, "%s.%s" % (name, suffix))


@dataclass
class TrainResult:
    best_epoch: int
    best_val: float
    curves: list
    checkpoint: str
    last: str
    parity_files: list = field(default_factory=list)


def prepare(cfg, layout):
    """Toolkit pipeline over the corpus, then the id splits."""
    tk = Toolkit(cfg.toolkit, cfg.workers)
    os.makedirs(layout.artifacts, exist_ok=True)
    os.makedirs(layout.splits, exist_ok=True)
    cfg_path = os.path.join(layout.splits, "pointprop.cfg")
    formats.atomic_write(cfg_path, ("seed = %d\n" % cfg.seed).encode("ascii"))
    tk.pipeline(cfg_path, layout.images, layout.points, layout.artifacts,
                workers=cfg.workers)

    names = sorted(
        os.path.splitext(fn)[0]
        for fn in os.listdir(layout.images)
        if fn.endswith(".png")
    )
    if len(names) < cfg.test_count + cfg.val_count + 2:
        raise ValueError("only %d images for test=%d val=%d plus a train pool"
                         % (len(names), cfg.test_count, cfg.val_count))
    rng = np.random.default_rng(cfg.seed)
    order = [names[i] for i in rng.permutation(len(names))]
    test = sorted(order[:cfg.test_count])
    val = sorted(order[cfg.test_count:cfg.test_count + cfg.val_count])
    pool = sorted(order[cfg.test_count + cfg.val_count:])
    formats.write_id_list(test, layout.split_file("test"))
    formats.write_id_list(val, layout.split_file("val"))
    formats.write_id_list(pool, layout.split_file("pool"))
    tk.split(layout.split_file("pool"), cfg.split_ratio, cfg.seed,
             layout.split_file("part_a"), layout.split_file("part_b"))


def _build_models(cfg):
    make = lambda: ScNet(cfg.seg_levels, cfg.seg_base,
                         cfg.color_levels, cfg.color_base)
    return make(), make()


def _read_split(layout, name):
    path = layout.split_file(name)
    if not os.path.exists(path):
        raise MissingArtifact("missing split file: %s (run prepare first)" % path)
    return formats.read_id_list(path)


def _refresh(cfg, layout, tk, sides, samples):
    """Write peer predictions, fold them via ema+merge, reload pseudo labels.

    ``sides`` maps "a"/"b" to (subset names, peer model).  The subprocess
    batches run on a small pool but this function blocks until both passes
    (all ema, then all merge) are complete.
    """
    ema_calls, merge_calls = [], []
    for side, (names, peer) in sides.items():
        for sub in ("refresh", "ema", "pseudo"):
            os.makedirs(os.path.join(layout.out, sub, side), exist_ok=True)
        peer.eval()
        with torch.no_grad():
            for start in range(0, len(names), 16):
                chunk = names[start:start + 16]
                h = torch.stack([samples[n].h for n in chunk])
                probs = peer(h)
                for j, name in enumerate(chunk):
                    pred = os.path.join(layout.out, "refresh", side, name + ".pfg")
                    formats.write_probmap(probs[j, 0].numpy(), pred)
                    state = os.path.join(layout.out, "ema", side, name + ".pfg")
                    pseudo = os.path.join(layout.out, "pseudo", side, name + ".pfg")
                    ema_calls.append(tk.ema_args(state, pred, cfg.ema_decay, state))
                    merge_calls.append(
                        tk.merge_args(state, layout.artifact(name, "clu.png"), pseudo))
    tk.run_many(ema_calls)
    tk.run_many(merge_calls)
    pseudos = {}
    for side, (names, _) in sides.items():
        pseudos[side] = {}
        for name in names:
            arr = formats.read_probmap(
                os.path.join(layout.out, "pseudo", side, name + ".pfg"))
            pseudos[side][name] = torch.from_numpy(arr)
    return pseudos


def _parity(cfg, layout, tk, model, samples, pseudo_a, names, epoch):
    """Serialize predictions and compare each loss term against the CLI.

    The colorization comparison quantizes the predicted image to the 8-bit
    grid first, because that is what surviving the PNG roundtrip means; the
    probability map needs no such step (PFG1 stores float32 exactly).
    """
    pdir = os.path.join(layout.out, "parity", "epoch_%03d" % epoch)
    os.makedirs(pdir, exist_ok=True)
    rows = []
    model.eval()
    with torch.no_grad():
        for name in names:
            s = samples[name]
            prob, rgb = model(s.h.unsqueeze(0), with_color=True)
            prob32 = prob[0, 0]
            pred_path = os.path.join(pdir, name + ".pred.pfg")
            formats.write_probmap(prob32.numpy(), pred_path)
            pred64 = prob32.double()

            rows.append((name, "vor",
                         float(losses.masked_bce(pred64, s.vor)),
                         tk.loss_value("vor", pred=pred_path,
                                       labels=layout.artifact(name, "vor.png"))))
            rows.append((name, "clu",
                         float(losses.masked_bce(pred64, s.clu)),
                         tk.loss_value("clu", pred=pred_path,
                                       labels=layout.artifact(name, "clu.png"))))
            if cfg.use_cot:
                pseudo_path = os.path.join(layout.out, "pseudo", "a", name + ".pfg")
                rows.append((name, "cot",
                             float(losses.binary_kl(pseudo_a[name].double(), pred64)),
                             tk.loss_value("cot", pseudo=pseudo_path, pred=pred_path)))
            if cfg.use_color:
                rgbq = torch.round(rgb[0].double() * 255.0) / 255.0
                color_path = os.path.join(pdir, name + ".color.png")
                formats.write_rgb(rgbq.permute(1, 2, 0).numpy(), color_path)
                target_path = os.path.join(layout.images, name + ".png")
                target = torch.from_numpy(
                    formats.read_rgb(target_path)).permute(2, 0, 1).double()
                rows.append((name, "color",
                             float(losses.color_mse(rgbq, target)),
                             tk.loss_value("color", pred=color_path,
                                           target=target_path)))
    out_csv = os.path.join(layout.out, "parity", "epoch_%03d.csv" % epoch)
    body = "image,term,trainer,toolkit,abs_diff\n"
    for name, term, mine, ref in rows:
        body += "%s,%s,%.12f,%.12f,%.3e\n" % (name, term, mine, ref, abs(mine - ref))
    formats.atomic_write(out_csv, body.encode("ascii"))
    return out_csv


def _validate(cfg, layout, model_a, model_b, samples, val_names, epoch):
    """Supervised CE terms on the two-model mean prediction.

    Kept free of the scheduled alpha/beta weights so epochs stay comparable;
    the per-epoch mean predictions are written under preds/.
    """
    pdir = os.path.join(layout.out, "preds", "epoch_%03d" % epoch)
    os.makedirs(pdir, exist_ok=True)
    model_a.eval()
    model_b.eval()
    total = 0.0
    with torch.no_grad():
        h = torch.stack([samples[n].h for n in val_names])
        probs = (model_a(h) + model_b(h)) / 2.0
        for j, name in enumerate(val_names):
            s = samples[name]
            prob = probs[j, 0]
            formats.write_probmap(prob.numpy(), os.path.join(pdir, name + ".pfg"))
            term = losses.masked_bce(prob, s.vor)
            if cfg.use_clu:
                term = term + losses.masked_bce(prob, s.clu)
            total += float(term)
    return total / len(val_names)


def train(cfg, layout):
    tk = Toolkit(cfg.toolkit, cfg.workers)
    part_a = _read_split(layout, "part_a")
    part_b = _read_split(layout, "part_b")
    val_names = _read_split(layout, "val")
    all_names = sorted(set(part_a) | set(part_b) | set(val_names))
    samples = data.load_samples(all_names, layout.images, layout.artifacts)
    os.makedirs(layout.out, exist_ok=True)

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    model_a, model_b = _build_models(cfg)
    optims = {
        "a": torch.optim.Adam(model_a.parameters(), lr=cfg.lr,
                              weight_decay=cfg.weight_decay),
        "b": torch.optim.Adam(model_b.parameters(), lr=cfg.lr,
                              weight_decay=cfg.weight_decay),
    }
    scheds = {
        side: torch.optim.lr_scheduler.StepLR(
            opt, step_size=cfg.lr_step, gamma=cfg.lr_gamma)
        for side, opt in optims.items()
    }
    models = {"a": model_a, "b": model_b}
    subsets = {"a": part_a, "b": part_b}
    sides = {"a": (part_a, model_b), "b": (part_b, model_a)}  # peer predicts

    parity_epochs = set(cfg.parity_epoch_list())
    parity_names = sorted(part_a)[:cfg.parity_images]
    parity_files = []

    pseudos = {"a": {}, "b": {}}
    if cfg.use_cot:
        pseudos = _refresh(cfg, layout, tk, sides, samples)
    if 0 in parity_epochs:
        parity_files.append(
            _parity(cfg, layout, tk, model_a, samples, pseudos["a"],
                    parity_names, 0))

    curves = []
    best_val, best_epoch = float("inf"), -1
    best_path = os.path.join(layout.out, "best.pt")
    last_path = os.path.join(layout.out, "last.pt")

    for epoch in range(1, cfg.epochs + 1):
        alpha_w = losses.alpha(epoch, cfg.epochs, cfg.eta)
        beta_w = losses.beta(epoch, cfg.epochs, cfg.epsilon)
        epoch_train = {}
        for side in ("a", "b"):
            model, opt = models[side], optims[side]
            names = subsets[side]
            model.train()
            order = [names[i] for i in rng.permutation(len(names))]
            total, seen = 0.0, 0
            for start in range(0, len(order), cfg.batch_size):
                chunk = order[start:start + cfg.batch_size]
                per_image = []
                for name in chunk:
                    s = samples[name]
                    tensors = [s.h, s.vor, s.clu, s.rgb]
                    if cfg.use_cot:
                        tensors.append(pseudos[side][name])
                    if cfg.augment:
                        tensors = data.augment(tensors, rng)
                    per_image.append(tensors)
                h = torch.stack([t[0] for t in per_image])
                out = model(h, with_color=cfg.use_color)
                prob, rgb_pred = out if cfg.use_color else (out, None)
                items = []
                for j, tensors in enumerate(per_image):
                    term = losses.masked_bce(prob[j, 0], tensors[1])
                    if cfg.use_clu:
                        term = term + losses.masked_bce(prob[j, 0], tensors[2])
                    if cfg.use_cot:
                        term = term + alpha_w * losses.binary_kl(
                            tensors[4], prob[j, 0])
                    if cfg.use_color:
                        term = term + beta_w * losses.color_mse(
                            rgb_pred[j], tensors[3])
                    items.append(term)
                batch_loss = torch.stack(items).mean()
                if not torch.isfinite(batch_loss):
                    raise TrainAbort(
                        "non-finite loss at epoch %d, model %s, batch %d"
                        % (epoch, side, start // cfg.batch_size))
                opt.zero_grad()
                batch_loss.backward()
                opt.step()
                total += float(batch_loss.detach()) * len(chunk)
                seen += len(chunk)
            epoch_train[side] = total / seen
            scheds[side].step()

        val_loss = _validate(cfg, layout, model_a, model_b,
                             samples, val_names, epoch)
        if val_loss < best_val:
            best_val, best_epoch = val_loss, epoch
            torch.save({"epoch": epoch,
                        "model_a": model_a.state_dict(),
                        "model_b": model_b.state_dict()}, best_path)
        curves.append({
            "epoch": epoch,
            "train_a": epoch_train["a"],
            "train_b": epoch_train["b"],
            "val": val_loss,
            "alpha": alpha_w,
            "beta": beta_w,
            "lr": scheds["a"].get_last_lr()[0],
        })

        if cfg.use_cot and epoch % cfg.ema_period == 0:
            pseudos = _refresh(cfg, layout, tk, sides, samples)
        if epoch in parity_epochs:
            parity_files.append(
                _parity(cfg, layout, tk, model_a, samples, pseudos["a"],
                        parity_names, epoch))

    torch.save({"epoch": cfg.epochs,
                "model_a": model_a.state_dict(),
                "model_b": model_b.state_dict()}, last_path)
    header = "epoch,train_a,train_b,val,alpha,beta,lr\n"
    body = "".join(
        "%(epoch)d,%(train_a).9f,%(train_b).9f,%(val).9f,"
        "%(alpha).9f,%(beta).9f,%(lr).9f\n" % row
        for row in curves)
    formats.atomic_write(os.path.join(layout.out, "curves.csv"),
                         (header + body).encode("ascii"))
    return TrainResult(best_epoch, best_val, curves, best_path, last_path,
                       parity_files)
