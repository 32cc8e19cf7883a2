"""End-to-end batch pipeline: images + points -> labels, pseudo labels,
metrics, and a deterministic manifest.

The manifest records input/output names with content hashes, the config
hash, and the seed, so two runs over the same inputs can be compared by
hashing their manifests alone.
"""

import concurrent.futures
import hashlib
import json
import os
from dataclasses import dataclass, fields

from .coarse_labels import ClusterConfig, cluster_label, voronoi_label
from . import dataio
from .label_propagation import merge_pseudo
from .metrics import evaluate
from .stain_separation import StainConfig, collapse_to_gray, estimate_stains, reconstruct_component, to_od


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    # stain separation
    stain_iters: int = 300
    stain_tol: float = 1e-6
    tissue_threshold: float = 0.15
    min_tissue_fraction: float = 0.01
    # voronoi labels
    point_radius: int = 2
    edge_width: int = 2
    # cluster labels
    rgb_weight: float = 1.0
    dist_weight: float = 0.5
    d_max: float = 20.0
    kmeans_iters: int = 100
    kmeans_tol: float = 1e-4
    min_area: int = 20
    opening_radius: int = 1
    # schedules (consumed by trainers; validated here)
    eta: float = 1.0
    epsilon: float = 0.1
    n_max: int = 100
    # pseudo labels
    ema_decay: float = 0.5
    ema_period: int = 3
    # evaluation
    threshold: float = 0.5
    eval_min_area: int = 20

    def __post_init__(self):
        # delegate range checks to the owning configs
        self.stain_config()
        self.cluster_config()
        if not 0.0 < self.ema_decay <= 1.0:
            raise ValueError("ema_decay must lie in (0, 1]")
        if self.ema_period < 1:
            raise ValueError("ema_period must be positive")
        if self.eta < 0 or self.epsilon < 0:
            raise ValueError("schedule weights must be non-negative")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.eval_min_area < 0 or self.min_area < 0:
            raise ValueError("min_area must be non-negative")
        if self.point_radius < 0:
            raise ValueError("point_radius must be non-negative")
        if self.edge_width < 2:
            raise ValueError("edge_width must be at least 2")

    def stain_config(self):
        return StainConfig(
            iters=self.stain_iters,
            tol=self.stain_tol,
            seed=self.seed,
            tissue_threshold=self.tissue_threshold,
            min_tissue_fraction=self.min_tissue_fraction,
        )

    def cluster_config(self):
        return ClusterConfig(
            rgb_weight=self.rgb_weight,
            dist_weight=self.dist_weight,
            d_max=self.d_max,
            kmeans_iters=self.kmeans_iters,
            kmeans_tol=self.kmeans_tol,
            seed=self.seed,
            min_area=self.min_area,
            opening_radius=self.opening_radius,
        )

    def canonical_text(self):
        lines = ["%s=%r" % (f.name, getattr(self, f.name)) for f in fields(self)]
        return "\n".join(lines) + "\n"

    def hash(self):
        return hashlib.sha256(self.canonical_text().encode("ascii")).hexdigest()


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def parse_config(text, seed_override=None):
    """Parse line-oriented ``key=value`` text into a PipelineConfig.

    Blank lines and ``#`` comments are skipped; unknown keys are rejected.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError("config line %d is not key=value" % lineno)
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_TYPES:
            raise ValueError("unknown config key %r (line %d)" % (key, lineno))
        if key in values:
            raise ValueError("duplicate config key %r (line %d)" % (key, lineno))
        kind = _FIELD_TYPES[key]
        try:
            values[key] = int(raw) if kind in (int, "int") else float(raw)
        except ValueError:
            raise ValueError("config key %r has a non-numeric value %r" % (key, raw))
    if seed_override is not None:
        values["seed"] = int(seed_override)
    return PipelineConfig(**values)


def load_config(path, seed_override=None):
    with open(path, "r", encoding="ascii") as fh:
        return parse_config(fh.read(), seed_override)


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _find_pairs(image_dir, points_dir):
    images = {
        os.path.splitext(n)[0]: n
        for n in sorted(os.listdir(image_dir))
        if n.lower().endswith(".png")
    }
    points = {
        os.path.splitext(n)[0]: n
        for n in sorted(os.listdir(points_dir))
        if n.lower().endswith(".csv")
    }
    missing_pts = sorted(set(images) - set(points))
    missing_img = sorted(set(points) - set(images))
    if missing_pts:
        raise ValueError("no points file for image(s): %s" % ", ".join(missing_pts))
    if missing_img:
        raise ValueError("no image for points file(s): %s" % ", ".join(missing_img))
    return [(stem, images[stem], points[stem]) for stem in sorted(images)]


def _process_one(stem, image_name, points_name, cfg, image_dir, points_dir, out_dir,
                 preds_dir, gt_dir):
    image = dataio.read_rgb(os.path.join(image_dir, image_name))
    points = dataio.read_points(os.path.join(points_dir, points_name))
    entry = {
        "stem": stem,
        "inputs": {
            "image": image_name,
            "image_sha256": _sha256_file(os.path.join(image_dir, image_name)),
            "points": points_name,
            "points_sha256": _sha256_file(os.path.join(points_dir, points_name)),
        },
        "outputs": {},
    }

    od = to_od(image)
    model, density = estimate_stains(od, cfg.stain_config())
    h_gray = collapse_to_gray(
        reconstruct_component(model, density, "h", image.illumination)
    )
    dataio.write_gray(h_gray, os.path.join(out_dir, stem + ".h.png"))

    vor = voronoi_label(points, image.width, image.height, cfg.point_radius, cfg.edge_width)
    dataio.write_trilabel(vor, os.path.join(out_dir, stem + ".vor.png"))

    clu = cluster_label(image, points, cfg.cluster_config())
    dataio.write_trilabel(clu, os.path.join(out_dir, stem + ".clu.png"))

    outputs = [stem + ".h.png", stem + ".vor.png", stem + ".clu.png"]

    pred = None
    if preds_dir is not None:
        pred_path = os.path.join(preds_dir, stem + ".pfg")
        if os.path.exists(pred_path):
            pred = dataio.read_probmap(pred_path)
            entry["inputs"]["pred"] = stem + ".pfg"
            entry["inputs"]["pred_sha256"] = _sha256_file(pred_path)
            pseudo = merge_pseudo(pred, clu)
            dataio.write_probmap(pseudo, os.path.join(out_dir, stem + ".pseudo.pfg"))
            outputs.append(stem + ".pseudo.pfg")

    if gt_dir is not None and pred is not None:
        gt_path = os.path.join(gt_dir, stem + ".png")
        if os.path.exists(gt_path):
            gt = dataio.read_instancemap(gt_path)
            entry["inputs"]["gt"] = stem + ".png"
            entry["inputs"]["gt_sha256"] = _sha256_file(gt_path)
            report = evaluate(pred, gt, cfg.threshold, cfg.eval_min_area)
            entry["metrics"] = {
                "accuracy": report.accuracy,
                "f1": report.f1,
                "dice_obj": report.dice_obj,
                "aji": report.aji,
            }

    for name in outputs:
        entry["outputs"][name] = _sha256_file(os.path.join(out_dir, name))
    return entry


def run_pipeline(cfg, image_dir, points_dir, out_dir, preds_dir=None, gt_dir=None,
                 workers=1):
    """Process every image/points pair and write ``manifest.json``.

    Returns the manifest dict.  Any per-image failure aborts the run with
    the image name attached; already-written artifacts for other images are
    left in place but no manifest is produced.
    """
    os.makedirs(out_dir, exist_ok=True)
    pairs = _find_pairs(image_dir, points_dir)

    def work(pair):
        stem, image_name, points_name = pair
        try:
            return _process_one(
                stem, image_name, points_name, cfg,
                image_dir, points_dir, out_dir, preds_dir, gt_dir,
            )
        except Exception as exc:
            raise RuntimeError("image %r: %s" % (stem, exc)) from exc

    if workers > 1 and len(pairs) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(work, pairs))
    else:
        entries = [work(p) for p in pairs]

    entries.sort(key=lambda e: e["stem"])
    manifest = {
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "n_images": len(entries),
        "images": entries,
    }
    body = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    dataio._atomic_write_bytes(os.path.join(out_dir, "manifest.json"), body.encode("ascii"))

    if any("metrics" in e for e in entries):
        lines = ["stem,accuracy,f1,dice_obj,aji"]
        for e in entries:
            if "metrics" in e:
                m = e["metrics"]
                lines.append(
                    "%s,%.6f,%.6f,%.6f,%.6f"
                    % (e["stem"], m["accuracy"], m["f1"], m["dice_obj"], m["aji"])
                )
        dataio._atomic_write_bytes(
            os.path.join(out_dir, "metrics.csv"), ("\n".join(lines) + "\n").encode("ascii")
        )
    return manifest


def manifest_hash(path):
    """Content hash of a written manifest; equal hashes mean equal runs."""
    return _sha256_file(path)
