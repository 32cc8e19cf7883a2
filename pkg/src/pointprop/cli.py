"""Command-line interface: one subcommand per toolkit operation.

Every subcommand validates inputs, writes outputs atomically, and exits
non-zero on error without leaving partial files.  ``POINTPROP_SEED``
overrides any seed given by flag or config file.

Heavier modules (scipy-backed labelling/metrics, matplotlib) are imported
inside the handlers that need them: trainers invoke ``ema``/``merge``/
``tile``/``stitch`` hundreds of times per run, and those paths only need
array IO.
"""

import argparse
import os
import sys

from . import dataio
from .core_types import ProbMap
from .label_propagation import (
    colorization_loss,
    kl_cot_loss,
    merge_pseudo,
    partial_ce_loss,
)


def _parse_size(text):
    try:
        w, h = text.lower().split("x")
        w, h = int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError("size must be WxH, e.g. 64x64")
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return w, h


def _seed(value):
    env = os.environ.get("POINTPROP_SEED")
    return int(env) if env is not None else value


def cmd_stain_separate(args):
    from .stain_separation import StainConfig, separate

    image = dataio.read_rgb(args.infile)
    cfg = StainConfig(
        iters=args.iters,
        tol=args.tol,
        seed=_seed(args.seed),
        tissue_threshold=args.tissue_threshold,
    )
    h_gray, e_gray, model, _ = separate(image, cfg)
    dataio.write_gray(h_gray, args.out_h)
    dataio.write_gray(e_gray, args.out_e)
    if args.out_model:
        dataio.write_stain_model(model, args.out_model)
    return 0


def cmd_gen_voronoi(args):
    from .coarse_labels import voronoi_label

    points = dataio.read_points(args.points)
    w, h = args.size
    label = voronoi_label(points, w, h, args.point_radius, args.edge_width)
    dataio.write_trilabel(label, args.out)
    return 0


def cmd_gen_cluster(args):
    from .coarse_labels import ClusterConfig, cluster_label

    image = dataio.read_rgb(args.image)
    points = dataio.read_points(args.points)
    cfg = ClusterConfig(
        rgb_weight=args.rgb_weight,
        dist_weight=args.dist_weight,
        d_max=args.dmax,
        kmeans_iters=args.kmeans_iters,
        kmeans_tol=args.kmeans_tol,
        seed=_seed(args.seed),
        min_area=args.min_area,
        opening_radius=args.opening_radius,
    )
    dataio.write_trilabel(cluster_label(image, points, cfg), args.out)
    return 0


def cmd_ema(args):
    pred = dataio.read_probmap(args.pred)
    if os.path.exists(args.state):
        prev = dataio.read_probmap(args.state)
        if (prev.height, prev.width) != (pred.height, pred.width):
            raise ValueError("state and prediction dimensions differ")
        merged = ProbMap(args.decay * pred.values + (1.0 - args.decay) * prev.values)
    else:
        merged = pred  # first update adopts the prediction
    dataio.write_probmap(merged, args.out)
    return 0


def cmd_merge(args):
    ema = dataio.read_probmap(args.ema)
    cluster = dataio.read_trilabel(args.cluster)
    dataio.write_probmap(merge_pseudo(ema, cluster), args.out)
    return 0


def cmd_loss(args):
    if args.kind in ("vor", "clu"):
        pred = dataio.read_probmap(args.pred)
        labels = dataio.read_trilabel(args.labels)
        value = partial_ce_loss(pred, labels)
    elif args.kind == "cot":
        pseudo = dataio.read_probmap(args.pseudo)
        pred = dataio.read_probmap(args.pred)
        value = kl_cot_loss(pseudo, pred, positive_term_only=args.positive_only)
    else:
        pred = dataio.read_rgb(args.pred)
        target = dataio.read_rgb(args.target)
        value = colorization_loss(pred, target)
    print("%.9f" % value)
    return 0


def cmd_eval(args):
    from .metrics import evaluate

    pred = dataio.read_probmap(args.pred)
    gt = dataio.read_instancemap(args.gt)
    report = evaluate(pred, gt, args.threshold, args.min_area)
    print(report.line())
    if args.csv:
        body = "accuracy,f1,dice_obj,aji\n%.6f,%.6f,%.6f,%.6f\n" % (
            report.accuracy,
            report.f1,
            report.dice_obj,
            report.aji,
        )
        dataio._atomic_write_bytes(args.csv, body.encode("ascii"))
    if args.fig:
        from .report import save_eval_figure
        from .metrics import binarize, instances

        pred_inst = instances(binarize(pred, args.threshold), args.min_area)
        save_eval_figure(report, args.fig, gt=gt.canonicalized(), pred=pred_inst)
    return 0


def cmd_perturb(args):
    from .metrics import perturb_points

    points = dataio.read_points(args.points)
    w, h = args.size
    moved = perturb_points(points, args.shift, _seed(args.seed), w, h)
    dataio.write_points(moved, args.out)
    return 0


def cmd_perturb_study(args):
    from .metrics import perturbation_study

    points = dataio.read_points(args.points)
    gt = dataio.read_instancemap(args.gt)
    image = dataio.read_rgb(args.image) if args.image else None
    shifts = [int(s) for s in args.shifts.split(",") if s.strip() != ""]
    rows = perturbation_study(
        points, gt, shifts, args.seeds, base_seed=_seed(args.seed), image=image
    )
    cols = ["shift", "in_nucleus_ratio"]
    if image is not None:
        cols.append("cluster_accuracy")
    lines = [",".join(cols)]
    for r in rows:
        cells = [str(r["shift"])] + ["%.6f" % r[c] for c in cols[1:]]
        lines.append(",".join(cells))
    dataio._atomic_write_bytes(args.out_csv, ("\n".join(lines) + "\n").encode("ascii"))
    if args.out_fig:
        from .report import save_perturbation_figure

        save_perturbation_figure(rows, args.out_fig)
    return 0


def cmd_split(args):
    with open(args.ids, "r", encoding="ascii") as fh:
        ids = [line.strip() for line in fh if line.strip()]
    part_a, part_b = dataio.split_dataset(ids, args.ratio, _seed(args.seed))
    dataio._atomic_write_bytes(args.out_a, ("\n".join(part_a) + "\n").encode("ascii"))
    dataio._atomic_write_bytes(args.out_b, ("\n".join(part_b) + "\n").encode("ascii"))
    return 0


def cmd_tile(args):
    w, h = args.size
    grid = dataio.tile(w, h, args.patch, args.overlap)
    lines = ["x,y"] + ["%d,%d" % (x, y) for x, y in grid.origins]
    dataio._atomic_write_bytes(args.out, ("\n".join(lines) + "\n").encode("ascii"))
    return 0


def cmd_stitch(args):
    w, h = args.size
    base = os.path.dirname(os.path.abspath(args.patches))
    patches = []
    with open(args.patches, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or (lineno == 1 and line == "x,y,path"):
                continue
            cells = line.split(",")
            if len(cells) != 3:
                raise ValueError("%s: line %d is not x,y,path" % (args.patches, lineno))
            x, y, rel = int(cells[0]), int(cells[1]), cells[2]
            patches.append(((x, y), dataio.read_probmap(os.path.join(base, rel))))
    dataio.write_probmap(dataio.stitch(patches, w, h), args.out)
    return 0


def cmd_pipeline(args):
    from .pipeline import load_config, run_pipeline

    seed_env = os.environ.get("POINTPROP_SEED")
    cfg = load_config(args.config, seed_override=seed_env)
    run_pipeline(
        cfg,
        args.images,
        args.points,
        args.out,
        preds_dir=args.preds,
        gt_dir=args.gt,
        workers=args.workers,
    )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pointprop",
        description="Point-annotation label propagation toolkit for nuclei segmentation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stain-separate", help="unmix an H&E image into stain components")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out-h", required=True)
    p.add_argument("--out-e", required=True)
    p.add_argument("--out-model")
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--tissue-threshold", type=float, default=0.15)
    p.set_defaults(func=cmd_stain_separate)

    p = sub.add_parser("gen-voronoi", help="rasterize Voronoi labels from points")
    p.add_argument("--points", required=True)
    p.add_argument("--size", type=_parse_size, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--point-radius", type=int, default=2)
    p.add_argument("--edge-width", type=int, default=2)
    p.set_defaults(func=cmd_gen_voronoi)

    p = sub.add_parser("gen-cluster", help="k-means cluster labels from image + points")
    p.add_argument("--image", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dmax", type=float, default=20.0)
    p.add_argument("--rgb-weight", type=float, default=1.0)
    p.add_argument("--dist-weight", type=float, default=0.5)
    p.add_argument("--kmeans-iters", type=int, default=100)
    p.add_argument("--kmeans-tol", type=float, default=1e-4)
    p.add_argument("--min-area", type=int, default=20)
    p.add_argument("--opening-radius", type=int, default=1)
    p.set_defaults(func=cmd_gen_cluster)

    p = sub.add_parser("ema", help="fold a prediction into a running average")
    p.add_argument("--state", required=True, help="existing average; created if missing")
    p.add_argument("--pred", required=True)
    p.add_argument("--decay", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ema)

    p = sub.add_parser("merge", help="pseudo label from EMA + cluster label")
    p.add_argument("--ema", required=True)
    p.add_argument("--cluster", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("loss", help="reference loss values (9 decimal places)")
    losskind = p.add_subparsers(dest="kind", required=True)
    for kind in ("vor", "clu"):
        q = losskind.add_parser(kind, help="partial cross entropy vs %s labels" % kind)
        q.add_argument("--pred", required=True)
        q.add_argument("--labels", required=True)
    q = losskind.add_parser("cot", help="binary KL co-training loss")
    q.add_argument("--pseudo", required=True)
    q.add_argument("--pred", required=True)
    q.add_argument("--positive-only", action="store_true")
    q = losskind.add_parser("color", help="colorization squared-L2 loss")
    q.add_argument("--pred", required=True)
    q.add_argument("--target", required=True)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("eval", help="score a prediction against instance ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--min-area", type=int, default=20)
    p.add_argument("--csv", help="also write the metrics as CSV")
    p.add_argument("--fig", help="also render a report figure (PNG)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("perturb", help="randomly shift annotation points")
    p.add_argument("--points", required=True)
    p.add_argument("--shift", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=_parse_size, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser(
        "perturb-study", help="in-nucleus ratio (and cluster accuracy) vs shift"
    )
    p.add_argument("--points", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--image", help="regenerate cluster labels per shift when given")
    p.add_argument("--shifts", default="0,2,4,6,8,10")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-fig")
    p.set_defaults(func=cmd_perturb_study)

    p = sub.add_parser("split", help="two overlapping subsets of an id list")
    p.add_argument("--ids", required=True, help="text file, one id per line")
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-a", required=True)
    p.add_argument("--out-b", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("tile", help="plan patch origins for an image size")
    p.add_argument("--size", type=_parse_size, required=True)
    p.add_argument("--patch", type=int, required=True)
    p.add_argument("--overlap", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("stitch", help="average patch probability maps onto a canvas")
    p.add_argument("--size", type=_parse_size, required=True)
    p.add_argument("--patches", required=True, help="CSV of x,y,path rows")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("pipeline", help="batch images+points into labels and a manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preds")
    p.add_argument("--gt")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print("pointprop: error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
