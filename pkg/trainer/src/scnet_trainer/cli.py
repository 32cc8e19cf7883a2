"""Command line entry points for the trainer."""

import argparse
import sys

from . import data, formats
from .ablation import run_ablation
from .config import TrainConfig, load_config
from .infer import infer_dir, load_models
from .toolkit import Toolkit, ToolkitError
from .train import Layout, TrainAbort, prepare, train


def _config(args):
    return load_config(args.config) if args.config else TrainConfig()


def _layout(args):
    return Layout(
        images=args.images,
        points=args.points,
        artifacts=args.artifacts,
        splits=args.splits,
        out=getattr(args, "out", args.splits),
        gt=getattr(args, "gt", "") or "",
    )


def cmd_make_data(args):
    names = data.make_dataset(args.out, args.images, args.size, args.seed)
    print("wrote %d images under %s" % (len(names), args.out))
    return 0


def cmd_prepare(args):
    prepare(_config(args), _layout(args))
    return 0


def cmd_train(args):
    result = train(_config(args), _layout(args))
    print("best epoch %d (val loss %.6f); checkpoint at %s"
          % (result.best_epoch, result.best_val, result.checkpoint))
    return 0


def cmd_infer(args):
    cfg = _config(args)
    names = formats.read_id_list(args.names)
    models = load_models(args.checkpoint, cfg)
    outputs = infer_dir(models, names, args.artifacts, args.out, cfg,
                        Toolkit(cfg.toolkit, cfg.workers))
    print("wrote %d stitched maps under %s" % (len(outputs), args.out))
    return 0


def cmd_ablate(args):
    cfg = _config(args)
    results = run_ablation(cfg, args.data, args.work)
    for tag, scores in results.items():
        print("model %s: dice_obj=%.4f aji=%.4f (best epoch %d)"
              % (tag, scores["dice_obj"], scores["aji"], scores["best_epoch"]))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="scnet-trainer",
        description="Co-training harness over the pointprop toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="write the synthetic desk-scale corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--images", type=int, default=40)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_data)

    p = sub.add_parser("prepare", help="run the toolkit pipeline and id splits")
    p.add_argument("--config")
    p.add_argument("--images", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--artifacts", required=True)
    p.add_argument("--splits", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="co-train the two SC-Nets")
    p.add_argument("--config")
    p.add_argument("--images", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--artifacts", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="stitched mean predictions for listed images")
    p.add_argument("--config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--names", required=True, help="text file, one image name per line")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("ablate", help="train models A-D and score the test split")
    p.add_argument("--config")
    p.add_argument("--data", required=True,
                   help="directory holding images/, points/, gt/")
    p.add_argument("--work", required=True)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, TrainAbort, ToolkitError) as exc:
        print("scnet-trainer: error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
