"""The four-way loss ablation at desk scale.

Model A trains on Voronoi labels alone, B adds the cluster labels, C adds
co-training, D adds colorization.  All four share one set of pipeline
artifacts and one test/val/pool split; each gets its own output directory.
Scores are `pointprop eval` means over the held-out test images.
"""

import os
from dataclasses import replace

from . import formats
from .infer import infer_dir, load_models
from .toolkit import Toolkit
from .train import Layout, prepare, train

ABLATION = (
    ("A", {"use_clu": False, "use_cot": False, "use_color": False}),
    ("B", {"use_clu": True, "use_cot": False, "use_color": False}),
    ("C", {"use_clu": True, "use_cot": True, "use_color": False}),
    ("D", {"use_clu": True, "use_cot": True, "use_color": True}),
)

METRIC_KEYS = ("accuracy", "f1", "dice_obj", "aji")


def run_ablation(cfg, data_root, work_root):
    """Returns {tag: {metric: mean over test images}} and writes ablation.csv."""
    base = Layout(
        images=os.path.join(data_root, "images"),
        points=os.path.join(data_root, "points"),
        gt=os.path.join(data_root, "gt"),
        artifacts=os.path.join(work_root, "artifacts"),
        splits=os.path.join(work_root, "splits"),
        out=os.path.join(work_root, "shared"),
    )
    prepare(cfg, base)
    test_names = formats.read_id_list(base.split_file("test"))
    if not test_names:
        raise ValueError("ablation needs a non-empty test split")
    tk = Toolkit(cfg.toolkit, cfg.workers)

    results = {}
    for tag, flags in ABLATION:
        run_cfg = replace(cfg, **flags)
        layout = replace(base, out=os.path.join(work_root, "model_%s" % tag))
        outcome = train(run_cfg, layout)
        models = load_models(outcome.checkpoint, run_cfg)
        infer_out = os.path.join(layout.out, "infer")
        preds = infer_dir(models, test_names, layout.artifacts, infer_out,
                          run_cfg, tk)
        sums = {key: 0.0 for key in METRIC_KEYS}
        for name in test_names:
            scores = tk.evaluate(
                preds[name],
                os.path.join(base.gt, name + ".png"),
                os.path.join(infer_out, name + ".scores.csv"),
            )
            for key in METRIC_KEYS:
                sums[key] += scores[key]
        results[tag] = {key: sums[key] / len(test_names) for key in METRIC_KEYS}
        results[tag]["best_epoch"] = outcome.best_epoch

    header = "model," + ",".join(METRIC_KEYS) + ",best_epoch\n"
    body = "".join(
        "%s,%s,%d\n" % (
            tag,
            ",".join("%.6f" % results[tag][key] for key in METRIC_KEYS),
            results[tag]["best_epoch"],
        )
        for tag, _ in ABLATION)
    formats.atomic_write(os.path.join(work_root, "ablation.csv"),
                         (header + body).encode("ascii"))
    return results
