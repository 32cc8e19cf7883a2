"""Subprocess wrappers around the ``pointprop`` CLI.

The trainer never imports the toolkit; every interaction goes through these
wrappers and the file formats in :mod:`scnet_trainer.formats`.  Calls are
synchronous; ``run_many`` fans a batch of invocations over a small thread
pool but still blocks until all of them finish (the per-image EMA/merge
refresh at epoch boundaries is hundreds of short-lived processes).
"""

import concurrent.futures
import csv
import subprocess


class ToolkitError(RuntimeError):
    pass


class Toolkit:
    def __init__(self, binary="pointprop", workers=4):
        self.binary = binary
        self.workers = workers

    def run(self, *args):
        argv = [self.binary] + [str(a) for a in args]
        proc = subprocess.run(argv, capture_output=True, text=True)
        if proc.returncode != 0:
            raise ToolkitError(
                "%s failed: %s" % (" ".join(argv), proc.stderr.strip())
            )
        return proc.stdout

    def run_many(self, calls):
        """calls: list of argument tuples; blocks until every call is done."""
        if not calls:
            return
        with concurrent.futures.ThreadPoolExecutor(self.workers) as pool:
            futures = [pool.submit(self.run, *call) for call in calls]
            for fut in futures:
                fut.result()

    # -- one thin method per subcommand the trainer uses --

    def pipeline(self, config, images, points, out, workers=1):
        self.run(
            "pipeline", "--config", config, "--images", images,
            "--points", points, "--out", out, "--workers", workers,
        )

    def split(self, ids_file, ratio, seed, out_a, out_b):
        self.run(
            "split", "--ids", ids_file, "--ratio", ratio, "--seed", seed,
            "--out-a", out_a, "--out-b", out_b,
        )

    def ema_args(self, state, pred, decay, out):
        return ("ema", "--state", state, "--pred", pred,
                "--decay", decay, "--out", out)

    def merge_args(self, ema, cluster, out):
        return ("merge", "--ema", ema, "--cluster", cluster, "--out", out)

    def loss_value(self, kind, **paths):
        args = ["loss", kind]
        for key, value in paths.items():
            if value is True:
                args.append("--" + key.replace("_", "-"))
            else:
                args += ["--" + key.replace("_", "-"), value]
        return float(self.run(*args).strip())

    def tile(self, width, height, patch, overlap, out):
        self.run(
            "tile", "--size", "%dx%d" % (width, height),
            "--patch", patch, "--overlap", overlap, "--out", out,
        )
        origins = []
        with open(out, "r", encoding="ascii") as fh:
            for row in csv.DictReader(fh):
                origins.append((int(row["x"]), int(row["y"])))
        return origins

    def stitch(self, width, height, patches_csv, out):
        self.run(
            "stitch", "--size", "%dx%d" % (width, height),
            "--patches", patches_csv, "--out", out,
        )

    def evaluate(self, pred, gt, csv_path):
        self.run("eval", "--pred", pred, "--gt", gt, "--csv", csv_path)
        with open(csv_path, "r", encoding="ascii") as fh:
            row = next(csv.DictReader(fh))
        return {key: float(value) for key, value in row.items()}
