"""Patch-based inference: toolkit-planned tiling, per-patch forwards,
toolkit stitching, then the per-pixel mean over the co-trained models."""

import os

import numpy as np
import torch

from . import formats
from .model import ScNet
from .toolkit import Toolkit


def load_models(checkpoint, cfg):
    blob = torch.load(checkpoint, map_location="cpu", weights_only=True)
    pair = []
    for key in ("model_a", "model_b"):
        net = ScNet(cfg.seg_levels, cfg.seg_base, cfg.color_levels, cfg.color_base)
        net.load_state_dict(blob[key])
        net.eval()
        pair.append(net)
    return pair


def predict_image(models, h_arr, patch, overlap, tk, work_dir, out_path):
    """models: callables (B,1,h,w)->(B,1,h,w) probabilities.

    Writes one stitched map per model plus their per-pixel mean at
    ``out_path``; returns the mean as an array.
    """
    height, width = h_arr.shape
    os.makedirs(work_dir, exist_ok=True)
    origins = tk.tile(width, height, patch, overlap,
                      os.path.join(work_dir, "grid.csv"))
    stitched = []
    for m, model in enumerate(models):
        pdir = os.path.join(work_dir, "m%d" % m)
        os.makedirs(pdir, exist_ok=True)
        rows = ["x,y,path"]
        with torch.no_grad():
            for x, y in origins:
                crop = np.ascontiguousarray(h_arr[y:y + patch, x:x + patch])
                t = torch.from_numpy(crop).unsqueeze(0).unsqueeze(0)
                prob = model(t)[0, 0].numpy()
                rel = "p_%04d_%04d.pfg" % (x, y)
                formats.write_probmap(prob, os.path.join(pdir, rel))
                rows.append("%d,%d,%s" % (x, y, rel))
        csv_path = os.path.join(pdir, "patches.csv")
        formats.atomic_write(csv_path, ("\n".join(rows) + "\n").encode("ascii"))
        spath = os.path.join(work_dir, "stitched_%d.pfg" % m)
        tk.stitch(width, height, csv_path, spath)
        stitched.append(formats.read_probmap(spath))
    mean = np.mean(stitched, axis=0, dtype=np.float64).astype(np.float32)
    formats.write_probmap(mean, out_path)
    return mean


def infer_dir(models, names, artifacts_dir, out_dir, cfg, tk=None):
    """Stitched mean probability map for every named image's H component."""
    tk = tk or Toolkit(cfg.toolkit, cfg.workers)
    os.makedirs(out_dir, exist_ok=True)
    outputs = {}
    for name in names:
        h = formats.read_gray(os.path.join(artifacts_dir, name + ".h.png"))
        out_path = os.path.join(out_dir, name + ".pfg")
        predict_image(models, h, cfg.patch, cfg.overlap, tk,
                      os.path.join(out_dir, "work", name), out_path)
        outputs[name] = out_path
    return outputs
