"""Dataset plumbing: the desk-scale synthetic corpus, sample loading, and
the (default-off) augmentation transforms.

The synthetic images follow the two-stain physics the toolkit assumes: disk
"nuclei" carry a hematoxylin-like optical-density vector, the textured
background an eosin-like one, and the RGB image is the Beer-Lambert
transmission of their sum.  That keeps the toolkit's stain separation
non-degenerate while staying cheap enough to train on in CI.
"""

import os

import numpy as np
import torch

from . import formats

W_HEMATOXYLIN = np.array([0.65, 0.70, 0.29])
W_EOSIN = np.array([0.07, 0.99, 0.11])


class MissingArtifact(FileNotFoundError):
    pass


def _place_disks(rng, size, n_target):
    """Greedy rejection sampling; disks never overlap but may nearly touch."""
    disks = []
    for _ in range(400):
        if len(disks) >= n_target:
            break
        r = int(rng.integers(4, 8))
        cx = int(rng.integers(r + 1, size - r - 1))
        cy = int(rng.integers(r + 1, size - r - 1))
        ok = True
        for ox, oy, orad in disks:
            if (cx - ox) ** 2 + (cy - oy) ** 2 < (r + orad + 2) ** 2:
                ok = False
                break
        if ok:
            disks.append((cx, cy, r))
    return disks


def synth_image(rng, size=64):
    """One synthetic sample: RGB image, instance map, annotation points."""
    disks = _place_disks(rng, size, int(rng.integers(5, 9)))
    yy, xx = np.mgrid[0:size, 0:size]

    instances = np.zeros((size, size), dtype=np.int64)
    d_h = 0.05 * rng.uniform(0.0, 1.0, (size, size))
    block = int(rng.integers(6, 10))
    coarse = rng.uniform(0.0, 1.0, (size // block + 1, size // block + 1))
    texture = np.kron(coarse, np.ones((block, block)))[:size, :size]
    d_e = 0.25 + 0.2 * texture + 0.03 * rng.standard_normal((size, size))

    points = []
    for idx, (cx, cy, r) in enumerate(disks, 1):
        dist2 = (xx - cx) ** 2 + (yy - cy) ** 2
        inside = dist2 <= r * r
        instances[inside] = idx
        amp = rng.uniform(0.7, 1.0)
        d_h[inside] = amp * (1.0 - 0.3 * dist2[inside] / (r * r))
        d_e[inside] = 0.08
        jx = int(np.clip(cx + rng.integers(-1, 2), 0, size - 1))
        jy = int(np.clip(cy + rng.integers(-1, 2), 0, size - 1))
        points.append((jx, jy))

    d_h = np.clip(d_h + 0.02 * rng.standard_normal((size, size)), 0.0, None)
    d_e = np.clip(d_e, 0.0, None)
    od = d_h[..., None] * W_HEMATOXYLIN + d_e[..., None] * W_EOSIN
    rgb = np.clip(np.exp(-od), 1.0 / 255.0, 1.0)
    return rgb, instances, points


def make_dataset(root, n_images=40, size=64, seed=0):
    """Write images/, points/, gt/ under ``root``; returns the image names."""
    for sub in ("images", "points", "gt"):
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    names = []
    for i in range(n_images):
        rng = np.random.default_rng(seed * 100003 + i)
        rgb, instances, points = synth_image(rng, size)
        name = "img_%03d" % i
        formats.write_rgb(rgb, os.path.join(root, "images", name + ".png"))
        formats.write_points(points, os.path.join(root, "points", name + ".csv"))
        formats.write_instancemap(instances, os.path.join(root, "gt", name + ".png"))
        names.append(name)
    return names


class Sample:
    """All tensors for one training image, channels-first, float32."""

    def __init__(self, name, h, rgb, vor, clu):
        self.name = name
        self.h = h          # (1, H, W)
        self.rgb = rgb      # (3, H, W)
        self.vor = vor      # (H, W) uint8 codes
        self.clu = clu      # (H, W) uint8 codes


def _require(path):
    if not os.path.exists(path):
        raise MissingArtifact("missing artifact: %s" % path)
    return path


def load_samples(names, images_dir, artifacts_dir):
    samples = {}
    shape = None
    for name in names:
        h = formats.read_gray(_require(os.path.join(artifacts_dir, name + ".h.png")))
        rgb = formats.read_rgb(_require(os.path.join(images_dir, name + ".png")))
        vor = formats.read_trilabel(_require(os.path.join(artifacts_dir, name + ".vor.png")))
        clu = formats.read_trilabel(_require(os.path.join(artifacts_dir, name + ".clu.png")))
        if shape is None:
            shape = h.shape
        elif h.shape != shape:
            raise ValueError("image sizes differ: %s is %r, expected %r"
                             % (name, h.shape, shape))
        samples[name] = Sample(
            name,
            torch.from_numpy(h).unsqueeze(0),
            torch.from_numpy(rgb).permute(2, 0, 1).contiguous(),
            torch.from_numpy(vor.copy()),
            torch.from_numpy(clu.copy()),
        )
    return samples


def augment(tensors, rng):
    """Apply one random flip/rot90 consistently to every tensor in the list.

    Tensors may be (H, W) or (C, H, W); spatial dims are the last two.
    """
    k = int(rng.integers(4))
    flip = bool(rng.integers(2))
    out = []
    for t in tensors:
        u = torch.rot90(t, k, dims=(-2, -1))
        if flip:
            u = torch.flip(u, dims=(-1,))
        out.append(u.contiguous())
    return out
