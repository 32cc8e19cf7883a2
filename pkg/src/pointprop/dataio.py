"""File formats, patch tiling, and dataset splitting.

Formats are bit-exact so that repeated runs produce identical artifacts:

* points        -- CSV of integer ``x,y`` rows, optional ``x,y`` header
* ProbMap       -- ``PFG1`` binary: magic, u32le width/height, f32le row-major
* TriLabelMap   -- 8-bit grayscale PNG restricted to values {0, 1, 2}
* InstanceMap   -- 16-bit grayscale PNG (ids up to 65535)
* RgbImage      -- 8-bit RGB PNG, samples quantized to /255
* GrayImage     -- 8-bit grayscale PNG
* StainModel    -- text file of 7 numbers (appearance column-major, h column)

All writers are atomic: they write to a temporary file in the destination
directory and rename on success, so a failed run never leaves partial output.
"""

import io
import math
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .core_types import (
    GrayImage,
    InstanceMap,
    PointSet,
    ProbMap,
    RgbImage,
    StainModel,
    TriLabelMap,
)

PROBMAP_MAGIC = b"PFG1"


class FormatError(ValueError):
    """Raised when a file does not conform to its declared format."""


def _atomic_write_bytes(path, data):
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _png_bytes(img):
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# point sets


def write_points(points, path):
    lines = ["x,y"]
    lines += ["%d,%d" % (x, y) for x, y in points]
    _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("ascii"))


def read_points(path):
    with open(path, "r", encoding="ascii") as fh:
        raw = fh.read()
    pts = []
    for i, line in enumerate(raw.splitlines()):
        line = line.strip()
        if not line:
            continue
        if i == 0 and line == "x,y":
            continue
        cells = line.split(",")
        if len(cells) != 2:
            raise FormatError("%s: line %d is not 'x,y'" % (path, i + 1))
        try:
            x, y = int(cells[0]), int(cells[1])
        except ValueError:
            raise FormatError("%s: line %d has non-integer coordinates" % (path, i + 1))
        pts.append((x, y))
    try:
        return PointSet(tuple(pts))
    except ValueError as exc:
        raise FormatError("%s: %s" % (path, exc))


# ---------------------------------------------------------------------------
# probability maps (PFG1)


def write_probmap(prob, path):
    vals = prob.values.astype("<f4")
    header = PROBMAP_MAGIC + struct.pack("<II", prob.width, prob.height)
    _atomic_write_bytes(path, header + vals.tobytes(order="C"))


def read_probmap(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != PROBMAP_MAGIC:
        raise FormatError("%s: bad magic, expected PFG1" % path)
    w, h = struct.unpack("<II", data[4:12])
    if w < 1 or h < 1:
        raise FormatError("%s: zero-sized map" % path)
    body = data[12:]
    if len(body) != 4 * w * h:
        raise FormatError(
            "%s: payload is %d bytes, expected %d" % (path, len(body), 4 * w * h)
        )
    vals = np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float64)
    try:
        return ProbMap(vals)
    except ValueError as exc:
        raise FormatError("%s: %s" % (path, exc))


# ---------------------------------------------------------------------------
# PNG-backed maps


def write_trilabel(label, path):
    img = Image.fromarray(label.labels.astype(np.uint8), mode="L")
    _atomic_write_bytes(path, _png_bytes(img))


def read_trilabel(path):
    img = Image.open(path)
    if img.mode != "L":
        raise FormatError("%s: expected 8-bit grayscale PNG, got %s" % (path, img.mode))
    arr = np.asarray(img, dtype=np.uint8)
    if arr.size and arr.max() > 2:
        raise FormatError("%s: label code out of range {0, 1, 2}" % path)
    return TriLabelMap(arr)


def write_instancemap(imap, path):
    if imap.ids.max() > 65535:
        raise FormatError("%s: instance id exceeds 16-bit range" % path)
    img = Image.fromarray(imap.ids.astype(np.uint16))
    _atomic_write_bytes(path, _png_bytes(img))


def read_instancemap(path):
    img = Image.open(path)
    if img.mode not in ("I;16", "I"):
        raise FormatError("%s: expected 16-bit grayscale PNG, got %s" % (path, img.mode))
    arr = np.asarray(img)
    if arr.min() < 0 or arr.max() > 65535:
        raise FormatError("%s: instance ids out of 16-bit range" % path)
    return InstanceMap(arr.astype(np.int64))


def write_rgb(image, path):
    arr = np.rint(image.samples * 255.0).astype(np.uint8)
    img = Image.fromarray(arr, mode="RGB")
    _atomic_write_bytes(path, _png_bytes(img))


def read_rgb(path):
    img = Image.open(path)
    if img.mode != "RGB":
        raise FormatError("%s: expected 8-bit RGB PNG, got %s" % (path, img.mode))
    arr = np.asarray(img, dtype=np.uint8)
    return RgbImage(arr.astype(np.float64) / 255.0)


def write_gray(image, path):
    arr = np.rint(image.samples * 255.0).astype(np.uint8)
    img = Image.fromarray(arr, mode="L")
    _atomic_write_bytes(path, _png_bytes(img))


def read_gray(path):
    img = Image.open(path)
    if img.mode != "L":
        raise FormatError("%s: expected 8-bit grayscale PNG, got %s" % (path, img.mode))
    arr = np.asarray(img, dtype=np.uint8)
    return GrayImage(arr.astype(np.float64) / 255.0)


# ---------------------------------------------------------------------------
# stain model text format


def write_stain_model(model, path):
    nums = list(model.appearance.flatten(order="F")) + [float(model.h_column)]
    text = "\n".join(repr(float(v)) for v in nums) + "\n"
    _atomic_write_bytes(path, text.encode("ascii"))


def read_stain_model(path):
    with open(path, "r", encoding="ascii") as fh:
        tokens = fh.read().split()
    if len(tokens) != 7:
        raise FormatError("%s: expected 7 numbers, got %d" % (path, len(tokens)))
    try:
        nums = [float(t) for t in tokens]
    except ValueError:
        raise FormatError("%s: non-numeric token" % path)
    appearance = np.array(nums[:6], dtype=np.float64).reshape(3, 2, order="F")
    h_column = int(nums[6])
    if nums[6] not in (0.0, 1.0):
        raise FormatError("%s: h column marker must be 0 or 1" % path)
    try:
        return StainModel(appearance, h_column)
    except ValueError as exc:
        raise FormatError("%s: %s" % (path, exc))


# ---------------------------------------------------------------------------
# patch tiling and stitching


@dataclass(frozen=True)
class PatchGrid:
    """Patch origins covering a width x height canvas."""

    width: int
    height: int
    patch_size: int
    overlap: int
    origins: tuple  # ((x, y), ...) row-major: y outer, x inner


def _axis_origins(dim, patch, stride):
    out = []
    x = 0
    while True:
        if x + patch >= dim:
            last = dim - patch
            if not out or out[-1] != last:
                out.append(last)
            break
        out.append(x)
        x += stride
    return out


def tile(width, height, patch_size, overlap):
    """Plan a patch grid: fixed stride, last patch clamped flush to the edge."""
    if patch_size < 1:
        raise ValueError("patch_size must be positive")
    if patch_size > width or patch_size > height:
        raise ValueError("patch_size exceeds image dimensions")
    if not 0 <= overlap < patch_size:
        raise ValueError("overlap must satisfy 0 <= overlap < patch_size")
    stride = patch_size - overlap
    xs = _axis_origins(width, patch_size, stride)
    ys = _axis_origins(height, patch_size, stride)
    origins = tuple((x, y) for y in ys for x in xs)
    return PatchGrid(width, height, patch_size, overlap, origins)


def stitch(patches, width, height):
    """Recombine patch ProbMaps into one map, averaging where patches overlap.

    ``patches`` is a sequence of ``((x, y), ProbMap)``.  Every canvas pixel
    must be covered by at least one patch.
    """
    if width < 1 or height < 1:
        raise ValueError("canvas must be at least 1x1")
    acc = np.zeros((height, width), dtype=np.float64)
    cnt = np.zeros((height, width), dtype=np.int64)
    for (x, y), pm in patches:
        if x < 0 or y < 0 or x + pm.width > width or y + pm.height > height:
            raise ValueError("patch at (%d, %d) falls outside the canvas" % (x, y))
        acc[y : y + pm.height, x : x + pm.width] += pm.values
        cnt[y : y + pm.height, x : x + pm.width] += 1
    if cnt.min() < 1:
        raise ValueError("patches do not cover the canvas")
    return ProbMap(acc / cnt)


# ---------------------------------------------------------------------------
# dataset splitting


def split_dataset(ids, overlap_ratio, seed):
    """Split ids into two subsets sharing a controlled fraction of items.

    The list is shuffled by ``seed``; with ``s = min(n, ceil(n*(1+r)/2))``
    and ``m = floor(r*s)``, the first subset is the first ``s`` items and the
    second starts ``m`` items before the first ends, so exactly ``m`` items
    are shared.  ``r = 0`` gives disjoint halves; ``r = 1`` gives two full
    copies.
    """
    ids = list(ids)
    n = len(ids)
    if n < 1:
        raise ValueError("need at least one id")
    if len(set(ids)) != n:
        raise ValueError("ids must be distinct")
    if not 0.0 <= overlap_ratio <= 1.0:
        raise ValueError("overlap_ratio must lie in [0, 1]")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    s = min(n, math.ceil(n * (1.0 + overlap_ratio) / 2.0))
    m = math.floor(overlap_ratio * s)
    part_a = shuffled[:s]
    part_b = shuffled[s - m : min(2 * s - m, n)]
    return part_a, part_b
