"""Readers/writers for the toolkit's on-disk formats.

Implemented from the documented formats, not from the toolkit's sources:
probability maps are ``PFG1`` (magic + u32-le width/height + row-major
f32-le), label maps are 8-bit grayscale PNGs with codes {0,1,2}, instance
maps are 16-bit grayscale PNGs, points are ``x,y`` CSV.  All writers go
through a temp file and an atomic rename.
"""

import os
import struct
import tempfile

import numpy as np
from PIL import Image

PFG_MAGIC = b"PFG1"

BACKGROUND = 0
NUCLEUS = 1
IGNORED = 2


def atomic_write(path, data):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_probmap(values, path):
    """values: float array (H, W) in [0, 1]."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError("probability map must be 2-D")
    h, w = arr.shape
    payload = PFG_MAGIC + struct.pack("<II", w, h) + arr.tobytes(order="C")
    atomic_write(path, payload)


def read_probmap(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != PFG_MAGIC:
        raise ValueError("%s: not a PFG1 file" % path)
    w, h = struct.unpack("<II", blob[4:12])
    data = np.frombuffer(blob[12:], dtype="<f4")
    if data.size != w * h:
        raise ValueError("%s: payload size mismatch" % path)
    return data.reshape(h, w).astype(np.float32)


def _png_bytes(img):
    import io

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def read_gray(path):
    """8-bit grayscale PNG -> float32 (H, W) in [0, 1]."""
    img = Image.open(path)
    if img.mode != "L":
        img = img.convert("L")
    return np.asarray(img, dtype=np.float32) / 255.0


def write_gray(values, path):
    arr = np.asarray(values, dtype=np.float64)
    data = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    atomic_write(path, _png_bytes(Image.fromarray(data, mode="L")))


def read_rgb(path):
    """8-bit RGB PNG -> float32 (H, W, 3) in [0, 1]."""
    img = Image.open(path)
    if img.mode != "RGB":
        img = img.convert("RGB")
    return np.asarray(img, dtype=np.float32) / 255.0


def write_rgb(samples, path):
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("RGB image must be (H, W, 3)")
    data = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    atomic_write(path, _png_bytes(Image.fromarray(data, mode="RGB")))


def read_trilabel(path):
    img = Image.open(path)
    if img.mode != "L":
        raise ValueError("%s: label map must be an 8-bit grayscale PNG" % path)
    arr = np.asarray(img, dtype=np.uint8)
    if arr.max(initial=0) > IGNORED:
        raise ValueError("%s: label code out of range {0, 1, 2}" % path)
    return arr


def write_instancemap(labels, path):
    arr = np.asarray(labels)
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 0xFFFF:
        raise ValueError("instance ids out of uint16 range")
    img = Image.fromarray(arr.astype(np.uint16))
    atomic_write(path, _png_bytes(img))


def read_instancemap(path):
    img = Image.open(path)
    if img.mode not in ("I;16", "I"):
        raise ValueError("%s: instance map must be a 16-bit grayscale PNG" % path)
    return np.asarray(img, dtype=np.int64)


def write_points(points, path):
    lines = ["x,y"] + ["%d,%d" % (x, y) for x, y in points]
    atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))


def read_points(path):
    points = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or (lineno == 1 and line == "x,y"):
                continue
            x, y = line.split(",")
            points.append((int(x), int(y)))
    return points


def write_id_list(ids, path):
    atomic_write(path, ("\n".join(ids) + "\n").encode("ascii"))


def read_id_list(path):
    with open(path, "r", encoding="ascii") as fh:
        return [line.strip() for line in fh if line.strip()]
