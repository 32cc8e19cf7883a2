"""Core value types shared by every stage of the toolkit.

All image-like types wrap a read-only numpy array and validate their
invariants on construction.  Label codes for three-class maps:

    0 = background (negative)
    1 = nucleus (positive)
    2 = ignored / unlabeled
"""

from dataclasses import dataclass, field

import numpy as np

BACKGROUND = 0
NUCLEUS = 1
IGNORED = 2

LABEL_CODES = (BACKGROUND, NUCLEUS, IGNORED)


def _freeze(arr):
    arr = np.asarray(arr)
    arr.setflags(write=False)
    return arr


def _set(obj, name, value):
    # frozen dataclasses forbid plain assignment in __post_init__
    object.__setattr__(obj, name, value)


@dataclass(frozen=True)
class RgbImage:
    """H x W x 3 float image, values in [0, 1], plus per-channel illumination."""

    samples: np.ndarray
    illumination: np.ndarray = field(default=None)

    def __post_init__(self):
        a = np.asarray(self.samples, dtype=np.float64)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError("RgbImage samples must have shape (H, W, 3)")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("RgbImage must be at least 1x1")
        if not np.all(np.isfinite(a)):
            raise ValueError("RgbImage samples must be finite")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("RgbImage samples out of range [0, 1]")
        ill = self.illumination
        ill = np.ones(3) if ill is None else np.asarray(ill, dtype=np.float64)
        if ill.shape != (3,):
            raise ValueError("illumination must have shape (3,)")
        if not np.all(np.isfinite(ill)) or np.any(ill <= 0.0) or np.any(ill > 1.0):
            raise ValueError("illumination must lie in (0, 1]")
        _set(self, "samples", _freeze(a))
        _set(self, "illumination", _freeze(ill))

    @property
    def height(self):
        return self.samples.shape[0]

    @property
    def width(self):
        return self.samples.shape[1]


@dataclass(frozen=True)
class GrayImage:
    """H x W float image with values in [0, 1]."""

    samples: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.samples, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("GrayImage samples must have shape (H, W)")
        if not np.all(np.isfinite(a)):
            raise ValueError("GrayImage samples must be finite")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("GrayImage samples out of range [0, 1]")
        _set(self, "samples", _freeze(a))

    @property
    def height(self):
        return self.samples.shape[0]

    @property
    def width(self):
        return self.samples.shape[1]


@dataclass(frozen=True)
class ProbMap:
    """H x W map of probabilities in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.values, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("ProbMap values must have shape (H, W)")
        if not np.all(np.isfinite(a)):
            raise ValueError("ProbMap values must be finite")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("ProbMap values out of range [0, 1]")
        _set(self, "values", _freeze(a))

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class TriLabelMap:
    """H x W map of label codes {0: background, 1: nucleus, 2: ignored}."""

    labels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.labels)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("TriLabelMap labels must have shape (H, W)")
        if not np.issubdtype(a.dtype, np.integer):
            if not np.all(a == np.round(a)):
                raise ValueError("TriLabelMap labels must be integers")
        a = a.astype(np.uint8, casting="unsafe")
        if not np.all(np.isin(a, LABEL_CODES)):
            raise ValueError("label code out of range {0, 1, 2}")
        _set(self, "labels", _freeze(a))

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]


@dataclass(frozen=True)
class InstanceMap:
    """H x W map of instance ids; 0 means background, ids > 0 are instances."""

    ids: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.ids)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("InstanceMap ids must have shape (H, W)")
        if not np.issubdtype(a.dtype, np.integer):
            raise ValueError("InstanceMap ids must be integers")
        if a.min() < 0:
            raise ValueError("InstanceMap ids must be non-negative")
        _set(self, "ids", _freeze(a.astype(np.int64)))

    @property
    def height(self):
        return self.ids.shape[0]

    @property
    def width(self):
        return self.ids.shape[1]

    def instance_ids(self):
        """Sorted array of the distinct nonzero ids present."""
        u = np.unique(self.ids)
        return u[u > 0]

    def canonicalized(self):
        """Relabel instances as 1..K in raster order of first appearance."""
        flat = self.ids.ravel()
        out = np.zeros_like(flat)
        mapping = {}
        nonzero = np.flatnonzero(flat)
        for pos in nonzero:
            v = flat[pos]
            if v not in mapping:
                mapping[v] = len(mapping) + 1
            out[pos] = mapping[v]
        return InstanceMap(out.reshape(self.ids.shape))


@dataclass(frozen=True)
class PointSet:
    """Ordered collection of distinct integer (x, y) annotations."""

    points: tuple

    def __post_init__(self):
        pts = []
        for p in self.points:
            if len(p) != 2:
                raise ValueError("each point must be an (x, y) pair")
            x, y = int(p[0]), int(p[1])
            if (x, y) != (p[0], p[1]):
                raise ValueError("point coordinates must be integers")
            if x < 0 or y < 0:
                raise ValueError("point coordinates must be non-negative")
            pts.append((x, y))
        if len(set(pts)) != len(pts):
            raise ValueError("duplicate point")
        _set(self, "points", tuple(pts))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def as_array(self):
        """(N, 2) int64 array of [x, y] rows; shape (0, 2) when empty."""
        if not self.points:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.points, dtype=np.int64)


@dataclass(frozen=True)
class StainModel:
    """3 x 2 non-negative stain appearance matrix with unit-norm columns.

    ``h_column`` marks which column is the hematoxylin direction.
    """

    appearance: np.ndarray
    h_column: int = 0

    def __post_init__(self):
        a = np.asarray(self.appearance, dtype=np.float64)
        if a.shape != (3, 2):
            raise ValueError("StainModel appearance must have shape (3, 2)")
        if not np.all(np.isfinite(a)):
            raise ValueError("StainModel appearance must be finite")
        if a.min() < 0.0:
            raise ValueError("StainModel appearance must be non-negative")
        norms = np.linalg.norm(a, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("StainModel columns must have unit L2 norm")
        if self.h_column not in (0, 1):
            raise ValueError("h_column must be 0 or 1")
        _set(self, "appearance", _freeze(a))

    @property
    def e_column(self):
        return 1 - self.h_column


def validate(value):
    """Return None if ``value`` satisfies its type's invariants, else a message.

    Re-runs the constructor checks, which covers values whose backing arrays
    were swapped or built through other code paths.
    """
    try:
        t = type(value)
        if t is RgbImage:
            RgbImage(value.samples, value.illumination)
        elif t is GrayImage:
            GrayImage(value.samples)
        elif t is ProbMap:
            ProbMap(value.values)
        elif t is TriLabelMap:
            TriLabelMap(value.labels)
        elif t is InstanceMap:
            InstanceMap(value.ids)
        elif t is PointSet:
            PointSet(value.points)
        elif t is StainModel:
            StainModel(value.appearance, value.h_column)
        else:
            return "unknown value type: %s" % type(value).__name__
    except ValueError as exc:
        return str(exc)
    return None
