"""Beer-Lambert stain separation for H&E images.

Transmitted light follows ``x = x0 * exp(-W @ D)`` where ``W`` is a 3x2
non-negative appearance matrix (one column per stain) and ``D`` holds the
per-pixel stain densities.  ``W`` and ``D`` are recovered with multiplicative
non-negative matrix factorization seeded from the extreme directions of the
optical-density point cloud, which keeps the factorization deterministic and
well away from the poor local minima a random start can fall into.
"""

import math
from dataclasses import dataclass

import numpy as np

from .core_types import GrayImage, RgbImage, StainModel, _freeze, _set

# Reference optical-density direction of hematoxylin, used only to decide
# which recovered column is H and which is E.
HEMATOXYLIN_REFERENCE = np.array([0.650, 0.704, 0.286])

MIN_TRANSMISSION = 1.0 / 255.0


class InsufficientTissueError(ValueError):
    """Raised when too few pixels carry enough optical density to factorize."""


class DegenerateFactorizationError(ValueError):
    """Raised when the optical densities do not support two distinct stains."""


@dataclass(frozen=True)
class StainConfig:
    iters: int = 300
    tol: float = 1e-6
    seed: int = 0
    tissue_threshold: float = 0.15
    min_tissue_fraction: float = 0.01

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError("iters must be positive")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")
        if self.tissue_threshold <= 0:
            raise ValueError("tissue_threshold must be positive")
        if not 0.0 < self.min_tissue_fraction <= 1.0:
            raise ValueError("min_tissue_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class OdImage:
    """H x W x 3 map of non-negative optical densities."""

    values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.values, dtype=np.float64)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError("OdImage values must have shape (H, W, 3)")
        if not np.all(np.isfinite(a)):
            raise ValueError("OdImage values must be finite")
        if a.min() < 0.0:
            raise ValueError("OdImage values must be non-negative")
        _set(self, "values", _freeze(a))

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    def matrix(self):
        """3 x (H*W) column-per-pixel view of the densities."""
        return self.values.reshape(-1, 3).T


@dataclass(frozen=True)
class DensityMap:
    """2 x (H*W) non-negative stain densities, one row per stain."""

    values: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        a = np.asarray(self.values, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != 2:
            raise ValueError("DensityMap values must have shape (2, n)")
        if a.shape[1] != self.width * self.height:
            raise ValueError("DensityMap size does not match width*height")
        if not np.all(np.isfinite(a)):
            raise ValueError("DensityMap values must be finite")
        if a.min() < 0.0:
            raise ValueError("DensityMap values must be non-negative")
        _set(self, "values", _freeze(a))


def to_od(image):
    """Convert transmitted-light RGB to optical density.

    Transmission is floored at 1/255 before the log so saturated dark pixels
    stay finite, and the result is clamped at zero so pixels brighter than
    the illuminant do not go negative.
    """
    x0 = image.illumination.reshape(1, 1, 3)
    x = np.maximum(image.samples, MIN_TRANSMISSION)
    od = -np.log(x / x0)
    return OdImage(np.maximum(od, 0.0))


def _percentile_directions(od_cols):
    """Initial appearance columns from the 1%/99% extreme OD directions.

    Projects the pixels onto their top-2 singular plane (with the first axis
    oriented toward the data mean so the angle origin is stable), then takes
    the directions at the 1st and 99th percentile of the in-plane angle.
    """
    u, _, _ = np.linalg.svd(od_cols, full_matrices=False)
    plane = u[:, :2].copy()
    if np.mean(plane[:, 0] @ od_cols) < 0.0:
        plane[:, 0] = -plane[:, 0]
    proj = plane.T @ od_cols
    ang = np.arctan2(proj[1], proj[0])
    cols = []
    for a in np.percentile(ang, [1.0, 99.0]):
        v = plane @ np.array([math.cos(a), math.sin(a)])
        if v.sum() < 0.0:
            v = -v
        v = np.maximum(v, 0.0)
        norm = np.linalg.norm(v)
        if norm < 1e-9:
            raise DegenerateFactorizationError(
                "extreme optical-density direction collapsed to zero"
            )
        cols.append(v / norm)
    return np.stack(cols, axis=1)


def nmf_frobenius(v, rank, iters, tol, w0, h0):
    """Multiplicative-update NMF minimizing the squared Frobenius error.

    Returns ``(w, h, history)`` where ``history`` holds the objective after
    the initial guess and after every update; each update can only lower it.
    """
    w = np.asarray(w0, dtype=np.float64).copy()
    h = np.asarray(h0, dtype=np.float64).copy()
    if w.shape != (v.shape[0], rank) or h.shape != (rank, v.shape[1]):
        raise ValueError("factor shapes do not match the target matrix")
    eps = 1e-12

    def objective():
        r = v - w @ h
        return float(np.sum(r * r))

    history = [objective()]
    slack = 1e-9 * (1.0 + history[0])
    for _ in range(iters):
        h *= (w.T @ v) / np.maximum(w.T @ w @ h, eps)
        w *= (v @ h.T) / np.maximum(w @ h @ h.T, eps)
        obj = objective()
        if obj > history[-1] + slack:
            raise RuntimeError("multiplicative update increased the objective")
        prev = history[-1]
        history.append(obj)
        if prev - obj < tol * max(prev, eps):
            break
    return w, h, history


def estimate_stains(od, cfg=StainConfig()):
    """Factor an OD image into a two-column stain model and densities.

    Raises :class:`InsufficientTissueError` when too few pixels are dense
    enough to carry stain, and :class:`DegenerateFactorizationError` when the
    densities are effectively rank one (a single stain direction).
    """
    v = od.matrix()
    norms = np.linalg.norm(v, axis=0)
    tissue = norms > cfg.tissue_threshold
    frac = float(tissue.mean())
    if frac < cfg.min_tissue_fraction:
        raise InsufficientTissueError(
            "only %.2f%% of pixels exceed the tissue threshold" % (100.0 * frac)
        )
    sel = v[:, tissue]
    s = np.linalg.svd(sel, compute_uv=False)
    if s[0] <= 0.0 or s[1] <= 1e-3 * s[0]:
        raise DegenerateFactorizationError(
            "optical densities are rank one; cannot resolve two stains"
        )
    w0 = _percentile_directions(sel)
    h0, _, _, _ = np.linalg.lstsq(w0, v, rcond=None)
    h0 = np.maximum(h0, 1e-6)
    w, h, _ = nmf_frobenius(v, 2, cfg.iters, cfg.tol, w0, h0)
    col_norms = np.linalg.norm(w, axis=0)
    if np.any(col_norms < 1e-6):
        raise DegenerateFactorizationError("a stain column collapsed to zero")
    w = w / col_norms
    h = h * col_norms[:, None]
    cos_between = float(np.clip(w[:, 0] @ w[:, 1], -1.0, 1.0))
    if math.degrees(math.acos(cos_between)) < 1.0:
        raise DegenerateFactorizationError("stain columns are nearly parallel")
    href = HEMATOXYLIN_REFERENCE / np.linalg.norm(HEMATOXYLIN_REFERENCE)
    if w[:, 1] @ href > w[:, 0] @ href:
        w = w[:, ::-1]
        h = h[::-1, :]
    model = StainModel(w, h_column=0)
    density = DensityMap(h, od.width, od.height)
    return model, density


def reconstruct_component(model, density, which, illumination=None):
    """Render the transmitted-light image of a single stain.

    ``which`` selects ``"h"`` or ``"e"``; the other stain's density is zeroed
    and the Beer-Lambert transform is inverted.
    """
    if which not in ("h", "e"):
        raise ValueError("which must be 'h' or 'e'")
    col = model.h_column if which == "h" else model.e_column
    od = np.outer(model.appearance[:, col], density.values[col])
    x0 = np.ones(3) if illumination is None else np.asarray(illumination, dtype=np.float64)
    x = x0[:, None] * np.exp(-od)
    samples = x.T.reshape(density.height, density.width, 3)
    return RgbImage(np.clip(samples, 0.0, 1.0), illumination=x0)


def collapse_to_gray(image):
    """Average the three channels into one; used to feed single-stain views
    to single-channel consumers."""
    return GrayImage(image.samples.mean(axis=2))


def separate(image, cfg=StainConfig()):
    """Full pipeline: RGB -> OD -> (model, density) -> per-stain gray images.

    Returns ``(h_gray, e_gray, model, density)``.
    """
    od = to_od(image)
    model, density = estimate_stains(od, cfg)
    h_gray = collapse_to_gray(
        reconstruct_component(model, density, "h", image.illumination)
    )
    e_gray = collapse_to_gray(
        reconstruct_component(model, density, "e", image.illumination)
    )
    return h_gray, e_gray, model, density
