"""Coarse label generation from point annotations.

Two weak label maps are derived per image: a Voronoi map whose ridges give
certain background and whose point disks give certain foreground, and a
k-means cluster map that adds shape information.  Both use the shared
three-code convention (0 background, 1 nucleus, 2 ignored).
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core_types import BACKGROUND, IGNORED, NUCLEUS, TriLabelMap, _freeze, _set


@dataclass(frozen=True)
class ClusterConfig:
    k: int = 3
    rgb_weight: float = 1.0
    dist_weight: float = 0.5
    d_max: float = 20.0
    kmeans_iters: int = 100
    kmeans_tol: float = 1e-4
    seed: int = 0
    min_area: int = 20
    opening_radius: int = 1

    def __post_init__(self):
        if self.k != 3:
            raise ValueError("cluster count is fixed at 3")
        if self.rgb_weight <= 0 or self.dist_weight <= 0:
            raise ValueError("feature weights must be positive")
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")
        if self.kmeans_iters < 1:
            raise ValueError("kmeans_iters must be positive")
        if self.kmeans_tol < 0:
            raise ValueError("kmeans_tol must be non-negative")
        if self.min_area < 0:
            raise ValueError("min_area must be non-negative")
        if self.opening_radius < 0:
            raise ValueError("opening_radius must be non-negative")


@dataclass(frozen=True)
class DistanceMap:
    """Per-pixel distance to the nearest annotated point, clipped to d_max
    and scaled into [0, 1]."""

    values: np.ndarray
    d_max: float = 20.0

    def __post_init__(self):
        a = np.asarray(self.values, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("DistanceMap values must have shape (H, W)")
        if not np.all(np.isfinite(a)):
            raise ValueError("DistanceMap values must be finite")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("DistanceMap values out of range [0, 1]")
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")
        _set(self, "values", _freeze(a))

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


def _disk_structure(radius):
    if radius == 0:
        return np.ones((1, 1), dtype=bool)
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (xx * xx + yy * yy) <= r * r


def voronoi_cells(points, width, height):
    """Nearest-point index per pixel with exact integer squared distances.

    Ties go to the lower point index, so the result is a pure function of
    the point order.
    """
    pts = points.as_array()
    if len(pts) == 0:
        raise ValueError("PointSet is empty")
    xs = np.arange(width, dtype=np.int64)[None, :]
    ys = np.arange(height, dtype=np.int64)[:, None]
    best_d = np.full((height, width), np.iinfo(np.int64).max, dtype=np.int64)
    best_i = np.zeros((height, width), dtype=np.int64)
    for i, (px, py) in enumerate(pts):
        d2 = (xs - px) ** 2 + (ys - py) ** 2
        closer = d2 < best_d
        best_d[closer] = d2[closer]
        best_i[closer] = i
    return best_i


def _ridge_mask(cells):
    ridge = np.zeros(cells.shape, dtype=bool)
    dv = cells[1:, :] != cells[:-1, :]
    ridge[1:, :] |= dv
    ridge[:-1, :] |= dv
    dh = cells[:, 1:] != cells[:, :-1]
    ridge[:, 1:] |= dh
    ridge[:, :-1] |= dh
    return ridge


def voronoi_label(points, width, height, point_radius=2, edge_width=2):
    """Voronoi TriLabelMap: cell ridges are background, point disks are
    nuclei, everything else is ignored.

    The base ridge is two pixels wide (both sides of each cell boundary);
    wider settings dilate it symmetrically.  Point disks override the ridge.
    """
    if len(points) == 0:
        raise ValueError("PointSet is empty")
    if point_radius < 0:
        raise ValueError("point_radius must be non-negative")
    if edge_width < 2:
        raise ValueError("edge_width must be at least 2")
    for x, y in points:
        if x >= width or y >= height:
            raise ValueError("point (%d, %d) outside %dx%d image" % (x, y, width, height))
    labels = np.full((height, width), IGNORED, dtype=np.uint8)
    if len(points) > 1:
        cells = voronoi_cells(points, width, height)
        ridge = _ridge_mask(cells)
        extra = (edge_width - 1) // 2
        if extra > 0:
            ridge = ndimage.binary_dilation(ridge, structure=_disk_structure(extra))
        labels[ridge] = BACKGROUND
    rr = int(point_radius)
    for x, y in points:
        x0, x1 = max(0, x - rr), min(width, x + rr + 1)
        y0, y1 = max(0, y - rr), min(height, y + rr + 1)
        dx = np.arange(x0, x1) - x
        dy = np.arange(y0, y1)[:, None] - y
        disk = dx * dx + dy * dy <= rr * rr
        block = labels[y0:y1, x0:x1]
        block[disk] = NUCLEUS
        labels[y0:y1, x0:x1] = block
    return TriLabelMap(labels)


def distance_map(points, width, height, d_max=20.0):
    """Euclidean distance to the nearest annotated point, clipped and scaled."""
    if len(points) == 0:
        raise ValueError("PointSet is empty")
    if d_max <= 0:
        raise ValueError("d_max must be positive")
    marks = np.ones((height, width), dtype=bool)
    for x, y in points:
        if x >= width or y >= height:
            raise ValueError("point (%d, %d) outside %dx%d image" % (x, y, width, height))
        marks[y, x] = False
    d = ndimage.distance_transform_edt(marks)
    return DistanceMap(np.minimum(d, d_max) / d_max, d_max=d_max)


def kmeans_features(image, dmap, cfg=ClusterConfig()):
    """Per-pixel (R, G, B, d) feature rows with the configured scales."""
    if (image.height, image.width) != (dmap.height, dmap.width):
        raise ValueError("image and distance map dimensions differ")
    rgb = image.samples.reshape(-1, 3) * cfg.rgb_weight
    d = dmap.values.reshape(-1, 1) * cfg.dist_weight
    return np.concatenate([rgb, d], axis=1)


def kmeans(features, k=3, seed=0, iters=100, tol=1e-4):
    """Lloyd's algorithm with k-means++ seeding.

    Returns ``(assignments, centroids, inertia_history)``.  Empty clusters
    are re-seeded to the point farthest from its assigned centroid.  The
    inertia after each assignment step is recorded and must not increase.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 1:
        raise ValueError("features must be a non-empty (n, d) array")
    n = feats.shape[0]
    if len(np.unique(feats, axis=0)) < k:
        raise ValueError("fewer than %d distinct feature vectors" % k)
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, feats.shape[1]))
    centroids[0] = feats[rng.integers(n)]
    d2 = np.sum((feats - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # remaining mass sits on the chosen centroids; distinctness
            # guarantees some positive-distance point exists
            d2 = np.min(
                np.sum((feats[:, None, :] - centroids[None, :j, :]) ** 2, axis=2), axis=1
            )
            total = d2.sum()
        centroids[j] = feats[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((feats - centroids[j]) ** 2, axis=1))

    history = []
    slack = 1e-9
    for _ in range(iters):
        dists = np.sum((feats[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        assignments = np.argmin(dists, axis=1)
        assigned_d = dists[np.arange(n), assignments]
        for j in range(k):
            if not np.any(assignments == j):
                far = int(np.argmax(assigned_d))
                centroids[j] = feats[far]
                assignments[far] = j
                assigned_d[far] = 0.0
        inertia = float(assigned_d.sum())
        if history and inertia > history[-1] + slack * (1.0 + history[0]):
            raise RuntimeError("k-means objective increased")
        history.append(inertia)
        new_centroids = np.stack(
            [feats[assignments == j].mean(axis=0) for j in range(k)]
        )
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < tol:
            break
    dists = np.sum((feats[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    assignments = np.argmin(dists, axis=1)
    return assignments, centroids, history


def classify_clusters(assignments, dmap, features=None, k=3):
    """Name the clusters by their mean distance feature.

    Smallest mean distance becomes nucleus (code 1), largest becomes
    background (code 0), the rest are ignored (code 2).  Exact ties order by
    mean brightness, darker toward nucleus, when features are given.
    """
    asg = np.asarray(assignments)
    if asg.size != dmap.values.size:
        raise ValueError("assignments do not match the distance map size")
    d = dmap.values.reshape(-1)
    keys = []
    for j in range(k):
        sel = asg == j
        if not np.any(sel):
            raise ValueError("cluster %d is empty" % j)
        mean_d = float(d[sel].mean())
        brightness = float(np.mean(features[sel, :3])) if features is not None else 0.0
        keys.append((mean_d, brightness, j))
    order = sorted(range(k), key=lambda j: keys[j])
    code_of = {order[0]: NUCLEUS, order[-1]: BACKGROUND}
    for j in order[1:-1]:
        code_of[j] = IGNORED
    labels = np.empty(asg.size, dtype=np.uint8)
    for j in range(k):
        labels[asg == j] = code_of[j]
    return TriLabelMap(labels.reshape(dmap.height, dmap.width))


def refine(raw, cfg=ClusterConfig()):
    """Clean the nucleus mask: drop specks, open, then fill enclosed holes.

    Steps on the code-1 mask, in order: 8-connected components below
    ``min_area`` become code 2; morphological opening with a disk of
    ``opening_radius`` (removed pixels also become code 2); background
    regions not 4-connected to the border become code 1.
    """
    labels = raw.labels.copy()
    mask = labels == NUCLEUS
    eight = np.ones((3, 3), dtype=bool)
    comp, n_comp = ndimage.label(mask, structure=eight)
    if n_comp:
        areas = np.bincount(comp.ravel())
        small = areas < cfg.min_area
        small[0] = False
        mask[small[comp]] = False
    if cfg.opening_radius > 0:
        mask = ndimage.binary_opening(mask, structure=_disk_structure(cfg.opening_radius))
    four = ndimage.generate_binary_structure(2, 1)
    filled = ndimage.binary_fill_holes(mask, structure=four)
    labels[(raw.labels == NUCLEUS) & ~mask] = IGNORED
    labels[filled] = NUCLEUS
    return TriLabelMap(labels)


def cluster_label(image, points, cfg=ClusterConfig()):
    """Full cluster-label pipeline for one image.

    distance map -> k-means on (RGB, distance) features -> cluster naming ->
    refinement; annotated point pixels are forced to code 1 at the end.
    """
    dmap = distance_map(points, image.width, image.height, cfg.d_max)
    feats = kmeans_features(image, dmap, cfg)
    assignments, _, _ = kmeans(feats, cfg.k, cfg.seed, cfg.kmeans_iters, cfg.kmeans_tol)
    raw = classify_clusters(assignments, dmap, feats, cfg.k)
    refined = refine(raw, cfg)
    labels = refined.labels.copy()
    for x, y in points:
        labels[y, x] = NUCLEUS
    return TriLabelMap(labels)
