"""Pixel- and object-level evaluation, plus the point-perturbation study.

Object matching (AJI, object-level Dice) is pinned to exact greedy
procedures using integer arithmetic for comparisons, so results are
bit-reproducible across platforms.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core_types import NUCLEUS, IGNORED, InstanceMap


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    f1: float
    dice_obj: float
    aji: float

    def __post_init__(self):
        for name in ("accuracy", "f1", "dice_obj", "aji"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError("%s out of range [0, 1]" % name)

    def line(self):
        return "acc=%.4f f1=%.4f dice_obj=%.4f aji=%.4f" % (
            self.accuracy,
            self.f1,
            self.dice_obj,
            self.aji,
        )


def binarize(prob, threshold=0.5):
    """Boolean nucleus mask: probability >= threshold."""
    return prob.values >= threshold


def instances(mask, min_area=20):
    """8-connected components of a boolean mask as an InstanceMap.

    Components smaller than ``min_area`` are dropped; surviving ids are
    renumbered 1..K in raster order of first appearance.
    """
    mask = np.asarray(mask, dtype=bool)
    comp, n_comp = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    if n_comp:
        areas = np.bincount(comp.ravel())
        small = areas < min_area
        small[0] = False
        comp[small[comp]] = 0
    return InstanceMap(comp.astype(np.int64)).canonicalized()


def pixel_accuracy(pred_mask, gt_mask):
    pred_mask = np.asarray(pred_mask, dtype=bool)
    gt_mask = np.asarray(gt_mask, dtype=bool)
    if pred_mask.shape != gt_mask.shape:
        raise ValueError("mask dimensions differ")
    return float(np.mean(pred_mask == gt_mask))


def f1(pred_mask, gt_mask):
    """F1 with nuclei as the positive class; two empty masks score 1."""
    pred_mask = np.asarray(pred_mask, dtype=bool)
    gt_mask = np.asarray(gt_mask, dtype=bool)
    if pred_mask.shape != gt_mask.shape:
        raise ValueError("mask dimensions differ")
    tp = int(np.sum(pred_mask & gt_mask))
    fp = int(np.sum(pred_mask & ~gt_mask))
    fn = int(np.sum(~pred_mask & gt_mask))
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def _overlap_table(gt_ids, pred_ids):
    """Sizes and pairwise intersection counts of two instance labelings."""
    g = gt_ids.ravel()
    p = pred_ids.ravel()
    gt_sizes = {int(i): int(c) for i, c in zip(*np.unique(g[g > 0], return_counts=True))}
    pred_sizes = {int(i): int(c) for i, c in zip(*np.unique(p[p > 0], return_counts=True))}
    both = (g > 0) & (p > 0)
    inter = {}
    if np.any(both):
        pairs, counts = np.unique(
            np.stack([g[both], p[both]]), axis=1, return_counts=True
        )
        for (gi, pj), c in zip(pairs.T, counts):
            inter[(int(gi), int(pj))] = int(c)
    return gt_sizes, pred_sizes, inter


def dice_obj(gt, pred):
    """Object-level Dice: size-weighted Dice against the max-overlap match,
    averaged over both directions."""
    if (gt.height, gt.width) != (pred.height, pred.width):
        raise ValueError("instance map dimensions differ")
    gt_sizes, pred_sizes, inter = _overlap_table(gt.ids, pred.ids)
    if not gt_sizes and not pred_sizes:
        return 1.0

    def one_side(a_sizes, b_sizes, pair_of):
        total = sum(a_sizes.values())
        if total == 0:
            return 0.0
        acc = 0.0
        for ai in sorted(a_sizes):
            best_b, best_c = None, 0
            for bj in sorted(b_sizes):
                c = pair_of(ai, bj)
                if c > best_c:
                    best_b, best_c = bj, c
            if best_b is not None:
                d = 2.0 * best_c / (a_sizes[ai] + b_sizes[best_b])
                acc += a_sizes[ai] / total * d
        return acc

    side_gt = one_side(gt_sizes, pred_sizes, lambda g, p: inter.get((g, p), 0))
    side_pred = one_side(pred_sizes, gt_sizes, lambda p, g: inter.get((g, p), 0))
    return 0.5 * (side_gt + side_pred)


def aji(gt, pred):
    """Aggregated Jaccard index with greedy one-to-one matching.

    Ground-truth instances are visited in id order; each takes the unused
    prediction with the highest Jaccard overlap (ties to the lower pred id,
    compared in exact integer arithmetic).  Unmatched ground truth counts
    its full area in the denominator, as does every prediction left unused.
    """
    if (gt.height, gt.width) != (pred.height, pred.width):
        raise ValueError("instance map dimensions differ")
    gt_sizes, pred_sizes, inter = _overlap_table(gt.ids, pred.ids)
    if not gt_sizes and not pred_sizes:
        return 1.0
    used = set()
    c_total = 0
    u_total = 0
    for gi in sorted(gt_sizes):
        best = None  # (inter, union, pred_id)
        for pj in sorted(pred_sizes):
            if pj in used:
                continue
            c = inter.get((gi, pj), 0)
            if c == 0:
                continue
            union = gt_sizes[gi] + pred_sizes[pj] - c
            # a/b > c/d  <=>  a*d > c*b for positive denominators
            if best is None or c * best[1] > best[0] * union:
                best = (c, union, pj)
        if best is None:
            u_total += gt_sizes[gi]
        else:
            c_total += best[0]
            u_total += best[1]
            used.add(best[2])
    for pj in sorted(pred_sizes):
        if pj not in used:
            u_total += pred_sizes[pj]
    return c_total / u_total


def evaluate(prob, gt, threshold=0.5, min_area=20):
    """Score one prediction against a ground-truth instance map."""
    if (prob.height, prob.width) != (gt.height, gt.width):
        raise ValueError("prediction and ground-truth dimensions differ")
    pred_mask = binarize(prob, threshold)
    pred_inst = instances(pred_mask, min_area)
    gt_canon = gt.canonicalized()
    gt_mask = gt_canon.ids > 0
    return MetricReport(
        accuracy=pixel_accuracy(pred_mask, gt_mask),
        f1=f1(pred_mask, gt_mask),
        dice_obj=dice_obj(gt_canon, pred_inst),
        aji=aji(gt_canon, pred_inst),
    )


def perturb_points(points, max_shift, seed, width, height):
    """Shift each point by an independent uniform integer offset in
    [-max_shift, max_shift]^2, clamped to the image.

    Offsets that land on an already-taken pixel are re-drawn up to 16
    times, then resolved by scanning outward from the last draw, so the
    result is always a valid (distinct) point set.
    """
    if max_shift < 0:
        raise ValueError("max_shift must be non-negative")
    if len(points) > width * height:
        raise ValueError("more points than pixels")
    for x, y in points:
        if x >= width or y >= height:
            raise ValueError("point (%d, %d) outside %dx%d image" % (x, y, width, height))
    rng = np.random.default_rng(seed)
    taken = set()
    out = []
    for x, y in points:
        cand = None
        for _ in range(17):
            dx, dy = rng.integers(-max_shift, max_shift + 1, size=2)
            cand = (
                int(np.clip(x + dx, 0, width - 1)),
                int(np.clip(y + dy, 0, height - 1)),
            )
            if cand not in taken:
                break
        else:
            cand = _nudge(cand, taken, width, height)
        if cand in taken:
            cand = _nudge(cand, taken, width, height)
        taken.add(cand)
        out.append(cand)
    return type(points)(tuple(out))


def _nudge(start, taken, width, height):
    cx, cy = start
    for r in range(1, max(width, height) + 1):
        for ny in range(cy - r, cy + r + 1):
            for nx in range(cx - r, cx + r + 1):
                if max(abs(nx - cx), abs(ny - cy)) != r:
                    continue
                if 0 <= nx < width and 0 <= ny < height and (nx, ny) not in taken:
                    return (nx, ny)
    raise ValueError("no free pixel for nudged point")


def in_nucleus_ratio(points, gt):
    """Fraction of annotation points that land inside some instance."""
    if len(points) == 0:
        raise ValueError("PointSet is empty")
    hits = 0
    for x, y in points:
        if x >= gt.width or y >= gt.height:
            raise ValueError("point (%d, %d) outside the instance map" % (x, y))
        if gt.ids[y, x] > 0:
            hits += 1
    return hits / len(points)


def trilabel_accuracy(label, gt_mask):
    """Agreement with a boolean mask over the non-ignored pixels."""
    gt_mask = np.asarray(gt_mask, dtype=bool)
    if label.labels.shape != gt_mask.shape:
        raise ValueError("label and mask dimensions differ")
    omega = label.labels != IGNORED
    if not np.any(omega):
        raise ValueError("no non-ignored pixels")
    pred = label.labels == NUCLEUS
    return float(np.mean(pred[omega] == gt_mask[omega]))


def perturbation_study(points, gt, shifts, n_seeds, base_seed=0, image=None, cfg=None):
    """Mean in-nucleus ratio (and optional cluster-label accuracy) per shift.

    For every shift the points are re-perturbed ``n_seeds`` times with
    distinct derived seeds.  When an image is supplied, the cluster label is
    regenerated from each perturbed point set and scored against the
    ground-truth mask.  Returns a list of row dicts.
    """
    from .coarse_labels import ClusterConfig, cluster_label

    if n_seeds < 1:
        raise ValueError("need at least one seed")
    gt_mask = gt.ids > 0
    cfg = cfg if cfg is not None else ClusterConfig()
    rows = []
    for s in shifts:
        ratios = []
        accs = []
        for rep in range(n_seeds):
            seed = base_seed * 1000000 + s * 1000 + rep
            moved = perturb_points(points, s, seed, gt.width, gt.height)
            ratios.append(in_nucleus_ratio(moved, gt))
            if image is not None:
                label = cluster_label(image, moved, cfg)
                accs.append(trilabel_accuracy(label, gt_mask))
        row = {"shift": int(s), "in_nucleus_ratio": float(np.mean(ratios))}
        if image is not None:
            row["cluster_accuracy"] = float(np.mean(accs))
        rows.append(row)
    return rows
