"""EMA pseudo labels, the ignored-area merge rule, reference losses, and
cumulative-learning schedules.

The loss functions here are the plain-numpy references the trainer validates
its differentiable copies against; they are pure and permutation-invariant
over pixels.
"""

from dataclasses import dataclass

import numpy as np

from .core_types import IGNORED, ProbMap

CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class EmaState:
    """Running average of one image's predictions.

    ``n`` counts applied updates; ``decay`` is the weight of the newest
    prediction; ``period`` is how many epochs the caller waits between
    updates (the engine itself never sees the epoch loop).
    """

    prob: ProbMap
    n: int = 0
    decay: float = 0.5
    period: int = 3

    def __post_init__(self):
        if not isinstance(self.prob, ProbMap):
            raise ValueError("EmaState.prob must be a ProbMap")
        if self.n < 0:
            raise ValueError("EmaState.n must be non-negative")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("EmaState.decay must lie in (0, 1]")
        if self.period < 1:
            raise ValueError("EmaState.period must be positive")


@dataclass(frozen=True)
class ScheduleConfig:
    eta: float = 1.0
    epsilon: float = 0.1
    n_max: int = 100

    def __post_init__(self):
        if self.eta < 0 or self.epsilon < 0:
            raise ValueError("schedule weights must be non-negative")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")


def ema_update(state, pred):
    """Fold one prediction into the running average.

    A fresh state (n == 0) adopts the prediction outright; afterwards
    ``p <- decay*pred + (1-decay)*p``.
    """
    if (state.prob.height, state.prob.width) != (pred.height, pred.width):
        raise ValueError("prediction dimensions do not match the EMA state")
    if state.n == 0:
        new = pred.values
    else:
        new = state.decay * pred.values + (1.0 - state.decay) * state.prob.values
    return EmaState(ProbMap(new), state.n + 1, state.decay, state.period)


def merge_pseudo(ema, cluster):
    """Pseudo label: hard cluster codes where known, EMA where ignored."""
    if (ema.height, ema.width) != (cluster.height, cluster.width):
        raise ValueError("EMA and cluster label dimensions differ")
    out = cluster.labels.astype(np.float64)
    ign = cluster.labels == IGNORED
    out[ign] = ema.values[ign]
    return ProbMap(out)


def _clamp(values):
    return np.clip(values, CLAMP_EPS, 1.0 - CLAMP_EPS)


def partial_ce_loss(pred, labels):
    """Binary cross entropy averaged over the non-ignored pixels only."""
    if (pred.height, pred.width) != (labels.height, labels.width):
        raise ValueError("prediction and label dimensions differ")
    omega = labels.labels != IGNORED
    if not np.any(omega):
        raise ValueError("no non-ignored pixels")
    t = labels.labels[omega].astype(np.float64)
    y = _clamp(pred.values[omega])
    return float(-np.mean(t * np.log(y) + (1.0 - t) * np.log(1.0 - y)))


def kl_cot_loss(pseudo, pred, positive_term_only=False):
    """Per-pixel binary KL divergence from the pseudo label to the prediction.

    Both arguments are clamped before the logs.  ``positive_term_only``
    drops the (1-p) term, matching co-training formulations that only
    penalize the positive class; the default two-term form is a true
    divergence (zero iff the maps agree).
    """
    if (pseudo.height, pseudo.width) != (pred.height, pred.width):
        raise ValueError("pseudo and prediction dimensions differ")
    p = _clamp(pseudo.values)
    y = _clamp(pred.values)
    terms = p * np.log(p / y)
    if not positive_term_only:
        terms = terms + (1.0 - p) * np.log((1.0 - p) / (1.0 - y))
    return float(np.mean(terms))


def colorization_loss(pred_rgb, target_rgb):
    """Mean per-pixel squared L2 distance over the three channels."""
    if (pred_rgb.height, pred_rgb.width) != (target_rgb.height, target_rgb.width):
        raise ValueError("image dimensions differ")
    diff = pred_rgb.samples - target_rgb.samples
    return float(np.sum(diff * diff) / (pred_rgb.height * pred_rgb.width))


def _check_epoch(n, cfg):
    if not 0 <= n <= cfg.n_max:
        raise ValueError("epoch %d out of range [0, %d]" % (n, cfg.n_max))


def schedule_alpha(n, cfg=ScheduleConfig()):
    """Co-training weight: grows as (n/n_max)^2 from 0 to eta."""
    _check_epoch(n, cfg)
    return cfg.eta * (n / cfg.n_max) ** 2


def schedule_beta(n, cfg=ScheduleConfig()):
    """Colorization weight: decays as (1 - n/n_max)^2 from epsilon to 0."""
    _check_epoch(n, cfg)
    return cfg.epsilon * (1.0 - n / cfg.n_max) ** 2


def total_loss(
    l_vor1, l_clu1, l_cot1, l_color1, l_vor2, l_clu2, l_cot2, l_color2, alpha, beta
):
    """Sum of both networks' terms with the scheduled weights applied."""
    return (
        l_vor1
        + l_clu1
        + alpha * l_cot1
        + beta * l_color1
        + l_vor2
        + l_clu2
        + alpha * l_cot2
        + beta * l_color2
    )
