"""Differentiable losses and ramp schedules.

These are torch replicas of the toolkit's reference losses; tests serialize
tensors to the toolkit formats and check both routes agree via the
``pointprop loss`` subcommands.  Same clamp (1e-7) and same reductions:
cross entropy and KL average over pixels, colorization averages the
3-channel squared L2 over pixels, so the channel dimension is summed.
All take single images, not batches.
"""

import torch

CLAMP = 1e-7

IGNORED = 2


def _clamp(t):
    return t.clamp(CLAMP, 1.0 - CLAMP)


def masked_bce(pred, codes):
    """Cross entropy over the labelled (non-ignored) pixels.

    pred: (H, W) probabilities; codes: (H, W) integer labels {0, 1, 2}.
    """
    mask = codes != IGNORED
    if not bool(mask.any()):
        raise ValueError("no non-ignored pixels")
    t = codes[mask].to(pred.dtype)
    y = _clamp(pred[mask])
    return -(t * y.log() + (1.0 - t) * (1.0 - y).log()).mean()


def binary_kl(pseudo, pred, positive_only=False):
    p = _clamp(pseudo)
    y = _clamp(pred)
    terms = p * (p / y).log()
    if not positive_only:
        terms = terms + (1.0 - p) * ((1.0 - p) / (1.0 - y)).log()
    return terms.mean()


def color_mse(pred_rgb, target_rgb):
    """pred/target: (3, H, W); per-pixel squared L2 summed over channels."""
    diff = pred_rgb - target_rgb
    return diff.pow(2).sum(dim=0).mean()


def _check_epoch(n, n_max):
    if not 0 <= n <= n_max:
        raise ValueError("epoch %d out of range [0, %d]" % (n, n_max))


def alpha(n, n_max, eta=1.0):
    """Co-training weight: 0 at the start, eta at n_max, quadratic ramp."""
    _check_epoch(n, n_max)
    return eta * (n / n_max) ** 2


def beta(n, n_max, epsilon=0.1):
    """Colorization weight: epsilon at the start, 0 at n_max."""
    _check_epoch(n, n_max)
    return epsilon * (1.0 - n / n_max) ** 2
