"""WHDR evaluation and the ratio-hinge training loss with exact subgradients.

Both the metric and the loss operate on ratios of reflectance
intensities at annotated point pairs, so they are invariant to global
rescaling of the prediction. A tiny epsilon guards the ratios against
zero reflectance.
"""

import statistics
from dataclasses import dataclass

import numpy as np

from .judgments import DARKER_1, DARKER_2, EQUAL

RATIO_EPS = 1e-10


@dataclass(frozen=True)
class WhdrParams:
    """Threshold delta controls when two reflectances count as different."""

    delta: float = 0.1

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")


@dataclass(frozen=True)
class HingeParams:
    """Hinge-loss threshold delta and margin xi (training defaults)."""

    delta: float = 0.12
    xi: float = 0.08

    def __post_init__(self):
        if self.delta < 0 or self.xi < 0:
            raise ValueError(f"delta and xi must be >= 0, got {self.delta}, {self.xi}")
        if 1.0 + self.delta - self.xi <= 0:
            raise ValueError("xi must be < 1 + delta")


def classify_pair(r1, r2, params):
    """Classify a reflectance pair as darker-1, darker-2, or equal."""
    if r1 < 0 or r2 < 0:
        raise ValueError(f"reflectance intensities must be >= 0, got {r1}, {r2}")
    threshold = 1.0 + params.delta
    if (r2 + RATIO_EPS) / (r1 + RATIO_EPS) > threshold:
        return DARKER_1
    if (r1 + RATIO_EPS) / (r2 + RATIO_EPS) > threshold:
        return DARKER_2
    return EQUAL


def whdr(resolved, rmap, params=WhdrParams()):
    """Weighted fraction of judgments the prediction disagrees with.

    ``resolved`` is the output of judgments.resolve_points for the raster
    ``rmap``. Returns None when there are no comparisons or the weights
    sum to zero (the image is then excluded from aggregates).
    """
    error_sum = 0.0
    weight_sum = 0.0
    for comparison, (x1, y1), (x2, y2) in resolved:
        predicted = classify_pair(float(rmap[y1, x1]), float(rmap[y2, x2]), params)
        if predicted != comparison.label:
            error_sum += comparison.weight
        weight_sum += comparison.weight
    if weight_sum <= 0.0:
        return None
    return error_sum / weight_sum


def hinge_loss(r1, r2, label, params):
    """Hinge penalty on the ratio r1/r2 for one labeled pair.

    Zero inside the label's admissible ratio region widened/narrowed by
    the margin xi, growing linearly outside it. For xi > delta the
    equal-label penalty is positive everywhere.
    """
    rho = (r1 + RATIO_EPS) / (r2 + RATIO_EPS)
    d, x = params.delta, params.xi
    if label == DARKER_1:
        return max(0.0, rho - 1.0 / (1.0 + d + x))
    if label == DARKER_2:
        return max(0.0, 1.0 + d + x - rho)
    if label == EQUAL:
        return max(0.0, 1.0 / (1.0 + d - x) - rho, rho - (1.0 + d - x))
    raise ValueError(f"unknown label {label!r}")


def _hinge_dloss_drho(rho, label, params):
    d, x = params.delta, params.xi
    if label == DARKER_1:
        return 1.0 if rho > 1.0 / (1.0 + d + x) else 0.0
    if label == DARKER_2:
        return -1.0 if rho < 1.0 + d + x else 0.0
    if label == EQUAL:
        lo = 1.0 / (1.0 + d - x) - rho
        hi = rho - (1.0 + d - x)
        if max(lo, hi) <= 0.0 or lo == hi:
            return 0.0
        return -1.0 if lo > hi else 1.0
    raise ValueError(f"unknown label {label!r}")


def hinge_subgradient(r1, r2, label, params):
    """(d loss / d r1, d loss / d r2); flat-side value 0 at kinks."""
    g1 = r1 + RATIO_EPS
    g2 = r2 + RATIO_EPS
    drho = _hinge_dloss_drho(g1 / g2, label, params)
    if drho == 0.0:
        return (0.0, 0.0)
    return (drho / g2, -drho * g1 / (g2 * g2))


def weighted_hinge_sum(resolved, rmap, params):
    """Weight-normalized hinge loss over an image and its gradient map.

    Returns (loss, dloss_drmap) where the gradient map has the shape of
    ``rmap`` and accumulates contributions of pairs sharing a pixel.
    Returns None when the weights sum to zero.
    """
    weight_sum = sum(c.weight for c, _, _ in resolved)
    if weight_sum <= 0.0:
        return None
    loss = 0.0
    grad = np.zeros_like(rmap, dtype=np.float64)
    for comparison, (x1, y1), (x2, y2) in resolved:
        r1 = float(rmap[y1, x1])
        r2 = float(rmap[y2, x2])
        loss += comparison.weight * hinge_loss(r1, r2, comparison.label, params)
        d1, d2 = hinge_subgradient(r1, r2, comparison.label, params)
        grad[y1, x1] += comparison.weight * d1
        grad[y2, x2] += comparison.weight * d2
    return loss / weight_sum, grad / weight_sum


def aggregate_whdr(values):
    """Mean and median over per-image WHDR values, ignoring None entries.

    Returns (mean, median, n_valid, n_excluded); mean/median are None
    when no image has a valid metric.
    """
    valid = [v for v in values if v is not None]
    excluded = len(values) - len(valid)
    if not valid:
        return None, None, 0, excluded
    return statistics.fmean(valid), statistics.median(valid), len(valid), excluded
