"""Edge-aware smoothing under a guidance image.

Two filters: a joint bilateral filter whose weights combine spatial
distance and guidance-color distance, and a guided filter based on a
locally linear model, computed in O(N) with integral-image box sums.
Guidance color distances and the guided-filter regularizer are
interpreted on the 0..255 intensity scale, matching the parameter
ranges the filters were tuned on.

Both filters renormalize at image borders: the bilateral restricts the
kernel to in-bounds neighbors, the guided filter clips windows and uses
their true pixel counts.
"""

import math
from dataclasses import dataclass

import numpy as np

INTENSITY_SCALE = 255.0


@dataclass(frozen=True)
class BilateralParams:
    """sigma_s in pixels, sigma_r in 0..255 intensity units."""

    sigma_s: float = 28.0
    sigma_r: float = 15.0

    def __post_init__(self):
        if self.sigma_s <= 0 or self.sigma_r <= 0:
            raise ValueError(f"sigma_s and sigma_r must be > 0, got {self}")


@dataclass(frozen=True)
class GuidedParams:
    """Window half-width (pixels) and regularizer in squared 0..255 units."""

    radius: int = 45
    epsilon: float = 3.0

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")


# tuned defaults per guidance choice
BILATERAL_FLAT_GUIDANCE = BilateralParams(sigma_s=28.0, sigma_r=15.0)
BILATERAL_SELF_GUIDANCE = BilateralParams(sigma_s=22.0, sigma_r=20.0)
GUIDED_FLAT_GUIDANCE = GuidedParams(radius=45, epsilon=3.0)
GUIDED_SELF_GUIDANCE = GuidedParams(radius=7, epsilon=52.0)


def joint_bilateral(inp, guidance, params):
    """Smooth ``inp`` under ``guidance``; weights decay with spatial and
    guidance-color distance (squared distances over sigma^2, kernel
    truncated at spatial radius ceil(3 sigma_s)).

    ``inp`` may be H x W or H x W x C; ``guidance`` likewise (color
    distance is the Euclidean norm over its channels, scaled to 0..255).
    Per-pixel weights are normalized to sum to one.
    """
    p = np.asarray(inp, dtype=np.float64)
    g = np.asarray(guidance, dtype=np.float64) * INTENSITY_SCALE
    if p.shape[:2] != g.shape[:2]:
        raise ValueError(f"input {p.shape[:2]} and guidance {g.shape[:2]} sizes differ")
    if g.ndim == 2:
        g = g[:, :, None]
    flat_p = p if p.ndim == 3 else p[:, :, None]

    h, w = p.shape[:2]
    radius = math.ceil(3.0 * params.sigma_s)
    inv_ss = 1.0 / (params.sigma_s ** 2)
    inv_sr = 1.0 / (params.sigma_r ** 2)

    num = np.zeros_like(flat_p)
    den = np.zeros((h, w))
    for dy in range(-radius, radius + 1):
        ys_dst = slice(max(0, -dy), min(h, h - dy))
        ys_src = slice(max(0, dy), min(h, h + dy))
        if ys_dst.start >= ys_dst.stop:
            continue
        for dx in range(-radius, radius + 1):
            xs_dst = slice(max(0, -dx), min(w, w - dx))
            xs_src = slice(max(0, dx), min(w, w + dx))
            if xs_dst.start >= xs_dst.stop:
                continue
            diff = g[ys_src, xs_src] - g[ys_dst, xs_dst]
            weight = np.exp(
                -(dx * dx + dy * dy) * inv_ss - np.sum(diff * diff, axis=2) * inv_sr
            )
            den[ys_dst, xs_dst] += weight
            num[ys_dst, xs_dst] += weight[:, :, None] * flat_p[ys_src, xs_src]
    out = num / den[:, :, None]
    return out if p.ndim == 3 else out[:, :, 0]


# ---------------------------------------------------------------------------
# guided filter

def box_sum(arr, radius):
    """Sum of each (2*radius+1)^2 window clipped at the borders.

    Computed with an integral image; works on H x W and H x W x C arrays.
    """
    a = np.asarray(arr, dtype=np.float64)
    h, w = a.shape[:2]
    integral = np.zeros((h + 1, w + 1) + a.shape[2:], dtype=np.float64)
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=integral[1:, 1:])
    y0 = np.clip(np.arange(h) - radius, 0, h)
    y1 = np.clip(np.arange(h) + radius + 1, 0, h)
    x0 = np.clip(np.arange(w) - radius, 0, w)
    x1 = np.clip(np.arange(w) + radius + 1, 0, w)
    return (
        integral[np.ix_(y1, x1)]
        - integral[np.ix_(y0, x1)]
        - integral[np.ix_(y1, x0)]
        + integral[np.ix_(y0, x0)]
    )


def box_count(h, w, radius):
    """True pixel count of each border-clipped window."""
    ny = np.minimum(np.arange(h) + radius, h - 1) - np.maximum(np.arange(h) - radius, 0) + 1
    nx = np.minimum(np.arange(w) + radius, w - 1) - np.maximum(np.arange(w) - radius, 0) + 1
    return (ny[:, None] * nx[None, :]).astype(np.float64)


def guided_filter(inp, guidance, params):
    """Locally linear edge-preserving filter (fast box-sum path).

    ``guidance`` is a single-channel map in [0, 1] (scaled to 0..255
    internally so epsilon keeps its conventional units). ``inp`` may be
    H x W or H x W x C; channels share the window statistics of the
    guidance.
    """
    p = np.asarray(inp, dtype=np.float64)
    g = np.asarray(guidance, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"guidance must be single-channel, got shape {g.shape}")
    if p.shape[:2] != g.shape:
        raise ValueError(f"input {p.shape[:2]} and guidance {g.shape} sizes differ")
    g = g * INTENSITY_SCALE

    h, w = g.shape
    n = box_count(h, w, params.radius)
    mean_g = box_sum(g, params.radius) / n
    var_g = box_sum(g * g, params.radius) / n - mean_g * mean_g

    flat_p = p if p.ndim == 3 else p[:, :, None]
    out = np.empty_like(flat_p)
    for c in range(flat_p.shape[2]):
        pc = flat_p[:, :, c]
        mean_p = box_sum(pc, params.radius) / n
        cov_gp = box_sum(g * pc, params.radius) / n - mean_g * mean_p
        a = cov_gp / (var_g + params.epsilon)
        b = mean_p - a * mean_g
        out[:, :, c] = (box_sum(a, params.radius) / n) * g + box_sum(b, params.radius) / n
    return out if p.ndim == 3 else out[:, :, 0]


def guided_filter_naive(inp, guidance, params):
    """Direct evaluation of the guided filter as an explicit weight sum.

    Builds the full N x N weight matrix by accumulating, for every
    window, the (1 + (g_i - mu)(g_j - mu) / (var + eps)) / |window| term
    and normalizing rows by the number of windows covering each pixel.
    O(N * radius^4); test oracle for the fast path, with which it agrees
    on interior pixels (and, given the shared border convention, at the
    borders as well).
    """
    p = np.asarray(inp, dtype=np.float64)
    g = np.asarray(guidance, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"guidance must be single-channel, got shape {g.shape}")
    if p.shape[:2] != g.shape:
        raise ValueError(f"input {p.shape[:2]} and guidance {g.shape} sizes differ")
    g = g * INTENSITY_SCALE

    h, w = g.shape
    n_pixels = h * w
    flat_g = g.reshape(-1)
    weights = np.zeros((n_pixels, n_pixels))
    covering = np.zeros(n_pixels)
    rad = params.radius
    index = np.arange(n_pixels).reshape(h, w)
    for cy in range(h):
        for cx in range(w):
            ys = slice(max(0, cy - rad), min(h, cy + rad + 1))
            xs = slice(max(0, cx - rad), min(w, cx + rad + 1))
            members = index[ys, xs].reshape(-1)
            gm = flat_g[members]
            mu = gm.mean()
            var = np.mean(gm * gm) - mu * mu
            centered = gm - mu
            block = (1.0 + np.outer(centered, centered) / (var + params.epsilon)) / members.size
            weights[np.ix_(members, members)] += block
            covering[members] += 1.0
    weights /= covering[:, None]

    flat_p = p.reshape(n_pixels, -1)
    out = weights @ flat_p
    return out.reshape(p.shape)
