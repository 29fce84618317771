"""Decomposition pipelines: predictor -> guidance -> filtering -> (R, S).

A pipeline turns an input image into a scalar reflectance intensity map
r (network prediction, rescale baseline, or an external reflectance
image reduced to intensity), optionally smooths r with an edge-aware
filter under a guidance image (the input itself, its flattened version,
or an external image), and finally recovers the reflectance/shading
pair from r. Filtering operates on the scalar r, which preserves
chromaticity exactly under the achromatic shading model.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import filters as filt
from . import flatten as flat
from . import image as img_ops
from . import network as net_ops
from . import whdr as whdr_ops
from .judgments import resolve_points

MEAN_EPS = 1e-10


class ConfigurationError(ValueError):
    pass


@dataclass
class Decomposition:
    """Reflectance and achromatic shading with R * S = I."""

    reflectance: np.ndarray
    shading: np.ndarray


def recover_decomposition(img, r):
    """Recover (R, S) from the scalar reflectance intensity r.

    R_p = r_p / mean(I_p) * I_p and S_p = mean(I_p) / r_p * (1,1,1).
    Pixels with mean intensity <= 1e-10 map to R = S = 0; r is floored
    at 1e-10 in the shading division.
    """
    a = np.asarray(img, dtype=np.float64)
    rmap = np.asarray(r, dtype=np.float64)
    if a.shape[:2] != rmap.shape:
        raise ValueError(f"image {a.shape[:2]} and intensity map {rmap.shape} sizes differ")
    mean = img_ops.mean_intensity(a)
    dark = mean <= MEAN_EPS
    safe_mean = np.where(dark, 1.0, mean)
    reflectance = (rmap / safe_mean)[:, :, None] * a
    shading_1d = np.where(dark, 0.0, mean / np.maximum(rmap, MEAN_EPS))
    reflectance[dark] = 0.0
    shading = np.repeat(shading_1d[:, :, None], 3, axis=2)
    return Decomposition(reflectance, shading)


def rescale_baseline(img, a):
    """Reflectance intensity from rescaling mean intensity into [a, 1]."""
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"lower bound must be in [0, 1], got {a}")
    return a + (1.0 - a) * img_ops.mean_intensity(img)


@dataclass
class PipelineSpec:
    """Declarative description of one decomposition pipeline.

    predictor: "rescale:<a>" | "net:<weights path>" | "image:<path>"
    guidance:  "input" | "flat" | "image:<path>"
    filter:    "none" | "bilateral" | "guided"
    repeats:   number of filter applications (> 0 requires a filter)
    """

    predictor: str = "rescale:0.55"
    guidance: str = "input"
    filter: str = "none"
    repeats: int = 0
    bilateral: filt.BilateralParams = field(default_factory=filt.BilateralParams)
    guided: filt.GuidedParams = field(default_factory=filt.GuidedParams)
    flatten: flat.FlattenParams = field(default_factory=flat.FlattenParams)

    def __post_init__(self):
        if self.repeats < 0:
            raise ConfigurationError(f"repeats must be >= 0, got {self.repeats}")
        if self.repeats > 0 and self.filter == "none":
            raise ConfigurationError("repeats > 0 requires a filter")
        if self.filter not in ("none", "bilateral", "guided"):
            raise ConfigurationError(f"unknown filter {self.filter!r}")
        kind = self.predictor.split(":", 1)[0]
        if kind not in ("rescale", "net", "image"):
            raise ConfigurationError(f"unknown predictor {self.predictor!r}")
        if self.guidance != "input" and self.guidance != "flat" and not self.guidance.startswith("image:"):
            raise ConfigurationError(f"unknown guidance {self.guidance!r}")


@dataclass
class PipelineResult:
    decomposition: Decomposition
    r: np.ndarray                 # final intensity map
    r_initial: np.ndarray         # predictor output before filtering
    guidance: np.ndarray | None   # guidance image, when a filter ran
    timings: dict


def _predict(img, spec):
    kind, _, arg = spec.predictor.partition(":")
    if kind == "rescale":
        try:
            a = float(arg)
        except ValueError:
            raise ConfigurationError(f"bad rescale bound {arg!r}") from None
        return rescale_baseline(img, a)
    if kind == "net":
        net = net_ops.load_weights(arg)
        return net_ops.forward_image(net, img)
    if kind == "image":
        external = img_ops.load_linear(arg)
        if external.shape[:2] != np.asarray(img).shape[:2]:
            external = img_ops.resize_bilinear(
                external, np.asarray(img).shape[1], np.asarray(img).shape[0]
            )
        return img_ops.mean_intensity(external)
    raise ConfigurationError(f"unknown predictor {spec.predictor!r}")


def _guidance_image(img, spec, timings):
    if spec.guidance == "input":
        return np.asarray(img, dtype=np.float64)
    if spec.guidance == "flat":
        start = time.perf_counter()
        result = flat.flatten(img, spec.flatten)
        timings["flatten_s"] = time.perf_counter() - start
        return result.image
    path = spec.guidance.partition(":")[2]
    guidance = img_ops.load_linear(path)
    if guidance.shape[:2] != np.asarray(img).shape[:2]:
        raise ConfigurationError(
            f"guidance image {path!r} size {guidance.shape[:2]} does not match input"
        )
    return guidance


def run_pipeline(img, spec):
    """Run one full decomposition pipeline on a linear RGB image."""
    a = np.asarray(img, dtype=np.float64)
    timings = {}
    start = time.perf_counter()
    try:
        r = _predict(a, spec)
    except OSError as exc:
        raise ConfigurationError(str(exc)) from exc
    timings["predict_s"] = time.perf_counter() - start
    r_initial = r

    guidance = None
    if spec.filter != "none" and spec.repeats > 0:
        try:
            guidance = _guidance_image(a, spec, timings)
        except OSError as exc:
            raise ConfigurationError(str(exc)) from exc
        start = time.perf_counter()
        if spec.filter == "bilateral":
            for _ in range(spec.repeats):
                r = filt.joint_bilateral(r, guidance, spec.bilateral)
        else:
            guide_gray = img_ops.mean_intensity(guidance)
            for _ in range(spec.repeats):
                r = filt.guided_filter(r, guide_gray, spec.guided)
        timings["filter_s"] = time.perf_counter() - start

    start = time.perf_counter()
    decomposition = recover_decomposition(a, r)
    timings["recover_s"] = time.perf_counter() - start
    return PipelineResult(decomposition, r, r_initial, guidance, timings)


def sweep_rescale(corpus, a_grid, params=whdr_ops.WhdrParams()):
    """Mean WHDR of the rescale baseline over a grid of lower bounds.

    ``corpus`` is a sequence of (linear RGB image, JudgmentSet). Returns
    (rows, argmin_index) where each row is (a, mean_whdr, n_valid).
    """
    a_grid = list(a_grid)
    if not a_grid:
        raise ValueError("empty grid of lower bounds")
    if not corpus:
        raise ValueError("empty evaluation corpus")
    prepared = []
    for img, jset in corpus:
        intensity = img_ops.mean_intensity(img)
        h, w = intensity.shape
        prepared.append((intensity, resolve_points(jset, w, h)))
    rows = []
    for a in a_grid:
        scores = [
            whdr_ops.whdr(resolved, a + (1.0 - a) * intensity, params)
            for intensity, resolved in prepared
        ]
        mean, _, n_valid, _ = whdr_ops.aggregate_whdr(scores)
        rows.append((float(a), mean, n_valid))
    valid_rows = [i for i, row in enumerate(rows) if row[1] is not None]
    argmin = min(valid_rows, key=lambda i: rows[i][1]) if valid_rows else None
    return rows, argmin
