"""Image containers, sRGB conversion, PNG I/O, and resampling.

Images are plain numpy arrays: a linear RGB image is float64 H x W x 3 in
(nominally) [0, 1], an intensity map is float64 H x W. Coordinates are
(x = column, y = row) with origin at the top-left, so pixel access is
``img[y, x]``. Values are clamped to [0, 1] only on 8-bit export, never
inside numeric pipelines.
"""

import numpy as np
from PIL import Image

# sRGB electro-optical transfer function breakpoints
_SRGB_EOTF_KNEE = 0.04045
_SRGB_OETF_KNEE = 0.0031308


def srgb_to_linear(raster):
    """Decode an 8-bit sRGB raster (uint8, any shape) to linear light in [0, 1]."""
    v = np.asarray(raster, dtype=np.float64) / 255.0
    return np.where(v <= _SRGB_EOTF_KNEE, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(img):
    """Encode a linear-light array to 8-bit sRGB, clamping to [0, 1] first."""
    v = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    enc = np.where(v <= _SRGB_OETF_KNEE, v * 12.92, 1.055 * v ** (1.0 / 2.4) - 0.055)
    return np.clip(np.rint(enc * 255.0), 0, 255).astype(np.uint8)


def load_png(path):
    """Read an image file as an H x W x 3 uint8 RGB array (alpha dropped)."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image '{path}': {exc}") from exc


def load_linear(path):
    """Read an sRGB-encoded image file and decode it to a linear RGB image."""
    return srgb_to_linear(load_png(path))


def save_png_linear(img, path):
    """Write a linear RGB image as an 8-bit sRGB PNG."""
    Image.fromarray(linear_to_srgb(img), mode="RGB").save(path, format="PNG")


def save_png_gray(intensity, path):
    """Write an intensity map as a grayscale PNG (sRGB-encoded)."""
    Image.fromarray(linear_to_srgb(intensity), mode="L").save(path, format="PNG")


def mean_intensity(img):
    """Per-pixel arithmetic mean of the three channels."""
    return np.asarray(img, dtype=np.float64).mean(axis=2)


def _sample_axis(length, new_length):
    # half-pixel-centered source coordinates, clipped to the valid range
    # (edge replication at the borders)
    coords = (np.arange(new_length) + 0.5) * (length / new_length) - 0.5
    coords = np.clip(coords, 0.0, length - 1.0)
    lo = np.floor(coords).astype(np.intp)
    hi = np.minimum(lo + 1, length - 1)
    t = coords - lo
    return lo, hi, t


def resize_bilinear(img, new_w, new_h):
    """Separable bilinear resampling with half-pixel-centered sampling.

    Works on H x W and H x W x C arrays. Output values are convex
    combinations of inputs, so constants map to constants and the output
    range never exceeds the input range.
    """
    if new_w < 1 or new_h < 1:
        raise ValueError(f"target size must be >= 1, got {new_w}x{new_h}")
    a = np.asarray(img, dtype=np.float64)
    h, w = a.shape[:2]
    x0, x1, tx = _sample_axis(w, new_w)
    y0, y1, ty = _sample_axis(h, new_h)
    if a.ndim == 3:
        tx = tx[:, None]
    ty = ty.reshape((new_h,) + (1,) * (a.ndim - 1))
    row = a[:, x0] * (1.0 - tx) + a[:, x1] * tx
    return row[y0] * (1.0 - ty) + row[y1] * ty


# ---------------------------------------------------------------------------
# color-space conversions

# linear sRGB -> XYZ, D65 white point
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])


def linear_rgb_to_lab(img):
    """Convert a linear RGB image to CIELab (D65), shape H x W x 3.

    L* is in [0, 100] for in-gamut input; a*, b* are signed.
    """
    xyz = np.asarray(img, dtype=np.float64) @ _RGB_TO_XYZ.T
    ratio = xyz / _WHITE_D65
    eps = (6.0 / 29.0) ** 3
    f = np.where(ratio > eps, np.cbrt(ratio), ratio / (3.0 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def hsv_to_srgb8(h, s, v):
    """Vectorized HSV -> 8-bit sRGB. h, s, v are arrays in [0, 1]."""
    h = np.asarray(h, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    i = np.floor(h * 6.0).astype(np.intp) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
