"""Per-pixel reflectance predictor: a small skip-connected ReLU network.

Each RGB pixel is mapped independently through n hidden layers of f
units; the outputs of every hidden layer are concatenated and fused by a
single linear unit whose sigmoid output is the scalar reflectance
intensity r in (0, 1). Because the receptive field is a single pixel,
the network is effectively a learned color lookup table, which is
exploited to decompose an image in one dense pass.

Training minimizes the weight-normalized ratio-hinge loss at annotated
pixel pairs with ADAM; gradients are exact reverse-mode derivatives.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import image as img_ops
from . import judgments as judg
from . import whdr as whdr_ops

TRAIN_RESOLUTION = 256


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class PixelNetConfig:
    n_layers: int = 5
    n_filters: int = 32

    def __post_init__(self):
        if self.n_layers < 1 or self.n_filters < 1:
            raise ValueError(f"need n_layers >= 1 and n_filters >= 1, got {self}")


@dataclass
class PixelNet:
    """Hidden layer weights/biases plus the fuse layer over the skip concat."""

    weights: list          # weights[i]: (f, in_dim) with in_dim = 3 or f
    biases: list           # biases[i]: (f,)
    fuse_w: np.ndarray     # (n_layers * f,)
    fuse_b: float

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def n_filters(self):
        return self.weights[0].shape[0]

    @property
    def config(self):
        return PixelNetConfig(self.n_layers, self.n_filters)


def init_network(config=PixelNetConfig(), seed=0):
    """He-style uniform fan-in initialization, zero biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n, f = config.n_layers, config.n_filters
    weights, biases = [], []
    in_dim = 3
    for _ in range(n):
        bound = np.sqrt(6.0 / in_dim)
        weights.append(rng.uniform(-bound, bound, size=(f, in_dim)))
        biases.append(np.zeros(f))
        in_dim = f
    bound = np.sqrt(6.0 / (n * f))
    fuse_w = rng.uniform(-bound, bound, size=n * f)
    return PixelNet(weights, biases, fuse_w, 0.0)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_pixels(net, pixels):
    """Forward a (N, 3) pixel batch; returns (r, hidden activations list)."""
    hidden = []
    h = pixels
    for w, b in zip(net.weights, net.biases):
        h = np.maximum(h @ w.T + b, 0.0)
        hidden.append(h)
    z = np.concatenate(hidden, axis=1) @ net.fuse_w + net.fuse_b
    return _sigmoid(z), hidden


def forward(net, pixel):
    """Reflectance intensity in (0, 1) for a single linear RGB triple."""
    r, _ = _forward_pixels(net, np.asarray(pixel, dtype=np.float64).reshape(1, 3))
    return float(r[0])


def forward_image(net, img):
    """Apply the network to every pixel; returns an H x W intensity map."""
    a = np.asarray(img, dtype=np.float64)
    h, w = a.shape[:2]
    r, _ = _forward_pixels(net, a.reshape(-1, 3))
    return r.reshape(h, w)


def zero_gradients(net):
    return (
        [np.zeros_like(w) for w in net.weights],
        [np.zeros_like(b) for b in net.biases],
        np.zeros_like(net.fuse_w),
        0.0,
    )


def backward(net, img, grad_r):
    """Parameter gradients of sum(grad_r * forward_image(net, img)).

    ``grad_r`` is a per-pixel dL/dr map matching the image. The ReLU
    derivative at exactly zero is taken as zero. Pixels with zero
    gradient contribute nothing, so only the nonzero ones are evaluated.
    """
    a = np.asarray(img, dtype=np.float64)
    g = np.asarray(grad_r, dtype=np.float64)
    if a.shape[:2] != g.shape:
        raise ValueError(f"gradient map shape {g.shape} does not match image {a.shape[:2]}")

    flat_g = g.reshape(-1)
    nz = np.flatnonzero(flat_g)
    if nz.size == 0:
        return zero_gradients(net)
    pixels = a.reshape(-1, 3)[nz]
    gr = flat_g[nz]

    r, hidden = _forward_pixels(net, pixels)
    n, f = net.n_layers, net.n_filters

    dz = gr * r * (1.0 - r)                      # through the sigmoid
    concat = np.concatenate(hidden, axis=1)
    d_fuse_w = concat.T @ dz
    d_fuse_b = float(dz.sum())

    d_weights = [None] * n
    d_biases = [None] * n
    d_next_pre = None                            # dL/d(pre-activation of layer i+1)
    for i in range(n - 1, -1, -1):
        dh = dz[:, None] * net.fuse_w[i * f:(i + 1) * f]   # skip path
        if d_next_pre is not None:
            dh = dh + d_next_pre @ net.weights[i + 1]
        dpre = dh * (hidden[i] > 0.0)
        inp = pixels if i == 0 else hidden[i - 1]
        d_weights[i] = dpre.T @ inp
        d_biases[i] = dpre.sum(axis=0)
        d_next_pre = dpre
    return d_weights, d_biases, d_fuse_w, d_fuse_b


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    """Bias-corrected ADAM moments, one buffer per parameter array."""

    m: list
    v: list
    step: int = 0
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params, **kwargs):
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kwargs,
        )


def _param_list(net):
    return net.weights + net.biases + [net.fuse_w, np.array([net.fuse_b])]


def _grad_list(grads):
    d_weights, d_biases, d_fuse_w, d_fuse_b = grads
    return d_weights + d_biases + [d_fuse_w, np.array([d_fuse_b])]


def _set_params(net, params):
    n = net.n_layers
    net.weights = params[:n]
    net.biases = params[n:2 * n]
    net.fuse_w = params[2 * n]
    net.fuse_b = float(params[2 * n + 1][0])


def adam_step(params, grads, state):
    """One bias-corrected ADAM update; mutates params and state in place."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient at optimizer step {state.step}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


# ---------------------------------------------------------------------------
# training

def train(
    corpus,
    config=PixelNetConfig(),
    hinge=whdr_ops.HingeParams(),
    epochs=30,
    batch_size=2,
    seed=0,
    learning_rate=0.001,
    on_epoch=None,
):
    """Train a per-pixel network on images with pairwise judgments.

    Parameters
    ----------
    corpus : sequence of (linear RGB image, JudgmentSet)
        Images are resized to 256 x 256 for batching; judgments are
        resolved at that resolution.
    on_epoch : callable, optional
        Called as on_epoch(epoch_index, net, mean_loss) after each
        epoch; returning True stops training early.

    Returns
    -------
    (PixelNet, list of per-epoch mean training loss)
    """
    rng = np.random.default_rng(seed)
    net = init_network(config, rng)

    prepared = []
    for img, jset in corpus:
        resized = img_ops.resize_bilinear(img, TRAIN_RESOLUTION, TRAIN_RESOLUTION)
        resolved = judg.resolve_points(jset, TRAIN_RESOLUTION, TRAIN_RESOLUTION)
        if sum(c.weight for c, _, _ in resolved) > 0.0:
            prepared.append((resized, resolved))
    if not prepared:
        raise TrainingError("training corpus has no weighted comparisons")

    state = AdamState.for_params(_param_list(net), learning_rate=learning_rate)
    curve = []
    for epoch in range(epochs):
        order = rng.permutation(len(prepared))
        epoch_losses = []
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            batch_grads = None
            n_used = 0
            for idx in batch:
                resized, resolved = prepared[idx]
                rmap = forward_image(net, resized)
                result = whdr_ops.weighted_hinge_sum(resolved, rmap, hinge)
                if result is None:
                    continue
                loss, grad_map = result
                epoch_losses.append(loss)
                grads = _grad_list(backward(net, resized, grad_map))
                if batch_grads is None:
                    batch_grads = grads
                else:
                    for acc, g in zip(batch_grads, grads):
                        acc += g
                n_used += 1
            if n_used == 0:
                continue
            for g in batch_grads:
                g /= n_used
            params = _param_list(net)
            adam_step(params, batch_grads, state)
            _set_params(net, params)
        mean_loss = float(np.mean(epoch_losses)) if epoch_losses else 0.0
        curve.append(mean_loss)
        if on_epoch is not None and on_epoch(epoch, net, mean_loss):
            break
    return net, curve


# ---------------------------------------------------------------------------
# weights container

_MAGIC = b"PXNETWTS"
_FORMAT_VERSION = 1


def save_weights(net, path):
    """Write the versioned binary weights container plus a JSON sidecar."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _FORMAT_VERSION, net.n_layers, net.n_filters))
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(net.fuse_w, dtype="<f8").tobytes())
        fh.write(struct.pack("<d", net.fuse_b))
    sidecar = {
        "format": _MAGIC.decode(),
        "version": _FORMAT_VERSION,
        "n_layers": net.n_layers,
        "n_filters": net.n_filters,
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def load_weights(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"'{path}' is not a weights container (bad magic)")
        version, n, f = struct.unpack("<III", fh.read(12))
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported weights version {version} in '{path}'")

        def read_array(shape):
            count = int(np.prod(shape))
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"truncated weights container '{path}'")
            return np.frombuffer(buf, dtype="<f8").reshape(shape).copy()

        weights, biases = [], []
        in_dim = 3
        for _ in range(n):
            weights.append(read_array((f, in_dim)))
            biases.append(read_array((f,)))
            in_dim = f
        fuse_w = read_array((n * f,))
        (fuse_b,) = struct.unpack("<d", fh.read(8))
    return PixelNet(weights, biases, fuse_w, fuse_b)


# ---------------------------------------------------------------------------
# diagnostics

def lookup_table_image(net, value=255, size=256):
    """Hue/saturation sweep at a fixed 8-bit brightness plus its prediction.

    Hue varies along x, saturation along y (zero saturation in row 0).
    Returns (input sweep as a linear RGB image, predicted intensity map).
    """
    hue = np.tile((np.arange(size) / size)[None, :], (size, 1))
    sat = np.tile((np.arange(size) / max(size - 1, 1))[:, None], (1, size))
    val = np.full((size, size), value / 255.0)
    sweep8 = img_ops.hsv_to_srgb8(hue, sat, val)
    sweep_linear = img_ops.srgb_to_linear(sweep8)
    return sweep_linear, forward_image(net, sweep_linear)


def output_range(net, img):
    """Observed (min, max) of the prediction on one image, for logging."""
    r = forward_image(net, img)
    return float(r.min()), float(r.max())
