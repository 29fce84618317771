"""L1 piecewise flattening: a piecewise-constant proxy for reflectance.

Minimizes  E = E_local + alpha * E_global + beta * E_approx  over an
output image q, where E_local sums affinity-weighted L1 differences
over an h x h pixel neighborhood, E_global does the same over one
representative pixel per superpixel, and E_approx = ||q - p||^2 keeps q
near the input p. Affinities are Gaussian in a CIELab feature space of
the INPUT and stay frozen during optimization.

Each L1 term is majorized by a quadratic reweighted at the current
iterate, so every outer iteration solves a sparse SPD system per
channel (conjugate gradient, Jacobi-preconditioned) and the total
energy never increases.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg

from .image import linear_rgb_to_lab


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class FlattenParams:
    alpha: float = 20.0          # global-sparsity weight
    beta: float = 1.0            # data weight
    kappa: float = 1.2           # lightness scaling in the feature vector
    sigma_aff: float = 0.25      # affinity bandwidth
    neighborhood: int = 5        # odd window width h of the local term
    n_superpixels: int = 1000
    irls_eps: float = 1e-4       # smoothing floor for |.| reweighting
    max_iters: int = 30
    cg_tol: float = 1e-8
    cg_maxiter: int = 2000

    def __post_init__(self):
        numeric = (
            self.alpha, self.beta, self.kappa, self.sigma_aff,
            self.neighborhood, self.n_superpixels, self.irls_eps,
            self.max_iters, self.cg_tol, self.cg_maxiter,
        )
        if any(v <= 0 for v in numeric):
            raise ValueError(f"all flattening parameters must be positive: {self}")
        if self.neighborhood % 2 == 0:
            raise ValueError(f"neighborhood width must be odd, got {self.neighborhood}")


@dataclass
class SuperpixelSegmentation:
    """Label map with contiguous ids 0..K-1 and one representative per id.

    Representatives are flat (row-major) pixel indices, each the member
    closest to its superpixel's mean Lab color (ties: lowest index).
    """

    labels: np.ndarray
    representatives: np.ndarray

    @property
    def n_superpixels(self):
        return len(self.representatives)


def flatten_features(img, kappa):
    """Per-pixel affinity features: CIELab scaled to ~[0, 1], L times kappa."""
    lab = linear_rgb_to_lab(img) / 100.0
    lab[..., 0] *= kappa
    return lab


def affinity(fi, fj, sigma):
    """Gaussian affinity exp(-||fi - fj||^2 / (2 sigma^2)) in (0, 1]."""
    fi = np.asarray(fi, dtype=np.float64)
    fj = np.asarray(fj, dtype=np.float64)
    d2 = np.sum((fi - fj) ** 2, axis=-1)
    return np.exp(-d2 / (2.0 * sigma * sigma))


# ---------------------------------------------------------------------------
# superpixels

def slic_superpixels(img, n_superpixels, compactness=10.0, n_iters=10):
    """SLIC-style k-means over (Lab, xy) with connectivity enforcement."""
    if n_superpixels < 1:
        raise ValueError(f"n_superpixels must be >= 1, got {n_superpixels}")
    a = np.asarray(img, dtype=np.float64)
    h, w = a.shape[:2]
    n = h * w
    k = min(int(n_superpixels), n)
    lab = linear_rgb_to_lab(a)

    gy = max(1, min(h, round(math.sqrt(k * h / w))))
    gx = max(1, min(w, round(k / gy)))
    step = math.sqrt(n / (gy * gx))

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    # initial assignment by grid cell keeps every pixel labeled
    cell_y = np.minimum((ys * gy / h).astype(np.intp), gy - 1)
    cell_x = np.minimum((xs * gx / w).astype(np.intp), gx - 1)
    labels = cell_y * gx + cell_x
    n_centers = gy * gx

    spatial_scale = (compactness / step) ** 2
    for _ in range(n_iters):
        centers_lab = np.zeros((n_centers, 3))
        centers_xy = np.zeros((n_centers, 2))
        counts = np.bincount(labels.ravel(), minlength=n_centers).astype(np.float64)
        for c in range(3):
            centers_lab[:, c] = np.bincount(
                labels.ravel(), weights=lab[..., c].ravel(), minlength=n_centers
            )
        centers_xy[:, 0] = np.bincount(labels.ravel(), weights=ys.ravel(), minlength=n_centers)
        centers_xy[:, 1] = np.bincount(labels.ravel(), weights=xs.ravel(), minlength=n_centers)
        occupied = counts > 0
        centers_lab[occupied] /= counts[occupied, None]
        centers_xy[occupied] /= counts[occupied, None]

        best = np.full((h, w), np.inf)
        new_labels = labels.copy()
        reach = int(math.ceil(2.0 * step))
        for c in np.flatnonzero(occupied):
            cy, cx = centers_xy[c]
            ys0, ys1 = max(0, int(cy) - reach), min(h, int(cy) + reach + 1)
            xs0, xs1 = max(0, int(cx) - reach), min(w, int(cx) + reach + 1)
            d_lab = np.sum((lab[ys0:ys1, xs0:xs1] - centers_lab[c]) ** 2, axis=2)
            d_xy = (ys[ys0:ys1, xs0:xs1] - cy) ** 2 + (xs[ys0:ys1, xs0:xs1] - cx) ** 2
            dist = d_lab + spatial_scale * d_xy
            closer = dist < best[ys0:ys1, xs0:xs1]
            best[ys0:ys1, xs0:xs1] = np.where(closer, dist, best[ys0:ys1, xs0:xs1])
            new_labels[ys0:ys1, xs0:xs1] = np.where(closer, c, new_labels[ys0:ys1, xs0:xs1])
        # pixels outside every search window keep their previous label
        labels = new_labels

    labels = _enforce_connectivity(labels)
    return _finalize_segmentation(labels, lab)


def _enforce_connectivity(labels):
    """Keep each label's largest connected component; orphans adopt a
    neighboring label."""
    h, w = labels.shape
    n = h * w
    flat = labels.ravel()
    idx = np.arange(n).reshape(h, w)

    same_right = flat[idx[:, :-1].ravel()] == flat[idx[:, 1:].ravel()]
    same_down = flat[idx[:-1, :].ravel()] == flat[idx[1:, :].ravel()]
    rows = np.concatenate([idx[:, :-1].ravel()[same_right], idx[:-1, :].ravel()[same_down]])
    cols = np.concatenate([idx[:, 1:].ravel()[same_right], idx[1:, :].ravel()[same_down]])
    graph = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    n_comp, comp = connected_components(graph, directed=False)

    comp_size = np.bincount(comp, minlength=n_comp)
    comp_label = np.full(n_comp, -1, dtype=np.intp)
    comp_label[comp] = flat
    # largest component per label wins
    order = np.lexsort((comp_size, comp_label))
    main_of_label = {}
    for ci in order:
        main_of_label[comp_label[ci]] = ci
    is_main = np.zeros(n_comp, dtype=bool)
    is_main[list(main_of_label.values())] = True

    orphan = ~is_main[comp].reshape(h, w)
    result = labels.copy()
    while orphan.any():
        adopted = False
        for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            src_dst = _shift_pairs(h, w, dy, dx)
            if src_dst is None:
                continue
            (sy, sx), (ty, tx) = src_dst
            can = orphan[ty, tx] & ~orphan[sy, sx]
            if can.any():
                result[ty, tx] = np.where(can, result[sy, sx], result[ty, tx])
                o = orphan[ty, tx].copy()
                o[can] = False
                orphan[ty, tx] = o
                adopted = True
        if not adopted:
            break
    return result


def _shift_pairs(h, w, dy, dx):
    sy = slice(max(0, dy), h + min(0, dy))
    ty = slice(max(0, -dy), h + min(0, -dy))
    sx = slice(max(0, dx), w + min(0, dx))
    tx = slice(max(0, -dx), w + min(0, -dx))
    if sy.start >= h or sx.start >= w:
        return None
    return (sy, sx), (ty, tx)


def _finalize_segmentation(labels, lab):
    h, w = labels.shape
    flat = labels.ravel()
    uniq, flat = np.unique(flat, return_inverse=True)
    k = len(uniq)
    lab_flat = lab.reshape(-1, 3)

    mean_lab = np.zeros((k, 3))
    counts = np.bincount(flat, minlength=k).astype(np.float64)
    for c in range(3):
        mean_lab[:, c] = np.bincount(flat, weights=lab_flat[:, c], minlength=k) / counts

    d2 = np.sum((lab_flat - mean_lab[flat]) ** 2, axis=1)
    reps = np.zeros(k, dtype=np.intp)
    order = np.argsort(flat, kind="stable")    # groups by label, index ascending
    grouped = np.split(order, np.cumsum(np.bincount(flat, minlength=k))[:-1])
    for label, members in enumerate(grouped):
        reps[label] = members[np.argmin(d2[members])]
    return SuperpixelSegmentation(flat.reshape(h, w), reps)


# ---------------------------------------------------------------------------
# energy and solver

def _local_pairs(h, w, half):
    """Unordered in-neighborhood pixel pairs as flat index arrays (i, j)."""
    idx = np.arange(h * w).reshape(h, w)
    pairs_i, pairs_j = [], []
    for dy in range(0, half + 1):
        for dx in range(-half, half + 1):
            if dy == 0 and dx <= 0:
                continue
            i_block = idx[0:h - dy, max(0, -dx):w - max(0, dx)]
            j_block = idx[dy:h, max(0, dx):w + min(0, dx)]
            pairs_i.append(i_block.ravel())
            pairs_j.append(j_block.ravel())
    if not pairs_i:
        return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
    return np.concatenate(pairs_i), np.concatenate(pairs_j)


def _edge_weights(p, seg, params):
    """Frozen affinity weights of the local and global terms, from the input."""
    h, w = p.shape[:2]
    feats = flatten_features(p, params.kappa).reshape(-1, 3)
    half = (params.neighborhood - 1) // 2
    li, lj = _local_pairs(h, w, half)
    local_w = affinity(feats[li], feats[lj], params.sigma_aff)

    reps = np.asarray(seg.representatives, dtype=np.intp)
    gi, gj = np.triu_indices(len(reps), k=1)
    gi, gj = reps[gi], reps[gj]
    global_w = affinity(feats[gi], feats[gj], params.sigma_aff)
    return (li, lj, local_w), (gi, gj, global_w)


def flatten_energy(q, p, seg, params):
    """Evaluate (E, E_local, E_global, E_approx) for a candidate image q."""
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.shape != p.shape:
        raise ValueError(f"candidate shape {q.shape} does not match input {p.shape}")
    (li, lj, lw), (gi, gj, gw) = _edge_weights(p, seg, params)
    qf = q.reshape(-1, 3)
    # each unordered pair appears twice in the ordered double sums
    e_local = 2.0 * float(np.sum(lw * np.sum(np.abs(qf[li] - qf[lj]), axis=1)))
    e_global = 2.0 * float(np.sum(gw * np.sum(np.abs(qf[gi] - qf[gj]), axis=1)))
    e_approx = float(np.sum((q - p) ** 2))
    total = e_local + params.alpha * e_global + params.beta * e_approx
    return total, e_local, e_global, e_approx


@dataclass
class FlattenResult:
    image: np.ndarray
    energies: list            # (E, E_local, E_global, E_approx) per outer iteration
    converged: bool


def flatten(p, params=FlattenParams(), seg=None):
    """Run the flattening optimization on a linear RGB image.

    Iteratively reweighted least squares: every outer iteration solves
    one sparse SPD system per channel by conjugate gradient from the
    current iterate, which guarantees a non-increasing energy sequence
    (checked, with a small tolerance for CG slack).
    """
    p = np.asarray(p, dtype=np.float64)
    h, w = p.shape[:2]
    if seg is None:
        seg = slic_superpixels(p, params.n_superpixels)
    (li, lj, lw), (gi, gj, gw) = _edge_weights(p, seg, params)
    ei = np.concatenate([li, gi])
    ej = np.concatenate([lj, gj])
    base_w = np.concatenate([lw, params.alpha * gw])

    q = p.copy()
    energies = [flatten_energy(q, p, seg, params)]
    slack = 1e-8 * energies[0][0] + 1e-9
    converged = False
    n = h * w
    pf = p.reshape(-1, 3)
    qf = q.reshape(-1, 3)
    for it in range(params.max_iters):
        for c in range(3):
            diff = np.abs(qf[ei, c] - qf[ej, c])
            theta = base_w / np.maximum(diff, params.irls_eps)
            lap_rows = np.concatenate([ei, ej, ei, ej])
            lap_cols = np.concatenate([ej, ei, ei, ej])
            lap_vals = np.concatenate([-theta, -theta, theta, theta])
            a_mat = sparse.coo_matrix((lap_vals, (lap_rows, lap_cols)), shape=(n, n)).tocsr()
            a_mat = a_mat + params.beta * sparse.identity(n, format="csr")
            precond = sparse.diags(1.0 / a_mat.diagonal())
            x, info = cg(
                a_mat,
                params.beta * pf[:, c],
                x0=qf[:, c],
                rtol=params.cg_tol,
                atol=0.0,
                maxiter=params.cg_maxiter,
                M=precond,
            )
            if info > 0:
                raise SolverError(
                    f"conjugate gradient did not converge within {params.cg_maxiter} "
                    f"iterations (outer iteration {it}, channel {c})"
                )
            qf[:, c] = x
        energies.append(flatten_energy(qf.reshape(h, w, 3), p, seg, params))
        if energies[-1][0] > energies[-2][0] + slack:
            raise SolverError(
                f"energy increased at outer iteration {it}: "
                f"{energies[-2][0]:.6g} -> {energies[-1][0]:.6g}"
            )
        drop = energies[-2][0] - energies[-1][0]
        if drop < 1e-4 * max(energies[-2][0], 1e-300):
            converged = True
            break
    return FlattenResult(qf.reshape(h, w, 3), energies, converged)
