"""Batched linear-algebra kernels shared by the analysis modules.

Every routine works on stacks of matrices with a leading sample axis so
that one Python-level loop over time serves all sample points at once.
Long products are never formed explicitly; norms are accumulated in log
space with renormalisation at every step.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import subspace_angles

NEG_INF = float("-inf")


def log_norm2(x: np.ndarray) -> np.ndarray:
    """Log of the spectral norm of each matrix in a stack ``(N, a, b)``."""
    if x.shape[-1] == 0 or x.shape[-2] == 0:
        return np.full(x.shape[:-2], NEG_INF)
    if min(x.shape[-2:]) == 1:
        nrm = np.sqrt(np.sum(x * x, axis=(-2, -1)))
    else:
        nrm = np.linalg.svd(x, compute_uv=False)[..., 0]
    with np.errstate(divide="ignore"):
        return np.log(nrm)


def accumulate_log_norms(m0: np.ndarray, step, n: int) -> np.ndarray:
    """Log-norms of ``M_k = step(k-1, M_{k-1})`` for ``k = 0..n``.

    ``step`` must be linear in its matrix argument; the running matrix is
    rescaled after each step so that neither overflow nor underflow occurs.
    Zero products give ``-inf`` from then on.
    """
    out = np.empty(m0.shape[:-2] + (n + 1,))
    out[..., 0] = log_norm2(m0)
    m, scale = _normalise(m0, np.zeros(m0.shape[:-2]))
    for k in range(1, n + 1):
        m = step(k - 1, m)
        with np.errstate(invalid="ignore"):
            out[..., k] = scale + log_norm2(m)
        m, scale = _normalise(m, scale)
    return out


def _normalise(m: np.ndarray, scale: np.ndarray):
    f = np.sqrt(np.sum(m * m, axis=(-2, -1)))
    dead = ~(f > 0)
    safe = np.where(dead, 1.0, f)
    m = m / safe[..., None, None]
    with np.errstate(divide="ignore"):
        scale = np.where(dead, NEG_INF, scale + np.log(safe))
    return m, scale


def qr_pos(m: np.ndarray):
    """Batched reduced QR with a non-negative diagonal in ``R``."""
    q, r = np.linalg.qr(m)
    sign = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    sign = np.where(sign == 0, 1.0, sign)
    return q * sign[..., None, :], r * sign[..., :, None]


def random_frame(d: int, k: int, seed: int = 12345) -> np.ndarray:
    """A fixed generic orthonormal ``d x k`` frame."""
    g = np.random.Generator(np.random.PCG64(seed))
    q, _ = np.linalg.qr(g.standard_normal((d, max(k, 1))))
    return q[:, :k]


def complement(v: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``span v``."""
    d, k = v.shape[-2], v.shape[-1]
    if k == 0:
        return np.broadcast_to(np.eye(d), v.shape[:-2] + (d, d)).copy()
    q, _ = np.linalg.qr(v, mode="complete")
    return q[..., :, k:]


def lsq_slope(y: np.ndarray) -> np.ndarray:
    """Least-squares slope of ``y[..., n]`` against ``n = 1..len``.

    Non-finite tails (a product that has become exactly zero) are cut off;
    a series that is ``-inf`` before two points are available has slope
    ``-inf``.
    """
    y = np.asarray(y, dtype=float)
    out = np.empty(y.shape[:-1])
    flat_y = y.reshape(-1, y.shape[-1])
    flat_o = out.reshape(-1)
    for i, row in enumerate(flat_y):
        finite = np.isfinite(row)
        if finite.all():
            m = len(row)
        else:
            bad = np.flatnonzero(~finite)[0]
            if np.isposinf(row[bad]):
                flat_o[i] = np.inf
                continue
            m = bad
        if m < 2:
            flat_o[i] = NEG_INF
            continue
        n = np.arange(1, m + 1, dtype=float)
        nc = n - n.mean()
        flat_o[i] = float(np.dot(nc, row[:m] - row[:m].mean()) / np.dot(nc, nc))
    return out


def principal_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Largest principal angle between ``span a`` and ``span b``."""
    if a.shape[1] == 0 and b.shape[1] == 0:
        return 0.0
    if a.shape[1] != b.shape[1] or a.shape[1] == 0:
        return float(np.pi / 2)
    return float(subspace_angles(a, b).max())
