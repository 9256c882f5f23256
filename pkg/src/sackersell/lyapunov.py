"""Lyapunov exponents, the exponent ladder and Oseledets subspaces.

Exponents come from a QR (Benettin) iteration of a generic orthonormal
frame: after a burn-in of ``n_max // 4`` steps the logarithms of the
diagonal of ``R`` are averaged over the next ``n_max`` steps.  This is
the re-orthogonalised form of the product SVD and is exact for constant
triangularisable generators up to a transient that decays geometrically
in the spectral gaps.

Fast spaces at ``q`` are obtained by tracking a frame forward from
``f^{-n} q``; slow spaces from the transposed cocycle tracked backward
from ``f^{n} q`` (the right singular data of ``A(q, n)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _numerics as nm
from .base_dynamics import ShiftPoint, iterate, typical_points
from .cocycle import Cocycle, log_norm_series
from .quasicompactness import FiniteDim, _ext, kappa_estimate

NEG_INF = float("-inf")
DEFAULT_RESOLUTION = 0.05


def _label(mu) -> str:
    return getattr(mu, "label", type(mu).__name__)


def _block(c: Cocycle) -> int:
    return getattr(c.generator, "block", 1)


def top_exponent_samples(c: Cocycle, mu, n_max: int, seed: int = 0, count: int = 8) -> np.ndarray:
    """``(1/n_max) log ||A_a(q, n_max)||`` at each of ``count`` typical points."""
    if n_max < 8:
        raise ValueError("n_max must be >= 8")
    pts = typical_points(mu, c.system, count, seed, lookahead=n_max + _block(c))
    return log_norm_series(c, pts, n_max)[:, n_max] / n_max


def top_exponent(c: Cocycle, mu, n_max: int = 512, seed: int = 0, count: int = 8) -> float:
    """Top exponent ``lambda(mu)``: mean over typical points of the finite-``n`` rate."""
    return float(np.mean(top_exponent_samples(c, mu, n_max, seed, count)))


def qr_exponents(c: Cocycle, points, n_max: int, burn: int | None = None) -> np.ndarray:
    """Per-point QR exponents, shape ``(N, d)``, sorted decreasingly.

    The shift is subtracted after accumulation so that shifting is exact.
    """
    burn = n_max // 4 if burn is None else burn
    d = c.dim
    bundle = c.bundle(points, 0, burn + n_max)
    q = np.broadcast_to(nm.random_frame(d, d), (len(points), d, d)).copy()
    acc = np.zeros((len(points), d))
    with np.errstate(divide="ignore"):
        for j in range(burn + n_max):
            q, r = nm.qr_pos(bundle[j] @ q)
            if j >= burn:
                acc += np.log(np.abs(np.diagonal(r, axis1=-2, axis2=-1)))
    ex = acc / n_max - c.shift
    return -np.sort(-ex, axis=1)


@dataclass
class LyapunovSpectrum:
    """Exponent ladder ``(lambda_i, m_i)`` above the tail bound ``kappa``."""

    exponents: list
    kappa: float
    measure: str
    n_max: int
    resolution: float = DEFAULT_RESOLUTION
    spread: list = field(default_factory=list)
    samples: np.ndarray | None = None
    flags: list = field(default_factory=list)

    @property
    def values(self) -> list:
        return [lam for lam, _ in self.exponents]

    @property
    def multiplicities(self) -> list:
        return [m for _, m in self.exponents]

    def nearest(self, value: float):
        """``(exponent, |value - exponent|)`` for the closest ladder entry.

        Individual per-direction rates are also candidates, so a cluster of
        nearby exponents does not hide its extreme members.
        """
        cands = list(self.values)
        if self.samples is not None:
            cands += [float(x) for x in np.mean(self.samples, axis=0) if np.isfinite(x)]
        if not cands:
            return math.nan, math.inf
        best = min(cands, key=lambda x: abs(x - value))
        return best, abs(best - value)

    def to_dict(self) -> dict:
        return {
            "measure": self.measure,
            "n_max": self.n_max,
            "exponents": [{"lambda": float(lam), "multiplicity": int(m)} for lam, m in self.exponents],
            "kappa": _ext(self.kappa),
            "diagnostics": {
                "resolution": self.resolution,
                "spread": [float(s) for s in self.spread],
                "flags": list(self.flags),
            },
        }


def cluster_exponents(values, resolution: float):
    """Group sorted-decreasing values into runs separated by gaps ``> resolution``.

    Returns ``(groups, ambiguous)``; ``ambiguous`` is True when some gap
    lies within a factor of two of the resolution, or a chained group is
    wider than the resolution.
    """
    values = [v for v in values]
    groups, ambiguous = [], False
    for v in values:
        if groups and groups[-1][-1] - v <= resolution:
            groups[-1].append(v)
        else:
            if groups and groups[-1][-1] - v <= 2 * resolution and math.isfinite(v):
                ambiguous = True
            groups.append([v])
    for g in groups:
        if math.isfinite(g[-1]) and g[0] - g[-1] > resolution:
            ambiguous = True
    return groups, ambiguous


def exponent_ladder(
    c: Cocycle,
    mu,
    n_max: int = 512,
    resolution: float = DEFAULT_RESOLUTION,
    seed: int = 0,
    count: int = 8,
) -> LyapunovSpectrum:
    """The Lyapunov spectrum of ``c`` with respect to ``mu``.

    Parameters
    ----------
    c : Cocycle
    mu : ergodic measure
    n_max : int
        Averaging horizon (a burn-in of ``n_max // 4`` precedes it).
    resolution : float
        Exponents closer than this are merged into one group whose
        multiplicity is the group size.
    seed, count
        Sampling of ``mu``-typical points.

    Returns
    -------
    LyapunovSpectrum
        Groups ``(mean exponent, multiplicity)``, strictly decreasing;
        values at or below the ``kappa`` estimate (and ``-inf`` rates of
        non-injective generators) are folded into the tail.
    """
    if n_max < 8:
        raise ValueError("n_max must be >= 8")
    if resolution <= 0:
        raise ValueError("resolution must be > 0")
    block = _block(c)
    pts = typical_points(mu, c.system, count, seed, lookahead=n_max + n_max // 4 + block)
    ex = qr_exponents(c, pts, n_max)
    mean = ex.mean(axis=0)
    model = c.model if c.model is not None else FiniteDim()
    kap = kappa_estimate(c, model, mu, max(n_max, 2), seed=seed)
    keep = [i for i, v in enumerate(mean) if np.isfinite(v) and v > kap]
    groups, ambiguous = cluster_exponents([mean[i] for i in keep], resolution)
    flags = ["cluster_ambiguous"] if ambiguous else []
    if len(keep) < c.dim:
        flags.append("folded_into_tail")
    exponents, spread, start = [], [], 0
    for g in groups:
        idx = keep[start : start + len(g)]
        start += len(g)
        exponents.append((float(np.mean(g)), len(g)))
        spread.append(float(np.ptp(ex[:, idx].mean(axis=1))))
    return LyapunovSpectrum(exponents, kap, _label(mu), n_max, resolution, spread, ex, flags)


# ---------------------------------------------------------------------------
# Oseledets splitting


@dataclass
class OseledetsSplitting:
    """Fast spaces ``E_i(q)`` and slow space ``F(q)`` at one base point."""

    point: object
    spaces: list
    slow: np.ndarray
    defects: list = field(default_factory=list)
    slow_rate: float = NEG_INF
    angles: list = field(default_factory=list)
    flags: list = field(default_factory=list)


def _fast_frames(c: Cocycle, points, n: int) -> np.ndarray:
    """Forward-tracked frames arriving at each point from ``f^{-n}``."""
    d = c.dim
    bundle = c.bundle(points, -n, 0)
    q = np.broadcast_to(nm.random_frame(d, d, 777), (len(points), d, d)).copy()
    for j in range(-n, 0):
        q, _ = nm.qr_pos(bundle[j] @ q)
    return q


def _slow_frames(c: Cocycle, points, n: int) -> np.ndarray:
    """Leading right-singular frames of ``A(q, n)`` via the transposed cocycle."""
    d = c.dim
    bundle = c.bundle(points, 0, n)
    q = np.broadcast_to(nm.random_frame(d, d, 778), (len(points), d, d)).copy()
    for j in range(n - 1, -1, -1):
        q, _ = nm.qr_pos(np.swapaxes(bundle[j], -1, -2) @ q)
    return q


def _has_backward(q, n, block) -> bool:
    if not isinstance(q, ShiftPoint):
        return True
    lo, _ = q.window
    return lo <= -n


def _split(fast, slow, mults):
    spaces, k_prev = [], 0
    for m in mults:
        k = k_prev + m
        fa = fast[:, :k]
        if k_prev == 0:
            basis = fa
        else:
            # vectors in span(fa) orthogonal to the top-k_prev right-singular space
            _, _, vt = np.linalg.svd(slow[:, :k_prev].T @ fa)
            basis, _ = np.linalg.qr(fa @ vt[-m:].T)
        spaces.append(basis)
        k_prev = k
    return spaces


def oseledets_splitting(
    c: Cocycle, spectrum: LyapunovSpectrum, q, n_max: int = 512
) -> OseledetsSplitting:
    """Oseledets spaces of ``c`` at ``q`` for the ladder ``spectrum``.

    ``E_i(q)`` is the intersection of the fast space of dimension
    ``m_1 + ... + m_i`` with the slow space of codimension
    ``m_1 + ... + m_{i-1}``.  Without a backward window (non-periodic shift
    points) the fast spaces are replaced by right-singular clusters and a
    flag is raised.  Equivariance defects compare ``A(q) E_i(q)`` with
    ``E_i(f q)``.
    """
    mults = spectrum.multiplicities
    k_total = sum(mults)
    d = c.dim
    block = _block(c)
    flags = []
    q1 = iterate(c.system, q, 1)
    pts = [q, q1]
    slow = _slow_frames(c, pts, n_max)
    if _has_backward(q, n_max, block):
        fast = _fast_frames(c, pts, n_max)
    else:
        flags.append("no_backward_window")
        fast = slow
    sp0 = _split(fast[0], slow[0], mults)
    sp1 = _split(fast[1], slow[1], mults)
    a = c.matrix(q)
    defects = []
    for e0, e1 in zip(sp0, sp1):
        img = a @ e0
        s = np.linalg.svd(img, compute_uv=False)
        if s.size == 0 or s[-1] <= 1e-12 * max(s[0], 1e-300):
            defects.append(math.pi / 2)
            flags.append("rank_collapse")
            continue
        u, _ = np.linalg.qr(img)
        defects.append(nm.principal_angle(u, e1))
    f_space = nm.complement(slow[0][:, :k_total]) if k_total < d else np.zeros((d, 0))
    angles = []
    for i in range(len(sp0)):
        for j in range(i + 1, len(sp0)):
            g = np.linalg.svd(sp0[i].T @ sp0[j], compute_uv=False)
            angles.append(float(np.arccos(min(1.0, g.max()))) if g.size else math.pi / 2)
    return OseledetsSplitting(
        q, sp0, f_space, defects, slow_growth_rate(c, q, f_space, n_max), angles, flags
    )


def slow_growth_rate(c: Cocycle, q, basis: np.ndarray, n: int) -> float:
    """``max (1/n) log ||A_a(q, n) v||`` over ``v`` in ``span basis``.

    Includes the tail rate of a block-diagonal operator model, whose tail
    coordinates lie in the slow space by construction.
    """
    rate = NEG_INF
    if basis.shape[1]:
        bundle = c.bundle([q], 0, n)
        m = basis[None].copy()
        logs = nm.accumulate_log_norms(m, lambda k, x: bundle[k] @ x, n)
        rate = float(logs[0, n]) / n - c.shift
    if c.model is not None and getattr(c.model, "block_diagonal", False):
        rate = max(rate, c.model.log_tail_step - c.shift)
    return rate
