"""Exponential dichotomy tests for shifted cocycles.

The splitting ``X = S(q) + U(q)`` is computed once per candidate unstable
dimension ``u`` and reused for every shift in the same resolvent gap:

* ``U(q)`` (dimension ``u``) is the limit of a frame pushed forward from
  ``f^{-(n+B)} q``;
* ``S(q)^perp`` is the limit of a ``u``-frame pulled back through the
  transposed cocycle from ``f^{n+B} q``; ``S(q)`` is its complement.

Norms are never taken of raw long products.  On ``S`` the cocycle acts by
the restricted maps ``T_j = Y_{j+1}^T A_j Y_j`` (orthonormal bases ``Y``
of ``S``), on ``U`` by the triangular factors ``R_j`` of the forward QR
tracker, so rounding in one subspace cannot leak into the other.  All
series are stored unshifted; a shift ``a`` enters as ``-/+ a n``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from . import _numerics as nm
from .base_dynamics import CirclePoint, default_samples, iterate
from .cocycle import Cocycle
from .lyapunov import qr_exponents

NEG_INF = float("-inf")
LAMBDA_CAP = 10.0
COND_MAX = 1e10

# reason codes used in certificates
SLOW_DECAY = "slow_decay"
INCONSISTENT_DIMS = "inconsistent_dims"
ILL_CONDITIONED = "ill_conditioned"
RESONANT = "resonant"


class DichotomyError(ValueError):
    code = "dichotomy.error"


class NoUniformSplitting(DichotomyError):
    code = "dichotomy.no_uniform_splitting"


@dataclass
class DichotomyConfig:
    """Knobs shared by every uniform-hyperbolicity test.

    ``samples=None`` means :func:`~sackersell.base_dynamics.default_samples`
    with ``p_max``.  ``burn=None`` means ``n_max``.
    """

    n_max: int = 256
    samples: list | None = None
    p_max: int = 8
    lambda_min: float = 5e-4
    margin: float = 0.02
    burn: int | None = None

    def resolve_samples(self, system) -> list:
        if self.samples is None:
            return default_samples(system, self.p_max)
        return list(self.samples)


# ---------------------------------------------------------------------------
# splitting engine


@dataclass
class OrbitSplitting:
    """Tracked bases along orbit indices ``lo..hi`` for a fixed ``u``.

    Arrays carry a leading sample axis; ``V[:, k]`` and ``Y[:, k]`` live at
    ``f^{lo+k}``, ``R[:, k]`` and ``T[:, k]`` act from ``lo+k`` to ``lo+k+1``.
    """

    u: int
    lo: int
    hi: int
    V: np.ndarray
    R: np.ndarray
    Y: np.ndarray
    T: np.ndarray

    def projection(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """``P`` onto ``S`` along ``U`` at orbit index ``j`` and ``cond([Y V])``."""
        k = j - self.lo
        y, v = self.Y[:, k], self.V[:, k]
        n, d = y.shape[0], y.shape[1]
        if self.u == 0:
            return np.broadcast_to(np.eye(d), (n, d, d)).copy(), np.ones(n)
        if self.u == d:
            return np.zeros((n, d, d)), np.ones(n)
        b = np.concatenate([y, v], axis=-1)
        cond = np.linalg.cond(b)
        sel = np.zeros(d)
        sel[: d - self.u] = 1.0
        with np.errstate(all="ignore"):
            binv = np.linalg.pinv(b)
        return (b * sel[None, None, :]) @ binv, cond


class SplittingEngine:
    """Builds :class:`OrbitSplitting` data for a batch of base points."""

    def __init__(self, c: Cocycle, points, burn: int = 256):
        self.c = c
        self.points = list(points)
        self.burn = int(burn)

    def orbit(self, u: int, lo: int, hi: int) -> OrbitSplitting:
        c, d, n = self.c, self.c.dim, len(self.points)
        if not 0 <= u <= d:
            raise DichotomyError(f"unstable dimension {u} outside 0..{d}")
        b = self.burn
        bundle = c.bundle(self.points, lo - b, hi + b)
        span = hi - lo
        s = d - u
        # U side: forward tracker
        V = np.zeros((n, span + 1, d, u))
        R = np.zeros((n, span, u, u))
        if u:
            v = np.broadcast_to(nm.random_frame(d, u, 101), (n, d, u)).copy()
            for j in range(lo - b, lo):
                v, _ = nm.qr_pos(bundle[j] @ v)
            V[:, 0] = v
            for k in range(span):
                v, r = nm.qr_pos(bundle[lo + k] @ v)
                V[:, k + 1], R[:, k] = v, r
        # S side: complement of the transposed backward tracker
        if u == 0:
            Y = np.broadcast_to(np.eye(d), (n, span + 1, d, d)).copy()
        elif s == 0:
            Y = np.zeros((n, span + 1, d, 0))
        else:
            w = np.broadcast_to(nm.random_frame(d, u, 202), (n, d, u)).copy()
            for j in range(hi + b - 1, hi - 1, -1):
                w, _ = nm.qr_pos(np.swapaxes(bundle[j], -1, -2) @ w)
            Y = np.zeros((n, span + 1, d, s))
            Y[:, span] = nm.complement(w)
            for k in range(span - 1, -1, -1):
                w, _ = nm.qr_pos(np.swapaxes(bundle[lo + k], -1, -2) @ w)
                Y[:, k] = nm.complement(w)
        T = np.zeros((n, span, s, s))
        if s:
            for k in range(span):
                T[:, k] = np.swapaxes(Y[:, k + 1], -1, -2) @ bundle[lo + k] @ Y[:, k]
        return OrbitSplitting(u, lo, hi, V, R, Y, T)


def _solve_tri(r: np.ndarray, m: np.ndarray) -> np.ndarray:
    """``r^{-1} m`` for stacks of upper-triangular ``r``; singular pivots give inf."""
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    bad = np.any(diag == 0, axis=-1)
    if bad.any():
        r = r.copy()
        idx = np.arange(r.shape[-1])
        r[bad, idx, idx] = np.where(diag[bad] == 0, 1e-300, diag[bad])
    return np.linalg.solve(r, m)


def splitting_series(orb: OrbitSplitting, n: int, start: int = 0, sides: str = "yzg") -> dict:
    """Unshifted log-norm series from orbit index ``start``.

    ``y[k] = log ||A(q_s, k) P(q_s)||`` (stable side, forward),
    ``z[k] = log ||A(q_s, -k) (I - P(q_s))||`` (unstable side, backward),
    ``g[k] = log ||(A(q_s, k)|_U)^{-1}||`` (unstable co-norm, forward).
    """
    k0 = start - orb.lo
    if "z" in sides and k0 - n < 0 and orb.u:
        raise DichotomyError("orbit splitting does not cover the backward horizon")
    p, cond = orb.projection(start)
    d = p.shape[-1]
    npts = p.shape[0]
    u, s = orb.u, d - orb.u
    with np.errstate(all="ignore"):
        if s and "y" in sides:
            m0 = np.swapaxes(orb.Y[:, k0], -1, -2) @ p
            y = nm.accumulate_log_norms(m0, lambda k, m: orb.T[:, k0 + k] @ m, n)
        else:
            y = np.full((npts, n + 1), NEG_INF)
        z = np.full((npts, n + 1), NEG_INF)
        g = np.full((npts, n + 1), NEG_INF)
        rcond = np.ones(npts)
        if u and "z" in sides:
            m0 = np.swapaxes(orb.V[:, k0], -1, -2) @ (np.eye(d) - p)
            z = nm.accumulate_log_norms(m0, lambda k, m: _solve_tri(orb.R[:, k0 - 1 - k], m), n)
        if u and "g" in sides:
            eye = np.broadcast_to(np.eye(u), (npts, u, u)).copy()
            g = nm.accumulate_log_norms(
                eye,
                lambda k, m: np.swapaxes(
                    _solve_tri(np.swapaxes(orb.R[:, k0 + k], -1, -2), np.swapaxes(m, -1, -2)), -1, -2
                ),
                n,
            )
        if u and k0 < orb.R.shape[1]:
            rcond = np.linalg.cond(orb.R[:, k0])
    return {"y": y, "z": z, "g": g, "P": p, "cond": cond, "rcond": rcond}


def _add_tail(c: Cocycle, ser: dict) -> None:
    """Fold the tail of a block-diagonal operator model into the stable side.

    The tail coordinates lie in ``S`` (``P`` is the identity there), so the
    full norm is the larger of the head and tail contributions.
    """
    model = c.model
    if model is None or not getattr(model, "block_diagonal", False):
        return
    if not math.isfinite(model.log_tail_step):
        return
    n = ser["y"].shape[1] - 1
    ser["y"] = np.maximum(ser["y"], np.arange(n + 1) * model.log_tail_step)


# ---------------------------------------------------------------------------
# certificates


@dataclass
class DichotomyCertificate:
    """Outcome of a uniform-hyperbolicity test of ``exp(-a n) A(q, n)``.

    When ``passed``, ``||A_a(q, n) P(q)|| <= D exp(-lam n)`` and
    ``||A_a(q, -n)(I - P(q))|| <= D exp(-lam n)`` hold on every sample for
    ``n <= n_max`` (``residual_stable`` and ``residual_unstable`` are the
    worst log-margins and are ``<= 0``).
    """

    shift: float
    passed: bool
    D: float
    lam: float
    dim_u: int | None
    n_max: int
    n_samples: int
    residual_stable: float = NEG_INF
    residual_unstable: float = NEG_INF
    reasons: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    cond: float = 1.0
    log_D: float = 0.0

    def to_dict(self) -> dict:
        return {
            "shift": float(self.shift),
            "passed": bool(self.passed),
            "D": float(self.D),
            "lambda": float(self.lam),
            "dim_u": self.dim_u,
            "n_max": self.n_max,
            "n_samples": self.n_samples,
            "residual_stable": _finite_or_str(self.residual_stable),
            "residual_unstable": _finite_or_str(self.residual_unstable),
            "reasons": list(self.reasons),
            "flags": list(self.flags),
        }


def _finite_or_str(x):
    return float(x) if math.isfinite(x) else ("-inf" if x < 0 else "inf")


class HyperbolicityTester:
    """Uniform-hyperbolicity tests of one cocycle at many shifts.

    Splitting series are cached per unstable dimension, so testing another
    shift in the same gap costs one pass over the stored series.
    """

    def __init__(self, c: Cocycle, config: DichotomyConfig | None = None):
        self.c = c
        self.config = config or DichotomyConfig()
        self.samples = self.config.resolve_samples(c.system)
        if not self.samples:
            raise DichotomyError("empty sample set")
        self.n_max = self.config.n_max
        self.burn = self.config.burn if self.config.burn is not None else self.n_max
        self._series: dict[int, dict] = {}
        self._lock = threading.Lock()
        self._rates = None

    # unshifted per-sample direction rates, used to choose candidate dims
    @property
    def rates(self) -> np.ndarray:
        if self._rates is None:
            raw = Cocycle(self.c.system, self.c.generator, 0.0, self.c.model, _cache=self.c._cache)
            self._rates = qr_exponents(raw, self.samples, self.n_max)
        return self._rates

    def series(self, u: int) -> dict:
        with self._lock:
            hit = self._series.get(u)
        if hit is not None:
            return hit
        raw = Cocycle(self.c.system, self.c.generator, 0.0, self.c.model, _cache=self.c._cache)
        eng = SplittingEngine(raw, self.samples, self.burn)
        n = self.n_max
        orb = eng.orbit(u, -n, n)
        ser = splitting_series(orb, n)
        _add_tail(raw, ser)
        ser["slope_y"] = nm.lsq_slope(ser["y"][:, 1:])
        ser["slope_z"] = nm.lsq_slope(ser["z"][:, 1:])
        with self._lock:
            self._series[u] = ser
        return ser

    def candidates(self, total: float) -> tuple[list[int], bool, bool]:
        """Candidate dims, whether per-sample ranges overlap, whether resonant."""
        m = self.config.margin
        r = self.rates
        lo = np.sum(r > total + m, axis=1)
        hi = np.sum(r > total - m, axis=1)
        with np.errstate(invalid="ignore"):
            resonant = bool(np.any(np.abs(r - total) <= m))
        overlap = int(lo.max()) <= int(hi.min())
        return list(range(int(lo.min()), int(hi.max()) + 1)), overlap, resonant

    def certify(self, a: float, u: int, n_max: int | None = None, ser: dict | None = None) -> DichotomyCertificate:
        """Certificate for the splitting with unstable dimension ``u`` at shift ``a``."""
        total = self.c.shift + a
        ser = ser if ser is not None else self.series(u)
        n = ser["y"].shape[1] - 1
        ks = np.arange(n + 1, dtype=float)
        slopes = np.concatenate([ser["slope_y"] - total, ser["slope_z"] + total])
        finite = slopes[np.isfinite(slopes)]
        reasons, flags = [], []
        if np.any(np.isposinf(slopes)):
            lam_raw = -math.inf
        elif finite.size:
            lam_raw = float(-finite.max())
        else:
            lam_raw = LAMBDA_CAP / 0.9
        lam = min(0.9 * lam_raw, LAMBDA_CAP)
        ys = ser["y"] - total * ks
        zs = ser["z"] + total * ks
        lam_env = lam if math.isfinite(lam) else 0.0
        with np.errstate(invalid="ignore"):
            env = np.concatenate([ys + lam_env * ks, zs + lam_env * ks])
        env_f = env[np.isfinite(env)]
        log_d = float(env_f.max()) if env_f.size else 0.0
        if np.any(np.isposinf(env)):
            log_d = math.inf
        cond = float(max(np.max(ser["cond"]), np.max(ser["rcond"])))
        if not (lam >= self.config.lambda_min):
            reasons.append(SLOW_DECAY)
        if not cond < COND_MAX:
            reasons.append(ILL_CONDITIONED)
        with np.errstate(invalid="ignore"):
            res_s = float(np.max(ys - (log_d - lam_env * ks))) if np.isfinite(log_d) else math.inf
            res_u = float(np.max(zs - (log_d - lam_env * ks))) if np.isfinite(log_d) else math.inf
        passed = not reasons
        return DichotomyCertificate(
            shift=a,
            passed=passed,
            D=math.exp(min(log_d, 700.0)),
            lam=lam if math.isfinite(lam) else NEG_INF,
            dim_u=u,
            n_max=n,
            n_samples=len(self.samples),
            residual_stable=res_s,
            residual_unstable=res_u,
            reasons=reasons,
            flags=flags,
            cond=cond,
            log_D=log_d,
        )

    def test(self, a: float) -> DichotomyCertificate:
        total = self.c.shift + a
        cands, overlap, resonant = self.candidates(total)
        best = None
        for u in cands:
            cert = self.certify(a, u)
            if cert.passed and (best is None or not best.passed or cert.lam > best.lam):
                best = cert
            elif best is None or (not best.passed and cert.lam > best.lam):
                best = cert
        if best is None:  # pragma: no cover - candidates is never empty
            best = DichotomyCertificate(a, False, math.inf, 0.0, None, self.n_max, len(self.samples))
        if not best.passed:
            best.dim_u = None
            if not overlap and INCONSISTENT_DIMS not in best.reasons:
                best.reasons.append(INCONSISTENT_DIMS)
        if resonant:
            best.flags.append(RESONANT)
        return best

    def recheck(self, cert: DichotomyCertificate, factor: int = 2) -> bool:
        """Re-validate a passing certificate at horizon ``factor * n_max`` with ``factor * D``."""
        if not cert.passed:
            raise DichotomyError("only passing certificates can be re-checked")
        raw = Cocycle(self.c.system, self.c.generator, 0.0, self.c.model, _cache=self.c._cache)
        n = factor * self.n_max
        eng = SplittingEngine(raw, self.samples, max(self.burn, n))
        ser = splitting_series(eng.orbit(cert.dim_u, -n, n), n)
        _add_tail(raw, ser)
        total = self.c.shift + cert.shift
        ks = np.arange(n + 1, dtype=float)
        bound = cert.log_D + math.log(factor) - cert.lam * ks
        with np.errstate(invalid="ignore"):
            ok_s = np.all(~(ser["y"] - total * ks > bound + 1e-12))
            ok_u = np.all(~(ser["z"] + total * ks > bound + 1e-12))
        return bool(ok_s and ok_u)


def test_uniform_hyperbolicity(c: Cocycle, a: float, samples=None, n_max: int = 256, **kw) -> DichotomyCertificate:
    """Test whether ``exp(-a n) A(q, n)`` admits an exponential dichotomy on ``samples``.

    Fits ``lam = 0.9 * min decay slope`` and ``D`` as the envelope of both
    sides; passes iff ``lam >= lambda_min``, the splitting is well
    conditioned and ``A(q)|_U`` is invertible (condition number < 1e10).
    Failures carry reason codes instead of raising.
    """
    cfg = DichotomyConfig(n_max=n_max, samples=samples, **kw)
    return HyperbolicityTester(c, cfg).test(a)


test_uniform_hyperbolicity.__test__ = False  # keep pytest from collecting it


def unstable_dimension(c: Cocycle, a: float, config: DichotomyConfig | None = None) -> int:
    """``dim U_a``; raises :class:`NoUniformSplitting` when ``a`` does not pass."""
    cert = HyperbolicityTester(c, config).test(a)
    if not cert.passed:
        raise NoUniformSplitting(f"shift {a} is not uniformly hyperbolic ({', '.join(cert.reasons)})")
    return int(cert.dim_u)


# ---------------------------------------------------------------------------
# growth classification and projections


@dataclass
class GrowthClassification:
    point: object
    shift: float
    dim_s: int
    dim_u: int
    rates: list
    resonant: bool
    extendable: bool = True
    flags: list = field(default_factory=list)


def classify_growth(c: Cocycle, a: float, q, n_max: int = 256, margin: float = 0.02) -> GrowthClassification:
    """Count growth rates of ``A(q, n_max)`` below and above ``a``.

    Candidate unstable directions (the fast space at ``q``) are pulled
    back step by step with least-squares preimages; a relative residual
    above ``1e-8`` marks them as not backward extendable.
    """
    total = c.shift + a
    raw = Cocycle(c.system, c.generator, 0.0, c.model, _cache=c._cache)
    rates = qr_exponents(raw, [q], n_max, burn=0)[0]
    with np.errstate(invalid="ignore"):
        resonant = bool(np.any(np.abs(rates - total) <= margin))
    u = int(np.sum(rates > total))
    flags = [RESONANT] if resonant else []
    extendable = True
    if u:
        eng = SplittingEngine(raw, [q], n_max)
        basis = eng.orbit(u, 0, 0).V[0, 0]
        bundle = raw.bundle([q], -n_max, 0)
        x = basis.copy()
        for j in range(-1, -n_max - 1, -1):
            a_j = bundle[j][0]
            y, *_ = np.linalg.lstsq(a_j, x, rcond=None)
            res = np.linalg.norm(a_j @ y - x, axis=0)
            if np.any(res > 1e-8 * np.linalg.norm(x, axis=0)):
                extendable = False
                u = int(np.sum(res <= 1e-8 * np.linalg.norm(x, axis=0)))
                flags.append("not_backward_extendable")
                break
            nrm = np.linalg.norm(y, axis=0)
            x = y / np.where(nrm > 0, nrm, 1.0)
    d = c.dim
    return GrowthClassification(q, a, d - u, u, [float(r - c.shift) for r in rates], resonant, extendable, flags)


@dataclass
class ProjectionFamily:
    """Projections ``P(q)`` over a sample set.

    Splitting-backed families keep the unstable dimension and burn-in so
    that restricted-map series can be regenerated at other points;
    explicit families carry only matrices (``func``).
    """

    points: list
    matrices: np.ndarray
    rank: int
    shift: float
    n_max: int
    dim_u: int | None = None
    burn: int | None = None
    defect: float = 0.0
    idempotence: float = 0.0
    continuity: float | None = None
    func: object = None

    @property
    def splitting_backed(self) -> bool:
        return self.dim_u is not None and self.func is None

    def __call__(self, q) -> np.ndarray:
        if self.func is not None:
            return np.asarray(self.func(q), dtype=float)
        for p, m in zip(self.points, self.matrices):
            if p == q:
                return m
        raise KeyError(f"no projection stored for {q!r}")


def explicit_projections(points, func, shift: float = 0.0) -> ProjectionFamily:
    """A family given by a matrix-valued function (no splitting behind it)."""
    mats = np.stack([np.asarray(func(q), dtype=float) for q in points])
    rank = int(round(float(np.trace(mats[0]))))
    return ProjectionFamily(list(points), mats, rank, shift, 0, func=func)


def equivariance_defect(c: Cocycle, fam: ProjectionFamily, points=None) -> float:
    """``max ||A(q)P(q) - P(fq)A(q)|| / ||A(q)||`` over ``points``."""
    worst = 0.0
    for q in points if points is not None else fam.points:
        a = c.matrix(q)
        p0, p1 = fam(q), fam(iterate(c.system, q, 1))
        na = np.linalg.norm(a, 2)
        if na == 0:
            continue
        worst = max(worst, float(np.linalg.norm(a @ p0 - p1 @ a, 2) / na))
    return worst


def build_projections(c: Cocycle, a: float, samples=None, n_max: int = 256, burn: int | None = None,
                      margin: float = 0.02) -> ProjectionFamily:
    """Projections onto ``S_a`` along ``U_a`` at ``samples`` and their images.

    Raises :class:`NoUniformSplitting` when the sample rates do not give a
    common unstable dimension.
    """
    samples = default_samples(c.system) if samples is None else list(samples)
    total = c.shift + a
    raw = Cocycle(c.system, c.generator, 0.0, c.model, _cache=c._cache)
    rates = qr_exponents(raw, samples, n_max)
    lo = np.sum(rates > total + margin, axis=1)
    hi = np.sum(rates > total - margin, axis=1)
    if lo.min() != lo.max() or hi.min() != hi.max() or lo.max() != hi.min():
        raise NoUniformSplitting(f"no uniform splitting at a={a}")
    u = int(lo[0])
    burn = n_max if burn is None else burn
    images = [iterate(c.system, q, 1) for q in samples]
    eng = SplittingEngine(raw, samples + images, burn)
    orb = eng.orbit(u, 0, 0)
    mats, _ = orb.projection(0)
    k = len(samples)
    fam = ProjectionFamily(
        samples + images, mats, c.dim - u, a, n_max, dim_u=u, burn=burn
    )
    defect = 0.0
    for i, q in enumerate(samples):
        am = c.matrix(q)
        na = np.linalg.norm(am, 2)
        if na:
            defect = max(defect, float(np.linalg.norm(am @ mats[i] - mats[k + i] @ am, 2) / na))
    fam.defect = defect
    fam.idempotence = float(max(np.linalg.norm(m @ m - m, 2) for m in mats))
    fam.continuity = _continuity_defect(fam)
    return fam


def _continuity_defect(fam: ProjectionFamily) -> float | None:
    """Largest ``||P(q) - P(q')|| / dist(q, q')`` over angle-sorted circle neighbours."""
    pts = [(p.angle, i) for i, p in enumerate(fam.points) if isinstance(p, CirclePoint)]
    if len(pts) < 2:
        return None
    pts.sort()
    worst = 0.0
    for (t0, i0), (t1, i1) in zip(pts, pts[1:]):
        if t1 - t0 > 1e-12:
            worst = max(worst, float(np.linalg.norm(fam.matrices[i1] - fam.matrices[i0], 2) / (t1 - t0)))
    return worst
