"""Subadditive growth sequences, Kingman limits, Cao maximisation and
endpoint realisation.

For a spectral endpoint ``b`` the projected norms
``F_n(q) = log ||A(q, n) P(q)||`` with ``P`` built just to the right of
``b`` form a subadditive sequence whose uniform growth rate is ``b``; the
maximising measure then carries ``b`` as a Lyapunov exponent.  Left
endpoints use the unstable co-norm ``G_n(q) = log ||(A(q, n)|_U)^{-1}||``
with the splitting taken just to the left, and the realised value is
``-max Lambda_G``.

Measure families are explicit finite lists (periodic orbits plus any
user-supplied measures); every report states the family it searched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _numerics as nm
from .base_dynamics import PeriodicOrbit, default_samples, iterate, orbit_points, typical_points
from .cocycle import Cocycle, cocycle_product, log_norm_series
from .dichotomy import (
    DichotomyConfig,
    HyperbolicityTester,
    ProjectionFamily,
    SplittingEngine,
    _add_tail,
    splitting_series,
)
from .lyapunov import exponent_ladder
from .quasicompactness import FiniteDim, _ext
from .spectrum import SpectrumResult

NEG_INF = float("-inf")


def _raw(c: Cocycle) -> Cocycle:
    return Cocycle(c.system, c.generator, 0.0, c.model, _cache=c._cache)


class SubadditiveSequence:
    """``F_n(q)`` evaluated in batches.

    Parameters
    ----------
    kind : str
        ``"projected"``, ``"conorm"``, ``"log_norm"`` or ``"ic_log_norm"``.
    series : callable
        ``series(points, n) -> array (N, n + 1)`` with ``F_0 .. F_n``.
    segments : callable
        ``segments(q, L) -> array (L + 1, L + 1)`` with entry ``[s, k]``
        equal to ``F_k(f^s q)`` for ``s + k <= L`` (NaN elsewhere); all
        entries come from one computation along the orbit of ``q``.
    window : tuple
        ``(lookback, extra_lookahead)`` needed by non-periodic shift points.
    """

    def __init__(self, kind, series, segments, window=(0, 0), bound=None, meta=None):
        self.kind = kind
        self._series = series
        self._segments = segments
        self.window = window
        self._bound = bound
        self.meta = dict(meta or {})
        self._cache: dict = {}

    def series(self, points, n: int) -> np.ndarray:
        return self._series(list(points), int(n))

    def segments(self, q, length: int) -> np.ndarray:
        return self._segments(q, int(length))

    def __call__(self, q, n: int) -> float:
        key = (q, n)
        if key not in self._cache:
            self._cache[key] = float(self.series([q], n)[0, n])
        return self._cache[key]

    def defect_bound(self, q, n: int, m: int, table) -> float:
        """Allowed excess of ``F_{n+m}(q)`` over ``F_m(f^n q) + F_n(q)``."""
        if self._bound is None:
            return 0.0
        return self._bound(q, n, m, table)


def _table_from_rows(rows: list) -> np.ndarray:
    length = len(rows) - 1
    out = np.full((length + 1, length + 1), np.nan)
    for s, row in enumerate(rows):
        out[s, : len(row)] = row
    return out


def projected_norm_sequence(c: Cocycle, P: ProjectionFamily, shift: float = 0.0) -> SubadditiveSequence:
    """``F_n(q) = log ||exp(-(a + shift) n) A(q, n) P(q)||``, ``a`` the shift of ``c``.

    Splitting-backed families are evaluated through the restricted maps on
    ``S``; explicit families multiply ``P(q)`` by the raw products.
    A rank-0 projection gives the ``-inf`` sentinel.
    """
    total = c.shift + shift
    raw = _raw(c)
    if P.splitting_backed:
        u, burn = P.dim_u, P.burn or 256

        def series(points, n):
            orb = SplittingEngine(raw, points, burn).orbit(u, 0, n)
            ser = splitting_series(orb, n, sides="y")
            _add_tail(raw, ser)
            return ser["y"] - total * np.arange(n + 1)

        def segments(q, length):
            orb = SplittingEngine(raw, [q], burn).orbit(u, 0, length)
            rows = []
            for s in range(length + 1):
                ser = splitting_series(orb, length - s, start=s, sides="y")
                _add_tail(raw, ser)
                rows.append(ser["y"][0] - total * np.arange(length - s + 1))
            return _table_from_rows(rows)

        return SubadditiveSequence(
            "projected", series, segments, (burn, burn), meta={"dim_u": u, "shift": total}
        )

    def series(points, n):
        d = c.dim
        bundle = raw.bundle(points, 0, n)
        m0 = np.stack([P(q) for q in points]).reshape(len(points), d, d)
        with np.errstate(divide="ignore"):
            logs = nm.accumulate_log_norms(m0, lambda k, m: bundle[k] @ m, n)
        return logs - total * np.arange(n + 1)

    def segments(q, length):
        pts = [q]
        for _ in range(length):
            pts.append(iterate(c.system, pts[-1], 1))
        return _table_from_rows([series([p], length - s)[0] for s, p in enumerate(pts)])

    def bound(q, n, m, table):
        # excess is controlled by the commutator E = A(q, n) P(q) - P(f^n q) A(q, n)
        qn = iterate(c.system, q, n)
        a_n = cocycle_product(raw, q, n)
        p0, pn = P(q), P(qn)
        comm = (np.eye(c.dim) - pn) @ (a_n @ p0 - pn @ a_n) @ p0
        a_m = cocycle_product(raw, qn, m)
        num = np.linalg.norm(a_m, 2) * np.linalg.norm(comm, 2) * math.exp(-total * (n + m))
        den = math.exp(table[n, m] + table[0, n]) if math.isfinite(table[n, m] + table[0, n]) else 0.0
        if num == 0:
            return 0.0
        if den == 0:
            return math.inf
        return math.log1p(num / den)

    return SubadditiveSequence("projected", series, segments, (0, 0), bound, meta={"explicit": True})


def unstable_conorm_sequence(c: Cocycle, P: ProjectionFamily, shift: float = 0.0) -> SubadditiveSequence:
    """``G_n(q) = log ||(exp(-(a + shift) n) A(q, n)|_U)^{-1}||``, ``U = Ker P``.

    Subadditive because the inverse of a composition reverses the order of
    the factors.  Requires a splitting-backed family.
    """
    if not P.splitting_backed:
        raise ValueError("the co-norm sequence needs a splitting-backed projection family")
    total = c.shift + shift
    raw = _raw(c)
    u, burn = P.dim_u, P.burn or 256

    def series(points, n):
        orb = SplittingEngine(raw, points, burn).orbit(u, 0, n)
        return splitting_series(orb, n, sides="g")["g"] + total * np.arange(n + 1)

    def segments(q, length):
        orb = SplittingEngine(raw, [q], burn).orbit(u, 0, length)
        rows = [
            splitting_series(orb, length - s, start=s, sides="g")["g"][0] + total * np.arange(length - s + 1)
            for s in range(length + 1)
        ]
        return _table_from_rows(rows)

    return SubadditiveSequence("conorm", series, segments, (burn, burn), meta={"dim_u": u, "shift": total})


def log_norm_sequence(c: Cocycle) -> SubadditiveSequence:
    """``F_n(q) = log ||A_a(q, n)||``."""

    def series(points, n):
        return log_norm_series(c, points, n)

    def segments(q, length):
        pts = [q]
        for _ in range(length):
            pts.append(iterate(c.system, pts[-1], 1))
        return _table_from_rows([log_norm_series(c, [p], length - s)[0] for s, p in enumerate(pts)])

    return SubadditiveSequence("log_norm", series, segments)


def ic_log_sequence(c: Cocycle, model=None) -> SubadditiveSequence:
    """``F_n(q) = log`` of the ic-norm bound of ``A_a(q, n)`` (``-inf`` in finite dimensions)."""
    model = model if model is not None else (c.model or FiniteDim())
    step = NEG_INF if isinstance(model, FiniteDim) else model.log_tail_step - c.shift

    def row(n):
        with np.errstate(invalid="ignore"):
            r = np.arange(n + 1) * step
        if not math.isfinite(step):
            r = np.full(n + 1, NEG_INF)
        r[0] = 0.0
        return r

    def series(points, n):
        return np.tile(row(n), (len(points), 1))

    def segments(q, length):
        return _table_from_rows([row(length - s) for s in range(length + 1)])

    return SubadditiveSequence("ic_log_norm", series, segments)


# ---------------------------------------------------------------------------
# subadditivity


@dataclass
class SubadditivityReport:
    max_violation: float
    max_excess: float
    triples: int
    worst: tuple | None = None

    @property
    def ok(self) -> bool:
        return self.max_excess <= 1e-10


def check_subadditivity(seq: SubadditiveSequence, samples, n_budget: int = 24) -> SubadditivityReport:
    """Largest ``F_{n+m}(q) - F_m(f^n q) - F_n(q)`` over ``n, m >= 1, n + m <= n_budget``.

    ``max_excess`` subtracts the sequence's defect bound (zero for exact
    projections, positive for explicit families with an equivariance
    defect); ``ok`` means ``max_excess <= 1e-10``.
    """
    worst_v, worst_e, count, where = NEG_INF, NEG_INF, 0, None
    for q in samples:
        tab = seq.segments(q, n_budget)
        for n in range(1, n_budget):
            for m in range(1, n_budget - n + 1):
                lhs = tab[0, n + m]
                rhs = tab[n, m] + tab[0, n]
                count += 1
                if lhs == NEG_INF:
                    continue
                v = math.inf if rhs == NEG_INF else float(lhs - rhs)
                if v > worst_v:
                    worst_v, where = v, (q, n, m)
                e = v - seq.defect_bound(q, n, m, tab) if v > 0 else v
                worst_e = max(worst_e, e)
    return SubadditivityReport(worst_v, worst_e, count, where)


# ---------------------------------------------------------------------------
# Kingman limits and Cao maximisation


@dataclass
class LambdaEstimate:
    value: float
    along_orbit: float
    discrepancy: float
    by_n: dict = field(default_factory=dict)


def _measure_points(mu, seq, system, n, seed, count):
    back, ahead = seq.window
    return typical_points(mu, system, count, seed, lookback=back, lookahead=n + ahead + 4)


def _lambda_from_rows(rows: np.ndarray, n_max: int) -> LambdaEstimate:
    ns = sorted({max(1, n_max // 4), max(1, n_max // 2), n_max})
    by_n = {}
    for n in ns:
        col = rows[:, n]
        by_n[n] = NEG_INF if np.any(col == NEG_INF) else float(np.mean(col)) / n
    value = min(by_n.values())
    along = float(rows[0, n_max]) / n_max
    with np.errstate(invalid="ignore"):
        disc = abs(along - by_n[n_max]) if math.isfinite(along) and math.isfinite(by_n[n_max]) else 0.0
    return LambdaEstimate(value, along, disc, by_n)


def lambda_mu(seq: SubadditiveSequence, mu, system, n_max: int = 1024, seed: int = 0,
              count: int = 8) -> LambdaEstimate:
    """Kingman limit ``Lambda(mu) = inf_n (1/n) int F_n dmu``.

    Estimated as the minimum over ``n in {n_max/4, n_max/2, n_max}`` of
    the sample mean of ``F_n / n`` (the exact orbit average for periodic
    measures).  The along-orbit value ``F_{n_max}(q) / n_max`` and its
    discrepancy are reported alongside.
    """
    if n_max < 8:
        raise ValueError("n_max must be >= 8")
    pts = _measure_points(mu, seq, system, n_max, seed, count)
    return _lambda_from_rows(seq.series(pts, n_max), n_max)


@dataclass
class CaoResult:
    """Uniform growth ``L_hat`` against the family maximum of ``Lambda(mu)``."""

    l_hat: float
    lambdas: dict
    argmax: str | None
    gap: float
    n_max: int
    family: list
    along_orbit: dict = field(default_factory=dict)
    degenerate: bool = False
    curve: np.ndarray | None = None

    def curve_rows(self) -> list:
        """Rows ``(n, max_q F_n/n, mean of F_n/n over the maximiser)`` for export."""
        if self.curve is None:
            return []
        return [(int(n), float(u), float(m)) for n, u, m in self.curve]

    @property
    def max_lambda(self) -> float:
        return max(self.lambdas.values()) if self.lambdas else NEG_INF

    def to_dict(self) -> dict:
        return {
            "L_hat": _ext(self.l_hat),
            "max_Lambda": _ext(self.max_lambda),
            "argmax": self.argmax,
            "gap": _ext(self.gap),
            "n_max": self.n_max,
            "family": list(self.family),
            "degenerate": self.degenerate,
            "Lambda": {k: _ext(v) for k, v in self.lambdas.items()},
        }


def cao_maximize(seq: SubadditiveSequence, family, samples, n_max: int = 1024, system=None,
                 seed: int = 0, count: int = 8) -> CaoResult:
    """``L_hat = (1/n) max_q F_n(q)`` and ``Lambda(mu)`` for every family member.

    All values come from a single batch over ``samples`` together with the
    points used for each measure, so ``max Lambda <= L_hat`` holds exactly.
    """
    if len(family) == 0:
        raise ValueError("measure family must be non-empty")
    groups, pts = [], list(samples)
    for mu in family:
        mpts = list(mu.points) if isinstance(mu, PeriodicOrbit) else _measure_points(mu, seq, system, n_max, seed, count)
        groups.append((mu.label, len(pts), len(pts) + len(mpts)))
        pts.extend(mpts)
    rows = seq.series(pts, n_max)
    last = rows[:, n_max]
    l_hat = float(np.max(last)) / n_max
    lambdas, along = {}, {}
    for label, i0, i1 in groups:
        est = _lambda_from_rows(rows[i0:i1], n_max)
        lambdas[label] = est.value
        along[label] = est.along_orbit
    best = max(lambdas, key=lambdas.get)
    mx = lambdas[best]
    degenerate = not math.isfinite(mx) and not math.isfinite(l_hat)
    gap = 0.0 if degenerate else abs(l_hat - mx)
    ns = np.arange(1, n_max + 1)
    bi = next(g for g in groups if g[0] == best)
    with np.errstate(invalid="ignore"):
        curve = np.column_stack([ns, np.max(rows[:, 1:], axis=0) / ns, np.mean(rows[bi[1]:bi[2], 1:], axis=0) / ns])
    return CaoResult(l_hat, lambdas, best, gap, n_max, [m.label for m in family], along, degenerate, curve)


# ---------------------------------------------------------------------------
# endpoint verification


@dataclass
class VerifyConfig:
    """Parameters of :func:`verify_endpoints`."""

    n_max: int = 1024
    ladder_n: int = 512
    match_tol: float = 1e-2
    margin: float = 0.02
    samples: list | None = None
    p_max: int = 8
    dichotomy_n: int = 256
    burn: int | None = None
    seed: int = 0


@dataclass
class EndpointRealization:
    value: float
    side: str
    interval: int
    verdict: str
    matched_measure: str | None = None
    exponent: float = math.nan
    refined: float = math.nan
    residual: float = math.inf
    scan_residual: float = math.inf
    cao_gap: float = math.nan
    inside_interval: bool = True
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "value": float(self.value),
            "side": self.side,
            "interval": self.interval,
            "matched_measure": self.matched_measure,
            "exponent": _ext(self.exponent) if not math.isnan(self.exponent) else None,
            "refined": _ext(self.refined) if not math.isnan(self.refined) else None,
            "residual": _ext(self.residual),
            "scan_residual": _ext(self.scan_residual),
            "verdict": self.verdict,
            "cao_gap": None if math.isnan(self.cao_gap) else _ext(self.cao_gap),
            "reason": self.reason,
        }


def splitting_family(c: Cocycle, shift: float, u: int, burn: int) -> ProjectionFamily:
    """A splitting-backed projection family with no stored matrices."""
    d = c.dim
    return ProjectionFamily([], np.zeros((0, d, d)), d - u, shift, 0, dim_u=u, burn=burn)


def verify_endpoints(c: Cocycle, r: SpectrumResult, family, cfg: VerifyConfig | None = None) -> list:
    """Check that every endpoint of ``r`` is a Lyapunov exponent of a family member.

    For an endpoint ``e`` of interval ``[a_m, b_m]``:

    1. pick ``eps = max(2 tol, half the distance to the nearest passing
       scan shift outside the interval)`` and build the splitting at
       ``e + eps`` (right ends) or ``e - eps`` (left ends), and at
       ``eps / 2``;
    2. maximise ``Lambda`` of ``F`` (right) or ``G`` (left) over the family
       and extrapolate the two realised values linearly to ``eps = 0``;
    3. compare the refined value with the exponent ladder of the maximising
       measure, with the scanned endpoint, and with ``[a_m, b_m]``.

    Endpoints within ``margin`` of ``kappa`` and left ends of a lower tail
    are skipped.
    """
    cfg = cfg or VerifyConfig()
    if len(family) == 0:
        raise ValueError("measure family must be non-empty")
    samples = cfg.samples if cfg.samples is not None else default_samples(c.system, cfg.p_max)
    fam_pts = orbit_points(family)
    seen = set(samples)
    samples = list(samples) + [p for p in fam_pts if p not in seen]
    burn = cfg.burn if cfg.burn is not None else cfg.dichotomy_n
    tester = HyperbolicityTester(c, DichotomyConfig(cfg.dichotomy_n, samples, burn=burn))
    passing = r.passing_shifts()
    ladders: dict = {}
    seqs: dict = {}
    out = []

    def realised(side, shift):
        cert = tester.test(shift)
        if cert.passed:
            u = cert.dim_u
        else:
            near = [t for t in r.trace if t[1]]
            u = min(near, key=lambda t: abs(t[0] - shift))[2] if near else None
            if u is None:
                return None
        key = (side, u)
        if key not in seqs:
            pf = splitting_family(c, shift, u, burn)
            seq = projected_norm_sequence(c, pf) if side == "b" else unstable_conorm_sequence(c, pf)
            res = cao_maximize(seq, family, samples, cfg.n_max, c.system, cfg.seed)
            val = res.max_lambda if side == "b" else -res.max_lambda
            seqs[key] = (val, res)
        return seqs[key]

    for idx, (lo, hi) in enumerate(r.intervals):
        for side, e in (("b", hi), ("a", lo)):
            rec = EndpointRealization(e, side, idx, "skipped")
            if math.isfinite(r.kappa) and e - r.kappa <= cfg.margin:
                rec.reason = "too close to kappa"
                out.append(rec)
                continue
            if side == "a" and r.tail and idx == len(r.intervals) - 1:
                rec.reason = "left end of the lower tail"
                out.append(rec)
                continue
            outward = [p for p in passing if (p > e if side == "b" else p < e)]
            dist = min((abs(p - e) for p in outward), default=2 * r.tol)
            eps = max(2 * r.tol, dist / 2)
            sign = 1.0 if side == "b" else -1.0
            v1 = realised(side, e + sign * eps)
            v2 = realised(side, e + sign * eps / 2)
            if v1 is None or v2 is None:
                rec.verdict, rec.reason = "fail", "no splitting next to the endpoint"
                out.append(rec)
                continue
            refined = 2 * v2[0] - v1[0]
            res = v2[1]
            label = res.argmax
            mu = family.by_label(label)
            if label not in ladders:
                ladders[label] = exponent_ladder(c, mu, cfg.ladder_n, seed=cfg.seed)
            lad = ladders[label]
            exp_val, resid = lad.nearest(refined)
            rec.matched_measure = label
            rec.exponent = exp_val
            rec.refined = refined
            rec.residual = resid
            rec.scan_residual = abs(e - refined) if math.isfinite(refined) else math.inf
            rec.cao_gap = res.gap
            rec.inside_interval = bool(lo - cfg.match_tol <= refined <= hi + cfg.match_tol)
            ok = resid <= cfg.match_tol and rec.scan_residual <= cfg.match_tol and rec.inside_interval
            rec.verdict = "pass" if ok else "fail"
            if not ok:
                why = []
                if resid > cfg.match_tol:
                    why.append("no family exponent at the realised value")
                if rec.scan_residual > cfg.match_tol:
                    why.append("realised growth misses the scanned endpoint")
                if not rec.inside_interval:
                    why.append("realised value outside the interval")
                rec.reason = "; ".join(why)
            out.append(rec)
    return out


def verification_ok(records) -> bool:
    """True when no endpoint failed (skipped endpoints do not count)."""
    return all(r.verdict != "fail" for r in records)
