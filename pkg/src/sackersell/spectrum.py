"""Dichotomy spectrum by grid scan, bisection and interval assembly.

The shift axis ``(kappa_cut, log C + 0.1]`` is sampled on a grid, every
pass/fail boundary is bisected to ``tol`` and failing runs become closed
intervals.  Spectral points are often narrower than the grid step, so two
passing neighbours with different unstable dimensions are searched
recursively for the failing region between them.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .base_dynamics import FinitePeriodic
from .cocycle import Cocycle, inverse_norm_bound, uniform_norm_bound
from .dichotomy import DichotomyConfig, DichotomyError, HyperbolicityTester
from .quasicompactness import FiniteDim, _ext, global_kappa

NEG_INF = float("-inf")


class SpectrumError(RuntimeError):
    code = "spectrum.error"


@dataclass
class ScanConfig:
    """Scan parameters.

    ``lower`` is the user floor of the grid (``None``: just below the
    smallest possible growth rate); ``kappa=None`` is computed from the
    operator model.
    """

    step: float = 0.02
    tol: float = 1e-3
    n_max: int = 256
    samples: list | None = None
    p_max: int = 8
    kappa: float | None = None
    budget: int = 32
    lower: float | None = None
    upper: float | None = None
    lambda_min: float = 5e-4
    margin: float = 0.02
    burn: int | None = None
    threads: int = 1

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be > 0")
        if not self.tol > 0:
            raise ValueError("bisection tolerance must be > 0")
        if self.budget < 1:
            raise ValueError("interval budget must be >= 1")

    def dichotomy(self) -> DichotomyConfig:
        return DichotomyConfig(self.n_max, self.samples, self.p_max, self.lambda_min, self.margin, self.burn)


@dataclass
class SpectrumResult:
    """Disjoint closed intervals in decreasing order ``b_1 >= a_1 > b_2 >= ...``."""

    intervals: list
    kappa: float
    tail: bool = False
    gap_dims: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    log_c: float = math.nan
    kappa_cut: float = math.nan
    tol: float = 1e-3
    step: float = 0.02
    grid: list = field(default_factory=list)

    @property
    def accumulation(self) -> bool:
        return "accumulation_suspected" in self.flags

    def endpoints(self) -> list:
        return [e for iv in self.intervals for e in iv]

    def contains(self, a: float, slack: float = 0.0) -> bool:
        return any(lo - slack <= a <= hi + slack for lo, hi in self.intervals)

    def passing_shifts(self) -> list:
        return [s for s, ok, _ in self.trace if ok]

    def resolvent_grid(self) -> list:
        """``(a, dim U)`` at the passing points of the regular grid (bisection points excluded)."""
        on_grid = set(self.grid)
        return [(a, u) for a, ok, u in self.trace if ok and a in on_grid]

    def to_dict(self) -> dict:
        alt = classify_structure(self)
        return {
            "kappa": _ext(self.kappa),
            "intervals": [[float(a), float(b)] for a, b in self.intervals],
            "tail": bool(self.tail),
            "alternative": alt.alternative,
            "structure": alt.to_dict(),
            "gap_dims": list(self.gap_dims),
            "flags": list(self.flags),
            "log_C": float(self.log_c),
            "kappa_cut": _ext(self.kappa_cut),
        }


def _grid(lo: float, hi: float, step: float) -> list:
    n = int(math.floor((hi - lo) / step + 1e-9))
    pts = [lo + k * step for k in range(n + 1)]
    if hi - pts[-1] > 1e-12:
        pts.append(hi)
    return pts


def auto_floor(c: Cocycle, config: ScanConfig) -> float:
    """Grid floor below every growth rate of ``c``."""
    inv = inverse_norm_bound(c)
    if math.isfinite(inv):
        return -math.log(inv) - c.shift - 0.1
    tester = HyperbolicityTester(c, config.dichotomy())
    r = tester.rates
    finite = r[np.isfinite(r)]
    base = float(finite.min()) if finite.size else 0.0
    return base - c.shift - 0.5


class _Scan:
    def __init__(self, c, cfg):
        self.c, self.cfg = c, cfg
        self.tester = HyperbolicityTester(c, cfg.dichotomy())
        self.evals: dict[float, tuple[bool, int | None]] = {}

    def eval(self, a: float):
        hit = self.evals.get(a)
        if hit is None:
            cert = self.tester.test(a)
            hit = (cert.passed, cert.dim_u)
            self.evals[a] = hit
        return hit

    def eval_many(self, shifts):
        todo = [a for a in shifts if a not in self.evals]
        if self.cfg.threads > 1 and len(todo) > 1:
            # warm the per-dimension caches serially, then fan out
            with ThreadPoolExecutor(self.cfg.threads) as ex:
                for a, cert in zip(todo, ex.map(self.tester.test, todo)):
                    self.evals[a] = (cert.passed, cert.dim_u)
        else:
            for a in todo:
                self.eval(a)

    def sorted(self):
        return sorted(self.evals.items())

    def hidden(self, lo: float, hi: float, depth: int = 0) -> list:
        """Search ``(lo, hi)`` between passing shifts with different dims."""
        (plo, ulo), (phi, uhi) = self.eval(lo), self.eval(hi)
        if ulo == uhi:
            return []
        if hi - lo <= self.cfg.tol / 2 or depth > 60:
            return [0.5 * (lo + hi)]
        mid = 0.5 * (lo + hi)
        ok, _ = self.eval(mid)
        if not ok:
            return []
        return self.hidden(lo, mid, depth + 1) + self.hidden(mid, hi, depth + 1)

    def bisect(self, p: float, f: float):
        """Shrink the bracket (passing ``p``, failing ``f``) to width ``<= tol``."""
        while abs(p - f) > self.cfg.tol:
            mid = 0.5 * (p + f)
            ok, _ = self.eval(mid)
            if ok:
                p = mid
            else:
                f = mid
        return p, f


def scan_spectrum(c: Cocycle, cfg: ScanConfig | None = None) -> SpectrumResult:
    """Dichotomy spectrum of ``c`` above ``kappa``.

    Every grid shift is tested with
    :class:`~sackersell.dichotomy.HyperbolicityTester`; boundaries are
    bisected, keeping one passing and one failing shift, and each failing
    run becomes an interval whose ends are the failing bracket members.
    Intervals of width ``<= 2 tol`` collapse to their midpoint.
    """
    cfg = cfg or ScanConfig()
    kappa = cfg.kappa
    if kappa is None:
        model = c.model if c.model is not None else FiniteDim()
        if isinstance(model, FiniteDim):
            kappa = NEG_INF
        else:
            kappa = model.log_tail_step - c.shift
    log_c = math.log(uniform_norm_bound(c)) - c.shift if uniform_norm_bound(c) > 0 else NEG_INF
    if not math.isfinite(log_c):
        raise SpectrumError("generator is identically zero; nothing to scan")
    upper = cfg.upper if cfg.upper is not None else log_c + 0.1
    floor = cfg.lower if cfg.lower is not None else auto_floor(c, cfg)
    kcut = max(kappa, floor)
    if kcut >= upper:
        raise SpectrumError(f"empty scan range ({kcut}, {upper}]")
    sc = _Scan(c, cfg)
    # Sigma lies in (kappa, inf): start just above a finite kappa
    start = kcut + cfg.tol if math.isfinite(kappa) and kappa >= floor else kcut
    grid = _grid(start, upper, cfg.step)
    sc.eval_many(grid)
    flags = []

    # hidden spectral points between passing shifts, then bisect every
    # pass/fail boundary; repeat since bisection creates new passing pairs
    hidden_pts: list = []
    searched: set = set()
    while True:
        pts = sc.sorted()
        fresh = False
        for (a0, (ok0, u0)), (a1, (ok1, u1)) in zip(pts, pts[1:]):
            if ok0 and ok1 and u0 != u1 and (a0, a1) not in searched:
                searched.add((a0, a1))
                hidden_pts += sc.hidden(a0, a1)
                fresh = True
        pts = sc.sorted()
        for (a0, (ok0, _)), (a1, (ok1, _)) in zip(pts, pts[1:]):
            if ok0 != ok1 and a1 - a0 > cfg.tol:
                sc.bisect(a0, a1) if ok0 else sc.bisect(a1, a0)
                fresh = True
        if not fresh:
            break
    hidden_pts = sorted(set(hidden_pts))
    if hidden_pts:
        flags.append("hidden_point")

    # assemble failing runs
    pts = sc.sorted()
    runs, cur = [], None
    for a, (ok, _) in pts:
        if not ok:
            cur = [a, a] if cur is None else [cur[0], a]
        elif cur is not None:
            runs.append(cur)
            cur = None
    if cur is not None:
        runs.append(cur)
    for h in hidden_pts:
        runs.append([h, h])
    runs.sort()
    tail = bool(pts and not pts[0][1][0])
    if tail and math.isfinite(kappa) and isinstance(c.system, FinitePeriodic):
        # over one periodic orbit Sigma is a finite set of log-moduli, so a
        # failing run down to kappa is a cluster of unresolved points
        tail = False
        flags += ["accumulation_suspected", "cluster_at_kappa"]
    intervals = []
    for lo, hi in runs:
        at_floor = tail and lo == pts[0][0]
        if not at_floor and hi - lo <= 2 * cfg.tol:
            m = 0.5 * (lo + hi)
            lo = hi = m
        intervals.append((lo, hi))
    intervals.sort(key=lambda iv: -iv[1])
    if len(intervals) > cfg.budget:
        intervals = intervals[: cfg.budget]
        if "accumulation_suspected" not in flags:
            flags.append("accumulation_suspected")
        flags.append("truncated")
        tail_kept = False
    else:
        tail_kept = tail
    if tail and not tail_kept:
        flags.append("tail_dropped_by_budget")

    gap_dims = _gap_dims(pts, intervals, flags)
    if intervals and intervals[0][1] > log_c + cfg.tol:
        flags.append("above_norm_bound")
    trace = [(a, ok, u) for a, (ok, u) in pts]
    return SpectrumResult(
        intervals=[(float(a), float(b)) for a, b in intervals],
        kappa=kappa,
        tail=tail_kept,
        gap_dims=gap_dims,
        flags=flags,
        trace=trace,
        log_c=log_c,
        kappa_cut=kcut,
        tol=cfg.tol,
        step=cfg.step,
        grid=[float(a) for a in grid],
    )


def _gap_dims(pts, intervals, flags) -> list:
    """``dim U`` on each resolvent gap, left to right (``None`` if unobserved)."""
    edges = sorted(intervals)
    bounds = [-math.inf] + [x for iv in edges for x in iv] + [math.inf]
    dims = []
    for k in range(len(edges) + 1):
        lo, hi = bounds[2 * k], bounds[2 * k + 1]
        seen = {u for a, (ok, u) in pts if ok and lo < a < hi}
        if len(seen) > 1:
            flags.append("gap_dim_mismatch")
        dims.append(max(seen) if seen else None)
    # a gap that sits below a floor-attached tail has no points; drop it
    if dims and dims[0] is None:
        dims = dims[1:]
    return dims


# ---------------------------------------------------------------------------
# structure


@dataclass
class StructureClassification:
    alternative: int
    k: int
    description: str
    accumulation_suspected: bool = False
    suspected: int | None = None
    b_inf: float | None = None

    def to_dict(self) -> dict:
        return {
            "alternative": self.alternative,
            "k": self.k,
            "description": self.description,
            "accumulation_suspected": self.accumulation_suspected,
            "suspected_alternative": self.suspected,
            "b_inf_estimate": self.b_inf,
        }


def classify_structure(r: SpectrumResult) -> StructureClassification:
    """Which structural alternative the scanned spectrum exhibits.

    1: empty.  2: ``k`` intervals, no lower tail.  3: ``k`` intervals, the
    lowest one reaching down to ``kappa``.  Infinite families (4, 5) are
    never claimed; when the interval budget was hit and the gaps shrink
    below ``3 tol`` towards ``kappa`` they are reported as suspected.
    """
    k = len(r.intervals)
    if k == 0:
        return StructureClassification(1, 0, "empty spectrum: the cocycle is uniformly hyperbolic at every shift")
    alt = 3 if r.tail else 2
    desc = f"{k} closed interval(s)" + (" with a lower tail down to kappa" if r.tail else "")
    out = StructureClassification(alt, k, desc)
    if r.accumulation:
        ivs = sorted(r.intervals)
        gaps = [b[0] - a[1] for a, b in zip(ivs, ivs[1:])]
        shrinking = len(gaps) >= 2 and all(g0 <= g1 + 1e-15 for g0, g1 in zip(gaps, gaps[1:]))
        small = bool(gaps) and gaps[0] < 3 * r.tol
        out.accumulation_suspected = True
        if "cluster_at_kappa" in r.flags:
            out.b_inf = float(r.kappa)
            out.description += f"; points accumulate towards kappa = {r.kappa:.6g}"
        elif shrinking and small:
            out.b_inf = float(ivs[0][0])
            out.description += f"; accumulation suspected near {out.b_inf:.6g}"
        else:
            out.description += "; interval budget exhausted"
        if "truncated" in r.flags and shrinking and small:
            out.suspected = 5 if "tail_dropped_by_budget" in r.flags else 4
    return out


def resolvent_dimension_profile(c: Cocycle, r: SpectrumResult, config: DichotomyConfig | None = None,
                                cfg: ScanConfig | None = None) -> list:
    """``(gap, dim U)`` for one interior point per resolvent gap, left to right.

    Raises :class:`SpectrumError` unless the dimensions strictly decrease
    from left to right, and unless each gap has at most ``dim U`` intervals
    to its right.
    """
    if config is None:
        config = (cfg or ScanConfig()).dichotomy()
    tester = HyperbolicityTester(c, config)
    ivs = sorted(r.intervals)
    lower = r.kappa_cut if math.isfinite(r.kappa_cut) else (ivs[0][0] - 1.0 if ivs else 0.0)
    upper = r.log_c + 0.1 if math.isfinite(r.log_c) else (ivs[-1][1] + 1.0 if ivs else 1.0)
    bounds = []
    left = lower if r.tail else -math.inf
    for lo, hi in ivs:
        if not (r.tail and lo == ivs[0][0]):
            bounds.append((left, lo))
        left = hi
    bounds.append((left, math.inf))
    profile = []
    for lo, hi in bounds:
        if math.isinf(lo) and math.isinf(hi):
            pt = 0.5 * (lower + upper)
        elif math.isinf(lo):
            pt = hi - max(0.05, 4 * r.tol)
        elif math.isinf(hi):
            pt = max(lo + max(0.05, 4 * r.tol), upper)
        else:
            pt = 0.5 * (lo + hi)
        cert = tester.test(pt)
        if not cert.passed:
            raise SpectrumError(f"resolvent point {pt:.6g} does not pass the dichotomy test")
        profile.append(((lo, hi), int(cert.dim_u)))
    dims = [u for _, u in profile]
    if any(d0 <= d1 for d0, d1 in zip(dims, dims[1:])):
        raise SpectrumError(f"non-monotone dimension profile {dims}")
    for i, ((lo, hi), u) in enumerate(profile):
        right = sum(1 for a, _ in ivs if a >= hi)
        if right > u:
            raise SpectrumError(f"{right} intervals to the right of a gap with dim U = {u}")
    return profile


def spectrum_trace_rows(r: SpectrumResult) -> list:
    """Rows ``(shift, pass, dimU)`` of the scan trace for CSV export."""
    return [(float(a), int(ok), "" if u is None else int(u)) for a, ok, u in r.trace]
