"""Noncompactness bounds, kappa estimates and Lasota-Yorke checks.

The measure-of-noncompactness norm ``||A||_ic`` (the infimum radius of a
finite ball cover of the image of the unit ball) is not computable in
general.  Every routine here returns a certified *upper* bound instead:
zero in finite dimensions, and an explicit tail supremum for operators
that are a finite matrix head plus a structured tail.

Extended reals: ``-inf`` is represented by ``float('-inf')``, which
compares below every real.

Note on the asymptotic rate of ``||A(q, n)||_ic``: the norm is applied to
the operator itself (there is no vector argument).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .base_dynamics import sample_orbit, typical_points
from .cocycle import Cocycle, CocycleError, log_norm_series

NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# weight families for diagonal operators


@dataclass(frozen=True)
class WeightFamily:
    """A closed-form weight sequence ``w_k, k >= 1``, nonincreasing in ``|w_k|``."""

    name: str
    weight: Callable[[int], float]
    params: tuple = ()

    def tail_sup(self, n: int) -> float:
        """``sup_{k > n} |w_k|``; attained at ``k = n + 1`` for these families."""
        return abs(self.weight(n + 1))

    def head(self, n: int) -> np.ndarray:
        return np.array([self.weight(k) for k in range(1, n + 1)])


def half_plus_inv_k() -> WeightFamily:
    return WeightFamily("half_plus_inv_k", lambda k: 0.5 + 1.0 / k)


def geometric(r: float) -> WeightFamily:
    if not 0 < r < 1:
        raise ValueError("geometric ratio must lie in (0, 1)")
    return WeightFamily("geometric", lambda k: r**k, (r,))


def power(p: float) -> WeightFamily:
    if p <= 0:
        raise ValueError("power exponent must be > 0")
    return WeightFamily("power", lambda k: float(k) ** (-p), (p,))


WEIGHT_FAMILIES = {"half_plus_inv_k": half_plus_inv_k, "geometric": geometric, "power": power}


def weight_family(name: str, *params) -> WeightFamily:
    try:
        return WEIGHT_FAMILIES[name](*params)
    except KeyError:
        raise ValueError(f"unknown weight family {name!r}; known: {sorted(WEIGHT_FAMILIES)}") from None


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class FiniteDim:
    """Finite-dimensional spaces: bounded sets are totally bounded, ic-norm 0."""

    log_tail_step: float = NEG_INF
    block_diagonal: bool = False


@dataclass(frozen=True)
class DiagonalOperator:
    """Matrix head on coordinates ``1..size`` plus a diagonal tail ``w_k, k > size``.

    The head is carried by the cocycle generator (any ``size x size``
    matrix); the tail acts by the weights of ``weights``.
    """

    weights: WeightFamily
    size: int
    block_diagonal: bool = True

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("truncation size must be >= 1")

    @property
    def log_tail_step(self) -> float:
        t = self.weights.tail_sup(self.size)
        return math.log(t) if t > 0 else NEG_INF


@dataclass(frozen=True)
class Banded:
    """Banded operator truncated at ``size`` with a supplied tail-norm bound."""

    size: int
    tail_bound: float
    block_diagonal: bool = False

    def __post_init__(self):
        if self.tail_bound < 0:
            raise ValueError("tail bound must be >= 0")

    @property
    def log_tail_step(self) -> float:
        return math.log(self.tail_bound) if self.tail_bound > 0 else NEG_INF


@dataclass(frozen=True)
class StructuredOperator:
    """Operator = matrix ``head`` plus a tail whose norm is ``<= exp(log_tail)``."""

    head: np.ndarray
    log_tail: float = NEG_INF

    def norm(self) -> float:
        return max(float(np.linalg.norm(self.head, 2)), math.exp(self.log_tail))


def diagonal_operator_cocycle(system, weights: WeightFamily, size: int, head=None) -> Cocycle:
    """Constant cocycle of a diagonal operator; ``head`` overrides the first weights."""
    from .cocycle import ConstantGenerator

    w = weights.head(size)
    if head is not None:
        head = np.asarray(head, dtype=float)
        w[: len(head)] = head
    return Cocycle(system, ConstantGenerator(np.diag(w)), model=DiagonalOperator(weights, size))


def ic_norm_upper(model, op) -> float:
    """Upper bound for the measure-of-noncompactness norm of ``op``.

    ``op`` is a matrix (read as one step of the model) or a
    :class:`StructuredOperator`.  The bound never exceeds the operator norm.
    """
    if isinstance(model, FiniteDim):
        return 0.0
    if isinstance(op, StructuredOperator):
        head, log_tail = op.head, op.log_tail
    else:
        head, log_tail = np.asarray(op, dtype=float), model.log_tail_step
    if head.shape != (model.size, model.size):
        raise CocycleError(f"operator head shape {head.shape} does not match model size {model.size}")
    if model.block_diagonal:
        return math.exp(log_tail)
    # ic-norm <= operator norm always holds; the supplied tail bound may be loose
    return min(math.exp(log_tail), max(float(np.linalg.norm(head, 2)), math.exp(log_tail)))


def _ic_log_series(c: Cocycle, n: int) -> float:
    """``log`` of the ic-bound of an ``n``-step product (same for every point)."""
    model = c.model
    if model is None or isinstance(model, FiniteDim):
        return NEG_INF
    return n * model.log_tail_step - c.shift * n


def kappa_estimate(c: Cocycle, model, mu, n_max: int, count: int = 8, seed: int = 0) -> float:
    """Upper estimate of ``kappa(mu)``.

    Averages ``(1/n_max) log ic_norm_upper(A(q, n_max))`` over
    ``mu``-typical points.  ``-inf`` for finite-dimensional models.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    if isinstance(model, FiniteDim) or model is None:
        return NEG_INF
    pts = typical_points(mu, c.system, count, seed, lookahead=n_max)
    vals = []
    for _ in pts:
        # products of structured operators: the tail bound is submultiplicative
        vals.append(n_max * model.log_tail_step - c.shift * n_max)
    return float(np.mean(vals)) / n_max


def global_kappa(c: Cocycle, model, family, n_max: int, samples=None) -> float:
    """Upper estimate of ``kappa = max over ergodic mu of kappa(mu)``.

    Maximum over ``family`` of :func:`kappa_estimate`, together with the
    uniform estimate ``(1/n) max_q log ic_norm_upper(A(q, n))`` over
    ``samples``; the larger value is returned.
    """
    if len(family) == 0:
        raise ValueError("measure family must be non-empty")
    if isinstance(model, FiniteDim) or model is None:
        return NEG_INF
    best = max(kappa_estimate(c, model, mu, n_max) for mu in family)
    if samples:
        uniform = max(_ic_log_series(Cocycle(c.system, c.generator, c.shift, model), n_max) for _ in samples)
        best = max(best, uniform / n_max)
    return best


# ---------------------------------------------------------------------------
# norms and Lasota-Yorke data


@dataclass(frozen=True)
class EuclideanNorm:
    name: str = "euclidean"

    def vector(self, x) -> float:
        return float(np.linalg.norm(x))

    def operator(self, a) -> float:
        return float(np.linalg.norm(a, 2))


@dataclass(frozen=True)
class WeightedSupNorm:
    """``||x|| = max_k w_k |x_k|``; plain sup norm when all weights are 1."""

    weights: tuple = ()
    name: str = "weighted_sup"

    def _w(self, d):
        return np.ones(d) if not self.weights else np.asarray(self.weights, dtype=float)

    def vector(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.max(self._w(len(x)) * np.abs(x)))

    def operator(self, a) -> float:
        a = np.asarray(a, dtype=float)
        w = self._w(a.shape[0])
        return float(np.max(np.sum(np.abs(w[:, None] * a / w[None, :]), axis=1)))


def sup_norm() -> WeightedSupNorm:
    return WeightedSupNorm((), "sup")


@dataclass
class LasotaYorkeData:
    """Inputs of the strong/weak Lasota-Yorke inequalities.

    ``alpha``, ``beta``, ``gamma`` map base points to positive reals;
    ``points`` and ``vectors`` are the sampled ``(q, x)`` pairs.
    """

    alpha: Callable
    beta: Callable
    gamma: Callable
    points: Sequence = ()
    vectors: Sequence = ()
    strong: object = field(default_factory=EuclideanNorm)
    weak: object = field(default_factory=EuclideanNorm)


@dataclass
class QuasicompactReport:
    kappa: float
    lam: float
    margin: float
    verdict: str
    tolerance: float = 0.0
    ly1_residuals: list = field(default_factory=list)
    ly2_residuals: list = field(default_factory=list)
    kappa_stderr: float = 0.0
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kappa": _ext(self.kappa),
            "lambda": _ext(self.lam),
            "margin": _ext(self.margin),
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "kappa_stderr": self.kappa_stderr,
            "min_ly1_residual": _ext(min(self.ly1_residuals, default=math.inf)),
            "min_ly2_residual": _ext(min(self.ly2_residuals, default=math.inf)),
            "notes": list(self.notes),
        }


def _ext(x: float):
    """JSON-safe extended real."""
    if x == math.inf:
        return "inf"
    if x == -math.inf:
        return "-inf"
    return float(x)


def check_lasota_yorke(c: Cocycle, data: LasotaYorkeData, tol: float = 1e-10) -> QuasicompactReport:
    """Evaluate both inequalities on every sampled ``(q, x)``.

    LY1 residual: ``alpha(q)||x|| + beta(q)|x| - ||A(q)x||``;
    LY2 residual: ``gamma(q) - ||A(q)||``.  Passes iff all are ``>= -tol``.
    Failures are reported, never raised.
    """
    if not data.points or not data.vectors:
        raise ValueError("Lasota-Yorke data needs sample points and test vectors")
    ly1, ly2 = [], []
    for q in data.points:
        a = c.matrix(q) * math.exp(-c.shift)
        al, be, ga = data.alpha(q), data.beta(q), data.gamma(q)
        if min(al, be, ga) <= 0:
            raise ValueError("alpha, beta, gamma must be strictly positive")
        ly2.append(ga - data.strong.operator(a))
        for x in data.vectors:
            x = np.asarray(x, dtype=float)
            ly1.append(al * data.strong.vector(x) + be * data.weak.vector(x) - data.strong.vector(a @ x))
    ok = min(ly1) >= -tol and min(ly2) >= -tol
    return QuasicompactReport(
        kappa=math.nan,
        lam=math.nan,
        margin=math.nan,
        verdict="pass" if ok else "fail",
        tolerance=tol,
        ly1_residuals=ly1,
        ly2_residuals=ly2,
    )


def kappa_bound_via_ly(
    data: LasotaYorkeData,
    mu,
    lam_mu: float,
    system,
    n: int = 10_000,
    seed: int = 0,
    tolerance: float = 0.0,
) -> QuasicompactReport:
    """Birkhoff estimate ``B`` of the mean of ``log alpha``; quasicompact iff ``B < lam_mu - tol``.

    ``B`` bounds ``kappa(mu)`` from above whenever the Lasota-Yorke
    inequalities hold; its sample standard error is reported alongside.
    """
    orbit = sample_orbit(mu, system, n, seed)
    logs = np.array([math.log(data.alpha(q)) for q in orbit])
    b = float(logs.mean())
    se = float(logs.std(ddof=1) / math.sqrt(len(logs))) if len(logs) > 1 else 0.0
    verdict = "quasicompact" if b < lam_mu - tolerance else "inconclusive"
    return QuasicompactReport(
        kappa=b, lam=lam_mu, margin=lam_mu - b, verdict=verdict, tolerance=tolerance, kappa_stderr=se
    )


def quasicompact_report(
    c: Cocycle, mu, n_max: int = 512, tolerance: float = 1e-6, seed: int = 0
) -> QuasicompactReport:
    """``kappa(mu)`` upper estimate against the top exponent ``lambda(mu)``."""
    from .lyapunov import top_exponent

    model = c.model if c.model is not None else FiniteDim()
    kap = kappa_estimate(c, model, mu, n_max, seed=seed)
    lam = top_exponent(c, mu, n_max, seed=seed)
    margin = lam - kap
    verdict = "quasicompact" if margin > tolerance else "inconclusive"
    return QuasicompactReport(kappa=kap, lam=lam, margin=margin, verdict=verdict, tolerance=tolerance)
