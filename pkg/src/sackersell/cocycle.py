"""Linear cocycles over a base system: generators, products, shifts.

A cocycle is determined by its generator ``q -> A(q)``; the ``n``-step
product is ``A(f^{n-1} q) ... A(q)`` and the shifted cocycle with
parameter ``a`` multiplies it by ``exp(-a n)``.  Internally the shift is
kept separate from the raw products, so shifting never recomputes or
re-rounds a product.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _numerics as nm
from .base_dynamics import (
    BaseDynamicsError,
    CirclePoint,
    CircleRotation,
    FinitePeriodic,
    FullShift,
    OrbitPoint,
    ShiftPoint,
    WindowError,
)

__all__ = [
    "AngleGenerator",
    "Cocycle",
    "CocycleError",
    "ConstantGenerator",
    "SymbolGenerator",
    "WindowError",
    "block_generator",
    "cocycle_product",
    "log_norm",
    "scalar_symbol_generator",
    "shifted",
    "uniform_norm_bound",
]

_CACHE_LIMIT = 200_000


class CocycleError(ValueError):
    code = "cocycle.error"


def _square(m, what="matrix") -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise CocycleError(f"{what} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise CocycleError(f"{what} has non-finite entries")
    return a


# ---------------------------------------------------------------------------
# generators


@dataclass(frozen=True, eq=False)
class ConstantGenerator:
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _square(self.matrix))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def check(self, system) -> None:
        pass

    def norm_bound(self, system, budget: int) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def inverse_norm_bound(self, system, budget: int) -> float:
        s = np.linalg.svd(self.matrix, compute_uv=False)
        return math.inf if s[-1] == 0 else float(1.0 / s[-1])


@dataclass(frozen=True, eq=False)
class SymbolGenerator:
    """Generator depending on the symbols ``q_0 .. q_{block-1}``.

    ``matrices[c]`` is used for the block whose base-``k`` code is ``c``.
    Over a :class:`FinitePeriodic` base the "symbol" is the orbit index.
    """

    matrices: np.ndarray
    block: int = 1

    def __post_init__(self):
        mats = np.array(self.matrices, dtype=float)
        if mats.ndim == 1:
            mats = mats.reshape(-1, 1, 1)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or mats.shape[0] == 0:
            raise CocycleError(f"symbol matrices must have shape (k, d, d), got {mats.shape}")
        if not np.all(np.isfinite(mats)):
            raise CocycleError("symbol matrices have non-finite entries")
        if self.block < 1:
            raise CocycleError("block length must be >= 1")
        object.__setattr__(self, "matrices", mats)

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    def check(self, system) -> None:
        if isinstance(system, FullShift):
            k = system.alphabet**self.block
        elif isinstance(system, FinitePeriodic) and self.block == 1:
            k = system.period
        else:
            raise CocycleError(f"symbol generator does not fit {type(system).__name__}")
        if self.matrices.shape[0] != k:
            raise CocycleError(f"expected {k} matrices, got {self.matrices.shape[0]}")

    def norm_bound(self, system, budget: int) -> float:
        return float(np.linalg.norm(self.matrices, 2, axis=(1, 2)).max())

    def inverse_norm_bound(self, system, budget: int) -> float:
        smin = np.linalg.svd(self.matrices, compute_uv=False)[:, -1].min()
        return math.inf if smin == 0 else float(1.0 / smin)


@dataclass(frozen=True, eq=False)
class AngleGenerator:
    """Generator given by a continuous function of the circle angle."""

    func: Callable[[float], np.ndarray]
    dim: int
    name: str = "angle"

    def check(self, system) -> None:
        if not isinstance(system, CircleRotation):
            raise CocycleError("angle generators need a circle rotation base")
        _square(self.func(0.0), f"{self.name}(0)")

    def _grid(self, budget):
        return np.stack([_square(self.func(t)) for t in np.arange(budget) / budget])

    def norm_bound(self, system, budget: int) -> float:
        """Grid maximum over ``budget`` equally spaced angles (step ``1/budget``)."""
        return float(np.linalg.norm(self._grid(budget), 2, axis=(1, 2)).max())

    def inverse_norm_bound(self, system, budget: int) -> float:
        smin = np.linalg.svd(self._grid(budget), compute_uv=False)[:, -1].min()
        return math.inf if smin == 0 else float(1.0 / smin)


def scalar_symbol_generator(log_values) -> SymbolGenerator:
    """Scalar generator ``A(q) = exp(c[q_0])``."""
    return SymbolGenerator(np.exp(np.asarray(log_values, dtype=float)).reshape(-1, 1, 1))


def block_generator(alphabet: int, block: int, func: Callable[[tuple], np.ndarray]) -> SymbolGenerator:
    """Tabulate ``func(word)`` over all words of length ``block``."""
    words = np.indices((alphabet,) * block).reshape(block, -1).T
    return SymbolGenerator(np.stack([_square(func(tuple(int(s) for s in w))) for w in words]), block)


# ---------------------------------------------------------------------------
# orbit bundles: generator values along many orbits at once


class OrbitBundle:
    """Unshifted generator values ``A(f^j q_i)`` for ``j`` in ``[start, stop)``.

    Indexing with ``j`` returns the stack over all points, shape ``(N, d, d)``.
    """

    def __init__(self, cocycle: "Cocycle", points, start: int, stop: int):
        self.cocycle = cocycle
        self.points = list(points)
        self.start, self.stop = start, stop
        gen, system = cocycle.generator, cocycle.system
        n = len(self.points)
        self.d = gen.dim
        if isinstance(gen, ConstantGenerator):
            self._const = np.broadcast_to(gen.matrix, (n, self.d, self.d))
        elif isinstance(gen, SymbolGenerator):
            self._table = gen.matrices
            self._codes = np.stack([self._point_codes(q, start, stop, gen.block) for q in self.points])
        else:
            self._angles = np.array([q.angle for q in self.points])
            self._rho = system.rho
            self._func = gen.func

    def _point_codes(self, q, start, stop, block):
        system = self.cocycle.system
        if isinstance(q, OrbitPoint):
            return (q.index + np.arange(start, stop)) % system.period
        if not isinstance(q, ShiftPoint):
            raise CocycleError(f"{type(q).__name__} does not fit a symbol generator")
        raw = q.codes(start, stop + block - 1).astype(np.int64)
        k = system.alphabet
        code = np.zeros(stop - start, dtype=np.int64)
        for t in range(block):
            code = code * k + raw[t : t + stop - start]
        return code

    def __len__(self):
        return len(self.points)

    def __getitem__(self, j: int) -> np.ndarray:
        if not self.start <= j < self.stop:
            raise IndexError(j)
        if hasattr(self, "_const"):
            return self._const
        if hasattr(self, "_table"):
            return self._table[self._codes[:, j - self.start]]
        ang = (self._angles + j * self._rho) % 1.0
        return np.stack([_square(self._func(t)) for t in ang])

    def sequence(self, i: int) -> np.ndarray:
        """All generator values along the orbit of point ``i``."""
        if hasattr(self, "_const"):
            return np.broadcast_to(self._const[0], (self.stop - self.start, self.d, self.d))
        if hasattr(self, "_table"):
            return self._table[self._codes[i]]
        q0 = self._angles[i]
        return np.stack(
            [_square(self._func((q0 + j * self._rho) % 1.0)) for j in range(self.start, self.stop)]
        )


# ---------------------------------------------------------------------------
# cocycles


@dataclass(frozen=True, eq=False)
class Cocycle:
    """Cocycle over ``system`` generated by ``generator``.

    ``shift`` is the parameter ``a`` of the rescaled cocycle
    ``exp(-a n) * A(q, n)``; ``model`` optionally attaches a
    noncompactness model (see :mod:`sackersell.quasicompactness`) that
    describes the part of the operator not carried by the matrix head.
    """

    system: object
    generator: object
    shift: float = 0.0
    model: object = None
    _cache: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        self.generator.check(self.system)
        if self.model is not None and getattr(self.model, "size", self.dim) != self.dim:
            raise CocycleError(
                f"operator model truncation {self.model.size} does not match generator dimension {self.dim}"
            )
        if self._cache is None:
            object.__setattr__(self, "_cache", {"products": {}, "lock": threading.Lock()})

    @property
    def dim(self) -> int:
        return self.generator.dim

    def bundle(self, points, start: int, stop: int) -> OrbitBundle:
        return OrbitBundle(self, points, start, stop)

    def matrix(self, q) -> np.ndarray:
        """The unshifted generator value ``A(q)``."""
        return np.array(self.bundle([q], 0, 1)[0][0])

    def _raw_product(self, q, n: int) -> np.ndarray:
        store, lock = self._cache["products"], self._cache["lock"]
        key = (q, n)
        hit = store.get(key)
        if hit is not None:
            return hit
        m = 1 << (n.bit_length() - 1)
        while m > 0 and (q, m) not in store:
            m >>= 1
        if m == 0:
            prod, m = np.eye(self.dim), 0
        else:
            prod = store[(q, m)]
        seq = self.bundle([q], m, n).sequence(0)
        fresh = {}
        for i, a in enumerate(seq, start=m + 1):
            prod = a @ prod
            if i & (i - 1) == 0 or i == n:
                fresh[(q, i)] = prod
        with lock:
            if len(store) > _CACHE_LIMIT:
                store.clear()
            for k, v in fresh.items():
                store.setdefault(k, v)
            return store[key]


def cocycle_product(c: Cocycle, q, n: int) -> np.ndarray:
    """``exp(-a n) A(f^{n-1} q) ... A(q)``; the identity for ``n = 0``.

    Products are built by sequential left multiplication and the prefixes
    at ``n = 1, 2, 4, ...`` are cached per base point, so repeated queries
    return bitwise-identical arrays.
    """
    n = int(n)
    if n < 0:
        raise CocycleError("cocycle_product needs n >= 0")
    if n == 0:
        return np.eye(c.dim)
    if isinstance(q, ShiftPoint):
        block = getattr(c.generator, "block", 1)
        q.require(0, n + block - 1)
    raw = c._raw_product(q, n)
    if c.shift == 0.0:
        return raw.copy()
    return math.exp(-c.shift * n) * raw


def shifted(c: Cocycle, a: float) -> Cocycle:
    """The same cocycle with shift parameter ``a`` (shares the product cache)."""
    return Cocycle(c.system, c.generator, float(a), c.model, _cache=c._cache)


def log_norm(c: Cocycle, q, n: int) -> float:
    """``log ||A_a(q, n)||`` computed without forming the raw product."""
    return float(log_norm_series(c, [q], n)[0, n])


def log_norm_series(c: Cocycle, points, n_max: int) -> np.ndarray:
    """``log ||A_a(q, n)||`` for every point and ``n = 0..n_max``.

    For a block-diagonal operator model (diagonal tail) the norm is the
    larger of the head norm and the tail bound.
    """
    bundle = c.bundle(points, 0, n_max)
    m0 = np.broadcast_to(np.eye(c.dim), (len(points), c.dim, c.dim)).copy()
    out = nm.accumulate_log_norms(m0, lambda k, m: bundle[k] @ m, n_max)
    if c.model is not None and getattr(c.model, "block_diagonal", False):
        tail = np.arange(n_max + 1) * c.model.log_tail_step
        out = np.maximum(out, tail[None, :])
    return out - c.shift * np.arange(n_max + 1)[None, :]


def uniform_norm_bound(c: Cocycle, sample_budget: int = 256) -> float:
    """``C = max_q ||A(q)||`` for the unshifted generator.

    Exact for constant and symbol generators; a grid maximum over
    ``sample_budget`` angles for angle generators.  An attached operator
    model contributes its per-step tail bound.
    """
    if sample_budget < 1:
        raise CocycleError("sample_budget must be >= 1")
    bound = c.generator.norm_bound(c.system, sample_budget)
    if c.model is not None and math.isfinite(c.model.log_tail_step):
        bound = max(bound, math.exp(c.model.log_tail_step))
    return bound


def inverse_norm_bound(c: Cocycle, sample_budget: int = 256) -> float:
    """``max_q ||A(q)^{-1}||`` (``inf`` if some ``A(q)`` is singular)."""
    return c.generator.inverse_norm_bound(c.system, sample_budget)
