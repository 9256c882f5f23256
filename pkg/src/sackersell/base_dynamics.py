"""Base systems ``(M, f)``, their points, and ergodic invariant measures.

Three base systems are supported: the full shift on ``k`` symbols, an
(irrational) circle rotation, and a single finite periodic orbit.  Points
are immutable values; shift points carry a finite window of coordinates
(or a ring buffer for periodic words) so that only finitely many
coordinates are ever evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

GOLDEN_ROTATION = (math.sqrt(5.0) - 1.0) / 2.0
CIRCLE_TOL = 1e-9
RNG_NAME = "pcg64"


class BaseDynamicsError(ValueError):
    """Base class for errors raised by this module."""

    code = "base.error"


class VariantMismatch(BaseDynamicsError, TypeError):
    code = "base.variant_mismatch"


class WindowError(BaseDynamicsError):
    """A shift point does not carry enough coordinates for a computation."""

    code = "base.window_too_short"

    def __init__(self, needed: tuple[int, int], available: tuple[int, int]):
        self.needed = needed
        self.available = available
        super().__init__(
            f"shift window too short: need coordinates {needed[0]}..{needed[1]} "
            f"relative to the point, window covers {available[0]}..{available[1]} "
            f"(needed window length {needed[1] - needed[0] + 1})"
        )


def rng(seed: int) -> np.random.Generator:
    """The seeded generator used everywhere for sampling (PCG64)."""
    return np.random.Generator(np.random.PCG64(seed))


# ---------------------------------------------------------------------------
# points


@dataclass(frozen=True)
class ShiftPoint:
    """A point of the full shift.

    ``symbols`` is a finite window of coordinates and ``index`` the position
    of coordinate 0.  With ``periodic=True`` the window is a ring buffer and
    represents the bi-infinite periodic word; the index is then kept
    reduced modulo the period.
    """

    symbols: bytes
    index: int = 0
    periodic: bool = False

    def __post_init__(self):
        if not isinstance(self.symbols, bytes):
            object.__setattr__(self, "symbols", bytes(self.symbols))
        if len(self.symbols) == 0:
            raise BaseDynamicsError("shift point needs a non-empty symbol buffer")
        if self.periodic:
            object.__setattr__(self, "index", self.index % len(self.symbols))
        elif not 0 <= self.index < len(self.symbols):
            raise BaseDynamicsError(
                f"index {self.index} outside window of length {len(self.symbols)}"
            )

    @property
    def window(self) -> tuple[int, int]:
        """Available coordinates relative to the point (inclusive)."""
        if self.periodic:
            return (-math.inf, math.inf)  # type: ignore[return-value]
        return (-self.index, len(self.symbols) - 1 - self.index)

    def require(self, start: int, stop: int) -> None:
        """Raise WindowError unless coordinates ``start..stop-1`` exist."""
        if self.periodic or stop <= start:
            return
        lo, hi = self.window
        if start < lo or stop - 1 > hi:
            raise WindowError((start, stop - 1), (lo, hi))

    def codes(self, start: int, stop: int) -> np.ndarray:
        """Symbols at coordinates ``start..stop-1`` as a uint8 array."""
        buf = np.frombuffer(self.symbols, dtype=np.uint8)
        if self.periodic:
            idx = (self.index + np.arange(start, stop)) % len(buf)
            return buf[idx]
        self.require(start, stop)
        return buf[self.index + start : self.index + stop]

    def symbol(self, j: int = 0) -> int:
        return int(self.codes(j, j + 1)[0])

    def word(self, start: int = 0, stop: int | None = None) -> str:
        if stop is None:
            stop = len(self.symbols) if self.periodic else self.window[1] + 1
        return "".join(str(s) for s in self.codes(start, stop))


@dataclass(frozen=True)
class CirclePoint:
    angle: float

    def __post_init__(self):
        a = float(self.angle) % 1.0
        if a >= 1.0:  # -tiny % 1.0 rounds to 1.0
            a = 0.0
        object.__setattr__(self, "angle", a)


@dataclass(frozen=True)
class OrbitPoint:
    index: int


BasePoint = Union[ShiftPoint, CirclePoint, OrbitPoint]


# ---------------------------------------------------------------------------
# systems


@dataclass(frozen=True)
class FullShift:
    alphabet: int = 2
    tol: float = 0.0

    def __post_init__(self):
        if self.alphabet < 1 or self.alphabet > 256:
            raise BaseDynamicsError("alphabet size must be in 1..256")

    point_type = ShiftPoint

    def iterate(self, q: ShiftPoint, n: int) -> ShiftPoint:
        _check_point(self, q)
        if n == 0:
            return q
        if not q.periodic:
            q.require(n, n + 1)
        return ShiftPoint(q.symbols, q.index + n, q.periodic)

    def close(self, p: ShiftPoint, q: ShiftPoint) -> bool:
        return p == q


@dataclass(frozen=True)
class CircleRotation:
    rho: float = GOLDEN_ROTATION
    tol: float = CIRCLE_TOL

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise BaseDynamicsError("rotation number must lie in (0, 1)")

    point_type = CirclePoint

    def iterate(self, q: CirclePoint, n: int) -> CirclePoint:
        _check_point(self, q)
        return CirclePoint(q.angle + n * self.rho)

    def close(self, p: CirclePoint, q: CirclePoint) -> bool:
        d = abs(p.angle - q.angle)
        return min(d, 1.0 - d) <= self.tol


@dataclass(frozen=True)
class FinitePeriodic:
    period: int = 1
    tol: float = 0.0

    def __post_init__(self):
        if self.period < 1:
            raise BaseDynamicsError("period must be >= 1")

    point_type = OrbitPoint

    def iterate(self, q: OrbitPoint, n: int) -> OrbitPoint:
        _check_point(self, q)
        return OrbitPoint((q.index + n) % self.period)

    def close(self, p: OrbitPoint, q: OrbitPoint) -> bool:
        return p.index % self.period == q.index % self.period


BaseSystem = Union[FullShift, CircleRotation, FinitePeriodic]


def _check_point(system, q) -> None:
    if not isinstance(q, system.point_type):
        raise VariantMismatch(
            f"{type(q).__name__} is not a point of {type(system).__name__}"
        )
    if isinstance(q, OrbitPoint) and not 0 <= q.index < system.period:
        raise BaseDynamicsError(f"orbit index {q.index} outside [0, {system.period})")


def check_point(system: BaseSystem, q: BasePoint) -> None:
    """Full membership check, including the alphabet of shift windows."""
    _check_point(system, q)
    if isinstance(q, ShiftPoint) and max(q.symbols) >= system.alphabet:
        raise BaseDynamicsError("shift point uses symbols outside the alphabet")


def iterate(system: BaseSystem, q: BasePoint, n: int) -> BasePoint:
    """Return ``f^n(q)``; negative ``n`` uses the inverse map."""
    return system.iterate(q, int(n))


# ---------------------------------------------------------------------------
# measures


@dataclass(frozen=True)
class PeriodicOrbit:
    points: tuple
    label: str = ""
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if not self.points:
            raise BaseDynamicsError("periodic orbit needs at least one point")
        if not self.label:
            object.__setattr__(self, "label", _orbit_label(self.points))

    @property
    def period(self) -> int:
        return len(self.points)

    def validate(self, system: BaseSystem) -> None:
        p = len(self.points)
        for i, q in enumerate(self.points):
            if not system.close(system.iterate(q, 1), self.points[(i + 1) % p]):
                raise BaseDynamicsError(f"points of {self.label} do not form an f-cycle")


@dataclass(frozen=True)
class Bernoulli:
    probs: tuple
    label: str = ""
    seed: int = 0

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-12:
            raise BaseDynamicsError("Bernoulli probabilities must be >= 0 and sum to 1")
        if not self.label:
            object.__setattr__(self, "label", "bernoulli(" + ",".join(f"{p:g}" for p in probs) + ")")

    def validate(self, system: BaseSystem) -> None:
        if not isinstance(system, FullShift):
            raise VariantMismatch("Bernoulli measures live on the full shift")
        if len(self.probs) != system.alphabet:
            raise BaseDynamicsError("probability vector length must equal the alphabet size")


@dataclass(frozen=True)
class LebesgueCircle:
    label: str = "lebesgue"
    seed: int = 0

    def validate(self, system: BaseSystem) -> None:
        if not isinstance(system, CircleRotation):
            raise VariantMismatch("Lebesgue measure needs a circle rotation")


ErgodicMeasure = Union[PeriodicOrbit, Bernoulli, LebesgueCircle]


def _orbit_label(points) -> str:
    q = points[0]
    if isinstance(q, ShiftPoint):
        return "per:" + q.word(0, len(points))
    if isinstance(q, OrbitPoint):
        return f"orbit:{len(points)}"
    return "per:" + ",".join(f"{p.angle:.6g}" for p in points)


@dataclass(frozen=True)
class MeasureFamily:
    """Ordered, uniquely-labelled collection of ergodic measures."""

    measures: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "measures", tuple(self.measures))
        labels = [m.label for m in self.measures]
        if len(set(labels)) != len(labels):
            dup = sorted({l for l in labels if labels.count(l) > 1})
            raise BaseDynamicsError(f"duplicate measure labels: {dup}")

    def __iter__(self) -> Iterator:
        return iter(self.measures)

    def __len__(self) -> int:
        return len(self.measures)

    @property
    def labels(self) -> list[str]:
        return [m.label for m in self.measures]

    def by_label(self, label: str):
        for m in self.measures:
            if m.label == label:
                return m
        raise KeyError(label)

    def union(self, other: Iterable) -> "MeasureFamily":
        seen = set(self.labels)
        extra = [m for m in other if m.label not in seen]
        return MeasureFamily(self.measures + tuple(extra))

    def without(self, labels: Iterable[str]) -> "MeasureFamily":
        drop = set(labels)
        return MeasureFamily(tuple(m for m in self.measures if m.label not in drop))


def periodic_word(word: Sequence[int] | str, label: str | None = None) -> PeriodicOrbit:
    """The periodic-orbit measure of the bi-infinite word ``word^∞``."""
    if isinstance(word, str):
        word = [int(ch) for ch in word]
    buf = bytes(word)
    pts = tuple(ShiftPoint(buf, i, periodic=True) for i in range(len(buf)))
    return PeriodicOrbit(pts, label=label or "")


def fixed_point_orbit(system: FinitePeriodic) -> PeriodicOrbit:
    return PeriodicOrbit(tuple(OrbitPoint(i) for i in range(system.period)))


# ---------------------------------------------------------------------------
# sampling


def sample_orbit(
    measure: ErgodicMeasure,
    system: BaseSystem,
    length: int,
    seed: int | None = None,
    lookback: int = 0,
    lookahead: int = 0,
) -> list:
    """Return ``(q, f(q), ..., f^{length-1}(q))`` for a measure-typical ``q``.

    Bernoulli words are drawn from a seeded PCG64 stream; shift windows
    cover ``lookback`` coordinates before ``q`` and ``lookahead`` after the
    last orbit point.
    """
    if length < 1:
        raise BaseDynamicsError("orbit length must be >= 1")
    measure.validate(system)
    seed = measure.seed if seed is None else seed
    if isinstance(measure, PeriodicOrbit):
        q = measure.points[0]
    elif isinstance(measure, Bernoulli):
        total = lookback + length + lookahead
        syms = rng(seed).choice(system.alphabet, size=total, p=measure.probs)
        buf = syms.astype(np.uint8).tobytes()
        return [ShiftPoint(buf, lookback + i) for i in range(length)]
    else:
        q = CirclePoint(rng(seed).random())
    out = [q]
    for _ in range(length - 1):
        out.append(system.iterate(out[-1], 1))
    return out


def typical_points(
    measure: ErgodicMeasure,
    system: BaseSystem,
    count: int = 8,
    seed: int | None = None,
    lookback: int = 0,
    lookahead: int = 0,
) -> list:
    """Independent measure-typical starting points.

    For a periodic orbit all orbit points are returned (averaging over them
    integrates exactly).  Bernoulli points are independent seeded words;
    Lebesgue points follow a golden-mean low-discrepancy sequence.
    """
    measure.validate(system)
    seed = measure.seed if seed is None else seed
    if isinstance(measure, PeriodicOrbit):
        return list(measure.points)
    if isinstance(measure, Bernoulli):
        gen = rng(seed)
        total = lookback + 1 + lookahead
        pts = []
        for _ in range(count):
            syms = gen.choice(system.alphabet, size=total, p=measure.probs)
            pts.append(ShiftPoint(syms.astype(np.uint8).tobytes(), lookback))
        return pts
    offset = rng(seed).random()
    return [CirclePoint(offset + i * GOLDEN_ROTATION) for i in range(count)]


def _primitive_necklaces(k: int, p: int) -> list[tuple[int, ...]]:
    out = []
    for word in product(range(k), repeat=p):
        rots = {word[i:] + word[:i] for i in range(p)}
        if len(rots) == p and word == min(rots):
            out.append(word)
    return out


def periodic_measures(system: BaseSystem, p_max: int) -> MeasureFamily:
    """All periodic-orbit measures of period ``<= p_max``, one per cycle.

    A circle rotation is treated as uniquely ergodic: the family is just
    Lebesgue measure.
    """
    if p_max < 1:
        raise BaseDynamicsError("p_max must be >= 1")
    if isinstance(system, CircleRotation):
        return MeasureFamily((LebesgueCircle(),))
    if isinstance(system, FinitePeriodic):
        if system.period > p_max:
            return MeasureFamily()
        return MeasureFamily((fixed_point_orbit(system),))
    measures = []
    for p in range(1, p_max + 1):
        for word in _primitive_necklaces(system.alphabet, p):
            measures.append(periodic_word(word))
    return MeasureFamily(tuple(measures))


def orbit_points(family: MeasureFamily) -> list:
    """All points of all periodic orbits in ``family``, in order."""
    pts = []
    for m in family:
        if isinstance(m, PeriodicOrbit):
            pts.extend(m.points)
    return pts


def default_samples(
    system: BaseSystem, p_max: int = 8, grid: int = 64, random: int = 16, seed: int = 0
) -> list:
    """Sample set used for uniform (over ``M``) checks.

    Shifts: every point of every periodic orbit of period ``<= p_max``.
    Rotations: a uniform grid plus seeded random angles.  Finite orbits:
    every point.
    """
    if isinstance(system, FullShift):
        return orbit_points(periodic_measures(system, p_max))
    if isinstance(system, FinitePeriodic):
        return [OrbitPoint(i) for i in range(system.period)]
    angles = [i / grid for i in range(grid)] + list(rng(seed).random(random))
    return [CirclePoint(a) for a in angles]

