"""Named analytic fixtures with closed-form answers.

Each fixture bundles a cocycle with a default measure family and, when
known, its exponents and spectrum, so tests, the CLI self-test and the
examples in the README share one definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .base_dynamics import (
    CircleRotation,
    FinitePeriodic,
    FullShift,
    MeasureFamily,
    fixed_point_orbit,
    periodic_measures,
)
from .cocycle import AngleGenerator, Cocycle, ConstantGenerator, block_generator, scalar_symbol_generator
from .quasicompactness import DiagonalOperator, half_plus_inv_k

LN2 = math.log(2.0)


@dataclass
class Fixture:
    name: str
    cocycle: Cocycle
    family: MeasureFamily
    description: str
    exponents: list | None = None
    spectrum: list | None = None
    extras: dict = field(default_factory=dict)


def constant(matrix, name: str = "constant") -> Fixture:
    """Constant generator over a fixed point; oracle = log-moduli of eigenvalues."""
    m = np.asarray(matrix, dtype=float)
    system = FinitePeriodic(1)
    c = Cocycle(system, ConstantGenerator(m))
    mods = np.sort(np.log(np.abs(np.linalg.eigvals(m))))[::-1]
    spec = sorted({round(float(x), 12) for x in mods}, reverse=True)
    return Fixture(
        name,
        c,
        MeasureFamily((fixed_point_orbit(system),)),
        f"constant {m.shape[0]}x{m.shape[0]} generator over a fixed point",
        [float(x) for x in mods],
        [(x, x) for x in spec],
    )


def diag2() -> Fixture:
    return constant(np.diag([2.0, 0.5]), "diag2")


def diag4() -> Fixture:
    return constant(np.diag([4.0, 2.0, 0.5, 0.25]), "diag4")


def jordan() -> Fixture:
    return constant([[2.0, 1.0], [0.0, 0.5]], "jordan")


def scalar_shift(c0: float = 0.0, c1: float = 1.0) -> Fixture:
    """``A(q) = exp(c_{q_0})`` on the 2-shift; spectrum ``[min c, max c]``."""
    system = FullShift(2)
    c = Cocycle(system, scalar_symbol_generator([c0, c1]))
    return Fixture(
        "scalar_shift",
        c,
        periodic_measures(system, 8),
        "scalar cocycle exp(c[q0]) on the full 2-shift",
        None,
        [(min(c0, c1), max(c0, c1))],
    )


def corrupted_shift(bump: float = 2.5, word=(1, 1, 1, 0), p_max: int = 3) -> Fixture:
    """Scalar shift fixture with ``bump`` added on one symbol of ``word^inf``.

    The extra growth appears once per period of the periodic orbit of
    ``word`` (at the position where the next four symbols spell ``word``).
    With the default family (period ``<= 3``) that orbit is not searched,
    so the top endpoint cannot be realised inside the family.
    """
    word = tuple(int(s) for s in word)
    system = FullShift(2)

    def logval(w):
        return float(w[0]) + (bump if tuple(w) == word else 0.0)

    gen = block_generator(2, len(word), lambda w: np.array([[math.exp(logval(w))]]))
    c = Cocycle(system, gen)
    top = (sum(word) + bump) / len(word)
    return Fixture(
        "corrupted_shift",
        c,
        periodic_measures(system, p_max),
        f"scalar shift with +{bump} on one symbol of the orbit of {''.join(map(str, word))}",
        None,
        [(0.0, max(1.0, top))],
        {"word": "".join(map(str, word)), "top": max(1.0, top)},
    )


def rotation_jordan(rho: float | None = None) -> Fixture:
    """``[[2, 1], [0, 1/2]]`` over an irrational rotation (uniquely ergodic)."""
    system = CircleRotation() if rho is None else CircleRotation(rho)
    c = Cocycle(system, ConstantGenerator([[2.0, 1.0], [0.0, 0.5]]))
    return Fixture(
        "rotation_jordan",
        c,
        periodic_measures(system, 1),
        "constant upper-triangular generator over the golden rotation",
        [LN2, -LN2],
        [(LN2, LN2), (-LN2, -LN2)],
    )


def rotation_scaled(scale: float = 3.0) -> AngleGenerator:
    """``scale`` times the rotation matrix by angle ``2 pi theta`` (norm = scale)."""

    def func(t):
        ct, st = math.cos(2 * math.pi * t), math.sin(2 * math.pi * t)
        return scale * np.array([[ct, -st], [st, ct]])

    return AngleGenerator(func, 2, f"rotation_x{scale:g}")


def diagonal_operator(size: int = 64) -> Fixture:
    """Diagonal operator ``diag(2, w_2, w_3, ...)``, ``w_k = 1/2 + 1/k``, truncated at ``size``.

    The head carries ``2`` in place of ``w_1 = 3/2`` so that the top
    exponent is ``log 2``; the tail beyond ``size`` is the weight family,
    so ``kappa = log(1/2 + 1/(size + 1))``.
    """
    weights = half_plus_inv_k()
    w = weights.head(size)
    w[0] = 2.0
    system = FinitePeriodic(1)
    c = Cocycle(system, ConstantGenerator(np.diag(w)), model=DiagonalOperator(weights, size))
    return Fixture(
        "diagonal_operator",
        c,
        MeasureFamily((fixed_point_orbit(system),)),
        f"diagonal operator, head diag(2, 1/2 + 1/k) of size {size}, tail 1/2 + 1/k",
        [float(x) for x in np.log(w)],
        None,
        {"kappa": math.log(0.5 + 1.0 / (size + 1))},
    )


FIXTURES = {
    "diag2": diag2,
    "diag4": diag4,
    "jordan": jordan,
    "scalar_shift": scalar_shift,
    "corrupted_shift": corrupted_shift,
    "rotation_jordan": rotation_jordan,
    "diagonal_operator": diagonal_operator,
}


def get(name: str, **params) -> Fixture:
    try:
        return FIXTURES[name](**params)
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}") from None
