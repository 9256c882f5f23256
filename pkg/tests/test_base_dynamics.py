import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sackersell.base_dynamics import (
    GOLDEN_ROTATION,
    BaseDynamicsError,
    Bernoulli,
    CirclePoint,
    CircleRotation,
    FinitePeriodic,
    FullShift,
    LebesgueCircle,
    MeasureFamily,
    OrbitPoint,
    PeriodicOrbit,
    ShiftPoint,
    VariantMismatch,
    WindowError,
    default_samples,
    iterate,
    periodic_measures,
    periodic_word,
    sample_orbit,
    typical_points,
)


def test_circle_iterate_wraps():
    q = iterate(CircleRotation(0.25), CirclePoint(0.5), 2)
    assert q.angle == 0.0


def test_finite_periodic_wraps():
    assert iterate(FinitePeriodic(3), OrbitPoint(2), 1) == OrbitPoint(0)


def test_shift_iterate_matches_index_arithmetic():
    buf = bytes([1, 0, 1, 1, 0, 0, 1, 0])
    q = ShiftPoint(buf, 3)
    p = iterate(FullShift(2), q, 1)
    # oracle: coordinate j of f(q) is coordinate j+1 of q, read straight off the buffer
    for j in range(-4, 4):
        assert p.symbol(j) == buf[3 + 1 + j]


def test_variant_mismatch_is_typed():
    with pytest.raises(VariantMismatch):
        iterate(FullShift(2), CirclePoint(0.1), 1)
    with pytest.raises(BaseDynamicsError):
        iterate(FinitePeriodic(3), OrbitPoint(5), 1)


def test_window_error_names_window():
    q = ShiftPoint(bytes([0, 1, 0]), 1)
    with pytest.raises(WindowError, match="window"):
        q.codes(0, 5)


def test_invalid_points_and_systems():
    with pytest.raises(BaseDynamicsError):
        ShiftPoint(b"")
    with pytest.raises(BaseDynamicsError):
        CircleRotation(1.0)
    with pytest.raises(BaseDynamicsError):
        FinitePeriodic(0)
    assert 0.0 <= CirclePoint(-1e-18).angle < 1.0


@settings(max_examples=60, deadline=None)
@given(a=st.integers(-20, 20), b=st.integers(-20, 20), word=st.lists(st.integers(0, 2), min_size=1, max_size=7))
def test_group_law_shift_and_periodic(a, b, word):
    sh = FullShift(3)
    q = ShiftPoint(bytes(word), 0, periodic=True)
    assert iterate(sh, q, a + b) == iterate(sh, iterate(sh, q, a), b)
    fp = FinitePeriodic(len(word))
    p = OrbitPoint(0)
    assert iterate(fp, p, a + b) == iterate(fp, iterate(fp, p, a), b)


@settings(max_examples=60, deadline=None)
@given(a=st.integers(-20, 20), b=st.integers(-20, 20), x=st.floats(0, 1, exclude_max=True))
def test_group_law_circle(a, b, x):
    c = CircleRotation()
    lhs = iterate(c, CirclePoint(x), a + b).angle
    rhs = iterate(c, iterate(c, CirclePoint(x), a), b).angle
    d = abs(lhs - rhs)
    assert min(d, 1 - d) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(x=st.floats(0, 1, exclude_max=True), n=st.integers(1, 50))
def test_inverse_returns_point(x, n):
    c = CircleRotation()
    q = CirclePoint(x)
    assert c.close(iterate(c, iterate(c, q, n), -n), q)


def test_sample_orbit_periodic():
    fam = periodic_measures(FinitePeriodic(2), 2)
    orbit = sample_orbit(fam.measures[0], FinitePeriodic(2), 5)
    assert [p.index for p in orbit] == [0, 1, 0, 1, 0]


def test_sample_orbit_degenerate_bernoulli():
    orbit = sample_orbit(Bernoulli((1.0, 0.0)), FullShift(2), 4, seed=3)
    assert [q.symbol(0) for q in orbit] == [0, 0, 0, 0]
    assert orbit[0].word(0, 4) == "0000"


def test_lebesgue_birkhoff_average():
    orbit = sample_orbit(LebesgueCircle(), CircleRotation(GOLDEN_ROTATION), 10_000, seed=0)
    assert abs(np.mean([q.angle for q in orbit]) - 0.5) <= 1e-2


@pytest.mark.parametrize("measure,system", [
    (Bernoulli((0.3, 0.7)), FullShift(2)),
    (LebesgueCircle(), CircleRotation()),
    (periodic_word("0110"), FullShift(2)),
])
def test_sample_orbit_consistency(measure, system):
    orbit = sample_orbit(measure, system, 30, seed=1, lookahead=1)
    for p, q in zip(orbit, orbit[1:]):
        assert system.close(system.iterate(p, 1), q)


def test_sampling_is_deterministic():
    a = sample_orbit(Bernoulli((0.5, 0.5)), FullShift(2), 50, seed=7)
    b = sample_orbit(Bernoulli((0.5, 0.5)), FullShift(2), 50, seed=7)
    assert a == b
    t1 = typical_points(Bernoulli((0.5, 0.5)), FullShift(2), 4, seed=2, lookahead=10)
    t2 = typical_points(Bernoulli((0.5, 0.5)), FullShift(2), 4, seed=2, lookahead=10)
    assert t1 == t2


def test_bernoulli_invariants():
    with pytest.raises(BaseDynamicsError):
        Bernoulli((0.5, 0.6))
    with pytest.raises(BaseDynamicsError):
        Bernoulli((1.2, -0.2))
    with pytest.raises(BaseDynamicsError):
        Bernoulli((0.5, 0.5)).validate(FullShift(3))


def test_periodic_orbit_must_be_a_cycle():
    bad = PeriodicOrbit((OrbitPoint(0), OrbitPoint(2)), "bad")
    with pytest.raises(BaseDynamicsError):
        bad.validate(FinitePeriodic(3))


def test_periodic_measures_examples():
    assert periodic_measures(FullShift(2), 1).labels == ["per:0", "per:1"]
    assert periodic_measures(FullShift(2), 2).labels == ["per:0", "per:1", "per:01"]
    fam = periodic_measures(CircleRotation(), 8)
    assert len(fam) == 1 and isinstance(fam.measures[0], LebesgueCircle)


def _brute_cycles(k, p_max):
    # oracle: orbits of f on periodic words, collected as sets of rotations
    cycles = set()
    for p in range(1, p_max + 1):
        for w in itertools.product(range(k), repeat=p):
            if any(w == w[d:] + w[:d] for d in range(1, p)):
                continue  # not of least period p
            cycles.add(frozenset(w[i:] + w[:i] for i in range(p)))
    return len(cycles)


@pytest.mark.parametrize("k,p_max", [(2, 1), (2, 3), (2, 6), (3, 4)])
def test_periodic_measure_count(k, p_max):
    fam = periodic_measures(FullShift(k), p_max)
    assert len(fam) == _brute_cycles(k, p_max)
    if (k, p_max) == (2, 3):
        assert len(fam) == 5


def test_necklace_formula():
    # number of primitive binary necklaces of length p (Moebius formula)
    def mobius(n):
        out, m, p = 1, n, 2
        while p * p <= m:
            if m % p == 0:
                m //= p
                if m % p == 0:
                    return 0
                out = -out
            p += 1
        return -out if m > 1 else out

    fam = periodic_measures(FullShift(2), 8)
    for p in range(1, 9):
        count = sum(mobius(d) * 2 ** (p // d) for d in range(1, p + 1) if p % d == 0) // p
        assert sum(1 for m in fam if m.period == p) == count


def test_measure_family_labels_unique():
    with pytest.raises(BaseDynamicsError):
        MeasureFamily((periodic_word("01"), periodic_word("01")))
    fam = periodic_measures(FullShift(2), 2).without(["per:01"])
    assert fam.labels == ["per:0", "per:1"]


def test_default_samples_cover_periodic_points():
    pts = default_samples(FullShift(2), 8)
    assert len(pts) == sum(m.period for m in periodic_measures(FullShift(2), 8))
    circ = default_samples(CircleRotation(), grid=16, random=4)
    assert len(circ) == 20 and all(0 <= q.angle < 1 for q in circ)
    assert math.isclose(circ[1].angle, 1 / 16)
