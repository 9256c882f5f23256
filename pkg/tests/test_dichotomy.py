import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sackersell import fixtures
from sackersell.base_dynamics import FinitePeriodic, FullShift, OrbitPoint, periodic_word
from sackersell.cocycle import Cocycle, ConstantGenerator, scalar_symbol_generator, shifted, uniform_norm_bound
from sackersell.dichotomy import (
    DichotomyConfig,
    DichotomyError,
    HyperbolicityTester,
    NoUniformSplitting,
    build_projections,
    classify_growth,
    equivariance_defect,
    explicit_projections,
    test_uniform_hyperbolicity as uh_test,
    unstable_dimension,
)

LN2 = math.log(2)
FP = FinitePeriodic(1)
Q0 = OrbitPoint(0)


def _const(m):
    return Cocycle(FP, ConstantGenerator(np.asarray(m, dtype=float)))


DIAG = _const(np.diag([2.0, 0.5]))
JORDAN = _const([[2.0, 1.0], [0.0, 0.5]])
SCALAR = Cocycle(FullShift(2), scalar_symbol_generator([0.0, 1.0]))


def test_classify_growth_examples():
    g = classify_growth(DIAG, 0.0, Q0)
    assert (g.dim_s, g.dim_u) == (1, 1) and not g.resonant
    g = classify_growth(DIAG, 2.0, Q0)
    assert (g.dim_s, g.dim_u) == (2, 0)
    q = periodic_word("01").points[0]
    g = classify_growth(SCALAR, 0.25, q)
    assert g.dim_u == 1 and g.rates[0] == pytest.approx(0.5, abs=1e-12)
    assert g.extendable


def test_classify_growth_resonance_flag():
    g = classify_growth(DIAG, LN2 + 0.01, Q0)
    assert g.resonant


def test_classify_growth_monotone_in_shift():
    q = periodic_word("0111").points[0]
    c = fixtures.corrupted_shift().cocycle
    prev_s, prev_u = -1, 99
    for a in np.linspace(-0.5, 2.0, 26):
        g = classify_growth(c, float(a), q)
        assert g.dim_s >= prev_s and g.dim_u <= prev_u
        prev_s, prev_u = g.dim_s, g.dim_u


def test_non_injective_backward_extendability():
    c = _const(np.diag([2.0, 0.0]))
    g = classify_growth(c, 0.0, Q0)
    assert g.dim_u == 1 and g.extendable


def test_build_projections_examples():
    fam = build_projections(DIAG, 0.0, [Q0])
    np.testing.assert_allclose(fam(Q0), np.diag([0.0, 1.0]), atol=1e-12)
    assert fam.defect <= 1e-12 and fam.rank == 1
    fam = build_projections(JORDAN, 0.0, [Q0])
    # oracle: P = projection onto v_{1/2} along v_2
    w, v = np.linalg.eig(np.array([[2.0, 1.0], [0.0, 0.5]]))
    order = np.argsort(-np.abs(w))
    vmat = v[:, order]
    want = vmat @ np.diag([0.0, 1.0]) @ np.linalg.inv(vmat)
    np.testing.assert_allclose(fam(Q0), want, atol=1e-8)
    assert fam.defect <= 1e-8


def test_build_projections_above_norm_bound_is_identity():
    c = fixtures.rotation_jordan().cocycle
    a = math.log(uniform_norm_bound(c)) + 0.1
    fam = build_projections(c, a, None, 128)
    assert fam.rank == 2
    for m in fam.matrices:
        np.testing.assert_allclose(m, np.eye(2), atol=1e-12)


def test_build_projections_inconsistent_dims():
    with pytest.raises(NoUniformSplitting, match="no uniform splitting"):
        build_projections(SCALAR, 0.5)


@pytest.mark.parametrize("fx,a", [("jordan", 0.0), ("rotation_jordan", 0.0), ("diag4", 0.1)])
def test_projection_invariants(fx, a):
    c = fixtures.get(fx).cocycle
    fam = build_projections(c, a, None, 256)
    assert fam.idempotence <= 1e-8
    assert fam.defect <= 1e-6
    ranks = {int(round(np.trace(m))) for m in fam.matrices}
    assert ranks == {fam.rank}
    assert equivariance_defect(c, fam, fam.points[: len(fam.points) // 2]) <= 1e-6
    if fx == "rotation_jordan":
        assert fam.continuity is not None and np.isfinite(fam.continuity)


def test_explicit_projection_family():
    fam = explicit_projections([Q0], lambda q: np.diag([0.0, 1.0]))
    assert not fam.splitting_backed and fam.rank == 1
    assert equivariance_defect(DIAG, fam) == 0.0


def test_uh_examples():
    cert = uh_test(DIAG, 0.0)
    assert cert.passed and cert.dim_u == 1
    assert cert.lam == pytest.approx(0.9 * LN2, rel=1e-6)
    assert cert.D == pytest.approx(1.0, abs=1e-6)
    cert = uh_test(DIAG, LN2)
    assert not cert.passed
    cert = uh_test(SCALAR, 0.5)
    assert not cert.passed and cert.reasons


def test_certificate_inequalities_hold():
    cert = uh_test(JORDAN, 0.0, n_max=128)
    assert cert.passed
    assert cert.residual_stable <= 1e-12 and cert.residual_unstable <= 1e-12
    d = cert.to_dict()
    assert d["passed"] and d["dim_u"] == 1


def test_unstable_dimension_examples():
    assert unstable_dimension(DIAG, 0.0) == 1
    assert unstable_dimension(DIAG, 2.0) == 0
    assert unstable_dimension(fixtures.diag4().cocycle, 0.1) == 2
    with pytest.raises(DichotomyError):
        unstable_dimension(DIAG, LN2)


@pytest.mark.parametrize("name", ["diag2", "diag4", "jordan", "scalar_shift", "rotation_jordan"])
def test_recheck_doubled_horizon(name):
    c = fixtures.get(name).cocycle
    tester = HyperbolicityTester(c, DichotomyConfig(n_max=128))
    for a in np.arange(-2.0, 2.0, 0.37):
        cert = tester.test(float(a))
        if cert.passed:
            assert tester.recheck(cert)


def test_recheck_rejects_failed_certificate():
    tester = HyperbolicityTester(DIAG)
    with pytest.raises(DichotomyError):
        tester.recheck(tester.test(LN2))


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3))
def test_constant_consistency_with_eigenvalues(a):
    mods = [math.log(4), math.log(2), -math.log(2), -math.log(4)]
    cert = HyperbolicityTester(fixtures.diag4().cocycle).test(a)
    dist = min(abs(a - m) for m in mods)
    if dist >= 2e-3:
        assert cert.passed and cert.dim_u == sum(m > a for m in mods)
    if dist <= 1e-4:
        assert not cert.passed


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-1.5, 1.5))
def test_local_constancy_near_passing_shift(a):
    tester = HyperbolicityTester(JORDAN)
    cert = tester.test(a)
    if not cert.passed:
        return
    eps = min(0.01, cert.lam / 4)
    for b in (a - eps, a + eps):
        other = tester.test(b)
        assert other.passed and other.dim_u == cert.dim_u


def test_dimension_monotone_on_grid():
    tester = HyperbolicityTester(fixtures.scalar_shift().cocycle)
    dims = [tester.test(float(a)).dim_u for a in np.arange(-1, 2, 0.05) if tester.test(float(a)).passed]
    assert all(x >= y for x, y in zip(dims, dims[1:]))


def test_shifted_cocycle_moves_threshold():
    c = shifted(DIAG, 0.3)
    assert uh_test(c, LN2 - 0.3).passed is False
    assert uh_test(c, 0.0).dim_u == 1


def test_ill_conditioned_inverse_fails():
    c = _const(np.diag([2.0, 1e-12]))
    assert uh_test(c, -5.0).passed  # tiny direction is stable here
    cert = uh_test(c, -30.0)  # both unstable: A|U has condition number 2e12
    assert not cert.passed and "ill_conditioned" in cert.reasons
