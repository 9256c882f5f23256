import csv
import math

import numpy as np
import pytest

from sackersell import fixtures
from sackersell.base_dynamics import FinitePeriodic
from sackersell.cocycle import Cocycle, ConstantGenerator, shifted, uniform_norm_bound
from sackersell.dichotomy import HyperbolicityTester
from sackersell.spectrum import (
    ScanConfig,
    SpectrumError,
    SpectrumResult,
    classify_structure,
    resolvent_dimension_profile,
    scan_spectrum,
    spectrum_trace_rows,
)

LN2 = math.log(2)


@pytest.fixture(scope="module")
def scans():
    out = {}
    for name in ("diag2", "diag4", "jordan", "scalar_shift", "rotation_jordan"):
        fx = fixtures.get(name)
        out[name] = (fx, scan_spectrum(fx.cocycle, ScanConfig()))
    return out


def _eig_points(m):
    return sorted({round(float(x), 12) for x in np.log(np.abs(np.linalg.eigvals(m)))}, reverse=True)


def test_config_validation():
    with pytest.raises(ValueError, match="grid step must be > 0"):
        ScanConfig(step=0)
    with pytest.raises(ValueError):
        ScanConfig(tol=-1)
    with pytest.raises(ValueError):
        ScanConfig(budget=0)


def test_diag2_points(scans):
    _, r = scans["diag2"]
    assert len(r.intervals) == 2
    for (lo, hi), want in zip(r.intervals, [LN2, -LN2]):
        assert hi - lo <= 2e-3 and abs(lo - want) <= 1e-3
    assert r.gap_dims == [2, 1, 0]


def test_diag2_explicit_grid():
    c = fixtures.diag2().cocycle
    r = scan_spectrum(c, ScanConfig(lower=-2.0, upper=1.5))
    assert [round(a, 2) for a, _ in r.intervals] == [0.69, -0.69]


@pytest.mark.parametrize("name", ["diag2", "diag4", "jordan", "rotation_jordan"])
def test_constant_ground_truth(scans, name):
    fx, r = scans[name]
    want = sorted({x for iv in fx.spectrum for x in iv}, reverse=True)
    got = [lo for lo, _ in r.intervals]
    assert len(got) == len(want)
    assert max(abs(a - b) for a, b in zip(got, want)) <= 1e-3
    assert all(hi - lo <= 2e-3 for lo, hi in r.intervals)
    assert len(r.intervals) <= fx.cocycle.dim


def test_scalar_shift_interval(scans):
    _, r = scans["scalar_shift"]
    assert len(r.intervals) == 1
    lo, hi = r.intervals[0]
    # oracle: extreme Birkhoff averages over periodic orbits are 0 and 1
    assert abs(lo) <= 1e-2 and abs(hi - 1.0) <= 1e-2
    assert r.gap_dims == [1, 0]


def test_scalar_constant_point():
    c = Cocycle(FinitePeriodic(1), ConstantGenerator([[math.exp(0.3)]]))
    r = scan_spectrum(c)
    assert len(r.intervals) == 1
    assert abs(r.intervals[0][0] - 0.3) <= 1e-3 and r.intervals[0][0] == r.intervals[0][1]


def test_ordering_and_upper_bound(scans):
    for _, r in scans.values():
        ivs = r.intervals
        assert all(lo <= hi for lo, hi in ivs)
        assert all(a1 > b2 for (a1, _), (_, b2) in zip(ivs, ivs[1:]))
        assert ivs[0][1] <= r.log_c + r.tol
        assert all(lo > r.kappa for lo, _ in ivs)


def test_closedness_retest(scans):
    for name, (fx, r) in scans.items():
        tester = HyperbolicityTester(fx.cocycle)
        for lo, hi in r.intervals:
            assert tester.test(hi + r.tol).passed, (name, hi)
            assert tester.test(lo - r.tol).passed, (name, lo)
            assert not tester.test(0.5 * (lo + hi)).passed, (name, lo, hi)


def test_dimension_monotone_on_trace(scans):
    for _, r in scans.values():
        dims = [u for a, ok, u in sorted(r.trace) if ok]
        assert all(x >= y for x, y in zip(dims, dims[1:]))


@pytest.mark.parametrize("s", [-0.7, 0.3])
def test_spectral_mapping_under_shift(scans, s):
    for name in ("diag2", "scalar_shift"):
        fx, r = scans[name]
        rs = scan_spectrum(shifted(fx.cocycle, s))
        assert len(rs.intervals) == len(r.intervals)
        for (a, b), (a2, b2) in zip(r.intervals, rs.intervals):
            assert abs((a - s) - a2) <= 2 * r.tol and abs((b - s) - b2) <= 2 * r.tol


def test_classify_examples(scans):
    empty = SpectrumResult([], -math.inf)
    assert classify_structure(empty).alternative == 1
    alt = classify_structure(scans["diag2"][1])
    assert (alt.alternative, alt.k) == (2, 2)
    alt = classify_structure(scans["scalar_shift"][1])
    assert (alt.alternative, alt.k) == (2, 1)


def test_classify_tail_and_budget():
    r = SpectrumResult([(1.0, 1.0), (-0.5, 0.0)], kappa=-0.5, tail=True)
    assert classify_structure(r).alternative == 3
    ivs = [(1.0 / k, 1.0 / k) for k in range(1, 40)]
    gaps_shrink = [(x, x) for x in sorted({1.0 / k for k in range(1, 40)}, reverse=True)]
    r = SpectrumResult(gaps_shrink, kappa=0.0, flags=["accumulation_suspected", "truncated"], tol=1e-3)
    alt = classify_structure(r)
    assert alt.alternative == 2 and alt.accumulation_suspected and alt.suspected == 4
    assert len(ivs) == len(gaps_shrink)


def test_budget_truncation_flags():
    c = fixtures.diag4().cocycle
    r = scan_spectrum(c, ScanConfig(budget=2))
    assert len(r.intervals) == 2 and r.accumulation and "truncated" in r.flags
    assert [round(lo, 2) for lo, _ in r.intervals] == [1.39, 0.69]


def test_diagonal_operator_accumulates_towards_kappa():
    fx = fixtures.diagonal_operator(64)
    r = scan_spectrum(fx.cocycle)
    alt = classify_structure(r)
    assert alt.alternative == 2 and alt.accumulation_suspected
    assert alt.b_inf == pytest.approx(fx.extras["kappa"], abs=1e-12)
    assert all(lo > r.kappa for lo, _ in r.intervals)
    # oracle: every resolved point sits at log w_k for some k
    logs = [math.log(w) for w in [2.0] + [0.5 + 1.0 / k for k in range(2, 65)]]
    for lo, hi in r.intervals:
        if hi - lo <= 2 * r.tol:
            assert min(abs(lo - x) for x in logs) <= r.tol
    assert r.intervals[0][0] == pytest.approx(LN2, abs=1e-3)


def test_profile_examples(scans):
    fx, r = scans["diag2"]
    prof = resolvent_dimension_profile(fx.cocycle, r)
    assert [u for _, u in prof] == [2, 1, 0]
    assert prof[1][0] == pytest.approx((-LN2, LN2), abs=1e-3)
    fx, r = scans["scalar_shift"]
    assert [u for _, u in resolvent_dimension_profile(fx.cocycle, r)] == [1, 0]
    fx, r = scans["diag4"]
    assert [u for _, u in resolvent_dimension_profile(fx.cocycle, r)] == [4, 3, 2, 1, 0]


def test_profile_rejects_bad_result():
    fx = fixtures.diag2()
    fake = SpectrumResult([(1.5, 1.5)], -math.inf, log_c=LN2)
    with pytest.raises(SpectrumError):
        resolvent_dimension_profile(fx.cocycle, fake)


def test_trace_rows_and_csv(scans, tmp_path):
    _, r = scans["diag2"]
    rows = spectrum_trace_rows(r)
    assert len(rows) == len(r.trace)
    path = tmp_path / "trace.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shift", "pass", "dim_u"])
        w.writerows(rows)
    back = list(csv.DictReader(open(path)))
    assert {row["pass"] for row in back} == {"0", "1"}


def test_threads_give_same_result(scans):
    fx, r = scans["jordan"]
    r2 = scan_spectrum(fx.cocycle, ScanConfig(threads=4))
    assert r2.intervals == r.intervals and r2.gap_dims == r.gap_dims


def test_to_dict_document(scans):
    d = scans["diag2"][1].to_dict()
    assert d["kappa"] == "-inf" and d["alternative"] == 2
    assert set(d) >= {"kappa", "intervals", "tail", "alternative", "gap_dims", "flags"}


def test_empty_range_raises():
    c = fixtures.diag2().cocycle
    with pytest.raises(SpectrumError):
        scan_spectrum(c, ScanConfig(lower=5.0, upper=1.0))
