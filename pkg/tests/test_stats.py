import itertools
import math

import mpmath
import numpy as np
import pytest
from scipy.stats import rankdata

from swarmloc.errors import DegenerateTestError, InputError
from swarmloc.stats import (
    ErrorStats,
    TestReport,
    choose_paired_test,
    normality_assessment,
    paired_t_test,
    position_error,
    position_errors,
    summarize_errors,
    wilcoxon_signed_rank,
)

mpmath.mp.dps = 40


def mp_sd(values):
    x = [mpmath.mpf(float(v)) for v in values]
    m = mpmath.fsum(x) / len(x)
    return mpmath.sqrt(mpmath.fsum((v - m) ** 2 for v in x) / (len(x) - 1))


def test_position_error_reference():
    e, ax = position_error([1, 2, 2], [0, 0, 0])
    assert e == 3.0 and ax.tolist() == [1, 2, 2]
    e, ax = position_error([0, 0, 0], [1, 2, 2])
    assert e == 3.0 and ax.tolist() == [-1, -2, -2]
    with pytest.raises(InputError):
        position_error([np.nan, 0, 0], [0, 0, 0])


def test_vectorized_errors_match_scalar():
    rng = np.random.default_rng(0)
    est, tru = rng.normal(size=(2, 50, 3))
    e, ax = position_errors(est, tru)
    for k in range(50):
        e1, ax1 = position_error(est[k], tru[k])
        assert e[k] == pytest.approx(e1, rel=1e-15)
        assert np.array_equal(ax[k], ax1)


def test_summary_matches_extended_precision():
    rng = np.random.default_rng(1)
    est, tru = rng.normal(0, 0.05, (2, 500, 3))
    errs = [position_error(a, b) for a, b in zip(est, tru)]
    s = summarize_errors(errs)
    e3d = [e for e, _ in errs]
    ax = np.array([a for _, a in errs])
    assert s.n == 500
    assert s.mean_3d == pytest.approx(float(mpmath.fsum(e3d) / 500), abs=1e-12)
    assert s.sd_3d == pytest.approx(float(mp_sd(e3d)), abs=1e-12)
    for k in range(3):
        col = ax[:, k]
        assert s.per_axis_abs_mean[k] == pytest.approx(float(mpmath.fsum(abs(mpmath.mpf(v)) for v in col) / 500), abs=1e-12)
        assert s.per_axis_sd[k] == pytest.approx(float(mp_sd(col)), abs=1e-12)
    srt = np.sort(e3d)
    # linear interpolation: rank (n - 1) q
    for q, got in ((0.5, s.p50), (0.95, s.p95)):
        h = (len(srt) - 1) * q
        lo = math.floor(h)
        want = srt[lo] + (h - lo) * (srt[min(lo + 1, len(srt) - 1)] - srt[lo])
        assert got == pytest.approx(want, abs=1e-12)


def test_summary_ten_element_fixture():
    est = np.array([[0.01 * k, -0.02 * k, 0.005 * k * k] for k in range(10)])
    tru = np.zeros((10, 3))
    s = summarize_errors([position_error(a, b) for a, b in zip(est, tru)])
    e3d = [mpmath.sqrt(sum(mpmath.mpf(float(v)) ** 2 for v in row)) for row in est]
    assert s.mean_3d == pytest.approx(float(mpmath.fsum(e3d) / 10), rel=1e-12)
    assert s.sd_3d == pytest.approx(float(mp_sd([float(v) for v in e3d])), rel=1e-12)
    assert s.per_axis_abs_mean[2] == pytest.approx(0.005 * 285 / 10, rel=1e-12)


def test_summary_edge_cases():
    s = summarize_errors([position_error([1, 0, 0], [0, 0, 0])])
    assert s.n == 1 and s.sd_3d == 0.0 and s.per_axis_sd == (0.0, 0.0, 0.0)
    with pytest.raises(InputError):
        summarize_errors([])
    assert ErrorStats.from_dict(s.to_dict()) == s


def test_normality_verdicts():
    rng = np.random.default_rng(2)
    assert normality_assessment(np.full(20, 3.0)).verdict == "degenerate"
    assert normality_assessment(rng.normal(size=5000)).verdict == "approximately normal"
    assert normality_assessment(rng.exponential(size=5000)).verdict == "non-normal"
    with pytest.raises(InputError):
        normality_assessment(np.arange(5.0))


def enumerated_p(diff):
    """Oracle: two-sided p from all 2^n sign flips of the ranked magnitudes."""
    nz = diff[diff != 0]
    ranks = rankdata(np.abs(nz))
    obs = abs(np.sum(np.sign(nz) * ranks))
    hits = 0
    for signs in itertools.product((-1, 1), repeat=nz.size):
        if abs(np.dot(signs, ranks)) >= obs - 1e-9:
            hits += 1
    return hits / 2**nz.size


@pytest.mark.parametrize("seed", range(5))
def test_wilcoxon_exact_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(1.0, 1.0, 8)
    b = rng.normal(0.5, 1.0, 8)
    if seed == 4:
        a = np.round(a, 0)  # ties and zeros
        b = np.round(b, 0)
    rep = wilcoxon_signed_rank(a, b)
    assert rep.method == "exact"
    assert rep.p_value == pytest.approx(enumerated_p(a - b), abs=1e-12)


def test_wilcoxon_normal_close_to_exact():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        a, b = rng.normal(size=(2, 12)) + [[0.4], [0.0]]
        exact = wilcoxon_signed_rank(a, b).p_value
        approx = wilcoxon_signed_rank(a, b, exact_max_n=0).p_value
        worst = max(worst, abs(exact - approx))
    assert worst < 0.02


def test_wilcoxon_large_sample_uses_normal():
    rng = np.random.default_rng(6)
    a = rng.normal(0.07, 0.02, 300)
    b = rng.normal(0.05, 0.02, 300)
    rep = wilcoxon_signed_rank(a, b)
    assert rep.method.startswith("normal") and rep.p_value < 1e-6 and rep.n == 300
    lo, hi = rep.ci95
    assert lo < rep.mean_difference < hi and lo > 0
    assert set(rep.normality) == {"a", "b"}


def mp_t_p(t, dof):
    """Two-sided t p-value from the regularized incomplete beta."""
    x = mpmath.mpf(dof) / (dof + mpmath.mpf(t) ** 2)
    return float(mpmath.betainc(dof / 2, 0.5, 0, x, regularized=True))


@pytest.mark.parametrize("n", [5, 12, 30, 400])
def test_paired_t_against_incomplete_beta(n):
    rng = np.random.default_rng(n)
    a = rng.normal(0.2, 1.0, n)
    b = rng.normal(0.0, 1.0, n)
    rep = paired_t_test(a, b)
    d = [mpmath.mpf(float(v)) for v in a - b]
    mean = mpmath.fsum(d) / n
    t = mean / (mp_sd(a - b) / mpmath.sqrt(n))
    assert rep.statistic == pytest.approx(float(t), rel=1e-12)
    assert rep.p_value == pytest.approx(mp_t_p(t, n - 1), abs=1e-9)
    assert rep.method == f"t distribution, {n - 1} dof"


@pytest.mark.parametrize("test", [wilcoxon_signed_rank, paired_t_test])
def test_swap_antisymmetry(test):
    rng = np.random.default_rng(9)
    a, b = rng.normal(size=(2, 40))
    ab, ba = test(a, b), test(b, a)
    assert ab.statistic == -ba.statistic
    assert ab.p_value == pytest.approx(ba.p_value, rel=1e-12)
    assert ab.mean_difference == -ba.mean_difference
    assert ab.ci95[0] == pytest.approx(-ba.ci95[1], rel=1e-12)


def test_degenerate_and_invalid_inputs():
    x = np.arange(10.0)
    with pytest.raises(DegenerateTestError):
        wilcoxon_signed_rank(x, x)
    with pytest.raises(DegenerateTestError):
        paired_t_test(x + 1, x)
    with pytest.raises(InputError):
        wilcoxon_signed_rank(x, x[:-1])
    with pytest.raises(InputError):
        wilcoxon_signed_rank(x[:3], x[:3] + 1)
    with pytest.raises(InputError):
        paired_t_test([np.nan, 1], [0, 0])


def test_choose_paired_test_and_round_trip():
    rng = np.random.default_rng(10)
    a, b = rng.normal(size=(2, 2000))
    assert choose_paired_test(a, b).test_name == "paired_t"
    c = rng.exponential(size=2000)
    rep = choose_paired_test(c, b)
    assert rep.test_name == "wilcoxon_signed_rank"
    back = TestReport.from_dict(rep.to_dict())
    assert back.statistic == rep.statistic and back.ci95 == rep.ci95
