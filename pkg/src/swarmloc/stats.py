"""Position-error metrics and paired significance tests."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
from scipy import stats as sps
from scipy.stats import rankdata

from .errors import DegenerateTestError, InputError

EXACT_MAX_N = 12


def position_error(estimated, truth):
    """Return ``(e3d, per_axis)``: Euclidean error and signed ``estimated - truth``."""
    est = np.asarray(estimated, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if not (np.all(np.isfinite(est)) and np.all(np.isfinite(tru))):
        raise InputError("position_error needs finite points")
    diff = est - tru
    return float(np.sqrt(diff @ diff)), diff


def position_errors(estimated: np.ndarray, truth: np.ndarray):
    """Vectorized :func:`position_error` over ``(..., 3)`` arrays."""
    diff = np.asarray(estimated, float) - np.asarray(truth, float)
    return np.linalg.norm(diff, axis=-1), diff


@dataclass
class ErrorStats:
    n: int
    mean_3d: float
    sd_3d: float
    per_axis_abs_mean: tuple[float, float, float]
    per_axis_sd: tuple[float, float, float]
    p50: float
    p95: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_axis_abs_mean"] = list(self.per_axis_abs_mean)
        d["per_axis_sd"] = list(self.per_axis_sd)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorStats":
        return cls(
            n=int(d["n"]),
            mean_3d=float(d["mean_3d"]),
            sd_3d=float(d["sd_3d"]),
            per_axis_abs_mean=tuple(float(v) for v in d["per_axis_abs_mean"]),
            per_axis_sd=tuple(float(v) for v in d["per_axis_sd"]),
            p50=float(d["p50"]),
            p95=float(d["p95"]),
        )


def _sd(x: np.ndarray, axis=0):
    if x.shape[axis] < 2:
        return np.zeros(np.delete(x.shape, axis)) if x.ndim > 1 else 0.0
    return np.std(x, axis=axis, ddof=1)


def summarize_arrays(e3d, per_axis) -> ErrorStats:
    e = np.asarray(e3d, dtype=float).reshape(-1)
    ax = np.asarray(per_axis, dtype=float).reshape(-1, 3)
    if e.size == 0:
        raise InputError("cannot summarize an empty error list")
    if ax.shape[0] != e.size:
        raise InputError("e3d and per_axis lengths differ")
    return ErrorStats(
        n=int(e.size),
        mean_3d=float(e.mean()),
        sd_3d=float(_sd(e)),
        per_axis_abs_mean=tuple(float(v) for v in np.abs(ax).mean(axis=0)),
        per_axis_sd=tuple(float(v) for v in _sd(ax)),
        p50=float(np.percentile(e, 50)),
        p95=float(np.percentile(e, 95)),
    )


def summarize_errors(errors) -> ErrorStats:
    """Summary statistics of ``(e3d, per_axis)`` pairs.

    SDs use the ``n - 1`` denominator (zero when ``n == 1``); per-axis
    means are of absolute components, per-axis SDs of signed ones;
    percentiles interpolate linearly.
    """
    errors = list(errors)
    if not errors:
        raise InputError("cannot summarize an empty error list")
    e3d = [e for e, _ in errors]
    axes = [np.asarray(a, float) for _, a in errors]
    return summarize_arrays(e3d, axes)


@dataclass
class NormalityReport:
    n: int
    skewness: float
    excess_kurtosis: float
    verdict: Literal["approximately normal", "non-normal", "degenerate"]

    def to_dict(self) -> dict:
        return asdict(self)


def normality_assessment(values, skew_tol: float = 0.5, kurtosis_tol: float = 1.0) -> NormalityReport:
    """Moment-based normality screen (advisory only)."""
    x = np.asarray(values, dtype=float).reshape(-1)
    if x.size < 8:
        raise InputError(f"normality assessment needs n >= 8, got {x.size}")
    c = x - x.mean()
    m2 = np.mean(c**2)
    if m2 <= np.finfo(float).tiny or np.ptp(x) == 0:
        return NormalityReport(int(x.size), float("nan"), float("nan"), "degenerate")
    skew = float(np.mean(c**3) / m2**1.5)
    kurt = float(np.mean(c**4) / m2**2 - 3.0)
    normal = abs(skew) < skew_tol and abs(kurt) < kurtosis_tol
    return NormalityReport(int(x.size), skew, kurt, "approximately normal" if normal else "non-normal")


@dataclass
class TestReport:
    test_name: Literal["wilcoxon_signed_rank", "paired_t"]
    statistic: float
    p_value: float
    mean_difference: float
    ci95: tuple[float, float]
    n: int
    method: str = ""
    normality: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this as a test class

    def to_dict(self) -> dict:
        return {
            "test_name": self.test_name,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "mean_difference": self.mean_difference,
            "ci95": list(self.ci95),
            "n": self.n,
            "method": self.method,
            "normality": {k: v.to_dict() if hasattr(v, "to_dict") else v for k, v in self.normality.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TestReport":
        return cls(
            test_name=d["test_name"],
            statistic=float(d["statistic"]),
            p_value=float(d["p_value"]),
            mean_difference=float(d["mean_difference"]),
            ci95=(float(d["ci95"][0]), float(d["ci95"][1])),
            n=int(d["n"]),
            method=d.get("method", ""),
            normality=d.get("normality", {}),
        )


def _paired(a, b, min_n: int):
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise InputError(f"paired samples differ in length: {a.size} vs {b.size}")
    if a.size < min_n:
        raise InputError(f"need at least {min_n} pairs, got {a.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InputError("paired samples must be finite")
    return a, b


def mean_ci95(diff: np.ndarray) -> tuple[float, float, float]:
    """Mean of ``diff`` and its t-based 95% confidence interval."""
    n = diff.size
    mean = float(diff.mean())
    if n < 2:
        return mean, mean, mean
    sem = float(np.std(diff, ddof=1)) / np.sqrt(n)
    half = float(sps.t.ppf(0.975, n - 1)) * sem
    return mean, mean - half, mean + half


def _normality_of(a, b) -> dict:
    if a.size < 8:
        return {}
    return {"a": normality_assessment(a), "b": normality_assessment(b)}


def signed_rank_null_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """Number of sign assignments giving each value of the doubled positive-rank sum.

    ``doubled_ranks`` are ``2 * rank`` (integers, so average ranks of ties
    stay exact). Entry ``k`` of the result counts assignments whose positive
    ranks sum to ``k / 2``.
    """
    r = np.asarray(doubled_ranks, dtype=np.int64)
    counts = np.zeros(int(r.sum()) + 1, dtype=np.float64)
    counts[0] = 1.0
    for v in r:
        shifted = np.zeros_like(counts)
        shifted[v:] = counts[: counts.size - v]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(paired_a, paired_b, exact_max_n: int = EXACT_MAX_N) -> TestReport:
    """Two-sided Wilcoxon signed-rank test on ``a - b``.

    Zero differences are dropped and tied magnitudes get average ranks. The
    reported statistic is the signed rank sum ``W = T+ - T-`` (it flips sign
    when ``a`` and ``b`` are swapped). With at most ``exact_max_n`` non-zero
    differences the p-value comes from the exact permutation distribution;
    otherwise from the normal approximation with tie-corrected variance and
    a continuity correction.
    """
    a, b = _paired(paired_a, paired_b, 6)
    diff = a - b
    nz = diff[diff != 0]
    if nz.size == 0:
        raise DegenerateTestError("all paired differences are zero")
    ranks = rankdata(np.abs(nz))
    w = float(np.sum(np.sign(nz) * ranks))
    n = nz.size
    if n <= exact_max_n:
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = signed_rank_null_counts(doubled)
        total = doubled.sum()
        # W = (2*T+ - total_rank_sum); in doubled units: W2 = 2*k - total
        k = np.arange(counts.size)
        w2 = np.abs(2 * k - total)
        obs = abs(round(2 * w))
        p = float(counts[w2 >= obs].sum() / counts.sum())
        method = "exact"
    else:
        var = float(np.sum(ranks**2))
        z = max(abs(w) - 1.0, 0.0) / np.sqrt(var)
        p = float(2 * sps.norm.sf(z))
        method = "normal approximation (tie and continuity corrected)"
    mean, lo, hi = mean_ci95(diff)
    return TestReport(
        test_name="wilcoxon_signed_rank",
        statistic=w,
        p_value=min(max(p, 0.0), 1.0),
        mean_difference=mean,
        ci95=(lo, hi),
        n=int(n),
        method=method,
        normality=_normality_of(a, b),
    )


def paired_t_test(paired_a, paired_b) -> TestReport:
    """Two-sided paired t-test on ``a - b`` with ``n - 1`` degrees of freedom."""
    a, b = _paired(paired_a, paired_b, 2)
    diff = a - b
    sd = float(np.std(diff, ddof=1))
    if sd == 0.0:
        raise DegenerateTestError("paired differences have zero variance")
    n = diff.size
    mean, lo, hi = mean_ci95(diff)
    t = mean / (sd / np.sqrt(n))
    p = float(2 * sps.t.sf(abs(t), n - 1))
    return TestReport(
        test_name="paired_t",
        statistic=float(t),
        p_value=min(max(p, 0.0), 1.0),
        mean_difference=mean,
        ci95=(lo, hi),
        n=int(n),
        method=f"t distribution, {n - 1} dof",
        normality=_normality_of(a, b),
    )


def choose_paired_test(paired_a, paired_b) -> TestReport:
    """Paired t-test when both samples look normal, Wilcoxon otherwise."""
    a, b = _paired(paired_a, paired_b, 6)
    if a.size >= 8:
        na, nb = normality_assessment(a), normality_assessment(b)
        if na.verdict == nb.verdict == "approximately normal":
            return paired_t_test(a, b)
    return wilcoxon_signed_rank(a, b)
