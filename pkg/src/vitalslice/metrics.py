"""Accuracy metrics and the paired statistical test.

Percent errors are normalized by the mean of the true values; that choice
is stated in every rendered report header so the numbers stay
interpretable. The t-distribution CDF is computed here by adaptive
numerical integration, so no statistics library is required at runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, NumericError, ShapeError

ALPHA = 0.05


def _paired_1d(y_true, y_pred, min_len: int):
    y_true = np.asarray(y_true, dtype=np.float64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.float64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ShapeError(
            f"series lengths differ: {y_true.shape[0]} vs {y_pred.shape[0]}"
        )
    if y_true.shape[0] < min_len:
        raise InsufficientDataError(
            f"need at least {min_len} samples, got {y_true.shape[0]}"
        )
    return y_true, y_pred


def mae_pct(y_true, y_pred) -> float:
    """100 * mean|y - yhat| / mean(y_true)."""
    y_true, y_pred = _paired_1d(y_true, y_pred, 1)
    denom = float(np.mean(y_true))
    if denom == 0.0:
        raise NumericError("mean of true values is zero; percent error undefined")
    return 100.0 * float(np.mean(np.abs(y_true - y_pred))) / denom


def rmse_pct(y_true, y_pred) -> float:
    """100 * sqrt(mean((y - yhat)^2)) / mean(y_true)."""
    y_true, y_pred = _paired_1d(y_true, y_pred, 1)
    denom = float(np.mean(y_true))
    if denom == 0.0:
        raise NumericError("mean of true values is zero; percent error undefined")
    return 100.0 * math.sqrt(float(np.mean((y_true - y_pred) ** 2))) / denom


def r2(y_true, y_pred) -> float:
    """Coefficient of determination, 1 - SS_res/SS_tot."""
    y_true, y_pred = _paired_1d(y_true, y_pred, 2)
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise NumericError("true values have zero variance; R^2 undefined")
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    return 1.0 - ss_res / ss_tot


def f1_alerts(true_labels, pred_labels) -> float:
    """F1 over binary alert labels.

    Both vectors all-negative counts as perfect agreement (1.0); positives
    on only one side score 0.
    """
    t = np.asarray(true_labels, dtype=bool).reshape(-1)
    p = np.asarray(pred_labels, dtype=bool).reshape(-1)
    if t.shape != p.shape:
        raise ShapeError(f"label lengths differ: {t.shape[0]} vs {p.shape[0]}")
    tp = int(np.sum(t & p))
    fp = int(np.sum(~t & p))
    fn = int(np.sum(t & ~p))
    if tp == 0:
        return 1.0 if (fp == 0 and fn == 0) else 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# Student-t distribution by numerical integration
# ---------------------------------------------------------------------------


def _t_pdf(x: float, df: float) -> float:
    log_norm = (
        math.lgamma((df + 1.0) / 2.0)
        - math.lgamma(df / 2.0)
        - 0.5 * math.log(df * math.pi)
    )
    return math.exp(log_norm - (df + 1.0) / 2.0 * math.log1p(x * x / df))


def _adaptive_simpson(f, a: float, b: float, tol: float) -> float:
    """Standard recursive adaptive Simpson quadrature."""

    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lmid = 0.5 * (lo + mid)
        rmid = 0.5 * (mid + hi)
        flmid = f(lmid)
        frmid = f(rmid)
        left = simpson(lo, mid, flo, flmid, fmid)
        right = simpson(mid, hi, fmid, frmid, fhi)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return recurse(lo, mid, flo, flmid, fmid, left, eps / 2.0, depth - 1) + recurse(
            mid, hi, fmid, frmid, fhi, right, eps / 2.0, depth - 1
        )

    fa, fb = f(a), f(b)
    mid = 0.5 * (a + b)
    fm = f(mid)
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, 48)


def student_t_two_sided_p(t_stat: float, df: int) -> float:
    """Two-sided p-value for a t-statistic, accurate to about 1e-9."""
    if df < 1:
        raise InsufficientDataError(f"degrees of freedom must be >= 1, got {df}")
    if math.isinf(t_stat):
        return 0.0
    a = abs(t_stat)
    if a == 0.0:
        return 1.0
    inner = _adaptive_simpson(lambda x: _t_pdf(x, df), 0.0, a, 1e-10)
    p = 1.0 - 2.0 * inner
    return min(1.0, max(0.0, p))


@dataclass(frozen=True)
class StatTestResult:
    """Paired-comparison outcome: t statistic, two-sided p, Cohen's d."""

    t: float
    p: float
    cohens_d: float
    significant: bool
    df: int


def paired_ttest(samples_a, samples_b) -> StatTestResult:
    """Two-sided paired t-test on samples_a - samples_b.

    Uses the sample standard deviation (ddof=1). Degenerate inputs follow
    fixed rules: all differences zero gives t=0, p=1; constant nonzero
    differences give a signed infinite t with p=0.
    """
    a = np.asarray(samples_a, dtype=np.float64).reshape(-1)
    b = np.asarray(samples_b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"sample lengths differ: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    if n < 2:
        raise InsufficientDataError(f"paired test needs n >= 2, got {n}")
    d = a - b
    mean_d = float(np.mean(d))
    std_d = float(np.std(d, ddof=1))
    df = n - 1
    if std_d == 0.0:
        if mean_d == 0.0:
            return StatTestResult(t=0.0, p=1.0, cohens_d=0.0, significant=False, df=df)
        t_stat = math.copysign(math.inf, mean_d)
        return StatTestResult(
            t=t_stat, p=0.0, cohens_d=math.copysign(math.inf, mean_d),
            significant=True, df=df,
        )
    t_stat = mean_d / (std_d / math.sqrt(n))
    p = student_t_two_sided_p(t_stat, df)
    return StatTestResult(
        t=t_stat,
        p=p,
        cohens_d=mean_d / std_d,
        significant=p < ALPHA,
        df=df,
    )
