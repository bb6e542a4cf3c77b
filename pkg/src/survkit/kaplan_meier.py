"""Product-limit survival curves with Greenwood variance and pointwise bands."""

from __future__ import annotations

import csv
import os
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .cohort import Cohort, split_by_level
from .errors import DataError, UsageError


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    """Kaplan-Meier estimate tabulated at the distinct event times.

    ``n_censor[i]`` counts censorings in ``[time[i], time[i+1])`` so that
    ``n_risk[i+1] == n_risk[i] - n_event[i] - n_censor[i]``.
    """

    time: np.ndarray
    n_risk: np.ndarray
    n_event: np.ndarray
    n_censor: np.ndarray
    survival: np.ndarray
    variance: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_total: int
    n_events: int
    last_time: float  # largest observed duration, event or censored
    conf_type: str = "log-log"
    conf_level: float = 0.95

    @property
    def std_err(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def __len__(self):
        return self.time.shape[0]


def _risk_table(t, e):
    """Distinct event times with at-risk, event and interval-censor counts.

    Events precede censorings at a tied time: a record censored at t is
    still at risk for events at t.
    """
    order = np.argsort(t, kind="stable")
    t, e = t[order], e[order]
    times = np.unique(t[e == 1])
    n = t.shape[0]
    n_risk = n - np.searchsorted(t, times, side="left")
    ev_sorted = np.sort(t[e == 1])
    n_event = (np.searchsorted(ev_sorted, times, side="right")
               - np.searchsorted(ev_sorted, times, side="left"))
    cens_sorted = np.sort(t[e == 0])
    bounds = np.append(times[1:], np.inf)
    n_censor = (np.searchsorted(cens_sorted, bounds, side="left")
                - np.searchsorted(cens_sorted, times, side="left"))
    return times, n_risk, n_event, n_censor


def km_fit(cohort: Cohort, conf_type: str = "log-log", conf_level: float = 0.95) -> SurvivalCurve:
    """Kaplan-Meier product-limit estimate of the survival function.

    Parameters
    ----------
    cohort : Cohort
    conf_type : {'log-log', 'linear'}
        Pointwise band construction.  ``log-log`` bands always lie in [0, 1];
        ``linear`` (plain Greenwood) bands are clipped to [0, 1].
    conf_level : float
    """
    if len(cohort) == 0:
        raise DataError("cannot fit a survival curve to an empty cohort")
    return _km_arrays(cohort.durations, cohort.events, conf_type, conf_level)


def _product_limit(n_risk, n_event):
    """Cumulative product of (1 - d/n), telescoped over runs without censoring.

    Between censorings the next risk set is n - d, so the factors collapse to a
    single ratio; uncensored data then give the empirical survivor fraction
    with one rounding.
    """
    remaining = n_risk - n_event
    surv = np.empty(n_risk.shape[0])
    if surv.size == 0:
        return surv
    starts = np.flatnonzero(np.r_[True, n_risk[1:] != remaining[:-1]])
    base = 1.0
    for a, b in zip(starts, np.r_[starts[1:], n_risk.shape[0]]):
        surv[a:b] = base * (remaining[a:b] / n_risk[a])
        base = surv[b - 1]
    return surv


def _km_arrays(t, e, conf_type="log-log", conf_level=0.95):
    if conf_type not in ("log-log", "linear"):
        raise UsageError(f"conf_type must be 'log-log' or 'linear', got {conf_type!r}")
    if not 0 < conf_level < 1:
        raise UsageError("conf_level must lie in (0, 1)")
    t = np.asarray(t, dtype=float)
    e = np.asarray(e)
    times, n_risk, n_event, n_censor = _risk_table(t, e)
    surv = _product_limit(n_risk, n_event)

    # Greenwood; a step with n == d drives the curve to 0 and the variance with it.
    remaining = n_risk - n_event
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(remaining > 0, n_event / (n_risk * np.maximum(remaining, 1)), 0.0)
    cum = np.cumsum(terms)
    var = np.where(surv > 0, surv ** 2 * cum, 0.0)

    z = stats.norm.ppf(0.5 + conf_level / 2)
    if conf_type == "linear":
        se = np.sqrt(var)
        lo, hi = np.clip(surv - z * se, 0, 1), np.clip(surv + z * se, 0, 1)
    else:
        lo, hi = surv.copy(), surv.copy()
        ok = (surv > 0) & (surv < 1)
        log_s = np.log(surv[ok])
        se_theta = np.sqrt(cum[ok]) / np.abs(log_s)
        lo[ok] = surv[ok] ** np.exp(z * se_theta)
        hi[ok] = surv[ok] ** np.exp(-z * se_theta)
    return SurvivalCurve(times, n_risk, n_event, n_censor, surv, var, lo, hi,
                         int(t.shape[0]), int(e.sum()), float(t.max()), conf_type, conf_level)


def survival_at(curve: SurvivalCurve, t) -> float | np.ndarray:
    """Right-continuous evaluation: Ŝ at the largest event time <= t (1 before the first)."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise UsageError("survival is only defined for t >= 0")
    idx = np.searchsorted(curve.time, arr, side="right")
    out = np.where(idx > 0, np.append(1.0, curve.survival)[idx], 1.0)
    return float(out) if out.ndim == 0 else out


def survival_table(curve: SurvivalCurve, times) -> np.ndarray:
    """Like :func:`survival_at`, but NaN where t exceeds the largest observed time."""
    times = np.asarray(times, dtype=float)
    s = np.asarray(survival_at(curve, times), dtype=float)
    return np.where(times > curve.last_time, np.nan, s)


def quantile(curve: SurvivalCurve, q: float = 0.5) -> float | None:
    """Smallest event time with Ŝ(t) <= 1 - q; None if the curve never gets there."""
    if not 0 < q < 1:
        raise UsageError(f"quantile level must lie in (0, 1), got {q}")
    # small slack so that e.g. Ŝ = 0.5 computed as 0.5000000000000001 still counts
    hit = np.flatnonzero(curve.survival <= (1.0 - q) + 1e-12)
    return float(curve.time[hit[0]]) if hit.size else None


def median(curve: SurvivalCurve) -> float | None:
    return quantile(curve, 0.5)


def rmst(curve: SurvivalCurve, tau: float) -> float:
    """Restricted mean survival time: area under the step curve on [0, tau]."""
    knots = np.concatenate(([0.0], curve.time[curve.time < tau], [tau]))
    levels = np.concatenate(([1.0], curve.survival[curve.time < tau]))
    return float(np.sum(np.diff(knots) * levels))


def km_stratified(cohort: Cohort, variable: str, **kwargs) -> "OrderedDict[str, SurvivalCurve]":
    """One curve per level of a categorical variable, in level order."""
    parts = split_by_level(cohort, variable)
    out = OrderedDict()
    for level, sub in parts.items():
        if len(sub) == 0:
            raise DataError(f"level {level!r} of {variable!r} has no records")
        out[level] = km_fit(sub, **kwargs)
    return out


CURVE_COLUMNS = ["time", "n_risk", "n_event", "n_censor", "survival", "std_err", "ci_low", "ci_high"]


def curve_rows(curve: SurvivalCurve):
    se = curve.std_err
    for i in range(len(curve)):
        yield [float(curve.time[i]), int(curve.n_risk[i]), int(curve.n_event[i]),
               int(curve.n_censor[i]), float(curve.survival[i]), float(se[i]),
               float(curve.ci_low[i]), float(curve.ci_high[i])]


def write_curves_csv(curves, dest) -> None:
    """Step-function export.  ``curves`` is a single curve or a mapping level → curve;
    a mapping adds a leading ``level`` column, one block per level."""
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        if isinstance(curves, SurvivalCurve):
            w.writerow(CURVE_COLUMNS)
            for row in curve_rows(curves):
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        else:
            w.writerow(["level"] + CURVE_COLUMNS)
            for level, curve in curves.items():
                for row in curve_rows(curve):
                    w.writerow([level] + [repr(v) if isinstance(v, float) else v for v in row])
    finally:
        if own:
            fh.close()
