"""Cox partial-likelihood regression and the Grambsch-Therneau proportional-hazards test."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .cohort import Cohort, Design, build_design
from .errors import ConvergenceError, DataError, ModelError, UsageError
from .kaplan_meier import _km_arrays

MAX_ITER = 100
REL_TOL = 1e-9
STEP_TOL = 1e-7
MAX_STEP = 1e3


@dataclass(frozen=True, eq=False)
class _RiskSets:
    """Time-sorted data plus the index bookkeeping for tied deaths."""

    order: np.ndarray
    time: np.ndarray  # sorted durations
    event_times: np.ndarray
    start: np.ndarray  # first sorted index at risk per event time
    death_idx: np.ndarray  # sorted indices of deaths
    death_slot: np.ndarray  # event-time slot of each death
    n_dead: np.ndarray  # deaths per event time
    efron_slot: np.ndarray  # event-time slot per Efron term
    efron_frac: np.ndarray  # l / d per Efron term


def _risk_sets(t, e, ties):
    order = np.argsort(t, kind="stable")
    ts, es = t[order], e[order]
    event_times = np.unique(ts[es == 1])
    start = np.searchsorted(ts, event_times, side="left")
    death_idx = np.flatnonzero(es == 1)
    death_slot = np.searchsorted(event_times, ts[death_idx])
    n_dead = np.bincount(death_slot, minlength=event_times.shape[0])
    efron_slot = np.repeat(np.arange(event_times.shape[0]), n_dead)
    if ties == "efron":
        efron_frac = np.concatenate([np.arange(d) / d for d in n_dead]) if n_dead.size else np.empty(0)
    else:
        efron_frac = np.zeros(efron_slot.shape[0])
    return _RiskSets(order, ts, event_times, start, death_idx, death_slot, n_dead,
                     efron_slot, efron_frac)


def _partial_likelihood(beta, Z, rs: _RiskSets, want_resid=False):
    """Log partial likelihood, score and Hessian at `beta` for sorted design `Z`."""
    eta = Z @ beta
    shift = eta.max() if eta.size else 0.0
    w = np.exp(eta - shift)
    W0 = np.cumsum(w[::-1])[::-1]
    W1 = np.cumsum((w[:, None] * Z)[::-1], axis=0)[::-1]
    W2 = np.cumsum((w[:, None, None] * Z[:, :, None] * Z[:, None, :])[::-1], axis=0)[::-1]
    m = rs.event_times.shape[0]
    p = Z.shape[1]
    di = rs.death_idx
    D0 = np.bincount(rs.death_slot, weights=w[di], minlength=m)
    D1 = np.zeros((m, p))
    np.add.at(D1, rs.death_slot, w[di, None] * Z[di])
    D2 = np.zeros((m, p, p))
    np.add.at(D2, rs.death_slot, w[di, None, None] * Z[di, :, None] * Z[di, None, :])

    s, f = rs.efron_slot, rs.efron_frac
    st = rs.start[s]
    den = W0[st] - f * D0[s]
    mean = (W1[st] - f[:, None] * D1[s]) / den[:, None]
    second = (W2[st] - f[:, None, None] * D2[s]) / den[:, None, None]

    loglik = float(np.sum(eta[di] - shift) - np.sum(np.log(den)))
    grad = Z[di].sum(axis=0) - mean.sum(axis=0)
    hess = -(second.sum(axis=0) - np.einsum("ki,kj->ij", mean, mean))
    if not want_resid:
        return loglik, grad, hess
    # risk-set mean per event time (Efron-averaged over the tied deaths)
    mbar = np.zeros((m, p))
    np.add.at(mbar, s, mean)
    mbar /= rs.n_dead[:, None]
    return loglik, grad, hess, Z[di] - mbar[rs.death_slot]


@dataclass(frozen=True, eq=False)
class CoxFit:
    names: list[str]
    beta: np.ndarray
    information: np.ndarray
    var: np.ndarray
    loglik: float
    loglik_null: float
    iterations: int
    ties: str
    design: Design = field(repr=False)
    n: int = 0
    n_events: int = 0
    fingerprint: tuple = field(repr=False, default=())
    history: list[float] = field(repr=False, default_factory=list)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.var), 0, None))

    @property
    def z(self) -> np.ndarray:
        return self.beta / self.se

    @property
    def p_values(self) -> np.ndarray:
        return 2 * stats.norm.sf(np.abs(self.z))

    def to_dict(self) -> dict:
        return {"coefficients": [
                    {"name": n, "beta": float(b), "se": float(s), "z": float(z), "p": float(p)}
                    for n, b, s, z, p in zip(self.names, self.beta, self.se, self.z, self.p_values)],
                "loglik": self.loglik, "ties": self.ties}


def _standardize(X, names):
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    for j, s in enumerate(scale):
        if not s > 0:
            raise ModelError(f"design column {names[j]!r} is constant: coefficient not identifiable")
    Z = (X - center) / scale
    if np.linalg.matrix_rank(Z) < Z.shape[1]:
        raise ModelError(f"design matrix is rank deficient (columns {names})")
    return Z, center, scale


def cox_fit(cohort: Cohort, variables: Sequence[str], ties: str = "efron") -> CoxFit:
    """Maximize the Cox partial likelihood by Newton-Raphson with step halving.

    Covariates are centred and scaled internally; coefficients and the
    information matrix are reported on the original scale.
    """
    ties = ties.lower()
    if ties not in ("efron", "breslow"):
        raise UsageError(f"ties must be 'efron' or 'breslow', got {ties!r}")
    if cohort.n_events == 0:
        raise DataError("Cox model needs at least one event")
    design = build_design(cohort, variables)
    if design.X.shape[1] == 0:
        raise UsageError("Cox model needs at least one covariate")
    return _cox_fit_arrays(cohort.durations, cohort.events, design, ties,
                           fingerprint=cohort.fingerprint())


def _cox_fit_arrays(t, e, design, ties="efron", fingerprint=()):
    names = design.names
    Z, _, scale = _standardize(design.X, names)
    rs = _risk_sets(np.asarray(t, float), np.asarray(e), ties)
    Zs = Z[rs.order]
    beta = np.zeros(Z.shape[1])
    ll, grad, hess = _partial_likelihood(beta, Zs, rs)
    ll_null = ll
    history = [ll]
    converged = False
    for it in range(1, MAX_ITER + 1):
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            if not np.any(beta):
                raise ModelError("singular information matrix at the null model") from None
            # information underflows as coefficients run off to infinity
            worst = names[int(np.argmax(np.abs(beta)))]
            raise ConvergenceError(f"coefficient for {worst!r} diverges (monotone likelihood)",
                                   {"iteration": it, "loglik": ll}) from None
        if not np.all(np.isfinite(step)) or np.linalg.norm(step) > MAX_STEP:
            worst = names[int(np.argmax(np.abs(np.nan_to_num(step, nan=np.inf))))]
            raise ConvergenceError(f"coefficient for {worst!r} diverges (monotone likelihood)",
                                   {"iteration": it, "loglik": ll})
        for _ in range(40):
            cand = beta + step
            ll_new, g_new, h_new = _partial_likelihood(cand, Zs, rs)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * abs(ll):
                break
            step = step / 2
        else:
            raise ConvergenceError("step halving failed to increase the partial likelihood",
                                   {"iteration": it, "loglik": ll})
        change = abs(ll_new - ll)
        beta, ll, grad, hess = cand, max(ll_new, ll), g_new, h_new
        history.append(ll)
        if np.max(np.abs(beta)) > 50:
            worst = names[int(np.argmax(np.abs(beta)))]
            raise ConvergenceError(f"coefficient for {worst!r} diverges (monotone likelihood)",
                                   {"iteration": it, "loglik": ll})
        if change <= REL_TOL * max(abs(ll), 1.0) and np.max(np.abs(step)) < STEP_TOL:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"Cox fit did not converge in {MAX_ITER} iterations",
                               {"beta": beta.tolist(), "loglik": ll, "gradient": grad.tolist()})
    info_z = -hess
    try:
        var_z = np.linalg.inv(info_z)
    except np.linalg.LinAlgError:
        raise ModelError("singular information matrix at the Cox estimate") from None
    beta_x = beta / scale
    info_x = info_z * np.outer(scale, scale)
    var_x = var_z / np.outer(scale, scale)
    return CoxFit(names, beta_x, info_x, var_x, ll, ll_null, it, ties, design,
                  int(len(t)), int(np.sum(e)), fingerprint, history)


def schoenfeld_residuals(fit: CoxFit, cohort: Cohort):
    """Unscaled Schoenfeld residuals at the fitted coefficients.

    Returns ``(times, residuals)`` with one row per death in time order and
    residuals on the original covariate scale.
    """
    design = build_design(cohort, fit.design.variables)
    Z, center, scale = _standardize(design.X, fit.names)
    rs = _risk_sets(cohort.durations, cohort.events, fit.ties)
    beta_z = fit.beta * scale
    *_, resid = _partial_likelihood(beta_z, Z[rs.order], rs, want_resid=True)
    return rs.time[rs.death_idx], resid * scale


@dataclass(frozen=True)
class PhColumn:
    name: str
    chi_square: float
    df: int
    p_value: float


@dataclass(frozen=True)
class PhTestResult:
    columns: tuple[PhColumn, ...]
    global_chi_square: float
    global_df: int
    global_p: float
    transform: str

    def to_dict(self) -> dict:
        return {"columns": [{"name": c.name, "chisq": c.chi_square, "df": c.df, "p": c.p_value}
                            for c in self.columns],
                "global": {"chisq": self.global_chi_square, "df": self.global_df,
                           "p": self.global_p},
                "transform": self.transform}


def _transform_times(times, t_all, e_all, transform):
    if transform == "identity":
        return times.astype(float)
    if transform == "log":
        if np.any(times <= 0):
            raise DataError("log time transform needs positive event times")
        return np.log(times)
    if transform == "rank":
        return stats.rankdata(times)
    if transform == "km":
        curve = _km_arrays(t_all, e_all)
        # left-continuous: Ŝ(t-) at each event time
        idx = np.searchsorted(curve.time, times, side="left")
        return np.append(1.0, curve.survival)[idx]
    raise UsageError(f"unknown time transform {transform!r}")


def ph_test(fit: CoxFit, cohort: Cohort, transform: str = "km") -> PhTestResult:
    """Grambsch-Therneau test of proportional hazards from scaled Schoenfeld residuals.

    Per column ``j`` the statistic is ``d (u V)_j^2 / (V_jj S)`` and the global
    one ``d u' V u / S``, where ``u = sum_k g~_k r_k`` over deaths, ``g~`` the
    centred transformed death times, ``S = sum g~^2``, ``V`` the inverse
    information and ``d`` the number of deaths.
    """
    if cohort.n_events == 0:
        raise DataError("proportional-hazards test needs at least one event")
    if fit.fingerprint and fit.fingerprint != cohort.fingerprint():
        raise UsageError("fit was computed on a different cohort")
    times, resid = schoenfeld_residuals(fit, cohort)
    g = _transform_times(times, cohort.durations, cohort.events, transform)
    gc = g - g.mean()
    ss = float(gc @ gc)
    if ss <= 0:
        raise ModelError("transformed event times are constant; test undefined")
    V = fit.var
    if np.any(np.diag(V) <= 0):
        raise ModelError("singular residual covariance")
    d = resid.shape[0]
    u = gc @ resid
    uv = u @ V
    per = d * uv ** 2 / (np.diag(V) * ss)
    glob = float(d * (u @ V @ u) / ss)
    cols = tuple(PhColumn(n, float(c), 1, float(stats.chi2.sf(c, 1)))
                 for n, c in zip(fit.names, per))
    p = len(fit.names)
    return PhTestResult(cols, glob, p, float(stats.chi2.sf(glob, p)), transform)
