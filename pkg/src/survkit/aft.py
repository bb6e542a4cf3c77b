"""Parametric accelerated failure time regression by censored maximum likelihood.

The model is on the log-time scale,

    log T = mu + beta'x + sigma * W,

with W following an extreme-value (exponential, Weibull, Rayleigh), normal
(log-normal) or logistic (log-logistic) law.  A positive coefficient lengthens
survival; ``exp(beta)`` multiplies survival time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import special, stats

from .cohort import Cohort, Design, build_design
from .errors import ConvergenceError, DataError, ModelError, SurvkitError, UsageError

MAX_ITER = 100
REL_TOL = 1e-9
STEP_TOL = 1e-7

_EULER = 0.5772156649015329


class AftDistribution(enum.Enum):
    EXPONENTIAL = "exponential"
    WEIBULL = "weibull"
    RAYLEIGH = "rayleigh"
    LOGNORMAL = "lognormal"
    LOGLOGISTIC = "loglogistic"

    @property
    def law(self) -> str:
        return {"lognormal": "normal", "loglogistic": "logistic"}.get(self.value, "extreme")

    @property
    def fixed_scale(self) -> float | None:
        return {"exponential": 1.0, "rayleigh": 0.5}.get(self.value)

    @property
    def label(self) -> str:
        return {"lognormal": "Log-normal", "loglogistic": "Log-logistic"}.get(
            self.value, self.value.capitalize())

    @classmethod
    def parse(cls, text: str) -> "AftDistribution":
        key = text.strip().lower().replace("-", "").replace("_", "")
        for d in cls:
            if d.value == key:
                return d
        raise UsageError(f"unknown distribution {text!r}; choose from {[d.value for d in cls]}")


ALL_DISTRIBUTIONS = tuple(AftDistribution)


# ---------------------------------------------------------------------------
# Error laws: log density a(z), log survival b(z) and their first two derivatives


def _extreme(z):
    ez = np.exp(np.minimum(z, 700.0))
    return (z - ez, 1.0 - ez, -ez), (-ez, -ez, -ez)


def _logistic(z):
    p = special.expit(z)
    q = p * (1.0 - p)
    soft = np.logaddexp(0.0, z)
    return (z - 2.0 * soft, 1.0 - 2.0 * p, -2.0 * q), (-soft, -p, -q)


def _normal(z):
    log_sf = special.log_ndtr(-z)
    lam = np.exp(-0.5 * z * z - 0.5 * math.log(2 * math.pi) - log_sf)
    return ((-0.5 * z * z - 0.5 * math.log(2 * math.pi), -z, -np.ones_like(z)),
            (log_sf, -lam, -lam * (lam - z)))


_LAWS = {"extreme": _extreme, "logistic": _logistic, "normal": _normal}
# mean and standard deviation of W, used for the starting values
_MOMENTS = {"extreme": (-_EULER, math.pi / math.sqrt(6)),
            "logistic": (0.0, math.pi / math.sqrt(3)),
            "normal": (0.0, 1.0)}


def survival_w(law: str, z):
    """Survival function of the standardized error W."""
    z = np.asarray(z, dtype=float)
    if law == "extreme":
        return np.exp(-np.exp(np.minimum(z, 700.0)))
    if law == "logistic":
        return special.expit(-z)
    return special.ndtr(-z)


def aft_loglik(theta, log_t, event, X, law: str, scale: float | None = None):
    """Censored log-likelihood, score and Hessian.

    ``theta`` is ``(mu, beta..., log sigma)`` or ``(mu, beta...)`` when `scale`
    fixes sigma.  `X` excludes the intercept column.
    """
    theta = np.asarray(theta, dtype=float)
    p = X.shape[1]
    Xt = np.hstack([np.ones((X.shape[0], 1)), X])
    gamma = theta[:p + 1]
    if scale is None:
        log_sigma = theta[p + 1]
        sigma = math.exp(log_sigma)
    else:
        sigma = float(scale)
        log_sigma = math.log(sigma)
    z = (log_t - Xt @ gamma) / sigma
    (a, a1, a2), (b, b1, b2) = _LAWS[law](z)
    d = event.astype(bool)
    c = np.where(d, a, b)
    c1 = np.where(d, a1, b1)
    c2 = np.where(d, a2, b2)
    nd = float(d.sum())
    ll = float(c.sum() - nd * log_sigma - log_t[d].sum())

    g_gamma = -(Xt.T @ c1) / sigma
    h_gg = (Xt.T * c2) @ Xt / sigma ** 2
    if scale is not None:
        return ll, g_gamma, h_gg
    g_u = float(-(c1 * z).sum() - nd)
    h_gu = Xt.T @ (c2 * z + c1) / sigma
    h_uu = float((c2 * z * z + c1 * z).sum())
    grad = np.append(g_gamma, g_u)
    hess = np.empty((p + 2, p + 2))
    hess[:p + 1, :p + 1] = h_gg
    hess[:p + 1, p + 1] = hess[p + 1, :p + 1] = h_gu
    hess[p + 1, p + 1] = h_uu
    return ll, grad, hess


# ---------------------------------------------------------------------------
# Fitting


@dataclass(frozen=True, eq=False)
class AftFit:
    distribution: AftDistribution
    intercept: float
    coef: np.ndarray
    names: list[str]
    scale: float
    scale_fixed: bool
    cov: np.ndarray  # over (intercept, coef..., log scale if free)
    loglik: float
    n: int
    n_events: int
    design: Design | None = field(repr=False, default=None)
    iterations: int = 0
    loglik_start: float = float("nan")
    history: list[float] = field(repr=False, default_factory=list)
    fingerprint: tuple = field(repr=False, default=())

    @property
    def k(self) -> int:
        """Number of free parameters."""
        return 1 + len(self.names) + (0 if self.scale_fixed else 1)

    @property
    def aic(self) -> float:
        return -2.0 * self.loglik + 2.0 * self.k

    @property
    def se(self) -> np.ndarray:
        """Standard errors of (intercept, coef...)."""
        p = len(self.names)
        return np.sqrt(np.clip(np.diag(self.cov)[:p + 1], 0, None))

    @property
    def se_scale(self) -> float:
        if self.scale_fixed:
            return 0.0
        return float(self.scale * math.sqrt(max(self.cov[-1, -1], 0.0)))

    @property
    def p_values(self) -> np.ndarray:
        """Two-sided Wald p-values for (intercept, coef...)."""
        est = np.append(self.intercept, self.coef)
        with np.errstate(divide="ignore", invalid="ignore"):
            return 2 * stats.norm.sf(np.abs(est / self.se))

    def to_dict(self) -> dict:
        est = np.append(self.intercept, self.coef)
        rows = []
        for name, b, s, p in zip(["(Intercept)"] + self.names, est, self.se, self.p_values):
            rows.append({"name": name, "beta": float(b), "se": float(s), "p": float(p),
                         "accel_factor": None if name == "(Intercept)" else float(np.exp(b))})
        return {"distribution": self.distribution.value, "coefficients": rows,
                "scale": {"value": self.scale, "fixed": self.scale_fixed,
                          "se": self.se_scale},
                "loglik": self.loglik, "aic": self.aic, "k": self.k,
                "n": self.n, "events": self.n_events}


def aft_fit(cohort: Cohort, variables: Sequence[str], dist: AftDistribution,
            scale: float | None = None) -> AftFit:
    """Fit an AFT model by Newton-Raphson on (mu, beta, log sigma).

    Parameters
    ----------
    cohort : Cohort
        All durations must be strictly positive.
    variables : sequence of str
        Covariates; categorical ones are dummy coded against their first level.
    dist : AftDistribution
    scale : float, optional
        Fix sigma at this value (the exponential and Rayleigh distributions fix
        it themselves).  Fixing sigma = 1 in a Weibull fit reproduces the
        exponential fit.
    """
    if isinstance(dist, str):
        dist = AftDistribution.parse(dist)
    design = build_design(cohort, variables)
    return fit_aft_arrays(cohort.durations, cohort.events, design, dist, scale,
                          fingerprint=cohort.fingerprint())


def fit_aft_arrays(t, e, design: Design, dist: AftDistribution,
                   scale: float | None = None, fingerprint=()) -> AftFit:
    t = np.asarray(t, dtype=float)
    e = np.asarray(e)
    if t.size == 0:
        raise DataError("cannot fit an empty cohort")
    if np.any(t <= 0):
        raise DataError("log-time models need strictly positive durations")
    if not np.any(e == 1):
        raise DataError("AFT fit needs at least one event")
    if scale is None:
        scale = dist.fixed_scale
    if scale is not None and not scale > 0:
        raise UsageError("fixed scale must be positive")
    law = dist.law
    names = design.names
    X = design.X
    p = X.shape[1]
    center = X.mean(axis=0) if p else np.empty(0)
    spread = X.std(axis=0) if p else np.empty(0)
    for j in range(p):
        if not spread[j] > 0:
            raise ModelError(f"design column {names[j]!r} is constant: not identifiable")
    Z = (X - center) / spread if p else X
    if p and np.linalg.matrix_rank(Z) < p:
        raise ModelError(f"design matrix is rank deficient (columns {names})")

    log_t = np.log(t)
    m_w, s_w = _MOMENTS[law]
    sd = float(np.std(log_t, ddof=1)) if t.size > 1 else 0.0
    sigma0 = scale if scale is not None else (sd / s_w if sd > 0 else 1.0)
    theta = np.zeros(p + 1 + (scale is None))
    theta[0] = float(log_t.mean()) - sigma0 * m_w
    if scale is None:
        theta[-1] = math.log(sigma0)

    ll, grad, hess = aft_loglik(theta, log_t, e, Z, law, scale)
    ll_start = ll
    history = [ll]
    converged = False
    for it in range(1, MAX_ITER + 1):
        step = _newton_step(grad, hess)
        for _ in range(60):
            cand = theta + step
            ll_new, g_new, h_new = aft_loglik(cand, log_t, e, Z, law, scale)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * abs(ll):
                break
            step = step / 2
        else:
            raise ConvergenceError("step halving failed to increase the likelihood",
                                   {"iteration": it, "loglik": ll})
        change = abs(ll_new - ll)
        theta, ll, grad, hess = cand, max(ll, ll_new), g_new, h_new
        history.append(ll)
        if change <= REL_TOL * max(abs(ll), 1.0) and np.max(np.abs(step)) < STEP_TOL:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"{dist.value} fit did not converge in {MAX_ITER} iterations",
                               {"theta": theta.tolist(), "loglik": ll, "gradient": grad.tolist()})
    try:
        cov_z = np.linalg.inv(-hess)
    except np.linalg.LinAlgError:
        raise ModelError("singular observed information at the estimate") from None

    # back to the original covariate scale
    q = theta.shape[0]
    J = np.eye(q)
    if p:
        J[0, 1:p + 1] = -center / spread
        J[np.arange(1, p + 1), np.arange(1, p + 1)] = 1.0 / spread
    est = J @ theta
    cov = J @ cov_z @ J.T
    sigma = float(math.exp(theta[-1])) if scale is None else float(scale)
    return AftFit(dist, float(est[0]), est[1:p + 1].copy(), names, sigma, scale is not None,
                  cov, ll, int(t.size), int(np.sum(e)), design, it, ll_start, history,
                  fingerprint)


def _newton_step(grad, hess):
    """Newton direction for maximization, Levenberg-damped if -H is not positive definite."""
    info = -hess
    lam = 0.0
    eye = np.eye(info.shape[0])
    scale = max(float(np.max(np.abs(np.diag(info)))), 1e-8)
    for _ in range(60):
        try:
            c = np.linalg.cholesky(info + lam * eye)
        except np.linalg.LinAlgError:
            lam = max(2 * lam, 1e-6 * scale)
            continue
        y = np.linalg.solve(c, grad)
        return np.linalg.solve(c.T, y)
    raise ModelError("could not find an ascent direction (information matrix degenerate)")


# ---------------------------------------------------------------------------
# Post-fit quantities


def acceleration_factors(fit: AftFit) -> dict[str, float]:
    """``exp(beta)`` per design column; > 1 means longer survival than the reference."""
    return {name: float(np.exp(b)) for name, b in zip(fit.names, fit.coef)}


def predict_survival(fit: AftFit, x: Mapping[str, object], t):
    """S(t | x) = S_W((log t - mu - beta'x) / sigma); equals 1 at t = 0."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise UsageError("survival is only defined for t >= 0")
    if fit.design is None:
        if fit.names:
            raise UsageError("fit carries no design information")
        row = np.empty(0)
    elif isinstance(x, Mapping):
        row = fit.design.encode(x)
    else:
        row = np.asarray(x, dtype=float)
    lin = fit.intercept + float(row @ fit.coef) if row.size else fit.intercept
    with np.errstate(divide="ignore"):
        z = (np.log(t_arr) - lin) / fit.scale
    s = np.where(t_arr > 0, survival_w(fit.distribution.law, np.where(t_arr > 0, z, 0.0)), 1.0)
    return float(s) if s.ndim == 0 else s


@dataclass(frozen=True)
class AicRow:
    distribution: AftDistribution
    loglik: float
    k: int
    aic: float
    delta_aic: float


def compare_aic(fits: Sequence[AftFit]) -> list[AicRow]:
    """Rank fits by AIC (ascending) with the difference to the best."""
    fits = list(fits)
    if not fits:
        raise UsageError("need at least one fit")
    ref = fits[0]
    for f in fits[1:]:
        if f.fingerprint != ref.fingerprint or f.names != ref.names or f.n != ref.n:
            raise UsageError("fits must share the same cohort and design to compare AIC")
    best = min(f.aic for f in fits)
    rows = [AicRow(f.distribution, f.loglik, f.k, f.aic, f.aic - best) for f in fits]
    return sorted(rows, key=lambda r: r.aic)


def fit_all(cohort: Cohort, variables: Sequence[str],
            dists: Sequence[AftDistribution] = ALL_DISTRIBUTIONS) -> list[AftFit]:
    return [aft_fit(cohort, variables, d) for d in dists]


@dataclass(frozen=True)
class ScreenTerm:
    name: str
    beta: float
    se: float
    p_value: float


@dataclass(frozen=True)
class ScreenRow:
    """Univariable fit of one variable; ``error`` is set instead when the fit failed."""

    variable: str
    terms: tuple[ScreenTerm, ...] = ()
    lr_statistic: float = float("nan")
    lr_df: int = 0
    lr_p: float = float("nan")
    error: str | None = None


def univariable_screen(cohort: Cohort, variables: Sequence[str],
                       dist: AftDistribution) -> list[ScreenRow]:
    """One AFT fit per variable, with per-column Wald p-values and a joint LR test."""
    if isinstance(dist, str):
        dist = AftDistribution.parse(dist)
    null = aft_fit(cohort, [], dist)
    rows = []
    for var in variables:
        try:
            fit = aft_fit(cohort, [var], dist)
        except (SurvkitError, np.linalg.LinAlgError) as exc:
            rows.append(ScreenRow(var, error=f"{type(exc).__name__}: {exc}"))
            continue
        terms = tuple(ScreenTerm(n, float(b), float(s), float(p)) for n, b, s, p in
                      zip(fit.names, fit.coef, fit.se[1:], fit.p_values[1:]))
        lr = max(2.0 * (fit.loglik - null.loglik), 0.0)
        df = len(fit.names)
        rows.append(ScreenRow(var, terms, lr, df, float(stats.chi2.sf(lr, df))))
    return rows
