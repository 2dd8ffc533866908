"""Parametric maximum-likelihood method.

Mean degradation path::

    mu(t; T) = alpha / (1 + (t / eta(T)) ** gamma),
    eta(T)   = exp(nu0 + nu1 / (T + 273.16))

Replicates within a (temperature, time) cell share a common pairwise error
correlation ``rho`` (compound symmetry), independent across cells.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import astuple, dataclass, field

import numpy as np
from scipy.stats import norm

from .arrhenius import ArrheniusLine, TIEstimate, inv_kelvin, ti_from_line
from .dataset import DegradationDataset, initial_value
from .errors import ConvergenceError, DataError
from .numopt import fd_gradient, fd_hessian, nelder_mead
from .tradls import fit_ls

LN10 = math.log(10.0)
PARAM_NAMES = ("alpha", "nu0", "nu1", "gamma", "sigma", "rho")
# Parameters whose intervals are built on the log scale.
POSITIVE = (True, False, False, True, True, False)
RHO_BOUNDARY = 1e-4
Z_DECIMALS = 2


@dataclass(frozen=True)
class MLParams:
    alpha: float
    nu0: float
    nu1: float
    gamma: float
    sigma: float
    rho: float = 0.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.gamma > 0 and self.sigma > 0):
            raise ValueError("alpha, gamma and sigma must be positive")
        if not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, v):
        return cls(*(float(x) for x in v))


def mean_path(t, temp_c, params: MLParams):
    t = np.asarray(t, dtype=float)
    eta = np.exp(params.nu0 + params.nu1 * inv_kelvin(temp_c))
    out = params.alpha / (1.0 + (t / eta) ** params.gamma)
    return float(out) if out.ndim == 0 else out


def cs_loglik(resid, cell_ids, sizes, sigma, rho) -> float:
    """Gaussian log-likelihood of residuals under per-cell compound symmetry.

    Uses the closed-form determinant and inverse of
    ``sigma^2 [(1 - rho) I + rho J]``; no matrix is formed.
    """
    m = sizes.astype(float)
    if np.any(1 + (m - 1) * rho <= 0) or rho >= 1:
        return -math.inf
    s2 = sigma * sigma
    ssq = np.bincount(cell_ids, weights=resid * resid, minlength=len(sizes))
    tot = np.bincount(cell_ids, weights=resid, minlength=len(sizes))
    lam = 1 + (m - 1) * rho
    quad = (ssq - rho / lam * tot * tot) / (s2 * (1 - rho))
    logdet = m * math.log(s2) + (m - 1) * math.log1p(-rho) + np.log(lam)
    return float(-0.5 * np.sum(m * math.log(2 * math.pi) + logdet + quad))


def loglik(ds: DegradationDataset, params: MLParams) -> float:
    ids, sizes = ds.cell_index()
    resid = ds.response - mean_path(ds.time_h, ds.temp_c, params)
    return cs_loglik(resid, ids, sizes, params.sigma, params.rho)


def line_from_params(params: MLParams, threshold_pct: float) -> ArrheniusLine:
    p = threshold_pct / 100.0
    beta0 = params.nu0 / LN10 + math.log((1 - p) / p) / (params.gamma * LN10)
    return ArrheniusLine(beta0, params.nu1 / LN10)


def starting_values(ds: DegradationDataset, thresholds=(70.0, 80.0),
                    initial: float | None = None) -> MLParams:
    """Starting values from two least-squares fits at different thresholds."""
    p1, p2 = (float(v) / 100.0 for v in thresholds)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        l1 = fit_ls(ds, 100 * p1, initial=initial).line
        l2 = fit_ls(ds, 100 * p2, initial=initial).line
    k1 = math.log((1 - p1) / p1)
    k2 = math.log((1 - p2) / p2)
    # Compare the two lines at the mean inverse temperature rather than at
    # 1/T = 0; with equal slopes this is the same as comparing intercepts.
    xbar = float(np.mean(inv_kelvin(ds.stress_levels)))
    c1 = l1.beta0 + l1.beta1 * xbar
    c2 = l2.beta0 + l2.beta1 * xbar
    gamma = (k1 - k2) / (LN10 * (c1 - c2)) if c1 != c2 else math.nan
    if not (gamma > 0 and math.isfinite(gamma)):
        warnings.warn("least-squares lines give no usable shape start; using gamma = 1",
                      stacklevel=2)
        gamma = 1.0
    nu1 = LN10 * 0.5 * (l1.beta1 + l2.beta1)
    nu0 = LN10 * c1 - k1 / gamma - nu1 * xbar
    alpha = initial_value(ds, initial)
    ids, sizes = ds.cell_index()
    means = np.bincount(ids, weights=ds.response) / sizes
    resid = ds.response - means[ids]
    dof = max(len(ds) - len(sizes), 1)
    sigma = math.sqrt(float(resid @ resid) / dof) or float(np.std(ds.response))
    return MLParams(alpha, nu0, nu1, gamma, sigma, 0.0)


class _Reparam:
    """Map between natural parameters and the unconstrained search space.

    Coordinates: log alpha, nu0 + nu1 * xbar, nu1, log gamma, log sigma,
    logit rho.  Centering the intercept at the mean inverse temperature
    removes most of the nu0/nu1 correlation.
    """

    def __init__(self, xbar):
        self.xbar = xbar

    def to_internal(self, p: MLParams, rho_floor=0.05):
        rho = max(p.rho, rho_floor)
        return np.array([math.log(p.alpha), p.nu0 + p.nu1 * self.xbar, p.nu1,
                         math.log(p.gamma), math.log(p.sigma),
                         math.log(rho / (1 - rho))])

    def to_natural(self, u):
        rho = 0.5 * (1 + math.tanh(0.5 * u[5]))
        return np.array([math.exp(u[0]), u[1] - u[2] * self.xbar, u[2],
                         math.exp(u[3]), math.exp(u[4]), rho])

    def jacobian(self, u):
        v = self.to_natural(u)
        J = np.zeros((6, 6))
        J[0, 0] = v[0]
        J[1, 1], J[1, 2] = 1.0, -self.xbar
        J[2, 2] = 1.0
        J[3, 3] = v[3]
        J[4, 4] = v[4]
        J[5, 5] = v[5] * (1 - v[5])
        return J


@dataclass
class MLFit:
    params: MLParams
    cov: np.ndarray
    loglik: float
    line: ArrheniusLine
    ti: TIEstimate
    conf_level: float
    threshold_pct: float
    target_time_h: float
    starts: MLParams
    iterations: int
    converged: bool
    rho_on_boundary: bool = False
    grad_max: float = math.nan
    warnings: list = field(default_factory=list)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0, None))

    def param_ci(self, conf_level: float | None = None) -> np.ndarray:
        """Wald intervals; log-scale for alpha, gamma and sigma."""
        return param_ci(self.params.as_array(), self.std,
                        self.conf_level if conf_level is None else conf_level)

    def to_dict(self):
        est, std, ci = self.params.as_array(), self.std, self.param_ci()
        return {
            "parameters": [
                {"name": n, "estimate": float(e), "std": float(s),
                 "lower": float(c[0]), "upper": float(c[1])}
                for n, e, s, c in zip(PARAM_NAMES, est, std, ci)],
            "cov": self.cov.tolist(),
            "loglik": self.loglik,
            "beta0": self.line.beta0,
            "beta1": self.line.beta1,
            "ti": self.ti.to_dict(),
            "conf_level": self.conf_level,
            "threshold_pct": self.threshold_pct,
            "rho_on_boundary": self.rho_on_boundary,
            "iterations": self.iterations,
            "converged": self.converged,
            "warnings": list(self.warnings),
        }


def param_ci(est, std, conf_level, z_decimals: int | None = Z_DECIMALS):
    """Wald intervals, log-scale for the positive parameters.

    The parameter table uses the normal quantile rounded to ``z_decimals``
    places (1.96 at 95%), the convention of the reference summaries; pass
    ``None`` for the exact quantile.
    """
    est = np.asarray(est, dtype=float)
    std = np.asarray(std, dtype=float)
    z = norm.ppf(0.5 + conf_level / 2)
    if z_decimals is not None:
        z = round(z, z_decimals)
    out = np.empty((len(est), 2))
    for i, (e, s) in enumerate(zip(est, std)):
        if POSITIVE[i] and e > 0:
            f = math.exp(z * s / e)
            out[i] = e / f, e * f
        else:
            out[i] = e - z * s, e + z * s
    return out


def _ti_value(theta, threshold_pct, target_time_h):
    p = threshold_pct / 100.0
    nu0, nu1, gamma = theta[1], theta[2], theta[3]
    beta0 = nu0 / LN10 + math.log((1 - p) / p) / (gamma * LN10)
    return (nu1 / LN10) / (math.log10(target_time_h) - beta0) - 273.16


def ti_std(params: MLParams, cov, threshold_pct, target_time_h) -> float:
    theta = params.as_array()
    g = fd_gradient(lambda v: _ti_value(v, threshold_pct, target_time_h), theta)
    g[5] = 0.0  # TI does not depend on rho
    return float(math.sqrt(max(g @ cov @ g, 0.0)))


def ti_confint(fit: MLFit, conf_level: float = 0.95) -> TIEstimate:
    """Normal-approximation interval for the thermal index."""
    if fit.cov is None or not np.all(np.isfinite(fit.cov[:5, :5])):
        raise DataError("fit has no covariance matrix; cannot form an interval")
    if not 0 <= conf_level < 1:
        raise ValueError("confidence level must lie in [0, 1)")
    ti = ti_from_line(fit.line, fit.target_time_h).ti_c
    s = ti_std(fit.params, fit.cov, fit.threshold_pct, fit.target_time_h)
    half = norm.ppf(0.5 + conf_level / 2) * s
    return TIEstimate(ti, fit.target_time_h, s, (ti - half, ti + half), conf_level)


def _covariance(negll_u, u_hat, rep: _Reparam):
    """Covariance of natural parameters from the Hessian in search space."""
    H = fd_hessian(negll_u, u_hat)
    J = rep.jacobian(u_hat)
    rho_hat = rep.to_natural(u_hat)[5]
    boundary = rho_hat < RHO_BOUNDARY
    cov_u = np.full((6, 6), np.nan)
    if boundary:
        # rho is pinned near 0 and the logit direction is flat; invert the
        # remaining block and report rho's raw delta-method value.
        cov_u[:5, :5] = np.linalg.inv(H[:5, :5])
        cov_u[5, :5] = cov_u[:5, 5] = 0.0
        cov_u[5, 5] = 1.0 / H[5, 5] if H[5, 5] > 0 else 0.0
    else:
        cov_u = np.linalg.inv(H)
    cov = J @ cov_u @ J.T
    return 0.5 * (cov + cov.T), H, boundary


def fit_ml(ds: DegradationDataset, threshold_pct: float = 70.0,
           target_time_h: float = 100_000.0, conf_level: float = 0.95,
           starts: MLParams | None = None, fail_thresholds=(70.0, 80.0),
           initial: float | None = None, tol: float = 1e-8,
           max_iter: int = 100_000, max_restarts: int = 8) -> MLFit:
    """Maximum-likelihood fit of the parametric degradation model.

    The search runs Nelder-Mead in an unconstrained parameterization and is
    restarted from its own best point until the log-likelihood stops
    improving, which guards against premature simplex collapse.
    """
    if not 0 < conf_level < 1:
        raise ValueError("confidence level must lie in (0, 1)")
    if not 0 < threshold_pct < 100:
        raise DataError(f"failure threshold must be in (0, 100), got {threshold_pct}")
    notes = []
    if starts is None:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            starts = starting_values(ds, fail_thresholds, initial)
        notes.extend(str(w.message) for w in caught)

    ids, sizes = ds.cell_index()
    x = inv_kelvin(ds.temp_c)
    t, y = ds.time_h, ds.response
    rep = _Reparam(float(np.mean(inv_kelvin(ds.stress_levels))))

    def negll(u):
        a, nu0, nu1, g, s, r = rep.to_natural(u)
        if not (a > 0 and g > 0 and s > 0 and r < 1):
            return math.inf
        with np.errstate(over="ignore", invalid="ignore"):
            mu = a / (1.0 + (t / np.exp(nu0 + nu1 * x)) ** g)
        if not np.all(np.isfinite(mu)):
            return math.inf
        return -cs_loglik(y - mu, ids, sizes, s, r)

    u = rep.to_internal(starts)
    if not math.isfinite(negll(u)):
        raise DataError("log-likelihood is not finite at the starting values")
    best, iters, converged = None, 0, False
    for _ in range(max_restarts):
        res = nelder_mead(negll, u, tol=tol, max_iter=max_iter - iters)
        iters += res.iterations
        improved = best is None or res.value < best.value - 1e-10 * (1 + abs(best.value))
        if best is None or res.value <= best.value:
            best = res
        u = best.point
        converged = res.converged
        if not improved or iters >= max_iter:
            break
    if not converged:
        raise ConvergenceError(
            f"Nelder-Mead did not converge within {max_iter} iterations",
            best=MLParams.from_array(rep.to_natural(best.point)))

    u_hat = best.point
    theta = rep.to_natural(u_hat)
    ll_hat = -best.value
    if theta[5] < RHO_BOUNDARY:
        # The logit map only approaches 0; the constrained maximizer is the
        # boundary itself, so report it exactly.
        theta[5] = 0.0
        ll_hat = cs_loglik(y - mean_path(t, ds.temp_c, MLParams.from_array(theta)),
                           ids, sizes, theta[4], 0.0)
    params = MLParams.from_array(theta)
    grad = fd_gradient(negll, u_hat)
    grad_max = float(np.max(np.abs(grad[:5] if theta[5] < RHO_BOUNDARY else grad)))

    line = line_from_params(params, threshold_pct)
    ti_c = ti_from_line(line, target_time_h).ti_c
    try:
        cov, _, boundary = _covariance(negll, u_hat, rep)
        if np.any(np.diag(cov)[:5] < 0):
            raise np.linalg.LinAlgError("Hessian is not positive definite")
    except (np.linalg.LinAlgError, ValueError) as exc:
        notes.append(f"covariance unavailable: {exc}")
        for n in notes:
            warnings.warn(n, stacklevel=2)
        return MLFit(params, np.full((6, 6), np.nan), ll_hat, line,
                     TIEstimate(ti_c, target_time_h), conf_level,
                     threshold_pct, target_time_h, starts, iters, True,
                     theta[5] < RHO_BOUNDARY, grad_max, notes)
    if boundary:
        notes.append("rho estimate is on the boundary 0; its standard error is "
                     "not reliable")
    fit = MLFit(params, cov, ll_hat, line, TIEstimate(ti_c, target_time_h),
                conf_level, threshold_pct, target_time_h, starts, iters, True,
                boundary, grad_max, notes)
    fit.ti = ti_confint(fit, conf_level)
    for n in notes:
        warnings.warn(n, stacklevel=2)
    return fit
