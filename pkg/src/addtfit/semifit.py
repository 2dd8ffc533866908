"""Semiparametric method: monotone B-spline baseline on an Arrhenius clock.

The mean response at temperature level i and time t is ``g(eta)`` with
scaled time ``eta = t / exp(beta * (x_max - x_i))`` and
``x = -11605 / (T + 273.16)``.  ``g`` is a B-spline whose coefficients are
constrained to be nonincreasing, which makes the fitted path nonincreasing
in time.  ``beta`` is found by maximizing the profile log-likelihood in
which the spline coefficients, ``sigma`` and optionally the within-cell
correlation ``rho`` are solved for at each trial value.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .arrhenius import (INV_BOLTZMANN, ArrheniusLine, TIEstimate,
                        semi_transform, ti_from_line)
from .dataset import DegradationDataset
from .errors import ConvergenceError, DataError
from .numopt import bisect, golden_section, monotone_lsq

LN10 = math.log(10.0)
RHO_MAX = 0.995
BETA_GRID = 101


@dataclass(frozen=True)
class SplineBasis:
    interior_knots: tuple
    boundary: tuple
    degree: int = 3

    def __post_init__(self):
        lo, hi = self.boundary
        knots = tuple(float(k) for k in self.interior_knots)
        object.__setattr__(self, "interior_knots", knots)
        object.__setattr__(self, "boundary", (float(lo), float(hi)))
        if self.degree < 0:
            raise ValueError("spline degree must be nonnegative")
        if not hi > lo:
            raise ValueError(f"empty spline range {self.boundary}")
        if any(b < a for a, b in zip(knots, knots[1:])):
            raise ValueError("interior knots must be nondecreasing")
        if knots and (knots[0] < lo or knots[-1] > hi):
            raise ValueError("interior knots must lie inside the boundary")

    @property
    def size(self) -> int:
        return len(self.interior_knots) + self.degree + 1

    @property
    def knot_vector(self) -> np.ndarray:
        lo, hi = self.boundary
        q = self.degree
        return np.r_[[lo] * (q + 1), self.interior_knots, [hi] * (q + 1)]


def bspline_basis(z, basis: SplineBasis) -> np.ndarray:
    """Evaluate all B-spline basis functions at ``z`` (Cox-de Boor).

    Returns an array of shape ``(p,)`` for scalar ``z`` or ``(len(z), p)``.
    Points outside the boundary are clamped to it with a warning.  The last
    nonempty knot interval is closed on the right, so the basis sums to one
    on the whole closed range.
    """
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=float))
    lo, hi = basis.boundary
    if np.any((z < lo) | (z > hi)):
        warnings.warn("evaluation points outside the spline boundary were clamped",
                      stacklevel=2)
        z = np.clip(z, lo, hi)
    d = basis.knot_vector
    q = basis.degree
    nseg = len(d) - 1
    last = max(i for i in range(nseg) if d[i + 1] > d[i])
    B = np.zeros((len(z), nseg))
    for i in range(nseg):
        if d[i + 1] > d[i]:
            upper = (z <= d[i + 1]) if i == last else (z < d[i + 1])
            B[:, i] = (z >= d[i]) & upper
    for k in range(1, q + 1):
        nxt = np.zeros((len(z), nseg - k))
        for i in range(nseg - k):
            left = d[i + k] - d[i]
            right = d[i + k + 1] - d[i + 1]
            term = np.zeros(len(z))
            if left > 0:
                term += (z - d[i]) / left * B[:, i]
            if right > 0:
                term += (d[i + k + 1] - z) / right * B[:, i + 1]
            nxt[:, i] = term
        B = nxt
    return B[0] if scalar else B


def spline_value(z, basis: SplineBasis, coef):
    out = bspline_basis(z, basis) @ np.asarray(coef, dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def scale_time(t, temp_c, beta: float, x_max: float):
    """Scaled time t / exp(beta * (x_max - x)) on the highest level's clock."""
    s = x_max - semi_transform(temp_c)
    return np.asarray(t, dtype=float) / np.exp(beta * s)


def aicc(loglik: float, k: int, n_obs: int, compat: bool = False) -> float:
    """Small-sample corrected AIC; ``compat`` drops the correction term."""
    if compat:
        return -2.0 * loglik + 2.0 * k
    if n_obs <= k + 1:
        raise ValueError(f"AICc needs n_obs > k + 1 (n_obs={n_obs}, k={k})")
    return -2.0 * loglik + 2.0 * k + 2.0 * k * (k + 1) / (n_obs - k - 1)


def distinct_count(coef, rtol: float = 1e-9) -> int:
    """Number of distinct values in a nonincreasing coefficient vector."""
    c = np.asarray(coef, dtype=float)
    tol = rtol * max(1.0, float(np.max(np.abs(c))))
    return 1 + int(np.sum(np.abs(np.diff(c)) > tol))


def quantile_knots(eta, n_knots: int) -> tuple:
    """Interior knots at equally spaced quantiles of the distinct scaled times."""
    u = np.unique(eta)
    probs = np.arange(1, n_knots + 1) / (n_knots + 1)
    knots = np.unique(np.quantile(u, probs))
    knots = knots[(knots > u[0]) & (knots < u[-1])]
    return tuple(float(k) for k in knots)


@dataclass(frozen=True)
class SemiParams:
    beta: float
    gamma_coeffs: tuple
    sigma: float
    rho: float | None = None

    def __post_init__(self):
        g = np.asarray(self.gamma_coeffs)
        if np.any(np.diff(g) > 0):
            raise ValueError("spline coefficients must be nonincreasing")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")


@dataclass
class SemiFit:
    params: SemiParams
    basis: SplineBasis
    loglik: float
    aicc: float
    loglik_compat: float
    aicc_compat: float
    n_params: int
    line: ArrheniusLine
    ti: TIEstimate
    y_f: float
    t_star: float
    threshold_pct: float
    x_max: float
    n_obs: int
    knots_pinned: bool
    profile: list = field(default_factory=list, repr=False)
    warnings: list = field(default_factory=list)

    def mean(self, t, temp_c):
        """Fitted mean response; nonincreasing in t at every temperature."""
        eta = scale_time(t, temp_c, self.params.beta, self.x_max)
        eta = np.clip(eta, *self.basis.boundary)
        return spline_value(eta, self.basis, self.params.gamma_coeffs)

    def to_dict(self):
        return {
            "betahat": self.params.beta,
            "rho": self.params.rho,
            "sigma": self.params.sigma,
            "spline_coeffs": list(self.params.gamma_coeffs),
            "degree": self.basis.degree,
            "knots": list(self.basis.interior_knots),
            "boundary": list(self.basis.boundary),
            "knots_pinned": self.knots_pinned,
            "loglik": self.loglik,
            "aicc": self.aicc,
            "loglik_compat": self.loglik_compat,
            "aicc_compat": self.aicc_compat,
            "n_params": self.n_params,
            "beta0": self.line.beta0,
            "beta1": self.line.beta1,
            "ti": self.ti.to_dict(),
            "y_f": self.y_f,
            "threshold_pct": self.threshold_pct,
            "warnings": list(self.warnings),
        }


class _Profile:
    """Profile log-likelihood in beta for fixed data and knot settings."""

    def __init__(self, ds, degree, knots, n_knots, with_rho):
        self.t = ds.time_h
        self.y = ds.response
        x = semi_transform(ds.temp_c)
        self.x_max = float(semi_transform(ds.stress_levels.max()))
        self.s = self.x_max - x
        self.ids, self.sizes = ds.cell_index()
        self.m = self.sizes.astype(float)
        self.n = len(self.y)
        self.degree = degree
        self.knots = knots
        self.n_knots = n_knots
        self.with_rho = with_rho

    def basis_at(self, beta):
        eta = self.t / np.exp(beta * self.s)
        hi = float(eta.max())
        knots = self.knots if self.knots is not None else quantile_knots(eta, self.n_knots)
        return eta, SplineBasis(knots, (0.0, hi), self.degree)

    def _solve(self, B, rho):
        if rho == 0.0:
            res = monotone_lsq(B, self.y)
            logdet = 0.0
        else:
            lam = 1 + (self.m - 1) * rho
            a = (1 - np.sqrt((1 - rho) / lam))[self.ids]
            scale = 1.0 / math.sqrt(1 - rho)

            def whiten(v):
                if v.ndim == 1:
                    means = np.bincount(self.ids, weights=v) / self.m
                    return (v - a * means[self.ids]) * scale
                cols = [whiten(v[:, j]) for j in range(v.shape[1])]
                return np.column_stack(cols)

            res = monotone_lsq(whiten(B), whiten(self.y))
            logdet = float(np.sum((self.m - 1) * math.log1p(-rho) + np.log(lam)))
        sigma2 = res.rss / self.n
        ll = -0.5 * self.n * (math.log(2 * math.pi * sigma2) + 1) - 0.5 * logdet
        return ll, res.coef, math.sqrt(sigma2), res.rss, logdet

    def __call__(self, beta):
        """Return (loglik, coef, sigma, rho, basis) at ``beta``."""
        eta, basis = self.basis_at(beta)
        B = bspline_basis(eta, basis)
        if not self.with_rho:
            ll, coef, sigma = self._solve(B, 0.0)[:3]
            return ll, coef, sigma, None, basis
        opt = golden_section(lambda r: -self._solve(B, r)[0], 0.0, RHO_MAX, tol=1e-7)
        rho = float(opt.point[0])
        ll, coef, sigma = self._solve(B, rho)[:3]
        return ll, coef, sigma, rho, basis

    def compat_loglik(self, beta, rho):
        """Log-likelihood with sigma^2 estimated on residual degrees of freedom.

        The variance divisor is n - d, where d counts the distinct values
        among the fitted coefficients (pooled runs of the monotone fit share
        one degree of freedom). Used only for reporting.
        """
        eta, basis = self.basis_at(beta)
        _, coef, _, rss, logdet = self._solve(bspline_basis(eta, basis), rho or 0.0)
        d = distinct_count(coef)
        sigma2 = rss / (self.n - d)
        return (-0.5 * self.n * math.log(2 * math.pi * sigma2)
                - 0.5 * (self.n - d) - 0.5 * logdet)


def _search_beta(prof: _Profile, beta_bounds):
    lo, hi = beta_bounds
    grid = np.linspace(lo, hi, BETA_GRID)
    trace = []
    vals = []
    for b in grid:
        try:
            v = prof(b)[0]
        except np.linalg.LinAlgError:
            v = -math.inf
        vals.append(v)
        trace.append((float(b), v))
    i = int(np.argmax(vals))
    if not math.isfinite(vals[i]):
        raise ConvergenceError("profile likelihood is not finite anywhere on the beta grid")
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]

    def negll(beta):
        try:
            v = prof(beta)[0]
        except np.linalg.LinAlgError:
            return math.inf
        trace.append((float(beta), v))
        return -v

    res = golden_section(negll, a, b, tol=1e-6)
    if not res.converged:
        raise ConvergenceError("beta search did not converge", best=trace)
    beta = float(res.point[0])
    if -res.value < vals[i]:
        beta = float(grid[i])
    return beta, sorted(trace)


def ti_semi(basis: SplineBasis, coef, beta: float, x_max: float, y_f: float,
            target_time_h: float = 100_000.0):
    """Arrhenius line and TI implied by a fitted baseline.

    Solves g(t*) = y_f on the scaled-time range, then converts the
    acceleration factor into log10-hours per inverse kelvin.

    Returns
    -------
    (ArrheniusLine, TIEstimate, t_star)
    """
    lo, hi = basis.boundary

    def g(z):
        return spline_value(min(max(z, lo), hi), basis, coef) - y_f

    if g(lo) < 0 or g(hi) > 0:
        raise DataError(
            "fitted baseline does not cross the failure threshold within the "
            "data range; try a different threshold")
    t_star = bisect(g, lo, hi, rtol=1e-14)
    if t_star <= 0:
        raise DataError("baseline crosses the threshold at time 0; try a lower threshold")
    beta1 = INV_BOLTZMANN * beta / LN10
    beta0 = math.log10(t_star) + beta * x_max / LN10
    line = ArrheniusLine(beta0, beta1)
    return line, ti_from_line(line, target_time_h), t_star


def _fit_with(ds, prof, threshold_pct, target_time_h, beta_bounds, knots_pinned,
              compat_k):
    beta, trace = _search_beta(prof, beta_bounds)
    ll, coef, sigma, rho, basis = prof(beta)
    k = basis.size + 2 + (1 if prof.with_rho else 0)
    y_f = threshold_pct / 100.0 * float(coef[0])
    line, ti, t_star = ti_semi(basis, coef, beta, prof.x_max, y_f, target_time_h)
    params = SemiParams(beta, tuple(float(c) for c in coef), sigma, rho)
    ll_compat = prof.compat_loglik(beta, rho)
    return SemiFit(params, basis, ll, aicc(ll, k, prof.n), ll_compat,
                   aicc(ll_compat, compat_k, prof.n, True),
                   k, line, ti, y_f, t_star, float(threshold_pct), prof.x_max, prof.n,
                   knots_pinned, trace)


def fit_semi(ds: DegradationDataset, threshold_pct: float = 70.0,
             target_time_h: float = 100_000.0, with_rho: bool = False,
             knots=None, degree: int = 3, max_knots: int = 7,
             beta_bounds=None) -> SemiFit:
    """Fit the semiparametric model by profile likelihood in beta.

    Parameters
    ----------
    knots : sequence of float, optional
        Interior knots on the scaled-time axis.  When omitted, knots sit at
        equally spaced quantiles of the distinct scaled times and their
        number (1 to ``max_knots``) is chosen by AICc, ties going to fewer.
    beta_bounds : (lo, hi), optional
        Search range for beta; by default from 0 to the value that shrinks
        the lowest level's clock by a factor of 10^4.
    """
    if not 0 < threshold_pct < 100:
        raise DataError(f"failure threshold must be in (0, 100), got {threshold_pct}")
    top = ds.stress_levels.max()
    span = float(ds.time_h[ds.temp_c == top].max())
    if knots is not None:
        knots = tuple(sorted(float(k) for k in knots))
        if knots and (knots[0] <= 0 or knots[-1] >= span):
            raise DataError(
                f"explicit knots must lie strictly inside (0, {span:g}), the "
                "scaled-time range of the data")
    if beta_bounds is None:
        s_max = float(semi_transform(top) - semi_transform(ds.stress_levels.min()))
        beta_bounds = (0.0, math.log(1e4) / s_max)
    compat_k = 5 + (1 if with_rho else 0)

    if knots is not None:
        prof = _Profile(ds, degree, knots, None, with_rho)
        return _fit_with(ds, prof, threshold_pct, target_time_h, beta_bounds,
                         True, compat_k)

    n_distinct = len(np.unique(ds.time_h[ds.time_h > 0]))
    best, notes = None, []
    for n_knots in range(1, max_knots + 1):
        prof = _Profile(ds, degree, None, n_knots, with_rho)
        try:
            fit = _fit_with(ds, prof, threshold_pct, target_time_h, beta_bounds,
                            False, compat_k)
        except (ConvergenceError, DataError, np.linalg.LinAlgError) as exc:
            if n_knots + degree + 1 > n_distinct * len(ds.stress_levels):
                break
            notes.append(f"{n_knots} knots skipped: {exc}")
            continue
        if best is None or fit.aicc < best.aicc:
            best = fit
    if best is None:
        raise ConvergenceError("no knot configuration could be fitted")
    best.warnings.extend(notes)
    for n in notes:
        warnings.warn(n, stacklevel=2)
    return best
