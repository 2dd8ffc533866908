"""Small deterministic numerical kernel used by the fitting modules.

Everything here is derivative free or uses central finite differences.
No routine draws random numbers, so identical inputs give identical
outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class OptimResult:
    point: np.ndarray
    value: float
    iterations: int
    converged: bool
    evaluations: int = 0
    trace: list = field(default=None, repr=False)


def _safe(objective):
    def f(x):
        v = objective(x)
        v = float(v)
        return v if math.isfinite(v) else math.inf
    return f


def nelder_mead(objective: Callable, start, tol: float = 1e-8,
                max_iter: int = 100_000, step=None, ftol: float | None = None,
                keep_trace: bool = False) -> OptimResult:
    """Minimize ``objective`` with the Nelder-Mead simplex method.

    Coefficients are the classic ones: reflection 1, expansion 2,
    contraction 0.5 and shrink 0.5.  Iteration stops once both the spread of
    objective values and the simplex diameter, each taken relative to the
    best vertex, fall below their tolerances.

    Parameters
    ----------
    objective : callable
        Maps a 1-D array to a float.  Non-finite values are treated as +inf,
        so infeasible regions can be signalled by returning ``inf`` or nan.
    start : array-like
        Starting point; must give a finite objective.
    tol : float
        Relative tolerance on the simplex diameter.
    max_iter : int
        Iteration cap.  When hit, the best vertex is returned with
        ``converged=False``.
    step : float or array-like, optional
        Edge lengths of the initial simplex.  Defaults to 5% of each
        coordinate (0.00025 for zero coordinates).
    ftol : float, optional
        Relative tolerance on the objective spread; defaults to ``tol``.
    """
    f = _safe(objective)
    x0 = np.asarray(start, dtype=float).ravel().copy()
    n = x0.size
    f0 = f(x0)
    if not math.isfinite(f0):
        raise ValueError("objective is not finite at the starting point")
    ftol = tol if ftol is None else ftol

    if step is None:
        steps = np.where(x0 != 0, 0.05 * np.abs(x0), 0.00025)
    else:
        steps = np.broadcast_to(np.asarray(step, dtype=float), (n,)).copy()
    simplex = np.empty((n + 1, n))
    simplex[0] = x0
    for i in range(n):
        simplex[i + 1] = x0
        simplex[i + 1, i] += steps[i]
    fvals = np.empty(n + 1)
    fvals[0] = f0
    for i in range(1, n + 1):
        fvals[i] = f(simplex[i])
    nfev = n + 1
    trace = [] if keep_trace else None

    it = 0
    converged = False
    while it < max_iter:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        if keep_trace:
            trace.append((simplex[0].copy(), fvals[0]))
        fspread = fvals[-1] - fvals[0]
        scale_x = max(1.0, float(np.max(np.abs(simplex[0]))))
        diam = float(np.max(np.abs(simplex[1:] - simplex[0])))
        if (fspread <= ftol * (abs(fvals[0]) + ftol)
                and diam <= tol * scale_x):
            converged = True
            break
        it += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + (centroid - worst)
        fr = f(xr)
        nfev += 1
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = f(xe)
            nfev += 1
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = f(xc)
            nfev += 1
            if fc <= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (worst - centroid)
            fc = f(xc)
            nfev += 1
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
                continue
        best = simplex[0]
        for i in range(1, n + 1):
            simplex[i] = best + 0.5 * (simplex[i] - best)
            fvals[i] = f(simplex[i])
        nfev += n

    i = int(np.argmin(fvals))
    return OptimResult(simplex[i].copy(), float(fvals[i]), it, converged,
                       nfev, trace)


def golden_section(f: Callable[[float], float], lo: float, hi: float,
                   tol: float = 1e-6, max_iter: int = 500) -> OptimResult:
    """Minimize a unimodal scalar function on [lo, hi].

    Stops when the bracket is narrower than ``tol * max(1, |x|)``.
    """
    if not hi > lo:
        raise ValueError(f"empty bracket [{lo}, {hi}]")
    f = _safe(f)
    a, b = float(lo), float(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while (b - a) > tol * max(1.0, abs(c)) and it < max_iter:
        it += 1
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    # Endpoints are candidates too: the minimum may sit on the boundary.
    cands = [(fc, c), (fd, d)]
    for x in (float(lo), float(hi)):
        if abs(x - c) <= (b - a) + tol or abs(x - d) <= (b - a) + tol:
            cands.append((f(x), x))
    fbest, xbest = min(cands)
    return OptimResult(np.array([xbest]), fbest, it,
                       (b - a) <= tol * max(1.0, abs(c)), it + 2)


def bisect(f: Callable[[float], float], lo: float, hi: float,
           rtol: float = 1e-12, max_iter: int = 500) -> float:
    """Root of ``f`` in [lo, hi] by bisection; requires a sign change."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return float(lo)
    if fhi == 0:
        return float(hi)
    if flo * fhi > 0:
        raise ValueError(f"no sign change on [{lo}, {hi}]")
    a, b = float(lo), float(hi)
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0 or (b - a) <= rtol * max(abs(a), abs(b), 1e-300):
            return m
        if (fm < 0) == (flo < 0):
            a, flo = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def _steps(x, rel_step):
    return rel_step * np.maximum(np.abs(x), 1.0)


def fd_gradient(objective: Callable, point, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient with steps ``rel_step * max(|x|, 1)``."""
    x = np.asarray(point, dtype=float).ravel()
    h = _steps(x, rel_step)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        fp, fm = objective(x + e), objective(x - e)
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise ValueError(f"non-finite objective when perturbing coordinate {i}")
        g[i] = (fp - fm) / (2 * h[i])
    return g


def fd_hessian(objective: Callable, point, rel_step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian, symmetrized as (H + H^T) / 2.

    Second differences lose about half the available digits, hence the
    larger default step than :func:`fd_gradient`.
    """
    x = np.asarray(point, dtype=float).ravel()
    n = x.size
    h = _steps(x, rel_step)

    def ev(dx, label):
        v = float(objective(x + dx))
        if not math.isfinite(v):
            raise ValueError(f"non-finite objective at perturbation {label}")
        return v

    f0 = ev(np.zeros(n), "0")
    H = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        H[i, i] = (ev(ei, f"+e{i}") - 2 * f0 + ev(-ei, f"-e{i}")) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            val = (ev(ei + ej, f"+e{i}+e{j}") - ev(ei - ej, f"+e{i}-e{j}")
                   - ev(-ei + ej, f"-e{i}+e{j}") + ev(-ei - ej, f"-e{i}-e{j}"))
            H[i, j] = H[j, i] = val / (4 * h[i] * h[j])
    return 0.5 * (H + H.T)


def polyfit(x, y, degree: int) -> np.ndarray:
    """Least-squares polynomial coefficients in increasing power order."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scale = float(np.max(np.abs(x))) or 1.0
    V = np.vander(x / scale, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, y, rcond=None)
    return coef / scale ** np.arange(degree + 1)


@dataclass
class MonotoneResult:
    coef: np.ndarray
    rss: float
    kkt_residual: float
    active: np.ndarray


def _whiten(design, response, weights):
    if weights is None:
        return design, response
    w = np.asarray(weights, dtype=float)
    if w.ndim == 1:
        s = np.sqrt(w)
        return design * s[:, None], response * s
    U = np.linalg.cholesky(w).T
    return U @ design, U @ response


def monotone_lsq(design, response, weights=None, tol: float | None = None,
                 max_iter: int | None = None) -> MonotoneResult:
    """Least squares with nonincreasing coefficients.

    Minimizes ``(y - B c)' W (y - B c)`` subject to ``c[0] >= c[1] >= ...``.
    The coefficients are written as a free first value minus nonnegative
    decrements, and the resulting bound-constrained problem is solved by a
    Lawson-Hanson active-set iteration.

    Parameters
    ----------
    design : (n, p) array
    response : (n,) array
    weights : None, (n,) array of weights, or (n, n) precision matrix
    """
    B, y = _whiten(np.asarray(design, dtype=float),
                   np.asarray(response, dtype=float), weights)
    n, p = B.shape
    if np.linalg.matrix_rank(B) < p:
        raise np.linalg.LinAlgError("design matrix is rank deficient")
    L = np.tril(-np.ones((p, p)))
    L[:, 0] = 1.0
    A = B @ L
    if tol is None:
        tol = 10 * np.finfo(float).eps * np.linalg.norm(A, 1) * max(n, p)
    max_iter = max_iter or 30 * p

    theta = np.zeros(p)
    passive = np.zeros(p, dtype=bool)
    passive[0] = True

    def solve(mask):
        z = np.zeros(p)
        z[mask], *_ = np.linalg.lstsq(A[:, mask], y, rcond=None)
        return z

    theta = solve(passive)
    for _ in range(max_iter):
        w = A.T @ (y - A @ theta)
        cand = ~passive & (w > tol)
        cand[0] = False
        if not cand.any():
            break
        j = int(np.argmax(np.where(cand, w, -np.inf)))
        passive[j] = True
        for _ in range(max_iter):
            z = solve(passive)
            bad = passive.copy()
            bad[0] = False
            bad &= z <= 0
            if not bad.any():
                theta = z
                break
            ratio = theta[bad] / (theta[bad] - z[bad])
            alpha = float(np.min(ratio))
            theta = theta + alpha * (z - theta)
            drop = passive.copy()
            drop[0] = False
            drop &= theta <= tol
            theta[drop] = 0.0
            passive &= ~drop
    theta[1:] = np.maximum(theta[1:], 0.0)
    # Sequential subtraction keeps the ordering exact in floating point.
    coef = np.empty(p)
    coef[0] = theta[0]
    for l in range(1, p):
        coef[l] = coef[l - 1] - theta[l]
    resid = y - B @ coef
    grad = (A.T @ resid)
    kkt = float(max(abs(grad[0]),
                    np.max(np.abs(np.where(theta[1:] > 0, grad[1:], 0.0)), initial=0.0),
                    np.max(np.maximum(grad[1:], 0.0), initial=0.0)))
    kkt /= float(np.linalg.norm(A, 2) * np.linalg.norm(y)) or 1.0
    return MonotoneResult(coef, float(resid @ resid), kkt, ~passive[1:])
