"""Traditional two-step least-squares method.

Each temperature level gets a polynomial (cubic when enough time points
exist) fitted to its cell means, with the time-0 cell shared by every
level.  The time at which the polynomial first drops to the failure
threshold is the level's mean failure time; an Arrhenius line through these
times gives the thermal index.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .arrhenius import ArrheniusLine, TIEstimate, fit_line, ti_from_line
from .dataset import DegradationDataset, initial_value
from .errors import DataError
from .numopt import bisect, polyfit

SCAN_POINTS = 10_000
EXTRAPOLATION_FACTOR = 10.0


@dataclass(frozen=True)
class PolyFit:
    temp_c: float
    coeffs: tuple  # (a0, a1, a2, a3), increasing powers of time
    degree: int
    t_max: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.polynomial.polynomial.polyval(t, self.coeffs)


@dataclass
class LSFit:
    polyfits: list
    failure_times: list  # (temp_c, m_i)
    line: ArrheniusLine
    ti: TIEstimate
    threshold_pct: float
    y_f: float
    initial_value: float
    excluded: list = field(default_factory=list)
    extrapolated: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def display_ti(self) -> int:
        return int(round(self.ti.ti_c))

    def to_dict(self):
        return {
            "beta0": self.line.beta0,
            "beta1": self.line.beta1,
            "ti": self.ti.to_dict(),
            "ti_display": self.display_ti,
            "threshold_pct": self.threshold_pct,
            "y_f": self.y_f,
            "initial_value": self.initial_value,
            "interpolation_times": [
                {"temp_c": t, "time_h": m} for t, m in self.failure_times],
            "polynomials": [
                {"temp_c": p.temp_c, "degree": p.degree, "coeffs": list(p.coeffs)}
                for p in self.polyfits],
            "excluded_levels": list(self.excluded),
            "extrapolated_levels": list(self.extrapolated),
            "warnings": list(self.warnings),
        }


def _level_means(ds: DegradationDataset, level: float):
    """Cell means for one level, with the time-0 cell pooled over all temps."""
    zero = ds.time_h == 0
    times, means = [], []
    if zero.any():
        times.append(0.0)
        means.append(float(np.mean(ds.response[zero])))
    rows = (ds.temp_c == level) & ~zero
    for t in np.unique(ds.time_h[rows]):
        times.append(float(t))
        means.append(float(np.mean(ds.response[rows & (ds.time_h == t)])))
    return np.array(times), np.array(means)


def fit_polynomials(ds: DegradationDataset) -> list[PolyFit]:
    """Per-level least-squares polynomials of degree min(3, #times - 1)."""
    fits = []
    for level in ds.stress_levels:
        t, y = _level_means(ds, level)
        if len(t) < 2:
            warnings.warn(f"level {level} C has fewer than two time points; dropped",
                          stacklevel=2)
            continue
        degree = min(3, len(t) - 1)
        coef = np.zeros(4)
        coef[:degree + 1] = polyfit(t, y, degree)
        fits.append(PolyFit(float(level), tuple(float(c) for c in coef),
                            degree, float(t.max())))
    if not fits:
        raise DataError("no temperature level has two or more time points")
    return fits


def crossing_time(fit: PolyFit, y_f: float, t_max: float | None = None,
                  extrapolate: float = EXTRAPOLATION_FACTOR):
    """First time t > 0 at which the polynomial reaches ``y_f``.

    The range [0, t_max] is scanned on a 10^4-point grid for a sign change,
    which is then refined by bisection.  If nothing is found, the scan is
    repeated out to ``extrapolate * t_max``.

    Returns
    -------
    (time, extrapolated) or None when the threshold is never reached.
    """
    t_max = fit.t_max if t_max is None else t_max

    def g(t):
        return float(fit(t)) - y_f

    for horizon, extrap in ((t_max, False), (extrapolate * t_max, True)):
        grid = np.linspace(0.0, horizon, SCAN_POINTS + 1)
        vals = fit(grid) - y_f
        # Skip t = 0 itself: a root there is not a failure.
        sign = np.sign(vals)
        hits = np.nonzero(sign[1:] == 0)[0]
        flips = np.nonzero(sign[1:-1] * sign[2:] < 0)[0]
        first_flip = flips[0] + 1 if len(flips) else None
        first_zero = hits[0] + 1 if len(hits) else None
        if sign[0] * sign[1] < 0:
            return bisect(g, 0.0, grid[1]), extrap
        if first_zero is not None and (first_flip is None or first_zero <= first_flip):
            return float(grid[first_zero]), extrap
        if first_flip is not None:
            i = first_flip
            return bisect(g, grid[i], grid[i + 1]), extrap
    return None


def fit_ls(ds: DegradationDataset, threshold_pct: float = 70.0,
           target_time_h: float = 100_000.0, initial: float | None = None) -> LSFit:
    """Traditional method: polynomial interpolation, then an Arrhenius line."""
    if not 0 < threshold_pct < 100:
        raise DataError(f"failure threshold must be in (0, 100), got {threshold_pct}")
    init = initial_value(ds, initial)
    y_f = threshold_pct / 100.0 * init
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        polys = fit_polynomials(ds)
    notes.extend(str(w.message) for w in caught)

    times, excluded, extrapolated, used = [], [], [], []
    for poly in polys:
        hit = crossing_time(poly, y_f)
        if hit is None:
            excluded.append(poly.temp_c)
            notes.append(f"level {poly.temp_c:g} C never reaches the threshold; excluded")
            continue
        m, extrap = hit
        if m <= 0:
            excluded.append(poly.temp_c)
            continue
        if extrap:
            extrapolated.append(poly.temp_c)
            notes.append(f"level {poly.temp_c:g} C failure time extrapolated beyond data")
        times.append((poly.temp_c, m))
        used.append(poly)
    if len(times) < 2:
        raise DataError(
            "fewer than two temperature levels reach the failure threshold; "
            "try a different threshold")
    line = fit_line(times)
    ti = ti_from_line(line, target_time_h)
    for n in notes:
        warnings.warn(n, stacklevel=2)
    return LSFit(polys, times, line, ti, float(threshold_pct), y_f, init,
                 excluded, extrapolated, notes)
