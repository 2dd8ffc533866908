"""Temperature transforms, the Arrhenius temperature-time line and TI."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .dataset import KELVIN_OFFSET

# Reciprocal Boltzmann constant in kelvin per eV, rounded as used for the
# semiparametric stress transform.
INV_BOLTZMANN = 11605.0


def _check_temp(temp_c):
    temp = np.asarray(temp_c, dtype=float)
    if np.any(~(temp > -KELVIN_OFFSET)):
        raise DataError(f"temperature must exceed {-KELVIN_OFFSET} C")
    return temp


def inv_kelvin(temp_c):
    """1 / (T + 273.16) for temperatures in Celsius."""
    temp = _check_temp(temp_c)
    out = 1.0 / (temp + KELVIN_OFFSET)
    return float(out) if out.ndim == 0 else out


def semi_transform(temp_c):
    """-11605 / (T + 273.16); increasing in temperature."""
    temp = _check_temp(temp_c)
    out = -INV_BOLTZMANN / (temp + KELVIN_OFFSET)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ArrheniusLine:
    """log10(failure time) = beta0 + beta1 / (T + 273.16)."""

    beta0: float
    beta1: float

    def __post_init__(self):
        if not self.beta1 > 0:
            warnings.warn(
                f"non-positive Arrhenius slope {self.beta1}: failure time "
                "does not decrease with temperature", stacklevel=3)

    def log10_time(self, temp_c):
        return self.beta0 + self.beta1 * inv_kelvin(temp_c)

    def failure_time(self, temp_c):
        return 10.0 ** self.log10_time(temp_c)

    def to_dict(self):
        return {"beta0": self.beta0, "beta1": self.beta1}


@dataclass(frozen=True)
class TIEstimate:
    ti_c: float
    target_time_h: float = 100_000.0
    std: float | None = None
    ci: tuple[float, float] | None = None
    conf_level: float | None = None

    def __post_init__(self):
        if self.ci is not None:
            lo, hi = self.ci
            if not lo <= self.ti_c <= hi:
                raise ValueError(f"interval {self.ci} does not bracket {self.ti_c}")

    def to_dict(self):
        return {
            "ti_c": self.ti_c,
            "target_time_h": self.target_time_h,
            "std": self.std,
            "ci": list(self.ci) if self.ci is not None else None,
            "conf_level": self.conf_level,
        }


def ti_from_line(line: ArrheniusLine, target_time_h: float = 100_000.0) -> TIEstimate:
    """Temperature (C) at which the line predicts failure at ``target_time_h``."""
    if not target_time_h > 0:
        raise DataError(f"target time must be positive, got {target_time_h}")
    denom = math.log10(target_time_h) - line.beta0
    if denom == 0:
        raise DataError(
            f"degenerate line (beta0={line.beta0}, beta1={line.beta1}): "
            "log10(target time) equals the intercept")
    return TIEstimate(line.beta1 / denom - KELVIN_OFFSET, float(target_time_h))


def fit_line(points) -> ArrheniusLine:
    """Ordinary least squares of log10(failure time) on 1/(T + 273.16).

    Parameters
    ----------
    points : iterable of (temp_c, failure_time_h)
    """
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    temps, times = pts[:, 0], pts[:, 1]
    if len(np.unique(temps)) < 2:
        raise DataError("need failure times at two or more distinct temperatures")
    if np.any(times <= 0):
        raise DataError("failure times must be positive")
    # Sort first so the result does not depend on input order.
    order = np.lexsort((times, temps))
    x = inv_kelvin(temps[order])
    y = np.log10(times[order])
    xc = x - x.mean()
    beta1 = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    beta0 = float(y.mean() - beta1 * x.mean())
    return ArrheniusLine(beta0, beta1)
