"""Thermal index estimation for accelerated destructive degradation tests."""

__version__ = "0.1.0"

from .arrhenius import (ArrheniusLine, TIEstimate, fit_line, inv_kelvin,  # noqa: E402
                        semi_transform, ti_from_line)
from .dataset import (DegradationDataset, Observation, initial_value,  # noqa: E402
                      load_bundled, load_csv, parse_csv, remap_time_zero)
from .errors import ADDTError, ConvergenceError, DataError  # noqa: E402
from .mlfit import MLFit, MLParams, fit_ml, ti_confint  # noqa: E402
from .semifit import SemiFit, SemiParams, SplineBasis, aicc, bspline_basis, fit_semi  # noqa: E402
from .tradls import LSFit, fit_ls  # noqa: E402

__all__ = [
    "ADDTError", "ArrheniusLine", "ConvergenceError", "DataError",
    "DegradationDataset", "LSFit", "MLFit", "MLParams", "Observation",
    "SemiFit", "SemiParams", "SplineBasis", "TIEstimate", "aicc",
    "bspline_basis", "fit_line", "fit_ls", "fit_ml", "fit_semi",
    "initial_value", "inv_kelvin", "load_bundled", "load_csv", "parse_csv",
    "remap_time_zero", "semi_transform", "ti_confint", "ti_from_line",
]
