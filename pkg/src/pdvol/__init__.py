"""Path-dependent volatility toolkit.

Volatility is an affine function of two weighted integrals of past price
moves: a trend feature (kernel-weighted past returns) and an activity
feature (kernel-weighted past squared returns).  The package provides the
kernel families, well-posedness and positivity checks for the induced
stochastic Volterra equation, two simulation schemes, empirical feature
construction from daily price series, and kernel/beta calibration, behind
both a CLI and an HTTP service.
"""

from pdvol.assumptions import AssumptionReport, CheckEntry, full_report
from pdvol.calibrate import (
    CalibrationError,
    CalibrationResult,
    CalibrationSpec,
    calibrate,
    fit_betas,
    objective,
)
from pdvol.features import (
    DataError,
    FeaturePath,
    MarketDataset,
    PriceSeries,
    align,
    compute_features,
    load_prices,
    load_proxy,
)
from pdvol.kernels import (
    Exponential,
    ExponentialCombo,
    Kernel,
    KernelError,
    ShiftedPower,
    TimeShiftedPowerLaw,
    parse_kernel,
    serialize_kernel,
    tspl_normalization,
)
from pdvol.model import HistorySegment, ModelParams
from pdvol.simulate import (
    EnsembleSummary,
    GateError,
    SimConfig,
    SimPath,
    SimulationError,
    monte_carlo,
    simulate_path,
)

__all__ = [
    "AssumptionReport",
    "CalibrationError",
    "CalibrationResult",
    "CalibrationSpec",
    "CheckEntry",
    "DataError",
    "EnsembleSummary",
    "Exponential",
    "ExponentialCombo",
    "FeaturePath",
    "GateError",
    "HistorySegment",
    "Kernel",
    "KernelError",
    "MarketDataset",
    "ModelParams",
    "PriceSeries",
    "ShiftedPower",
    "SimConfig",
    "SimPath",
    "SimulationError",
    "TimeShiftedPowerLaw",
    "align",
    "calibrate",
    "compute_features",
    "fit_betas",
    "full_report",
    "load_prices",
    "load_proxy",
    "monte_carlo",
    "objective",
    "parse_kernel",
    "serialize_kernel",
    "simulate_path",
    "tspl_normalization",
]

__version__ = "0.1.0"
