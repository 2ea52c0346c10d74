"""EIS experiment design toolkit.

Simulate impedance spectra of a generalized Randles cell model, fit the
eleven circuit parameters by weighted complex nonlinear least squares,
bound their variances through the Fisher information matrix, and adjust
measurement frequencies to shrink the joint uncertainty ellipsoid.
"""

from .circuit import (
    N_PARAMETERS,
    PARAMETER_NAMES,
    ParameterVector,
    cpe_impedance,
    ecm_impedance,
    jacobian,
    model_polar,
    zarc_impedance,
)
from .design import (
    AdjustmentStep,
    AdjustmentTrace,
    DesignConfig,
    adjust_frequency,
    run_design,
    sensitivity_scan,
)
from .estimation import (
    FitOptions,
    FitResult,
    fit_wcnls,
    initialize,
    objective_value,
    save_fit_json,
)
from .exceptions import (
    DesignError,
    DomainError,
    EisoptError,
    FitError,
    InitializationError,
    SingularInformationError,
    SpectrumFormatError,
)
from .fixtures import FIXTURES, STATE_A, STATE_B, get_fixture
from .frequency import (
    FrequencyGrid,
    PpdReduction,
    TimeModel,
    log_spaced,
    log_spaced_inclusive,
    reduce_ppd,
    time_model,
    total_time,
)
from .information import (
    FisherMatrix,
    UncertaintyReport,
    crlb,
    eigenvalues,
    ellipsoid_log_volume,
    fisher,
    fisher_contributions,
    lambda_min,
    normalized_volume,
    save_report_json,
    uncertainty_report,
)
from .measurement import (
    ErrorStructure,
    Spectrum,
    load_spectrum,
    save_spectrum,
    sigma_at,
    synthesize,
)

__version__ = "0.1.0"

__all__ = [
    "N_PARAMETERS",
    "PARAMETER_NAMES",
    "ParameterVector",
    "cpe_impedance",
    "ecm_impedance",
    "jacobian",
    "model_polar",
    "zarc_impedance",
    "AdjustmentStep",
    "AdjustmentTrace",
    "DesignConfig",
    "adjust_frequency",
    "run_design",
    "sensitivity_scan",
    "FitOptions",
    "FitResult",
    "fit_wcnls",
    "initialize",
    "objective_value",
    "save_fit_json",
    "DesignError",
    "DomainError",
    "EisoptError",
    "FitError",
    "InitializationError",
    "SingularInformationError",
    "SpectrumFormatError",
    "FIXTURES",
    "STATE_A",
    "STATE_B",
    "get_fixture",
    "FrequencyGrid",
    "PpdReduction",
    "TimeModel",
    "log_spaced",
    "log_spaced_inclusive",
    "reduce_ppd",
    "time_model",
    "total_time",
    "FisherMatrix",
    "UncertaintyReport",
    "crlb",
    "eigenvalues",
    "ellipsoid_log_volume",
    "fisher",
    "fisher_contributions",
    "lambda_min",
    "normalized_volume",
    "save_report_json",
    "uncertainty_report",
    "ErrorStructure",
    "Spectrum",
    "load_spectrum",
    "save_spectrum",
    "sigma_at",
    "synthesize",
    "__version__",
]
