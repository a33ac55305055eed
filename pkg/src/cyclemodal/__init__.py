"""Nonlinear modal analysis with a cycle-consistent adversarial network."""

__version__ = "0.1.0"

from .dynamics import (SystemSpec, build_mdof_chain, generate_band_limited_noise,  # noqa: E402
                       integrate, linear_natural_frequencies, simulate)
from .exceptions import NotFittedError, NumericalError  # noqa: E402
from .metrics import dcor_matrix, distance_correlation, nmse, pearson_matrix  # noqa: E402
from .modalgan import CycleGANModal, TrainConfig, decompose, superpose  # noqa: E402
from .selection import SearchConfig, psd_cosine_criterion, run_search  # noqa: E402
from .series import TimeSeriesMatrix  # noqa: E402
from .signal import CovariancePCA, PsdMatrix, SymmetricScaler, welch_psd  # noqa: E402

__all__ = [
    "CovariancePCA", "CycleGANModal", "NotFittedError", "NumericalError", "PsdMatrix",
    "SearchConfig", "SymmetricScaler", "SystemSpec", "TimeSeriesMatrix", "TrainConfig",
    "build_mdof_chain", "dcor_matrix", "decompose", "distance_correlation",
    "generate_band_limited_noise", "integrate", "linear_natural_frequencies", "nmse",
    "pearson_matrix", "psd_cosine_criterion", "run_search", "simulate", "superpose", "welch_psd",
]
