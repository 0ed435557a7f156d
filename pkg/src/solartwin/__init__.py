"""Digital twin of a class-AAA LED solar simulator bench.

The package models the complete instrument: an eight-channel LED board with
per-channel dimming laws, the light-tight chamber with its spatial field and
sensors, slow output drift with closed-loop compensation, spectrum fitting
onto band-fraction targets, the grading metrics, and a SCPI front end.
"""

__version__ = "0.1.0"

from .config import (ControlConfig, TwinConfig, config_from_dict,
                     config_hash, config_to_dict, load_config, save_config)
from .control import ExperimentResult, Regulator, run_lti, run_scan, run_sti
from .fitting import (FitProblem, FitResult, PresetCache, Unachievable,
                      channel_bin_matrix, fit_am15g, fit_duties)
from .lightboard import ChannelSet, LedChannel, default_board
from .spectral import (AM15G_BIN_FRACTIONS, BIN_EDGES_NM,
                       ClassificationResult, Spectrum, SpectralMatch,
                       bin_fractions, bin_irradiances, classify_overall,
                       instability, lux_from_spectrum, nonuniformity,
                       nonuniformity_class, spectral_match)
from .system import Testbed

__all__ = [
    "__version__",
    "AM15G_BIN_FRACTIONS",
    "BIN_EDGES_NM",
    "ChannelSet",
    "ClassificationResult",
    "ControlConfig",
    "ExperimentResult",
    "FitProblem",
    "FitResult",
    "LedChannel",
    "PresetCache",
    "Regulator",
    "Spectrum",
    "SpectralMatch",
    "Testbed",
    "TwinConfig",
    "Unachievable",
    "bin_fractions",
    "bin_irradiances",
    "channel_bin_matrix",
    "classify_overall",
    "config_from_dict",
    "config_hash",
    "config_to_dict",
    "default_board",
    "fit_am15g",
    "fit_duties",
    "instability",
    "load_config",
    "lux_from_spectrum",
    "nonuniformity",
    "nonuniformity_class",
    "run_lti",
    "run_scan",
    "run_sti",
    "save_config",
    "spectral_match",
]
