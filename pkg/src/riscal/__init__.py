"""Joint RIS calibration and user positioning: bounds and estimators."""

from .scene import PlanarArray, RisState, Scenario, UserState, Waveform
from .fim import extract_bounds, link_information, multi_user_state_fim
from .estimator import InitSearchConfig, estimate, synthesize_measurement

__all__ = [
    "PlanarArray",
    "RisState",
    "Scenario",
    "UserState",
    "Waveform",
    "extract_bounds",
    "link_information",
    "multi_user_state_fim",
    "InitSearchConfig",
    "estimate",
    "synthesize_measurement",
]
