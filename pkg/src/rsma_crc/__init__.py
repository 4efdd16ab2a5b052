"""Rate allocation and power control for RSMA communications coexisting with radars."""

from .model import Allocation, TrmpInstance, check_feasibility, objective
from .scenario import Scenario, load_scenario, place_entities, compute_channels

__all__ = [
    "Allocation",
    "TrmpInstance",
    "Scenario",
    "check_feasibility",
    "compute_channels",
    "load_scenario",
    "objective",
    "place_entities",
]
__version__ = "0.1.0"
