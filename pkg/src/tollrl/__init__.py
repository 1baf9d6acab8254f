"""Day-to-day bottleneck traffic simulation and distributed DDPG congestion pricing."""

from .network import BehaviorParams, Bottleneck, Network, ODPair, Route, validate_network
from .within_day import BACKEND, DayRecord, simulate_day

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BehaviorParams", "Bottleneck", "DayRecord", "Network", "ODPair", "Route",
    "simulate_day", "validate_network", "__version__",
]
