"""Water-heater demand response for PV hosting capacity on low-voltage feeders."""
from .grid import FeederModel, default_feeder, load_feeder, save_feeder, solve_power_flow
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "FeederModel", "default_feeder", "load_feeder", "save_feeder",
           "solve_power_flow", "__version__"]
