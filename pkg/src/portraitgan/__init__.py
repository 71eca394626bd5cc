"""Vibration-signal fault detection with image portraits, per-class GANs and a CNN."""

from .dataset import BehaviorClass
from .errors import ConfigError, DataError, NumericError, PortraitGanError
from .portrait import Portrait, PortraitKind

__version__ = "0.1.0"

__all__ = [
    "BehaviorClass",
    "ConfigError",
    "DataError",
    "NumericError",
    "Portrait",
    "PortraitGanError",
    "PortraitKind",
    "__version__",
]
