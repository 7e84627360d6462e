"""Real-time simulator of a heavy road vehicle with a 4-joint hydraulic
manipulator under shared human/automation control."""

from .core import (
    ConfigError,
    LqParams,
    ManipulatorParams,
    OperatorCommand,
    SimConfig,
    VehicleParams,
    World,
    load_config,
    serialize_config,
    validate_params,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "LqParams", "ManipulatorParams", "OperatorCommand",
    "SimConfig", "VehicleParams", "World", "load_config", "serialize_config",
    "validate_params", "__version__",
]
