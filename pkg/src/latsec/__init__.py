"""Stealthy-attack laboratory for 2-DOF vehicle lateral dynamics."""

from .numerics import TimeGrid
from .sim import ChannelTaps, SteeringProfile, Trace, simulate
from .vehicle import (
    TABLE1,
    OutputConfig,
    SaturationLimits,
    StiffnessConvention,
    VehicleParams,
    build_state_space,
    output_map,
)

__version__ = "0.1.0"
