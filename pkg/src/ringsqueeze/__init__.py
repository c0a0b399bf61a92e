"""Simulation of squeezed light generation in coupled microring resonators.

The package models a waveguide-coupled primary ring with an auxiliary ring,
dual-pump four-wave mixing in a five-resonance picture, and Gaussian-state
analysis of the generated signal.
"""

__version__ = "0.1.0"

from .core_model import SystemConfig, load_config, save_config  # noqa: E402,F401
from .errors import RingSqueezeError  # noqa: E402,F401
