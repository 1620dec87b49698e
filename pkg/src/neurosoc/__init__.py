"""Timestep-accurate model of a packet-switched spiking-neural-network SoC."""

from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"
__all__ = ["kernel_backend", "__version__"]
