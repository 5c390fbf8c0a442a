"""Spectral numerics on H-type groups: Hermite/Laguerre bases, the group
Fourier transform, fan measures and kernels, propagators and mixed norms."""

__version__ = "0.1.0"

from .group_core import HTypeStructure, GroupPoint, DualFrequency, heisenberg, quaternionic
from .gft import SpaceGrid, SpaceField, SpaceTimeField, SpectralCoeffs, LambdaQuadrature, forward, inverse
from .fan import CutoffSpec, FanData
from .norms import MixedNormSpec

__all__ = [
    "__version__",
    "HTypeStructure",
    "GroupPoint",
    "DualFrequency",
    "heisenberg",
    "quaternionic",
    "SpaceGrid",
    "SpaceField",
    "SpaceTimeField",
    "SpectralCoeffs",
    "LambdaQuadrature",
    "forward",
    "inverse",
    "CutoffSpec",
    "FanData",
    "MixedNormSpec",
]
