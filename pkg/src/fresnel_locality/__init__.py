"""Locality of Fresnel propagation: leakage filters, spline stability constants,
resolution maps and linearized contrast bounds, with brute-force FFT oracles."""

from __future__ import annotations

from .core import ComplexField, FresnelParams, Grid, propagate_fft
from .geometry import DomainSpec

__all__ = ["ComplexField", "DomainSpec", "FresnelParams", "Grid", "propagate_fft"]
__version__ = "0.1.0"
