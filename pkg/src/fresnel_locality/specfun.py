"""Scalar special functions for analytic Fresnel propagation.

Fresnel integrals use the convention C(x) = int_0^x cos(pi t^2 / 2) dt and
S(x) = int_0^x sin(pi t^2 / 2) dt. All functions accept scalars or arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy import special

SQRT_PI = float(np.sqrt(np.pi))


@dataclass(frozen=True)
class FresnelCS:
    """Values of the Fresnel integrals C and S."""

    c: np.ndarray | float
    s: np.ndarray | float


def _finite(x: ArrayLike, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value


def _unwrap(arr: np.ndarray):
    return arr[()] if arr.ndim == 0 else arr


def fresnel_cs(x: ArrayLike) -> FresnelCS:
    """Return the Fresnel integrals (C(x), S(x))."""
    arr = _finite(x)
    s, c = special.fresnel(arr)
    return FresnelCS(c=_unwrap(np.asarray(c)), s=_unwrap(np.asarray(s)))


def theta_tilde(x: ArrayLike) -> np.ndarray | complex:
    """Propagated Heaviside edge profile.

    D(1_{x >= 0})(y) = theta_tilde(f^{1/2} y) for the propagator with Fresnel
    number f.
    """
    arr = _finite(x)
    s, c = special.fresnel(-arr / SQRT_PI)
    return _unwrap(0.5 - 0.5 * (1 - 1j) * (c + 1j * s))


def iota_tilde(f_delta: float, x: ArrayLike) -> np.ndarray | complex:
    """Propagated interval profile: D(1_{[-D, D]})(y) = iota_tilde(D^2 f, f^{1/2} y)."""
    root = np.sqrt(_positive(f_delta, "f_delta"))
    arr = _finite(x)
    return _unwrap(np.asarray(theta_tilde(arr + root) - theta_tilde(arr - root)))


def theta_tilde_diff(f_delta: float, x: ArrayLike) -> np.ndarray | complex:
    """Difference profile theta_tilde(x) - theta_tilde(x - f_delta^{1/2})."""
    root = np.sqrt(_positive(f_delta, "f_delta"))
    arr = _finite(x)
    return _unwrap(np.asarray(theta_tilde(arr) - theta_tilde(arr - root)))


def gaussian_tail(t: ArrayLike) -> np.ndarray | float:
    """Complementary error function erfc(t)."""
    return _unwrap(np.asarray(special.erfc(_finite(t, "t"))))
