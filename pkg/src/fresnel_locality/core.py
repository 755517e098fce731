"""Grids, complex fields, the FFT Fresnel propagator and closed-form propagations.

The propagator with Fresnel number f is the unitary Fourier multiplier
exp(-i|xi|^2 / (2 f)). Its convolution kernel is proportional to
exp(i f |x|^2 / 2), so an edge at the origin maps to theta_tilde(f^{1/2} x).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike

from .geometry import DomainSpec, _points
from .specfun import _positive, iota_tilde, theta_tilde

_MAGIC = b"FLF1"


class WrapAroundError(RuntimeError):
    """Propagated field reaches the periodic grid boundary."""

    def __init__(self, band_energy: float, tolerance: float):
        super().__init__(
            f"boundary-band energy fraction {band_energy:.3e} exceeds {tolerance:.1e}; pad the grid"
        )
        self.band_energy = band_energy
        self.tolerance = tolerance


@dataclass(frozen=True)
class FresnelParams:
    """Modified Fresnel number f and spatial dimension m."""

    f: float
    m: int = 1

    def __post_init__(self) -> None:
        _positive(self.f, "f")
        if self.m not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.m}")

    @property
    def classical_number(self) -> float:
        """Classical Fresnel number f / (2 pi)."""
        return self.f / (2 * np.pi)

    def f_sigma(self, sigma: float) -> float:
        """Fresnel number sigma^2 f associated with the lateral scale sigma."""
        return _positive(sigma, "sigma") ** 2 * self.f


@dataclass(frozen=True)
class Grid:
    """Uniform grid of n points per axis covering a cube of side ``extent``.

    Axis j carries the coordinates offset_j + (i - n // 2) * spacing.
    """

    m: int
    n: int
    extent: float
    offset: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.m not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.m}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        _positive(self.extent, "extent")
        if not self.offset:
            object.__setattr__(self, "offset", (0.0,) * self.m)
        elif len(self.offset) != self.m:
            raise ValueError("offset must have length m")

    @property
    def spacing(self) -> float:
        return self.extent / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.m

    @property
    def xi_max(self) -> float:
        """Nyquist frequency pi n / extent."""
        return np.pi * self.n / self.extent

    def axis(self, j: int = 0) -> np.ndarray:
        return self.offset[j] + (np.arange(self.n) - self.n // 2) * self.spacing

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.axis(j) for j in range(self.m)], indexing="ij")

    def points(self) -> np.ndarray:
        """Grid points as an array of shape (n, ..., n, m)."""
        return np.stack(self.mesh(), axis=-1)

    def frequencies(self, j: int = 0) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n, self.spacing)

    def freq_sq(self) -> np.ndarray:
        """|xi|^2 on the FFT-ordered frequency lattice."""
        k = self.frequencies()
        out = np.zeros(self.shape)
        for j in range(self.m):
            sh = [1] * self.m
            sh[j] = self.n
            out = out + (k**2).reshape(sh)
        return out

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.axis(j)[0] for j in range(self.m)])
        hi = np.array([self.axis(j)[-1] for j in range(self.m)])
        return lo, hi


@dataclass(frozen=True)
class ComplexField:
    """Samples of a complex field on a grid."""

    grid: Grid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=complex)
        if s.shape != self.grid.shape:
            raise ValueError(f"samples shape {s.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "samples", s)

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[[np.ndarray], ArrayLike]) -> ComplexField:
        """Sample ``func`` at the grid points (passed with trailing axis m)."""
        return cls(grid, np.asarray(func(grid.points()), dtype=complex).reshape(grid.shape))

    def norm(self) -> float:
        """Discrete L2 norm sqrt(sum |h|^2 dx^m)."""
        return float(np.sqrt(np.sum(np.abs(self.samples) ** 2) * self.grid.spacing**self.grid.m))

    def real(self) -> ComplexField:
        return ComplexField(self.grid, self.samples.real.astype(complex))


def l2_norm(field: ComplexField) -> float:
    return field.norm()


def fresnel_multiplier(grid: Grid, f: float) -> np.ndarray:
    """Fourier multiplier exp(-i |xi|^2 / (2 f)) in FFT order."""
    return np.exp(-1j * grid.freq_sq() / (2 * _positive(f, "f")))


def boundary_band_fraction(field: ComplexField, band: float = 0.05) -> float:
    """Energy fraction within the outer ``band`` fraction of every axis."""
    n = field.grid.n
    w = max(1, int(np.ceil(band * n)))
    mask = np.zeros(field.grid.shape, dtype=bool)
    for j in range(field.grid.m):
        idx = [slice(None)] * field.grid.m
        idx[j] = np.r_[0:w, n - w:n]
        mask[tuple(idx)] = True
    e = np.abs(field.samples) ** 2
    tot = e.sum()
    return float(e[mask].sum() / tot) if tot > 0 else 0.0


def propagate_fft(
    field: ComplexField,
    params: FresnelParams,
    guard: bool = True,
    tolerance: float = 1e-8,
    band: float = 0.05,
) -> ComplexField:
    """Propagate a sampled field with the discrete Fresnel multiplier.

    With ``guard`` the output must keep less than ``tolerance`` of its energy in
    the outer ``band`` of the grid; otherwise ``WrapAroundError`` is raised.
    """
    if params.m != field.grid.m:
        raise ValueError("dimension mismatch between field and params")
    spec = np.fft.fftn(field.samples)
    out = ComplexField(field.grid, np.fft.ifftn(spec * fresnel_multiplier(field.grid, params.f)))
    if guard:
        frac = boundary_band_fraction(out, band)
        if frac > tolerance:
            raise WrapAroundError(frac, tolerance)
    return out


def propagate_axis(field: ComplexField, f: float, axis: int) -> ComplexField:
    """One-dimensional quasi-propagator acting along a single axis."""
    k = field.grid.frequencies()
    mult = np.exp(-1j * k**2 / (2 * _positive(f, "f")))
    sh = [1] * field.grid.m
    sh[axis] = field.grid.n
    spec = np.fft.fft(field.samples, axis=axis) * mult.reshape(sh)
    return ComplexField(field.grid, np.fft.ifft(spec, axis=axis))


def compose_fresnel(f1: float, f2: float) -> float:
    """Fresnel number of two successive propagations: 1/f = 1/f1 + 1/f2."""
    return 1.0 / (1.0 / _positive(f1, "f1") + 1.0 / _positive(f2, "f2"))


def pad(field: ComplexField, factor: int = 2) -> ComplexField:
    """Zero-pad to ``factor`` times the grid size, keeping spacing and coordinates."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    g = field.grid
    n2 = g.n * factor
    g2 = Grid(g.m, n2, g.extent * factor, g.offset)
    out = np.zeros(g2.shape, dtype=complex)
    start = n2 // 2 - g.n // 2
    out[(slice(start, start + g.n),) * g.m] = field.samples
    return ComplexField(g2, out)


def propagate_adaptive(
    field: ComplexField,
    params: FresnelParams,
    tolerance: float = 1e-8,
    max_doublings: int = 6,
) -> ComplexField:
    """Propagate, doubling the padding until the wrap-around guard passes."""
    cur = field
    for _ in range(max_doublings + 1):
        try:
            return propagate_fft(cur, params, guard=True, tolerance=tolerance)
        except WrapAroundError as err:
            last = err
            cur = pad(cur, 2)
    raise last


# Gaussian beams and wave packets -------------------------------------------

def gaussian(x: ArrayLike, sigma: float, m: int) -> np.ndarray:
    """Normalized Gaussian p_sigma evaluated at points of shape (..., m)."""
    xv = _points(x, m)
    r2 = np.sum(xv**2, axis=-1)
    return (2 * np.pi * sigma**2) ** (-m / 2) * np.exp(-r2 / (2 * sigma**2))


@dataclass(frozen=True)
class GaussianBeam:
    """Propagated Gaussian p_sigma.

    D(p_sigma)(x) = (sigma_prop/sigma)^{m/2} c0 exp(i|x|^2/(2 eta_sq)) p_{sigma_prop}(x).
    """

    sigma: float
    sigma_prop: float
    eta_sq: float
    amplitude_phase: complex
    f: float
    m: int

    def __call__(self, x: ArrayLike) -> np.ndarray:
        xv = _points(x, self.m)
        r2 = np.sum(xv**2, axis=-1)
        amp = (self.sigma_prop / self.sigma) ** (self.m / 2) * self.amplitude_phase
        return amp * np.exp(1j * r2 / (2 * self.eta_sq)) * gaussian(xv, self.sigma_prop, self.m)


def propagate_gaussian(sigma: float, params: FresnelParams) -> GaussianBeam:
    """Closed-form propagation of the normalized Gaussian of width sigma.

    The unit factor c0 is (|a|/a)^{m/2} with a = sigma^2 + i/f on the principal
    branch, which tends to 1 as f grows.
    """
    sigma = _positive(sigma, "sigma")
    f = params.f
    eta_sq = (1 + sigma**4 * f**2) / f
    sigma_prop = np.sqrt(eta_sq / (sigma**2 * f))
    a = sigma**2 + 1j / f
    c0 = np.sqrt(abs(a) / a) ** params.m
    return GaussianBeam(sigma, float(sigma_prop), float(eta_sq), complex(c0), f, params.m)


@dataclass(frozen=True)
class WavePacket:
    """Gaussian wave packet e^{i xi.(x-a)} p_sigma(x-a), or its real counterpart
    cos(xi.(x-a) + beta) p_sigma(x-a)."""

    xi: tuple[float, ...]
    a: tuple[float, ...]
    sigma: float
    beta: float = 0.0
    kind: str = "complex"

    def __post_init__(self) -> None:
        if len(self.xi) != len(self.a):
            raise ValueError("xi and a must have the same length")
        _positive(self.sigma, "sigma")
        if self.kind not in ("complex", "real"):
            raise ValueError("kind must be 'complex' or 'real'")
        if not 0 <= self.beta < 2 * np.pi:
            raise ValueError("beta must lie in [0, 2 pi)")

    @property
    def m(self) -> int:
        return len(self.xi)

    def __call__(self, x: ArrayLike) -> np.ndarray:
        xv = _points(x, self.m) - np.asarray(self.a)
        ph = xv @ np.asarray(self.xi)
        env = gaussian(xv, self.sigma, self.m)
        if self.kind == "complex":
            return np.exp(1j * ph) * env
        return np.cos(ph + self.beta) * env

    def centers(self, f: float) -> list[np.ndarray]:
        """Propagated centers a + xi/f (and a - xi/f for real packets)."""
        a, xi = np.asarray(self.a), np.asarray(self.xi)
        if self.kind == "complex":
            return [a + xi / f]
        return [a + xi / f, a - xi / f]


def _shifted_packet(beam: GaussianBeam, xi: np.ndarray, a: np.ndarray, x: np.ndarray) -> np.ndarray:
    f = beam.f
    ph = np.exp(-1j * (xi @ xi) / (2 * f)) * np.exp(1j * ((x - a) @ xi))
    return ph * beam(x - a - xi / f)


def propagate_wave_packet(packet: WavePacket, params: FresnelParams) -> Callable[[ArrayLike], np.ndarray]:
    """Closed-form evaluator of the propagated wave packet.

    A complex packet travels to a + xi/f with envelope p_{sigma_prop}; a real
    packet splits into the two halves travelling to a + xi/f and a - xi/f.
    """
    if packet.m != params.m:
        raise ValueError("dimension mismatch between packet and params")
    beam = propagate_gaussian(packet.sigma, params)
    xi, a = np.asarray(packet.xi), np.asarray(packet.a)

    def evaluate(x: ArrayLike) -> np.ndarray:
        xv = _points(x, params.m)
        if packet.kind == "complex":
            return _shifted_packet(beam, xi, a, xv)
        b = packet.beta
        return 0.5 * (np.exp(1j * b) * _shifted_packet(beam, xi, a, xv)
                      + np.exp(-1j * b) * _shifted_packet(beam, -xi, a, xv))

    return evaluate


def freq_shift_identity_residual(
    field: ComplexField, xi: ArrayLike, params: FresnelParams, interpolate: bool = True
) -> float:
    """Relative residual of D(e_xi h) = m_f(xi) e_xi D(h)(. - xi/f) on the grid.

    Shifts by xi/f that are whole multiples of the spacing use exact index
    shifts; other shifts use a Fourier phase ramp if ``interpolate`` is set.
    """
    g = field.grid
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.size != g.m:
        raise ValueError("xi must have length m")
    pts = g.points()
    e = np.exp(1j * (pts @ xi))
    lhs = propagate_fft(ComplexField(g, e * field.samples), params, guard=False).samples
    dh = propagate_fft(field, params, guard=False).samples
    steps = xi / params.f / g.spacing
    if np.allclose(steps, np.round(steps), atol=1e-9):
        shifted = np.roll(dh, tuple(int(s) for s in np.round(steps)), axis=tuple(range(g.m)))
    elif interpolate:
        spec = np.fft.fftn(dh)
        k = g.frequencies()
        for j in range(g.m):
            sh = [1] * g.m
            sh[j] = g.n
            spec = spec * np.exp(-1j * k * xi[j] / params.f).reshape(sh)
        shifted = np.fft.ifftn(spec)
    else:
        raise ValueError("shift xi/f is not a multiple of the grid spacing")
    rhs = np.exp(-1j * (xi @ xi) / (2 * params.f)) * e * shifted
    den = np.linalg.norm(lhs)
    return float(np.linalg.norm(lhs - rhs) / den) if den > 0 else 0.0


# Indicator propagation -----------------------------------------------------

def propagate_indicator(domain: DomainSpec, params: FresnelParams) -> Callable[[ArrayLike], np.ndarray]:
    """Closed-form evaluator of the propagated indicator of ``domain``.

    Supports half-spaces, intervals, stripes, axis-aligned boxes and their
    complements.
    """
    if domain.m != params.m:
        raise ValueError("dimension mismatch between domain and params")
    sf = np.sqrt(params.f)
    kind = domain.kind
    if kind == "complement":
        if domain.inner is None:
            return lambda x: np.ones(np.shape(_points(x, params.m))[:-1], dtype=complex)
        inner = propagate_indicator(domain.inner, params)
        return lambda x: 1.0 - inner(x)
    if kind == "half_space":
        n = np.asarray(domain.normal)
        return lambda x: np.asarray(theta_tilde(sf * (_points(x, params.m) @ n - domain.offset)))
    if kind == "stripe":
        n = np.asarray(domain.normal)
        fd = domain.radius**2 * params.f
        return lambda x: np.asarray(iota_tilde(fd, sf * (_points(x, params.m) @ n - domain.offset)))
    if kind in ("interval", "box"):
        c = np.asarray(domain.center)
        h = np.asarray(domain.half_widths)

        def evaluate(x: ArrayLike) -> np.ndarray:
            xv = _points(x, params.m)
            out = np.ones(xv.shape[:-1], dtype=complex)
            for j in range(params.m):
                out = out * iota_tilde(h[j] ** 2 * params.f, sf * (xv[..., j] - c[j]))
            return out

        return evaluate
    raise ValueError(f"no closed-form propagation for domain kind {kind!r}")


def leakage_norm(field: ComplexField, detector: DomainSpec) -> tuple[float, float]:
    """Discrete norms of the field inside and outside the detector domain."""
    g = field.grid
    if detector.m != g.m:
        raise ValueError("dimension mismatch between field and detector")
    if detector.bounded:
        lo, hi = detector.bounding_box()
        glo, ghi = g.bounds()
        if np.any(lo < glo - 1e-12) or np.any(hi > ghi + 1e-12):
            raise ValueError("detector exceeds the grid extent")
    mask = detector.contains(g.points())
    e = np.abs(field.samples) ** 2 * g.spacing**g.m
    return float(np.sqrt(e[mask].sum())), float(np.sqrt(e[~mask].sum()))


# Export --------------------------------------------------------------------

def write_field(path: str | Path, field: ComplexField) -> None:
    """Binary dump: magic, m, n, extent, offsets, then little-endian complex64."""
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IId", g.m, g.n, g.extent))
        fh.write(struct.pack(f"<{g.m}d", *g.offset))
        fh.write(field.samples.astype("<c8").tobytes())


def read_field(path: str | Path) -> ComplexField:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a field dump")
        m, n, extent = struct.unpack("<IId", fh.read(16))
        offset = struct.unpack(f"<{m}d", fh.read(8 * m))
        data = np.frombuffer(fh.read(), dtype="<c8")
    g = Grid(m, n, extent, tuple(offset))
    return ComplexField(g, data.reshape(g.shape).astype(complex))


def write_slice_csv(path: str | Path, field: ComplexField, axis: int = 0,
                    meta: dict[str, object] | None = None) -> None:
    """Write the central 1D slice along ``axis`` as CSV (x, re, im, abs)."""
    g = field.grid
    idx = [g.n // 2] * g.m
    idx[axis] = slice(None)
    vals = field.samples[tuple(idx)]
    with open(path, "w", newline="") as fh:
        for key, val in (meta or {}).items():
            fh.write(f"# {key}={val}\n")
        w = csv.writer(fh)
        w.writerow(["x", "re", "im", "abs"])
        for x, v in zip(g.axis(axis), vals):
            w.writerow([f"{x:.12g}", f"{v.real:.12g}", f"{v.imag:.12g}", f"{abs(v):.12g}"])
