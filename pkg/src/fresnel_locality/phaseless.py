"""Linearized phase-contrast (CTF) forward maps and their stability bounds.

T(h) = 2 Re(D h) acts on complex objects; S_alpha(phi) = T(-i e^{-i alpha} phi)
acts on real objects and is the Fourier multiplier -2 sin(|xi|^2/(2f) + alpha).

Full field-of-view stability constants are computed by a Rayleigh-Ritz
(Galerkin) discretization with tensor-product hat functions. The quadratic
form ||T h||^2 = 2||h||^2 + 2 Re int (D h)^2 only needs the bilinear form
int D(u) D(v), a convolution with the kernel of D^2 whose hat-function matrix
is computed by Gauss-Legendre quadrature.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, toeplitz
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from .bounds import LeakageFilter, c_stab_complex, filter_on_grid
from .core import ComplexField, FresnelParams, Grid, leakage_norm, propagate_fft
from .geometry import DomainSpec
from .specfun import _positive
from .splines import SplineObject, sample_spline

CACHE_ENV = "FRESNEL_LOCALITY_CACHE"
_GL = np.polynomial.legendre.leggauss(48)


_KIND_ALIASES = {"T": "T", "T_complex_input": "T", "S": "S", "S_alpha_real_input": "S"}


@dataclass(frozen=True)
class CtfOperatorSpec:
    """Linearized contrast operator: ``T`` for complex input, ``S`` for real input."""

    f: float
    alpha: float = 0.0
    kind: str = "T"

    def __post_init__(self) -> None:
        _positive(self.f, "f")
        kind = _KIND_ALIASES.get(self.kind)
        if kind is None:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not 0 <= self.alpha < math.pi:
            raise ValueError("alpha must lie in [0, pi)")


def ctf_symbol(spec: CtfOperatorSpec, freq_sq: np.ndarray) -> np.ndarray:
    """Fourier symbol -2 sin(|xi|^2/(2f) + alpha) of S_alpha."""
    return -2 * np.sin(freq_sq / (2 * spec.f) + spec.alpha)


def apply_ctf(field: ComplexField, spec: CtfOperatorSpec) -> ComplexField:
    """Apply T or S_alpha on the periodic grid; the output is real-valued."""
    g = field.grid
    if spec.kind == "T":
        out = 2 * propagate_fft(field, FresnelParams(spec.f, g.m), guard=False).samples.real
    else:
        if np.max(np.abs(field.samples.imag), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(field.samples))):
            raise ValueError("S_alpha requires a real-valued input")
        spec_phi = np.fft.fftn(field.samples.real)
        out = np.fft.ifftn(ctf_symbol(spec, g.freq_sq()) * spec_phi).real
    return ComplexField(g, out.astype(complex))


@dataclass(frozen=True)
class PhaselessLeakage:
    """Measured and bounded leakage of linearized contrast data."""

    measured_ctf: float
    measured_fresnel: float
    filter_bound: float
    bound: float


def filter_norm(field: ComplexField, flt: LeakageFilter) -> float:
    """Discrete ||p_hat F(h)|| on the field's periodic grid."""
    g = field.grid
    spec = np.fft.fftn(field.samples)
    p = filter_on_grid(flt, [g.frequencies()] * g.m)
    return float(np.sqrt(np.sum(np.abs(p * spec) ** 2) * g.spacing**g.m / g.n**g.m))


def phaseless_leakage_bound(field: ComplexField | SplineObject, K: DomainSpec,
                            spec: CtfOperatorSpec, f_delta: float,
                            grid: Grid | None = None) -> PhaselessLeakage:
    """Leakage of T(h) outside K against 2 ||p_hat F(h)|| (simplified filter, margin f_delta).

    Spline objects are sampled on ``grid``.
    """
    if isinstance(field, SplineObject):
        if grid is None:
            raise ValueError("a grid is required to sample a spline object")
        field = sample_spline(field, grid)
    g = field.grid
    h = field
    if spec.kind == "S":
        h = ComplexField(g, -1j * np.exp(-1j * spec.alpha) * field.samples.real)
    d = propagate_fft(h, FresnelParams(spec.f, g.m), guard=False)
    t = ComplexField(g, 2 * d.samples.real)
    _, out_t = leakage_norm(t, K)
    _, out_d = leakage_norm(d, K)
    fb = filter_norm(h, LeakageFilter("simplified", spec.f, f_delta, g.m))
    return PhaselessLeakage(out_t, out_d, fb, 2 * fb)


# Full field-of-view constants ----------------------------------------------

def _cubic_bspline(v: np.ndarray) -> np.ndarray:
    a = np.abs(v)
    return np.where(a <= 1, 2 / 3 - a**2 + a**3 / 2, np.where(a <= 2, (2 - a) ** 3 / 6, 0.0))


def hat_bilinear_matrix(n: int, h: float, f: float) -> np.ndarray:
    """Matrix of int D(u_i) D(u_j) for hat functions u_i with spacing h (1D).

    The form equals int k(t) (u_i * u_j)(t) dt with the kernel of D^2; the hat
    autocorrelation is h times the cubic B-spline of t/h.
    """
    beta = f / 4
    c = np.exp(-1j * math.pi / 4) * math.sqrt(f / (4 * math.pi))
    x, w = _GL
    col = np.empty(n, dtype=complex)
    for s in range(n):
        tot = 0j
        for j in range(-2, 2):
            a = (s + j) * h
            t = a + h / 2 + h / 2 * x
            tot += np.sum(w * h / 2 * np.exp(1j * beta * t * t) * h * _cubic_bspline(t / h - s))
        col[s] = c * tot
    return toeplitz(col, col)


def hat_mass_matrix(n: int, h: float) -> np.ndarray:
    col = np.zeros(n)
    col[0] = 2 * h / 3
    if n > 1:
        col[1] = h / 6
    return toeplitz(col, col)


def _node_mask(omega: DomainSpec, nodes: np.ndarray, h: float) -> np.ndarray:
    """Nodes whose hat support lies inside omega (gives nested trial spaces)."""
    if omega.kind in ("interval", "box"):
        return np.ones(nodes.shape[:-1], dtype=bool)
    c = np.asarray(omega.center)
    ext = np.abs(nodes - c) + h
    return np.sum(ext**2, axis=-1) <= omega.radius**2 * (1 + 1e-12)


def _galerkin_constant(omega: DomainSpec, f: float, alpha: float | None, n_int: int,
                       tol: float = 1e-6, maxiter: int = 5000) -> tuple[float, int]:
    """Smallest singular value of T (alpha None) or S_alpha on the hat space."""
    m = omega.m
    if m not in (1, 2):
        raise ValueError("full-FoV constants are implemented for m = 1, 2")
    if omega.kind in ("interval", "box"):
        hw = np.asarray(omega.half_widths)
        if np.ptp(hw) > 1e-12:
            raise ValueError("box object domains must be cubes")
        size = float(hw[0])
        center = np.asarray(omega.center)
    elif omega.kind == "ball":
        size = omega.radius
        center = np.asarray(omega.center)
    else:
        raise ValueError("object domain must be a box or a ball")
    h = 2 * size / n_int
    n = n_int - 1
    K = hat_bilinear_matrix(n, h, f)
    M = hat_mass_matrix(n, h)
    axis = (np.arange(n) + 1) * h - size
    mesh = np.stack(np.meshgrid(*([axis] * m), indexing="ij"), axis=-1) + center
    idx = np.flatnonzero(_node_mask(omega, mesh, h))
    k = idx.size
    phase = np.exp(-2j * alpha) if alpha is not None else 1.0
    if m == 1:
        Ms = M[np.ix_(idx, idx)]
        G = K[np.ix_(idx, idx)]
        if alpha is not None:
            Q = 2 * Ms - 2 * (phase * G).real
            B = Ms
        else:
            Q = np.block([[2 * Ms + 2 * G.real, -2 * G.imag], [-2 * G.imag, 2 * Ms - 2 * G.real]])
            B = np.block([[Ms, np.zeros_like(Ms)], [np.zeros_like(Ms), Ms]])
        lam = eigh(Q, B, eigvals_only=True)[0]
        return math.sqrt(max(lam, 0.0)), k

    Ms = sp.csc_matrix(sp.kron(sp.csr_matrix(M), sp.csr_matrix(M)))[idx][:, idx].tocsc()
    lu = splu(Ms)

    def gal(x: np.ndarray) -> np.ndarray:
        z = np.zeros(n * n, dtype=x.dtype)
        z[idx] = x
        z = z.reshape(n, n)
        return (K @ z @ K).ravel()[idx]

    if alpha is not None:
        def quad(v: np.ndarray) -> np.ndarray:
            return 2 * (Ms @ v) - 2 * (phase * gal(v)).real
        B = Ms
        dim = k
        solve = lu.solve
    else:
        def quad(v: np.ndarray) -> np.ndarray:
            u, w = v[:k], v[k:]
            gu, gw = gal(u), gal(w)
            return np.concatenate([2 * (Ms @ u) + 2 * gu.real - 2 * gw.imag,
                                   2 * (Ms @ w) - 2 * gu.imag - 2 * gw.real])
        B = sp.block_diag([Ms, Ms]).tocsc()
        dim = 2 * k

        def solve(v: np.ndarray) -> np.ndarray:
            return np.concatenate([lu.solve(v[:k]), lu.solve(v[k:])])

    # largest eigenvalue of 4B - Q relative to B is 4 - sigma_min^2
    op = LinearOperator((dim, dim), matvec=lambda v: 4 * (B @ v) - quad(v), dtype=float)
    minv = LinearOperator((dim, dim), matvec=solve, dtype=float)
    try:
        lam = eigsh(op, k=1, M=B, Minv=minv, which="LA", tol=tol, maxiter=maxiter,
                    ncv=min(40, dim - 1), return_eigenvectors=False)[0]
    except ArpackNoConvergence as err:
        raise RuntimeError(f"eigenvalue iteration did not converge at grid {n_int}: {err}") from err
    return math.sqrt(max(4 - lam, 0.0)), k


@dataclass
class FullFovConstant:
    """Full field-of-view stability constant with its grid-convergence history.

    ``value`` is the finest-grid Rayleigh-Ritz value, an upper bound for the
    continuum constant since the trial spaces are nested.
    """

    omega: DomainSpec
    f: float
    alpha: float | None
    value: float
    grid_resolution: int
    convergence_history: list[tuple[int, float]] = field(default_factory=list)
    extrapolated: float | None = None
    order: float | None = None
    monotone: bool = True


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "fresnel_locality"))


def _cache_key(omega: DomainSpec, f: float, alpha: float | None, n_int: int) -> str:
    if omega.kind == "ball":
        shape, size = "ball", omega.radius
    else:
        shape, size = "box", omega.half_widths[0]
    a = "none" if alpha is None else f"{alpha:.12g}"
    c = "_".join(f"{v:.6g}" for v in omega.center)
    return f"{shape}_m{omega.m}_s{size:.12g}_c{c}_f{f:.12g}_a{a}_n{n_int}.txt"


def _cached_level(omega: DomainSpec, f: float, alpha: float | None, n_int: int,
                  use_cache: bool) -> float:
    path = cache_dir() / _cache_key(omega, f, alpha, n_int)
    if use_cache and path.exists():
        for line in path.read_text().splitlines():
            key, _, val = line.partition("=")
            if key.strip() == "value":
                return float(val)
    value, dof = _galerkin_constant(omega, f, alpha, n_int)
    if use_cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(f"value = {value!r}\ndof = {dof}\ngrid = {n_int}\n")
    return value


def richardson(history: list[tuple[int, float]]) -> tuple[float | None, float | None]:
    """Extrapolate from the last three levels (grid doubling); None if the order is implausible."""
    if len(history) < 3:
        return None, None
    v1, v2, v3 = (v for _, v in history[-3:])
    d1, d2 = v1 - v2, v2 - v3
    if d1 == 0 or d2 == 0 or d1 / d2 <= 0:
        return None, None
    p = math.log2(d1 / d2)
    if not 0.5 <= p <= 4:
        return None, p
    return v3 - d2 / (2**p - 1), p


def fullfov_stability_constant(omega: DomainSpec, f: float, alpha: float | None = None,
                               grids: tuple[int, ...] = (16, 32, 64, 128),
                               use_cache: bool = True) -> FullFovConstant:
    """Smallest singular value of T (alpha None) or S_alpha on fields supported in omega.

    Each entry of ``grids`` is the number of hat intervals across omega.
    """
    _positive(f, "f")
    if len(grids) < 3:
        raise ValueError("at least three grid refinements are required")
    hist = [(n, _cached_level(omega, f, alpha, n, use_cache)) for n in grids]
    vals = [v for _, v in hist]
    mono = all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))
    ext, order = richardson(hist)
    return FullFovConstant(omega, f, alpha, vals[-1], grids[-1], hist, ext, order, mono)


@dataclass(frozen=True)
class PhaselessBound:
    """Assembled stability guarantee for linearized contrast data on a square detector."""

    c_ip: float
    c_stab: float
    m: int
    f: float
    f_delta: float
    f_r: float
    k: int
    nu: float
    bracket: float
    guarantee: float
    fullfov: FullFovConstant | None = None


def detector_margin(omega: DomainSpec, K: DomainSpec) -> float:
    """Largest Delta with omega inside the detector shrunk by Delta."""
    lo, hi = omega.bounding_box()
    klo, khi = K.bounding_box()
    return float(min(np.min(lo - klo), np.min(khi - hi)))


def phaseless_stability_bound(omega: DomainSpec, K: DomainSpec, f: float, alpha: float | None,
                              r: float, k: int, nu: float, c_ip: float | None = None,
                              grids: tuple[int, ...] = (16, 32, 64, 128),
                              use_cache: bool = True) -> PhaselessBound:
    """Guarantee (C_IP^2 - 4 (1 - C_stab^{2m}))^{1/2}, or 0 if the bracket is negative.

    C_IP is computed by ``fullfov_stability_constant`` unless ``c_ip`` is given.
    """
    delta = detector_margin(omega, K)
    if delta <= 0:
        raise ValueError("object domain must lie strictly inside the detector")
    full = None
    if c_ip is None:
        full = fullfov_stability_constant(omega, f, alpha, grids, use_cache)
        c_ip = full.value
    m = omega.m
    cs = c_stab_complex(delta**2 * f, r**2 * f, k, nu, m)
    bracket = c_ip**2 - 4 * (1 - cs.c_stab ** (2 * m))
    return PhaselessBound(float(c_ip), cs.c_stab, m, f, delta**2 * f, r**2 * f, k, nu, bracket,
                          math.sqrt(max(bracket, 0.0)), full)


EXAMPLES = {
    1: dict(omega=DomainSpec.cube(0.05, 2), f=2e3, alpha=None, inv_r=190, nu=1.2,
            grids=(16, 32, 64, 128), reference=(0.12, 0.328, 0.988)),
    2: dict(omega=DomainSpec.ball((0.0, 0.0), 0.1), f=5e3, alpha=0.0, inv_r=350, nu=1.25,
            grids=(16, 32, 64, 128), reference=(0.05, 0.151, 0.997)),
    3: dict(omega=DomainSpec.ball((0.0, 0.0), 0.25), f=4e4, alpha=math.atan(0.1), inv_r=2000,
            nu=1.25, grids=(64, 128, 256), reference=(0.08, 0.147, 0.998)),
}
