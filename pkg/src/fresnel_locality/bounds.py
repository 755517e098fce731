"""Leakage filters, stability constants and local stability/resolution maps.

Profiles are maximized by dense sampling with step 0.005 in the theta_tilde
argument followed by bounded scalar refinement around the three best samples.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import minimize_scalar

from .geometry import DomainSpec, dist_boundary, dist_sym
from .specfun import _positive, iota_tilde, theta_tilde, theta_tilde_diff
from .splines import c_band

STEP = 0.005
WINDOW = 40.0
THETA_MAX = 1.171
NU_SWEEP = tuple(np.round(np.arange(1.05, 2.0001, 0.05), 2))


def edge_envelope(f_delta: float, x: ArrayLike) -> np.ndarray:
    """E(x) = (|theta_tilde(x - s)|^2 + |theta_tilde(-x - s)|^2)^{1/2}, s = f_delta^{1/2}."""
    s = math.sqrt(_positive(f_delta, "f_delta"))
    xv = np.asarray(x, dtype=float)
    return np.sqrt(np.abs(theta_tilde(xv - s)) ** 2 + np.abs(theta_tilde(-xv - s)) ** 2)


def maximize_profile(func: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                     step: float = STEP, refine: int = 3) -> tuple[float, float]:
    """Maximum of a scalar profile on [a, b]: dense sampling plus local refinement.

    Returns (max value, argmax).
    """
    if b < a:
        raise ValueError("empty interval")
    n = max(int(math.ceil((b - a) / step)) + 1, 2)
    x = np.linspace(a, b, n)
    v = np.asarray(func(x), dtype=float)
    i_best = int(np.argmax(v))
    best, arg = float(v[i_best]), float(x[i_best])
    h = x[1] - x[0]
    for i in np.argsort(v)[::-1][:refine]:
        lo, hi = max(a, x[i] - h), min(b, x[i] + h)
        if hi <= lo:
            continue
        res = minimize_scalar(lambda t: -float(func(np.array([t]))[0]), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-10})
        if -res.fun > best:
            best, arg = float(-res.fun), float(res.x)
    return best, arg


# Filters -------------------------------------------------------------------

@dataclass(frozen=True)
class LeakageFilter:
    """Fourier-domain leakage filter.

    kinds: ``simplified`` (edge envelope per axis), ``box`` (product of
    interval profiles), ``halfspace`` (edge profile along ``normal``) and
    ``real-sym`` (symmetrized simplified filter).
    """

    kind: str
    f: float
    f_delta: float = 1.0
    m: int = 1
    normal: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("simplified", "box", "halfspace", "real-sym"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        _positive(self.f, "f")
        _positive(self.f_delta, "f_delta")
        if self.kind == "halfspace":
            n = self.normal or (1.0,) + (0.0,) * (self.m - 1)
            if len(n) != self.m or abs(np.linalg.norm(n) - 1) > 1e-12:
                raise ValueError("half-space filter needs a unit normal of length m")
            object.__setattr__(self, "normal", tuple(n))


def filter_eval(flt: LeakageFilter, xi: ArrayLike) -> np.ndarray:
    """Filter magnitude at frequencies of shape (..., m) (or scalars for m = 1)."""
    xv = np.asarray(xi, dtype=float)
    if flt.m == 1 and (xv.ndim == 0 or xv.shape[-1] != 1):
        xv = xv[..., None]
    u = xv / math.sqrt(flt.f)
    if flt.kind in ("simplified", "real-sym"):
        out = np.sqrt(np.sum(edge_envelope(flt.f_delta, u) ** 2, axis=-1))
        # the simplified filter is even, so symmetrization leaves it unchanged
    elif flt.kind == "box":
        prod = np.ones(u.shape[:-1], dtype=complex)
        for j in range(flt.m):
            prod = prod * iota_tilde(flt.f_delta, u[..., j])
        out = np.abs(1 - prod)
    else:
        out = np.abs(theta_tilde(-(u @ np.asarray(flt.normal))))
    return out[()] if out.ndim == 0 else out


def filter_on_grid(flt: LeakageFilter, freqs: list[np.ndarray]) -> np.ndarray:
    """Filter sampled on the tensor lattice of the given frequency axes."""
    mesh = np.meshgrid(*freqs, indexing="ij")
    return filter_eval(flt, np.stack(mesh, axis=-1))


# Symmetrization -------------------------------------------------------------

def sym_profile(values: ArrayLike, xi: ArrayLike | None = None) -> np.ndarray:
    """sym(p)(xi) = 2^{-1/2} (|p(xi)|^2 + |p(-xi)|^2)^{1/2} on a symmetric sampling."""
    v = np.asarray(values)
    if xi is not None:
        x = np.asarray(xi, dtype=float)
        if x.shape != v.shape:
            raise ValueError("values and sampling points differ in shape")
        scale = max(1.0, float(np.max(np.abs(x))))
        if not np.allclose(x, -x[::-1], atol=1e-12 * scale, rtol=0):
            raise ValueError("sampling points are not symmetric about 0")
    return np.sqrt((np.abs(v) ** 2 + np.abs(v[::-1]) ** 2) / 2)


def _sym_of(func: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.sqrt((np.abs(func(x)) ** 2 + np.abs(func(-x)) ** 2) / 2)


@lru_cache(maxsize=1)
def c_sym_bound() -> float:
    """max_x sym(theta_tilde)(x), the half-space bound for real signals."""
    val, _ = maximize_profile(_sym_of(theta_tilde), 0.0, 60.0)
    return val


@lru_cache(maxsize=4096)
def c_sym_delta(f_delta: float) -> float:
    """C^sym for the difference profile theta_tilde(x) - theta_tilde(x - f_delta^{1/2})."""
    f_delta = _positive(f_delta, "f_delta")
    s = math.sqrt(f_delta)
    val, _ = maximize_profile(_sym_of(lambda x: theta_tilde_diff(f_delta, x)), 0.0, s + WINDOW)
    return val


# Constants -----------------------------------------------------------------

@lru_cache(maxsize=4096)
def c_tot(f_delta: float) -> float:
    """max over the real line of the edge envelope."""
    s = math.sqrt(_positive(f_delta, "f_delta"))
    val, _ = maximize_profile(lambda x: edge_envelope(f_delta, x), 0.0, s + WINDOW)
    return val


@lru_cache(maxsize=65536)
def c_low(f_delta: float, halfwidth: float) -> float:
    """max of the edge envelope over [-halfwidth, halfwidth] (the envelope is even)."""
    s = math.sqrt(_positive(f_delta, "f_delta"))
    _positive(halfwidth, "halfwidth")
    if halfwidth >= s + WINDOW:
        return c_tot(f_delta)
    val, _ = maximize_profile(lambda x: edge_envelope(f_delta, x), 0.0, halfwidth)
    return min(val, c_tot(f_delta))


def c_low_c_tot(f_delta: float, xi_interval_halfwidth: float) -> tuple[float, float]:
    """(C_low, C_tot) of the edge envelope for the band [-halfwidth, halfwidth]."""
    return c_low(float(f_delta), float(xi_interval_halfwidth)), c_tot(float(f_delta))


@dataclass(frozen=True)
class StabilityConstants:
    """Inputs and intermediate constants of a spline stability estimate.

    ``c_stab`` is the displayed per-axis constant; ``guarantee`` is the
    contrast factor for the whole object (c_stab^m in the complex case).
    """

    c_low: float
    c_tot: float
    c_band: float
    c_stab: float
    guarantee: float
    nu: float
    f_delta: float
    f_r: float
    k: int
    m: int
    variant: str
    f: float | None = None
    c_sym: float | None = None
    discriminant: float = 0.0


def _halfwidth(f_r: float, nu: float) -> float:
    return nu * math.pi / math.sqrt(_positive(f_r, "f_r"))


def c_stab_complex(f_delta: float, f_r: float, k: int, nu: float, m: int = 1) -> StabilityConstants:
    """Complex-valued spline stability constant.

    C_stab^2 = 1 - C_low^2 - C_band^2 (C_tot^2 - C_low^2), clamped at 0.
    """
    cl, ct = c_low_c_tot(f_delta, _halfwidth(f_r, nu))
    cb = c_band(k, nu).C_band
    disc = 1 - cl**2 - cb**2 * (ct**2 - cl**2)
    cs = math.sqrt(min(max(disc, 0.0), 1.0))
    return StabilityConstants(cl, ct, cb, cs, cs**m, float(nu), float(f_delta), float(f_r),
                              int(k), int(m), "complex", discriminant=disc)


def c_stab_real(f: float, f_delta: float | None, f_r: float, k: int, nu: float,
                m: int = 1, variant: str = "real_m") -> StabilityConstants:
    """Real-valued spline stability constants.

    ``real_1d`` fixes f_delta = f/4 (object filling the whole interval);
    ``real_m`` uses the cross-shaped object domain with margin f_delta.
    """
    if variant == "real_1d":
        f_delta = f / 4
        m_eff = 1
    elif variant == "real_m":
        if f_delta is None:
            raise ValueError("real_m needs f_delta")
        m_eff = m
    else:
        raise ValueError(f"unknown real variant {variant!r}")
    cl, ct = c_low_c_tot(f_delta, _halfwidth(f_r, nu))
    cb = c_band(k, nu).C_band
    cs_sym = c_sym_delta(float(f_delta))
    inner = math.sqrt(max(cl**2 + cb**2 * (ct**2 - cl**2), 0.0))
    disc = 1 - (cs_sym + math.sqrt(m_eff) * inner) ** 2
    cs = math.sqrt(min(max(disc, 0.0), 1.0))
    return StabilityConstants(cl, ct, cb, cs, cs, float(nu), float(f_delta), float(f_r),
                              int(k), int(m_eff), variant, f=float(f), c_sym=cs_sym,
                              discriminant=disc)


def sweep_nu(f_delta: float, f_r: float, k: int, m: int = 1,
             nus: tuple[float, ...] = NU_SWEEP) -> tuple[StabilityConstants, list[StabilityConstants]]:
    """Evaluate the complex constant over a nu grid; returns (best, all)."""
    res = [c_stab_complex(f_delta, f_r, k, nu, m) for nu in nus]
    return max(res, key=lambda c: c.c_stab), res


# Maps ----------------------------------------------------------------------

@dataclass
class ResolutionMap:
    """Per-pixel stability constants or resolutions 1/r over a square detector."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)


def map_axes(pixels: int, half_width: float = 0.5) -> np.ndarray:
    return np.linspace(-half_width, half_width, pixels) if pixels > 1 else np.zeros(1)


def _pixel_distances(pixels: int, variant: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    K = DomainSpec.cube(0.5, 2)
    ax = map_axes(pixels)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    if variant == "complex":
        d = dist_boundary(pts, K)
    else:
        # x lies in a cross-shaped domain with margin d iff some |x_j| <= 1/2 - d
        d = np.max(0.5 - np.abs(pts), axis=-1)
    return ax, np.round(np.asarray(d, dtype=float), 12), K


def _local_constant(variant: str, f: float, d: float, r: float, k: int, nu: float, m: int) -> float:
    if d <= 0:
        return 0.0
    f_delta = d * d * f
    f_r = r * r * f
    if variant == "complex":
        return c_stab_complex(f_delta, f_r, k, nu).c_stab
    return c_stab_real(f, f_delta, f_r, k, nu, m, "real_m").c_stab


def _run(func: Callable, items: list, threads: int) -> list:
    if threads == 1 or len(items) < 2:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads or None) as ex:
        return list(ex.map(func, items))


def _envelope_from_below(ds: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Running maximum over all margins not exceeding each d (sup over stripes)."""
    order = np.argsort(ds)
    out = np.empty_like(vals)
    out[order] = np.maximum.accumulate(vals[order])
    return out


def stability_map(f: float, r: float, k: int = 7, nu: float = 1.2, variant: str = "complex",
                  pixels: int = 201, m: int = 2, threads: int = 1) -> ResolutionMap:
    """Local stability constant over K = [-1/2, 1/2]^2.

    The complex variant keys on dist(x, boundary); the real variant takes the
    best constant among cross-shaped domains containing x.
    """
    ax, d, _ = _pixel_distances(pixels, variant)
    uniq = np.unique(d)
    vals = np.array(_run(lambda dd: _local_constant(variant, f, float(dd), r, k, nu, m),
                         list(uniq), threads))
    if variant != "complex":
        vals = _envelope_from_below(uniq, vals)
    lookup = dict(zip(uniq.tolist(), vals.tolist()))
    grid = np.vectorize(lookup.__getitem__)(d) if d.size else d
    meta = dict(f=f, r=r, k=k, nu=nu, variant=variant, pixels=pixels)
    return ResolutionMap(ax, ax, np.asarray(grid, dtype=float), "stability", meta)


def _resolution_for(variant: str, f: float, d: float, C: float, k: int, nu: float, m: int,
                    tol: float = 1e-4, max_iter: int = 60) -> float:
    """sup{1/r : c_stab,r >= C} by bisection in 1/r."""
    def ok(inv_r: float) -> bool:
        return _local_constant(variant, f, d, 1.0 / inv_r, k, nu, m) >= C

    if d <= 0:
        return 0.0
    lo = 1e-6
    if not ok(lo):
        return 0.0
    hi = max(f, 1.0)
    while ok(hi):
        lo, hi = hi, 2 * hi
        if hi > 1e12:
            return math.inf
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def resolution_map(f: float, C: float = 0.25, k: int = 7, nu: float = 1.2,
                   variant: str = "complex", pixels: int = 201, m: int = 2,
                   threads: int = 1) -> ResolutionMap:
    """Stably achievable resolution 1/r_stab,C over K = [-1/2, 1/2]^2."""
    if not 0 < C < 1:
        raise ValueError("threshold C must lie in (0, 1)")
    ax, d, _ = _pixel_distances(pixels, variant)
    uniq = np.unique(d)
    vals = np.array(_run(lambda dd: _resolution_for(variant, f, float(dd), C, k, nu, m),
                         list(uniq), threads))
    if variant != "complex":
        vals = _envelope_from_below(uniq, vals)
    lookup = dict(zip(uniq.tolist(), vals.tolist()))
    grid = np.vectorize(lookup.__getitem__)(d) if d.size else d
    meta = dict(f=f, C=C, k=k, nu=nu, variant=variant, pixels=pixels)
    return ResolutionMap(ax, ax, np.asarray(grid, dtype=float), "resolution", meta)


def wavepacket_resolution_bound(x: ArrayLike, K: DomainSpec, f: float,
                                variant: str = "complex") -> np.ndarray | float:
    """Best-case resolution f dist / pi (dist_sym for real-valued images)."""
    if variant == "complex":
        d = dist_boundary(x, K)
    elif variant == "real":
        d = dist_sym(x, K)
    else:
        raise ValueError("variant must be 'complex' or 'real'")
    return f * np.asarray(d) / math.pi if np.ndim(d) else f * float(d) / math.pi


def global_factor(bound: np.ndarray, values: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Least-squares factor g with bound ~ g * values over the selected pixels."""
    b = np.asarray(bound, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = (v > 0) & np.isfinite(v) & np.isfinite(b)
    if mask is not None:
        sel &= mask
    if not np.any(sel):
        raise ValueError("no pixels with positive values")
    return float(np.sum(b[sel] * v[sel]) / np.sum(v[sel] ** 2))


# Export --------------------------------------------------------------------

def write_map_csv(path: str | Path, rmap: ResolutionMap, meta: dict | None = None) -> None:
    info = {**rmap.meta, **(meta or {})}
    with open(path, "w") as fh:
        for key, val in info.items():
            fh.write(f"# {key}={val}\n")
        fh.write("x,y,value\n")
        for i, xv in enumerate(rmap.x):
            for j, yv in enumerate(rmap.y):
                fh.write(f"{xv:.10g},{yv:.10g},{rmap.values[i, j]:.10g}\n")


def write_pgm(path: str | Path, rmap: ResolutionMap, vmax: float | None = None,
              comment: str | None = None) -> None:
    """16-bit binary PGM scaled to [0, vmax] (default: the map maximum)."""
    v = np.asarray(rmap.values, dtype=float)
    top = float(vmax) if vmax else float(np.max(v[np.isfinite(v)], initial=0.0))
    scaled = np.zeros_like(v) if top <= 0 else np.clip(v / top, 0, 1)
    img = np.round(scaled.T[::-1] * 65535).astype(">u2")
    h, w = img.shape
    with open(path, "wb") as fh:
        note = f"# {comment}\n" if comment else ""
        fh.write(f"P5\n{note}{w} {h}\n65535\n".encode())
        fh.write(img.tobytes())


def report_text(obj: object, extra: dict | None = None) -> str:
    """Structured text 'key = value' for a dataclass report."""
    items = asdict(obj) if hasattr(obj, "__dataclass_fields__") else dict(obj)
    items.update(extra or {})
    lines = []
    for key, val in items.items():
        if isinstance(val, float):
            val = f"{val:.12g}"
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"

