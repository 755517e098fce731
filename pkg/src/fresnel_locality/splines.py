"""Cardinal B-spline objects and their quasi-band-limitation constants.

A spline object of order k, resolution r and origin o is
h(x) = sum_j b_j B_k^m(x / r - j - o), with B_k the centered cardinal
B-spline supported on [-(k+1)/2, (k+1)/2].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike
from scipy.interpolate import BSpline
from scipy.linalg import eigvalsh, solve_banded

from .core import ComplexField, Grid
from .geometry import DomainSpec

MAX_ORDER = 15
ND_DECIMALS = 12


@lru_cache(maxsize=None)
def _basis(k: int) -> BSpline:
    half = (k + 1) / 2
    return BSpline.basis_element(np.linspace(-half, half, k + 2), extrapolate=False)


def _check_order(k: int) -> int:
    if int(k) != k or k < 0:
        raise ValueError("order k must be a nonnegative integer")
    if k > MAX_ORDER:
        raise ValueError(f"order k={k} exceeds the supported maximum {MAX_ORDER}")
    return int(k)


def bspline_1d(k: int, x: ArrayLike) -> np.ndarray:
    """Centered cardinal B-spline B_k evaluated elementwise."""
    k = _check_order(k)
    xv = np.asarray(x, dtype=float)
    if k == 0:
        return ((xv >= -0.5) & (xv < 0.5)).astype(float)
    return np.nan_to_num(_basis(k)(xv), nan=0.0)


def bspline_eval(k: int, x: ArrayLike) -> np.ndarray | float:
    """Tensor-product B-spline value prod_j B_k(x_j).

    Scalars are treated as one-dimensional points; arrays carry the
    coordinates along the last axis.
    """
    xv = np.asarray(x, dtype=float)
    if xv.ndim == 0:
        return float(bspline_1d(k, xv))
    out = np.prod(bspline_1d(k, xv), axis=-1)
    return out[()] if out.ndim == 0 else out


def bspline_ft(k: int, xi: ArrayLike) -> np.ndarray:
    """Unitary Fourier transform (2 pi)^{-1/2} sinc(xi/2)^{k+1} of B_k."""
    xv = np.asarray(xi, dtype=float)
    return (2 * np.pi) ** -0.5 * np.sinc(xv / (2 * np.pi)) ** (k + 1)


@dataclass(frozen=True)
class SplineObject:
    """Finite B-spline expansion on the lattice r (j + o).

    ``coeffs[i]`` multiplies the basis function with index j = index_offset + i.
    """

    k: int
    r: float
    o: tuple[float, ...]
    coeffs: np.ndarray
    index_offset: tuple[int, ...]
    support_box: DomainSpec | None = None

    def __post_init__(self) -> None:
        _check_order(self.k)
        if not self.r > 0:
            raise ValueError("resolution r must be positive")
        c = np.asarray(self.coeffs)
        c = c.astype(complex if np.iscomplexobj(c) else float)
        object.__setattr__(self, "coeffs", c)
        m = c.ndim
        if len(self.o) != m or len(self.index_offset) != m:
            raise ValueError("o and index_offset must have one entry per coefficient axis")
        if any(not 0 <= v < 1 for v in self.o):
            raise ValueError("origin o must lie in [0, 1)^m")
        if self.support_box is None:
            lo, hi = self.active_support()
            if lo is not None:
                object.__setattr__(self, "support_box", DomainSpec.box((lo + hi) / 2, (hi - lo) / 2))
        else:
            lo, hi = self.active_support()
            if lo is not None:
                blo, bhi = self.support_box.bounding_box()
                tol = 1e-12 * max(1.0, self.r)
                if np.any(lo < blo - tol) or np.any(hi > bhi + tol):
                    raise ValueError("a basis function with nonzero coefficient leaves support_box")

    @property
    def m(self) -> int:
        return self.coeffs.ndim

    def basis_support(self, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-index support intervals along ``axis``."""
        j = self.index_offset[axis] + np.arange(self.coeffs.shape[axis])
        half = (self.k + 1) / 2
        c = self.r * (j + self.o[axis])
        return c - self.r * half, c + self.r * half

    def active_support(self) -> tuple[np.ndarray | None, np.ndarray | None]:
        """Bounding box of the union of supports with nonzero coefficients."""
        nz = np.nonzero(self.coeffs)
        if nz[0].size == 0:
            return None, None
        lo = np.empty(self.m)
        hi = np.empty(self.m)
        for a in range(self.m):
            s_lo, s_hi = self.basis_support(a)
            lo[a] = s_lo[nz[a].min()]
            hi[a] = s_hi[nz[a].max()]
        return lo, hi

    def axis_matrix(self, axis: int, x: np.ndarray) -> np.ndarray:
        """Matrix B[i, j] = B_k(x_i / r - j - o) along one axis."""
        j = self.index_offset[axis] + np.arange(self.coeffs.shape[axis])
        return bspline_1d(self.k, x[:, None] / self.r - j[None, :] - self.o[axis])

    def evaluate_axes(self, axes: list[np.ndarray]) -> np.ndarray:
        """Evaluate on the tensor grid spanned by the coordinate vectors."""
        out = self.coeffs
        for a in range(self.m):
            mat = self.axis_matrix(a, np.asarray(axes[a], dtype=float))
            out = np.moveaxis(np.tensordot(mat, out, axes=([1], [a])), 0, a)
        return out

    def l2_norm(self) -> float:
        """Exact L2 norm via the B-spline Gram matrix B_{2k+1}(i - j)."""
        out = self.coeffs
        for a in range(self.m):
            n = self.coeffs.shape[a]
            d = np.arange(n)
            gram = self.r * bspline_1d(2 * self.k + 1, d[:, None] - d[None, :])
            out = np.moveaxis(np.tensordot(gram, out, axes=([1], [a])), 0, a)
        return float(np.sqrt(abs(np.vdot(self.coeffs, out))))

    def to_text(self) -> str:
        """Structured text: header lines followed by row-major coefficients."""
        lines = [
            f"k = {self.k}",
            f"r = {self.r!r}",
            "o = " + " ".join(repr(float(v)) for v in self.o),
            "shape = " + " ".join(str(s) for s in self.coeffs.shape),
            "index_offset = " + " ".join(str(v) for v in self.index_offset),
            f"complex = {int(np.iscomplexobj(self.coeffs))}",
        ]
        if self.support_box is not None:
            lo, hi = self.support_box.bounding_box()
            lines.append("support_lo = " + " ".join(repr(float(v)) for v in lo))
            lines.append("support_hi = " + " ".join(repr(float(v)) for v in hi))
        lines.append("coeffs =")
        flat = self.coeffs.ravel()
        if np.iscomplexobj(flat):
            lines += [f"{float(v.real)!r} {float(v.imag)!r}" for v in flat]
        else:
            lines += [repr(float(v)) for v in flat]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> SplineObject:
        head, _, body = text.partition("coeffs =")
        meta = {}
        for line in head.strip().splitlines():
            key, _, val = line.partition("=")
            meta[key.strip()] = val.strip()
        shape = tuple(int(v) for v in meta["shape"].split())
        rows = [ln.split() for ln in body.strip().splitlines() if ln.strip()]
        if int(meta["complex"]):
            vals = np.array([float(a) + 1j * float(b) for a, b in rows])
        else:
            vals = np.array([float(a[0]) for a in rows])
        box = None
        if "support_lo" in meta:
            lo = np.array([float(v) for v in meta["support_lo"].split()])
            hi = np.array([float(v) for v in meta["support_hi"].split()])
            box = DomainSpec.box((lo + hi) / 2, (hi - lo) / 2)
        return cls(
            k=int(meta["k"]), r=float(meta["r"]),
            o=tuple(float(v) for v in meta["o"].split()),
            coeffs=vals.reshape(shape),
            index_offset=tuple(int(v) for v in meta["index_offset"].split()),
            support_box=box,
        )


def sample_spline(obj: SplineObject, grid: Grid) -> ComplexField:
    """Evaluate the spline at every grid point."""
    if grid.m != obj.m:
        raise ValueError("dimension mismatch between spline and grid")
    if obj.support_box is not None:
        lo, hi = obj.support_box.bounding_box()
        glo, ghi = grid.bounds()
        if np.any(lo < glo - 1e-12) or np.any(hi > ghi + 1e-12):
            raise ValueError("grid does not cover the spline support box")
    vals = obj.evaluate_axes([grid.axis(j) for j in range(grid.m)])
    return ComplexField(grid, vals)


def indices_inside(k: int, r: float, o: float, lo: float, hi: float) -> np.ndarray:
    """Indices j whose basis support r [j + o -/+ (k+1)/2] lies in [lo, hi]."""
    half = (k + 1) / 2
    j_lo = math.ceil(lo / r - o + half - 1e-9)
    j_hi = math.floor(hi / r - o - half + 1e-9)
    return np.arange(j_lo, j_hi + 1)


def random_spline(
    rng: np.random.Generator,
    k: int,
    r: float,
    omega: DomainSpec,
    kind: str = "complex",
    o: ArrayLike | None = None,
) -> SplineObject:
    """Random spline with all basis supports inside the box ``omega``.

    Real coefficients are uniform in [-1, 1]; complex ones uniform in the unit disk.
    """
    lo, hi = omega.bounding_box()
    m = omega.m
    ov = np.zeros(m) if o is None else np.atleast_1d(np.asarray(o, dtype=float))
    idx = [indices_inside(k, r, ov[a], lo[a], hi[a]) for a in range(m)]
    if any(i.size == 0 for i in idx):
        raise ValueError("domain too small for a single basis function")
    shape = tuple(i.size for i in idx)
    if kind == "real":
        c = rng.uniform(-1.0, 1.0, shape)
    else:
        rad = np.sqrt(rng.uniform(0.0, 1.0, shape))
        c = rad * np.exp(2j * np.pi * rng.uniform(0.0, 1.0, shape))
    return SplineObject(k, r, tuple(ov), c, tuple(int(i[0]) for i in idx), omega)


def interpolate_nodes(values: ArrayLike, k: int, r: float = 1.0,
                      o: ArrayLike | None = None,
                      index_offset: ArrayLike | None = None) -> SplineObject:
    """Spline whose values at the nodes r (j + o) equal ``values``.

    Solves the banded collocation system B_k(i - j) axis by axis.
    """
    k = _check_order(k)
    v = np.asarray(values)
    v = v.astype(complex if np.iscomplexobj(v) else float)
    m = v.ndim
    ov = tuple(np.zeros(m)) if o is None else tuple(float(t) for t in np.atleast_1d(o))
    off = (0,) * m if index_offset is None else tuple(int(t) for t in np.atleast_1d(index_offset))
    half = k // 2
    band = np.array([bspline_1d(k, d) for d in range(-half, half + 1)])
    coeffs = v
    for a in range(m):
        n = v.shape[a]
        ab = np.zeros((2 * half + 1, n))
        for row, d in enumerate(range(half, -half - 1, -1)):
            ab[row] = band[d + half]
        moved = np.moveaxis(coeffs, a, 0).reshape(n, -1)
        sol = solve_banded((half, half), ab, moved)
        coeffs = np.moveaxis(sol.reshape(np.moveaxis(coeffs, a, 0).shape), 0, a)
    return SplineObject(k, r, ov, coeffs, off)


# Quasi-band-limitation -----------------------------------------------------

@dataclass(frozen=True)
class BandLimitReport:
    """Constants of the quasi-band-limitation estimate."""

    k: int
    nu: float
    nu_bar: float
    nu_tilde: float
    c_band0: float
    tail: float
    tail_remainder_bound: float
    c_band: float
    C_band: float
    m: int
    C_band_multi: float


def _tail_series(n0: int, p: int, terms: int = 2000) -> tuple[float, float]:
    """Sum of 2/(2n+1)^p for n >= n0 with a rigorous remainder bound.

    Sums ``terms`` terms explicitly and closes the series by Euler-Maclaurin
    with two correction terms; the remainder is bounded by |g'''(N)|/720.
    """
    n = np.arange(n0, n0 + terms, dtype=float)
    head = float(np.sum(2.0 / (2 * n + 1) ** p))
    N = float(n0 + terms)
    u = 2 * N + 1

    def deriv(j: int) -> float:
        coef = 2.0 * (-2.0) ** j
        for i in range(j):
            coef *= p + i
        return coef * u ** (-p - j)

    integral = u ** (1 - p) / (p - 1)
    tail = integral + deriv(0) / 2 - deriv(1) / 12 + deriv(3) / 720
    return head + tail, abs(deriv(3)) / 720


def c_band(k: int, nu: float, m: int = 1) -> BandLimitReport:
    """Quasi-band-limitation constant of order-k B-splines for the band factor nu.

    nu is rounded to 12 decimals before the ceiling so odd integers are exact.
    """
    k = _check_order(k)
    nu = float(nu)
    if not np.isfinite(nu) or nu < 1:
        raise ValueError(
            "nu must be >= 1: below 1 no estimate with a constant smaller than 1 can hold"
        )
    if m not in (1, 2, 3):
        raise ValueError("dimension must be 1, 2 or 3")
    nu_r = round(nu, ND_DECIMALS)
    n0 = math.ceil((nu_r - 1) / 2)
    nu_bar = 1 + 2 * n0
    nu_tilde = nu_bar - nu - 1
    p = 2 * (k + 1)
    tp = max(nu_tilde, 0.0) ** p
    c0 = max(tp / (nu + 2 * nu_tilde) ** p + tp / nu**p - 1 / nu_bar**p, 0.0)
    tail, bound = _tail_series(n0, p)
    c = c0 + tail
    cb = math.sqrt(c / (1 + c))
    return BandLimitReport(
        k=k, nu=nu, nu_bar=nu_bar, nu_tilde=nu_tilde, c_band0=c0, tail=tail,
        tail_remainder_bound=bound, c_band=c, C_band=cb, m=m,
        C_band_multi=cb if m == 1 else math.sqrt(1 - (1 - cb**2) ** m),
    )


def c_band_multi(k: int, nu: float, m: int) -> float:
    """Multivariate constant (1 - (1 - C_band^2)^m)^{1/2}."""
    return c_band(k, nu, m).C_band_multi


def riesz_constant(k: int, n: int = 256) -> float:
    """Lower Riesz bound estimate: sqrt of the smallest Gram eigenvalue (r = 1)."""
    d = np.arange(n)
    gram = bspline_1d(2 * _check_order(k) + 1, d[:, None] - d[None, :])
    return float(np.sqrt(max(eigvalsh(gram)[0], 0.0)))


def _gauss_nodes(a: float, b: float, panels: int, order: int = 32) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    mid = (edges[1:] + edges[:-1]) / 2
    hw = (edges[1:] - edges[:-1]) / 2
    return (mid[:, None] + hw[:, None] * x).ravel(), (hw[:, None] * w).ravel()


def band_mass_ratio(coeffs: ArrayLike, k: int, nu: float, o: ArrayLike | None = None) -> float:
    """Fraction ||F(h) outside nu Xi_r|| / ||F(h)|| for a spline with r = 1.

    The total mass uses the exact Gram matrix; the inside mass uses composite
    Gauss-Legendre quadrature of |h_per(u)|^2 |F(B_k)(u)|^2 over [-nu pi, nu pi]^m.
    """
    b = np.asarray(coeffs)
    m = b.ndim
    ov = np.zeros(m) if o is None else np.atleast_1d(np.asarray(o, dtype=float))
    obj = SplineObject(k, 1.0, tuple(ov), b, (0,) * m)
    total = obj.l2_norm() ** 2
    if total == 0:
        return 0.0
    out = b.astype(complex)
    weights = []
    for a in range(m):
        n = b.shape[a]
        panels = max(8, int(np.ceil(n * nu)))
        u, w = _gauss_nodes(-nu * np.pi, nu * np.pi, panels)
        j = np.arange(n)
        moved = np.moveaxis(out, a, 0).reshape(n, -1)
        res = np.empty((u.size, moved.shape[1]), dtype=complex)
        step = max(1, 2**22 // n)
        for s in range(0, u.size, step):
            us = u[s:s + step]
            mat = np.exp(-1j * np.outer(us, j + ov[a])) * bspline_ft(k, us)[:, None]
            res[s:s + step] = mat @ moved
        out = np.moveaxis(res.reshape((u.size,) + np.moveaxis(out, a, 0).shape[1:]), 0, a)
        weights.append(w)
    wt = weights[0]
    for w in weights[1:]:
        wt = np.multiply.outer(wt, w)
    inside = float(np.sum(wt * np.abs(out) ** 2))
    return math.sqrt(max(total - inside, 0.0) / total)


def converse_coefficients(nu: float, half_length: int) -> np.ndarray:
    """Truncated Fourier coefficients of the indicator of nu pi <= |u| <= pi.

    For nu < 1 the resulting spline concentrates its Fourier mass outside nu Xi_r.
    """
    if not 0 < nu < 1:
        raise ValueError("the converse construction needs 0 < nu < 1")
    j = np.arange(-half_length, half_length + 1, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        b = -np.sin(nu * np.pi * j) / (np.pi * j)
    b[half_length] = 1 - nu
    return b
