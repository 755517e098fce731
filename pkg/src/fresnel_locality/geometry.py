"""Detector and object domains with boundary-distance queries.

Domains live in detector aspect units. Supported kinds are ``interval``,
``box``, ``half_space`` ({x : n.x >= offset}), ``stripe``
({x : |n.x - offset| <= half_width}), ``ball`` and ``complement``. The
complement of ``None`` is the whole space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import minimize, minimize_scalar

_EPS = 1e-15
CONVEX_KINDS = ("interval", "box", "half_space", "stripe", "ball")


@dataclass(frozen=True)
class DomainSpec:
    """A convex domain or the complement of one."""

    kind: str
    m: int
    center: tuple[float, ...] = ()
    half_widths: tuple[float, ...] = ()
    normal: tuple[float, ...] = ()
    offset: float = 0.0
    radius: float = 0.0
    inner: DomainSpec | None = field(default=None)

    def __post_init__(self) -> None:
        if self.m not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.m}")
        if self.kind in ("interval", "box"):
            if len(self.center) != self.m or len(self.half_widths) != self.m:
                raise ValueError("center and half_widths must have length m")
            if min(self.half_widths) <= 0:
                raise ValueError("box half-widths must be positive")
            if self.kind == "interval" and self.m != 1:
                raise ValueError("interval requires m = 1")
        elif self.kind in ("half_space", "stripe"):
            if len(self.normal) != self.m:
                raise ValueError("normal must have length m")
            if abs(np.linalg.norm(self.normal) - 1.0) > 1e-12:
                raise ValueError("normal must have unit length")
            if self.kind == "stripe" and self.radius <= 0:
                raise ValueError("stripe half-width must be positive")
        elif self.kind == "ball":
            if len(self.center) != self.m:
                raise ValueError("center must have length m")
            if self.radius <= 0:
                raise ValueError("ball radius must be positive")
        elif self.kind == "complement":
            if self.inner is not None:
                if self.inner.kind == "complement":
                    raise ValueError("nested complements are not supported")
                if self.inner.m != self.m:
                    raise ValueError("dimension mismatch with inner domain")
        else:
            raise ValueError(f"unsupported domain kind {self.kind!r}")

    # constructors ---------------------------------------------------------
    @classmethod
    def interval(cls, a: float, b: float) -> DomainSpec:
        if not b > a:
            raise ValueError("interval needs b > a")
        return cls("interval", 1, center=((a + b) / 2,), half_widths=((b - a) / 2,))

    @classmethod
    def box(cls, center: ArrayLike, half_widths: ArrayLike) -> DomainSpec:
        c = tuple(float(v) for v in np.atleast_1d(center))
        h = np.atleast_1d(np.asarray(half_widths, dtype=float))
        if h.size == 1:
            h = np.full(len(c), h[0])
        return cls("box", len(c), center=c, half_widths=tuple(float(v) for v in h))

    @classmethod
    def cube(cls, half_width: float, m: int) -> DomainSpec:
        """Centered cube [-half_width, half_width]^m."""
        return cls.box(np.zeros(m), np.full(m, half_width))

    @classmethod
    def half_space(cls, normal: ArrayLike, offset: float = 0.0) -> DomainSpec:
        n = np.atleast_1d(np.asarray(normal, dtype=float))
        return cls("half_space", n.size, normal=tuple(n / np.linalg.norm(n)), offset=float(offset))

    @classmethod
    def stripe(cls, normal: ArrayLike, offset: float, half_width: float) -> DomainSpec:
        n = np.atleast_1d(np.asarray(normal, dtype=float))
        return cls(
            "stripe", n.size, normal=tuple(n / np.linalg.norm(n)),
            offset=float(offset), radius=float(half_width),
        )

    @classmethod
    def ball(cls, center: ArrayLike, radius: float) -> DomainSpec:
        c = tuple(float(v) for v in np.atleast_1d(center))
        return cls("ball", len(c), center=c, radius=float(radius))

    @classmethod
    def complement(cls, inner: DomainSpec | None, m: int | None = None) -> DomainSpec:
        if inner is None and m is None:
            raise ValueError("complement of the empty set needs m")
        return cls("complement", inner.m if inner is not None else int(m), inner=inner)

    # queries --------------------------------------------------------------
    @property
    def bounded(self) -> bool:
        return self.kind in ("interval", "box", "ball")

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned (lo, hi) corners of a bounded domain."""
        c = np.asarray(self.center)
        if self.kind in ("interval", "box"):
            h = np.asarray(self.half_widths)
        elif self.kind == "ball":
            h = np.full(self.m, self.radius)
        else:
            raise ValueError(f"{self.kind} is unbounded")
        return c - h, c + h

    def contains(self, points: ArrayLike) -> np.ndarray:
        """Closed-set membership for points of shape (..., m)."""
        x = _points(points, self.m)
        if self.kind in ("interval", "box"):
            y = np.abs(x - np.asarray(self.center))
            return np.all(y <= np.asarray(self.half_widths) * (1 + 1e-13), axis=-1)
        if self.kind == "ball":
            r2 = np.sum((x - np.asarray(self.center)) ** 2, axis=-1)
            return r2 <= self.radius**2 * (1 + 1e-13)
        if self.kind == "half_space":
            return x @ np.asarray(self.normal) >= self.offset - 1e-14
        if self.kind == "stripe":
            return np.abs(x @ np.asarray(self.normal) - self.offset) <= self.radius * (1 + 1e-13)
        if self.inner is None:
            return np.ones(x.shape[:-1], dtype=bool)
        return ~_open_contains(self.inner, x)


def _points(points: ArrayLike, m: int) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 0 or x.shape[-1] != m:
        if m == 1:
            return x[..., None]
        raise ValueError(f"points must have trailing dimension {m}")
    return x


def _open_contains(K: DomainSpec, x: np.ndarray) -> np.ndarray:
    """Interior membership (complements are closed sets)."""
    if K.kind in ("interval", "box"):
        return np.all(np.abs(x - np.asarray(K.center)) < np.asarray(K.half_widths), axis=-1)
    if K.kind == "ball":
        return np.sum((x - np.asarray(K.center)) ** 2, axis=-1) < K.radius**2
    if K.kind == "half_space":
        return x @ np.asarray(K.normal) > K.offset
    return np.abs(x @ np.asarray(K.normal) - K.offset) < K.radius


def _line_interval(K: DomainSpec, x: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Parameter range [lo, hi] of the lines x + t*dirs inside convex K.

    Empty intersections give lo > hi.
    """
    nd = dirs.shape[0]
    lo = np.full(nd, -np.inf)
    hi = np.full(nd, np.inf)

    def slab(p: np.ndarray, d: np.ndarray, a: float, b: float) -> None:
        # constraint a <= p + t d <= b
        nonlocal lo, hi
        par = np.abs(d) < _EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (a - p) / d
            t2 = (b - p) / d
        tmin = np.where(par, np.where((p >= a) & (p <= b), -np.inf, np.inf), np.minimum(t1, t2))
        tmax = np.where(par, np.where((p >= a) & (p <= b), np.inf, -np.inf), np.maximum(t1, t2))
        lo = np.maximum(lo, tmin)
        hi = np.minimum(hi, tmax)

    if K.kind in ("interval", "box"):
        for j in range(K.m):
            c, h = K.center[j], K.half_widths[j]
            slab(np.full(nd, x[j]), dirs[:, j], c - h, c + h)
    elif K.kind == "half_space":
        n = np.asarray(K.normal)
        slab(np.full(nd, x @ n), dirs @ n, K.offset, np.inf)
    elif K.kind == "stripe":
        n = np.asarray(K.normal)
        slab(np.full(nd, x @ n), dirs @ n, K.offset - K.radius, K.offset + K.radius)
    elif K.kind == "ball":
        y = x - np.asarray(K.center)
        b = dirs @ y
        disc = b**2 - (y @ y - K.radius**2)
        root = np.sqrt(np.maximum(disc, 0.0))
        lo = np.where(disc >= 0, -b - root, np.inf)
        hi = np.where(disc >= 0, -b + root, -np.inf)
    else:
        raise ValueError(f"line intersection needs a convex domain, got {K.kind}")
    return lo, hi


def _exit_lengths(x: np.ndarray, dirs: np.ndarray, K: DomainSpec) -> np.ndarray:
    """Exit length inf{y >= 0 : x + y n not in K} for each row n of dirs."""
    if K.kind == "complement":
        if K.inner is None:
            return np.full(dirs.shape[0], np.inf)
        lo, hi = _line_interval(K.inner, x, dirs)
        hit = (lo <= hi) & (hi > 0)
        return np.where(hit, np.maximum(lo, 0.0), np.inf)
    lo, hi = _line_interval(K, x, dirs)
    return np.maximum(hi, 0.0)


def dist_directional(x: ArrayLike, n: ArrayLike, K: DomainSpec) -> float:
    """Path length from x to the boundary of K along the unit direction n."""
    xv = _points(x, K.m).reshape(K.m)
    nv = np.atleast_1d(np.asarray(n, dtype=float))
    if abs(np.linalg.norm(nv) - 1.0) > 1e-9:
        raise ValueError("direction must have unit length")
    if not K.contains(xv):
        return 0.0
    return float(_exit_lengths(xv, nv[None, :], K)[0])


def dist_boundary(x: ArrayLike, K: DomainSpec, return_flag: bool = False):
    """Euclidean distance from x in K to the boundary of K.

    Accepts points of shape (..., m). Points outside K map to 0; with
    ``return_flag`` a boolean array marking the points inside K is returned too.
    """
    xv = _points(x, K.m)
    inside = K.contains(xv)
    if K.kind in ("interval", "box"):
        d = np.min(np.asarray(K.half_widths) - np.abs(xv - np.asarray(K.center)), axis=-1)
    elif K.kind == "ball":
        d = K.radius - np.linalg.norm(xv - np.asarray(K.center), axis=-1)
    elif K.kind == "half_space":
        d = xv @ np.asarray(K.normal) - K.offset
    elif K.kind == "stripe":
        d = K.radius - np.abs(xv @ np.asarray(K.normal) - K.offset)
    else:
        A = K.inner
        if A is None:
            d = np.full(xv.shape[:-1], np.inf)
        elif A.kind in ("interval", "box"):
            excess = np.maximum(np.abs(xv - np.asarray(A.center)) - np.asarray(A.half_widths), 0.0)
            d = np.linalg.norm(excess, axis=-1)
        elif A.kind == "ball":
            d = np.linalg.norm(xv - np.asarray(A.center), axis=-1) - A.radius
        elif A.kind == "half_space":
            d = A.offset - xv @ np.asarray(A.normal)
        else:
            d = np.abs(xv @ np.asarray(A.normal) - A.offset) - A.radius
    d = np.where(inside, np.maximum(d, 0.0), 0.0)
    d = d[()] if d.ndim == 0 else d
    if return_flag:
        return d, (inside[()] if inside.ndim == 0 else inside)
    return d


def _directions(m: int, count: int) -> np.ndarray:
    """Directions covering the unit sphere up to the sign n -> -n."""
    if m == 2:
        t = np.linspace(0.0, np.pi, count, endpoint=False)
        return np.stack([np.cos(t), np.sin(t)], axis=-1)
    # Fibonacci points on the upper hemisphere
    i = np.arange(count) + 0.5
    z = i / count
    phi = np.pi * (1 + 5**0.5) * i
    rho = np.sqrt(1 - z**2)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def _sym_exit(x: np.ndarray, dirs: np.ndarray, K: DomainSpec) -> np.ndarray:
    return np.maximum(_exit_lengths(x, dirs, K), _exit_lengths(x, -dirs, K))


def _dist_sym_box2(y: np.ndarray, h: np.ndarray) -> np.ndarray:
    a = np.hypot(h[0] - np.abs(y[..., 0]), h[1] - np.abs(y[..., 1]))
    b = np.minimum(h[0] + np.abs(y[..., 0]), h[1] + np.abs(y[..., 1]))
    return np.minimum(a, b)


def dist_sym_sampled(x: ArrayLike, K: DomainSpec, n_dirs: int = 1024, refine: int = 3) -> float:
    """Symmetric boundary distance by direction sampling plus local refinement."""
    xv = _points(x, K.m).reshape(K.m)
    if not K.contains(xv):
        return 0.0
    if K.m == 1:
        return float(_sym_exit(xv, np.ones((1, 1)), K)[0])
    dirs = _directions(K.m, n_dirs)
    vals = _sym_exit(xv, dirs, K)
    best = float(vals.min())
    order = np.argsort(vals)[:refine]
    if K.m == 2:
        step = np.pi / n_dirs

        def g2(t: float) -> float:
            d = np.array([[np.cos(t), np.sin(t)]])
            return float(_sym_exit(xv, d, K)[0])

        for i in order:
            t0 = i * step
            res = minimize_scalar(g2, bounds=(t0 - step, t0 + step), method="bounded",
                                  options={"xatol": 1e-12})
            best = min(best, float(res.fun))
        return best

    def g3(p: np.ndarray) -> float:
        th, ph = p
        d = np.array([[np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)]])
        return float(_sym_exit(xv, d, K)[0])

    for i in order:
        d = dirs[i]
        p0 = np.array([np.arccos(np.clip(d[2], -1, 1)), np.arctan2(d[1], d[0])])
        res = minimize(g3, p0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12})
        best = min(best, float(res.fun))
    return best


def dist_sym(x: ArrayLike, K: DomainSpec, return_flag: bool = False):
    """Symmetric boundary distance: shortest direction along which both rays exit K.

    Uses the closed form for two-dimensional boxes and direction sampling
    otherwise. Accepts points of shape (..., m).
    """
    xv = _points(x, K.m)
    inside = K.contains(xv)
    if K.kind in ("interval", "box") and K.m in (1, 2):
        y = xv - np.asarray(K.center)
        h = np.asarray(K.half_widths)
        if K.m == 1:
            d = h[0] + np.abs(y[..., 0])
        else:
            d = _dist_sym_box2(y, h)
    else:
        flat = xv.reshape(-1, K.m)
        d = np.array([dist_sym_sampled(p, K) for p in flat]).reshape(xv.shape[:-1])
    d = np.where(inside, d, 0.0)
    d = d[()] if d.ndim == 0 else d
    if return_flag:
        return d, (inside[()] if inside.ndim == 0 else inside)
    return d
