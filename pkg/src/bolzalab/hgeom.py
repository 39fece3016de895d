"""Primitives on the hyperbolic upper half-plane.

Points are represented as complex numbers with positive imaginary part
(``HPoint`` is a thin validated wrapper), isometries as unit-determinant
real 2x2 matrices up to sign.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
from scipy import integrate


class NotHyperbolicError(ValueError):
    """Raised when a translation length is requested for an elliptic,
    parabolic or trivial element."""


class QuadratureError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (error estimate {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class HPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("HPoint coordinates must be finite")
        if self.y <= 0:
            raise ValueError(f"HPoint requires y > 0, got y={self.y}")

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    @classmethod
    def from_complex(cls, z: complex) -> "HPoint":
        return cls(float(z.real), float(z.imag))


PointLike = Union[HPoint, complex]


def as_complex(p: PointLike) -> complex:
    if isinstance(p, HPoint):
        return p.z
    return complex(p)


@dataclass(frozen=True)
class MoebiusMap:
    """z -> (az+b)/(cz+d) with ad - bc = 1, stored with canonical sign.

    The sign is fixed so that the first nonzero entry of (a, b, c, d) is
    positive; equal isometries then have equal matrices.
    """

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        det = self.a * self.d - self.b * self.c
        if abs(det - 1.0) > 1e-9:
            raise ValueError(f"determinant must be 1, got {det!r}")
        for v in (self.a, self.b, self.c, self.d):
            if v != 0.0:
                if v < 0:
                    object.__setattr__(self, "a", -self.a)
                    object.__setattr__(self, "b", -self.b)
                    object.__setattr__(self, "c", -self.c)
                    object.__setattr__(self, "d", -self.d)
                break

    @classmethod
    def from_matrix(cls, m, normalize: bool = True) -> "MoebiusMap":
        m = np.asarray(m, dtype=float)
        if normalize:
            det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
            if det <= 0:
                raise ValueError("matrix must have positive determinant")
            m = m / math.sqrt(det)
        return cls(float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]))

    @classmethod
    def identity(cls) -> "MoebiusMap":
        return cls(1.0, 0.0, 0.0, 1.0)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def trace(self) -> float:
        return self.a + self.d

    def __matmul__(self, other: "MoebiusMap") -> "MoebiusMap":
        a = self.a * other.a + self.b * other.c
        b = self.a * other.b + self.b * other.d
        c = self.c * other.a + self.d * other.c
        d = self.c * other.b + self.d * other.d
        # renormalise so rounding does not accumulate in long words
        s = math.sqrt(a * d - b * c)
        return MoebiusMap(a / s, b / s, c / s, d / s)

    def inverse(self) -> "MoebiusMap":
        return MoebiusMap(self.d, -self.b, -self.c, self.a)

    def __call__(self, z):
        return mobius_apply(self, z)

    def close_to(self, other: "MoebiusMap", tol: float = 1e-7) -> bool:
        return max(abs(self.a - other.a), abs(self.b - other.b),
                   abs(self.c - other.c), abs(self.d - other.d)) <= tol


def mobius_apply(m: MoebiusMap, z):
    """Apply ``m`` to a point.

    Accepts an ``HPoint`` (returns an ``HPoint``) or a complex scalar/array
    (returns the same kind).
    """
    if isinstance(z, HPoint):
        w = (m.a * z.z + m.b) / (m.c * z.z + m.d)
        return HPoint(w.real, w.imag)
    z = np.asarray(z, dtype=complex) if not np.isscalar(z) else complex(z)
    return (m.a * z + m.b) / (m.c * z + m.d)


def cosh_distance(z, w):
    """cosh of the hyperbolic distance; vectorised over complex arrays."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    return 1.0 + np.abs(z - w) ** 2 / (2.0 * z.imag * w.imag)


def hyp_distance(z: PointLike, w: PointLike):
    """Hyperbolic distance between points of the upper half-plane.

    Uses d = 2 asinh(|z - w| / (2 sqrt(Im z Im w))), which is the same
    quantity as arccosh(cosh_distance) but accurate for nearby points.
    """
    if isinstance(z, HPoint):
        z = z.z
    if isinstance(w, HPoint):
        w = w.z
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    d = 2.0 * np.arcsinh(np.abs(z - w) / (2.0 * np.sqrt(z.imag * w.imag)))
    return float(d) if d.ndim == 0 else d


def translation_length(m: MoebiusMap) -> float:
    tr = abs(m.trace)
    if tr <= 2.0:
        kind = "parabolic or trivial" if tr == 2.0 else "elliptic"
        raise NotHyperbolicError(f"|trace| = {tr!r} <= 2: element is {kind}")
    return 2.0 * math.acosh(tr / 2.0)


def ball_area(r: float) -> float:
    if r < 0:
        raise ValueError("radius must be nonnegative")
    return 2.0 * math.pi * (math.cosh(r) - 1.0)


# ---------------------------------------------------------------------------
# Hyperboloid helpers.  Geodesic midpoints, triangle angles and centroids are
# easiest on the hyperboloid  -X0^2 + X1^2 + X2^2 = -1.

def to_hyperboloid(z) -> np.ndarray:
    """Upper half-plane -> hyperboloid, shape (..., 3)."""
    z = np.asarray(z, dtype=complex)
    x, y = z.real, z.imag
    r2 = x * x + y * y
    return np.stack([(r2 + 1.0) / (2 * y), x / y, (r2 - 1.0) / (2 * y)], axis=-1)


def from_hyperboloid(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    X0, X1, X2 = P[..., 0], P[..., 1], P[..., 2]
    y = 1.0 / (X0 - X2)
    return X1 * y + 1j * y


def _mink(P, Q):
    return -P[..., 0] * Q[..., 0] + P[..., 1] * Q[..., 1] + P[..., 2] * Q[..., 2]


def _normalize(P):
    return P / np.sqrt(-_mink(P, P))[..., None]


def geodesic_midpoint(z, w):
    return from_hyperboloid(_normalize(to_hyperboloid(z) + to_hyperboloid(w)))


def triangle_angles(A, B, C):
    """Interior angles of hyperbolic triangles given hyperboloid vertices."""
    def angle_at(P, Q, R):
        # tangent vectors at P pointing to Q and R
        u = Q + _mink(P, Q)[..., None] * P
        v = R + _mink(P, R)[..., None] * P
        uv = _mink(u, v)
        # |u wedge v| for spacelike tangent vectors at P
        cross = np.sqrt(np.maximum(_mink(u, u) * _mink(v, v) - uv * uv, 0.0))
        return np.arctan2(cross, uv)

    return angle_at(A, B, C), angle_at(B, C, A), angle_at(C, A, B)


def triangle_area(A, B, C):
    """Angle-deficit area pi - alpha - beta - gamma (hyperboloid vertices)."""
    a, b, c = triangle_angles(A, B, C)
    return np.pi - a - b - c


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray   # complex, upper half-plane
    weights: np.ndarray  # hyperbolic areas

    @property
    def total(self) -> float:
        return float(math.fsum(self.weights))

    def integrate(self, values) -> float:
        return float(math.fsum(np.asarray(values) * self.weights))


def subdivide_triangles(tris: np.ndarray, level: int) -> np.ndarray:
    """Split hyperboloid triangles (n, 3, 3) into 4**level pieces each,
    through geodesic edge midpoints."""
    for _ in range(level):
        A, B, C = tris[:, 0], tris[:, 1], tris[:, 2]
        ab = _normalize(A + B)
        bc = _normalize(B + C)
        ca = _normalize(C + A)
        tris = np.concatenate([
            np.stack([A, ab, ca], axis=1),
            np.stack([ab, B, bc], axis=1),
            np.stack([ca, bc, C], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ])
    return tris


def polygon_quadrature(vertices: Sequence[PointLike], level: int) -> QuadratureRule:
    """Centroid rule on a geodesically convex polygon.

    The polygon is fanned from its vertex centroid and each triangle is split
    ``level`` times.  Node = normalised hyperboloid centroid of each piece,
    weight = its angle-deficit area, so the total weight is exact.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    zs = np.array([as_complex(v) for v in vertices])
    if len(zs) < 3:
        raise ValueError("a polygon needs at least 3 vertices")
    P = to_hyperboloid(zs)
    n = len(P)
    if n == 3:
        tris = P[None, :, :]
    else:
        c = _normalize(P.sum(axis=0))
        tris = np.stack([np.broadcast_to(c, (n, 3)), P, np.roll(P, -1, axis=0)], axis=1)
    area = triangle_area(tris[:, 0], tris[:, 1], tris[:, 2])
    if np.any(area <= 1e-14):
        raise ValueError("degenerate polygon (collinear vertices)")
    tris = subdivide_triangles(tris, level)
    A, B, C = tris[:, 0], tris[:, 1], tris[:, 2]
    w = triangle_area(A, B, C)
    nodes = from_hyperboloid(_normalize(A + B + C))
    return QuadratureRule(nodes=nodes, weights=w)


# ---------------------------------------------------------------------------
# Heat kernel

_TAIL = 1e-18


def _heat_integrand(s, d, t):
    u = d + s * s
    # cosh u - cosh d written as a product to avoid cancellation near s = 0
    gap = 2.0 * np.sinh(d + 0.5 * s * s) * np.sinh(0.5 * s * s)
    if s == 0.0:
        if d == 0.0:
            return 0.0
        return 2.0 * d / math.sqrt(math.sinh(d))
    # work relative to e^{-d^2/4t} (restored by the caller) to avoid underflow
    return u * math.exp(-(u * u - d * d) / (4 * t)) * 2.0 * s / math.sqrt(gap)


def heat_kernel(t: float, d: float, rtol: float = 1e-11) -> float:
    """Heat kernel of the hyperbolic plane as a function of distance."""
    if t <= 0:
        raise ValueError("t must be positive")
    if d < 0:
        raise ValueError("d must be nonnegative")
    # beyond u_max the Gaussian factor has dropped below _TAIL of its value at u = d
    u_max = math.sqrt(d * d - 4.0 * t * math.log(_TAIL))
    s_max = math.sqrt(u_max - d)
    val, err = integrate.quad(_heat_integrand, 0.0, s_max, args=(d, t),
                              epsabs=0.0, epsrel=rtol, limit=400)
    if not math.isfinite(val) or err > 1e3 * rtol * abs(val):
        raise QuadratureError("heat kernel quadrature did not converge", err)
    pref = math.sqrt(2.0) * math.exp(-t / 4.0) / (4.0 * math.pi * t) ** 1.5
    return pref * math.exp(-d * d / (4 * t)) * val


def heat_kernel_mass(t: float, rho_max: float | None = None) -> float:
    """2 pi int_0^inf k(t, rho) sinh(rho) d rho, which should equal 1."""
    if rho_max is None:
        rho_max = 2.0 * t + math.sqrt(4.0 * t * 45.0) + 5.0
    f = lambda r: heat_kernel(t, r) * math.sinh(r)
    val, _ = integrate.quad(f, 0.0, rho_max, epsabs=0.0, epsrel=1e-10, limit=200)
    return 2.0 * math.pi * val


def heat_bound_constant(ts: Iterable[float], ds: Iterable[float]) -> float:
    """max of k(t,d) * t * exp(d^2/8t) over the grid: the constant C in
    k <= C t^-1 exp(-d^2/8t) as measured on that grid."""
    best = 0.0
    for t in ts:
        for d in ds:
            best = max(best, heat_kernel(t, d) * t * math.exp(d * d / (8 * t)))
    return best


def selberg_heat_transform(t: float, r):
    if t <= 0:
        raise ValueError("t must be positive")
    return np.exp(-(0.25 + np.asarray(r, dtype=float) ** 2) * t) if not np.isscalar(r) \
        else math.exp(-(0.25 + r * r) * t)
