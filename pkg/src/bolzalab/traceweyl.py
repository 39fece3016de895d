"""Both sides of the twisted heat-trace identity, and Weyl counting.

    sum_j exp(-t lambda_j)
        = Vol/(4 pi) int exp(-t(1/4 + r^2)) r tanh(pi r) dr
          + sum_{g != 1} int_D exp(-period(g)) k(t, d(x, g x)) dVol(x)
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from . import fuchsian
from .hgeom import heat_kernel, hyp_distance, polygon_quadrature
from .twistedop import Spectrum

VOLUME = 4.0 * math.pi


def _topological_integrand(r, t):
    return math.exp(-t * (0.25 + r * r)) * r * math.tanh(math.pi * r)


def topological_term(vol: float, t: float, rtol: float = 1e-12) -> float:
    if vol <= 0 or t <= 0:
        raise ValueError("vol and t must be positive")
    # integrand below 1e-18 of its peak beyond r_max
    r_max = math.sqrt(-math.log(1e-18) / t) + 1.0
    val, _ = integrate.quad(_topological_integrand, 0.0, r_max, args=(t,),
                            epsabs=0.0, epsrel=rtol, limit=500)
    return vol / (4.0 * math.pi) * 2.0 * val


def weyl_density(lam):
    """Main-term density tanh(pi sqrt(lambda - 1/4)) / (4 pi), zero below 1/4."""
    lam = np.asarray(lam, dtype=float)
    return np.where(lam > 0.25, np.tanh(np.pi * np.sqrt(np.maximum(lam - 0.25, 0.0))), 0.0) \
        / (4.0 * math.pi)


def spectral_tail(vol: float, t: float, cut: float) -> float:
    """Weyl-density estimate of sum_{lambda > cut} exp(-t lambda)."""
    lo = max(cut, 0.25)
    f = lambda lam: math.exp(-t * lam) * math.tanh(math.pi * math.sqrt(lam - 0.25))
    hi = lo + 45.0 / t
    val, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-10, limit=200)
    return vol / (4.0 * math.pi) * val


def spectral_side(spec: Spectrum, t: float, cut: float | None = None,
                  vol: float = VOLUME) -> tuple[float, float]:
    """(sum of exp(-t lambda) over eigenvalues with Re <= cut, tail estimate)."""
    ev = spec.eigenvalues
    if cut is None:
        cut = float(ev.real.max())
    if cut < ev.real.min():
        raise ValueError("cutoff lies below the principal eigenvalue")
    ev = ev[ev.real <= cut]
    terms = np.exp(-t * ev)
    # sort for a reproducible summation order
    order = np.lexsort((terms.imag, terms.real))
    total = complex(math.fsum(terms.real[order]), math.fsum(terms.imag[order]))
    if abs(total.imag) > 1e-12 * max(1.0, abs(total.real)):
        raise AssertionError(f"spectral side not real: {total}")
    return total.real, spectral_tail(vol, t, cut)


class HeatKernelTable:
    """Spline of log k(t, d) on [0, d_max] for fast vectorised evaluation."""

    def __init__(self, t: float, d_max: float, n: int = 1201):
        self.t, self.d_max = t, d_max
        d = np.linspace(0.0, d_max, n)
        logk = np.log([heat_kernel(t, x) for x in d])
        self._spline = CubicSpline(d, logk)

    def __call__(self, d):
        d = np.asarray(d)
        if np.any(d > self.d_max + 1e-12):
            raise ValueError("distance beyond table range")
        return np.exp(self._spline(d))


def _shell_tail(t, R, inj, linf, C=None, r_stop=60):
    """Bound on sum over d(x, gx) > R of |exp(-period)| k(t, d).

    With C given the kernel is bounded by C/t exp(-d^2/8t); otherwise by its
    own (decreasing) value at the inner shell radius.  |period| <= linf * d.
    """
    total = 0.0
    r = int(math.floor(R))
    while r < r_stop:
        lo = max(R, r)
        kmax = C / t * math.exp(-lo * lo / (8 * t)) if C is not None else heat_kernel(t, lo)
        total += fuchsian.cosh_shell_bound(r, inj) * kmax * math.exp(linf * (r + 1))
        if kmax == 0.0 or (total > 0 and kmax * math.exp(r + 2 + linf * (r + 1)) < 1e-30):
            break
        r += 1
    return total


@dataclass
class GeometricSide:
    value: float
    truncation_radius: float
    tail_bound: float          # from the monotone kernel and the shell bound
    gaussian_tail_bound: float    # same with the C t^-1 exp(-d^2/8t) bound
    n_elements: int
    n_nodes: int


def geometric_side(gens, periods4, t: float, quad_level: int = 3, R_trunc: float = 7.0,
                   linf: float | None = None, C: float | None = None,
                   cap: float = fuchsian.DEFAULT_CAP) -> GeometricSide:
    """Sum over g != 1 of int_D exp(-period(g)) k(t, x, g x) dVol(x).

    Elements are enumerated once from the octagon centre; a node x sees
    every g with d(x, gx) <= R_trunc because d(i, g i) <= d(x, gx) + 2 d(x, i).
    """
    p = np.asarray(periods4, dtype=float)
    quad = polygon_quadrature(gens.vertices, quad_level)
    reach = float(np.max(hyp_distance(np.full(len(quad.nodes), 1j), quad.nodes)))
    R_enum = R_trunc + 2 * reach
    if R_enum > cap:
        raise fuchsian.EnumerationCapError(R_enum, cap)
    mats, words, _ = fuchsian.enumerate_arrays(gens, fuchsian.OCTAGON_CENTER, R_enum, cap)
    weights = np.exp(-(fuchsian.exponent_sums(words) @ p))
    table = HeatKernelTable(t, R_trunc)
    x = quad.nodes
    total = np.zeros(len(x))
    chunk = 512
    for s in range(0, len(mats), chunk):
        M = mats[s:s + chunk]
        gx = (M[:, 0, 0, None] * x + M[:, 0, 1, None]) / (M[:, 1, 0, None] * x + M[:, 1, 1, None])
        d = hyp_distance(np.broadcast_to(x, gx.shape), gx)
        k = np.where(d <= R_trunc, table(np.minimum(d, R_trunc)), 0.0)
        total += (weights[s:s + chunk, None] * k).sum(axis=0)
    value = math.fsum(total * quad.weights)
    inj = fuchsian.SYSTOLE_EXACT / 2
    if linf is None:
        linf = 0.0 if not np.any(p) else float(np.abs(p).sum())
    # tail per unit area, times the area of D
    tail = VOLUME * _shell_tail(t, R_trunc, inj, linf)
    gaussian_tail = VOLUME * _shell_tail(t, R_trunc, inj, linf, C=C) if C is not None else math.nan
    return GeometricSide(value, R_trunc, tail, gaussian_tail, len(words), len(x))


@dataclass
class TraceReport:
    t: float
    level: int
    spectral_side: float
    topological_term: float
    geometric_term: float
    truncation_radius: float
    tail_estimate: float
    geometric_tail_bound: float
    residual: float
    relative_residual: float

    def to_dict(self):
        return asdict(self)


def trace_residual(mesh, omega, periods4, t: float = 1.0, quad_level: int = 3,
                   R_trunc: float = 7.0, cut: float | None = None, linf: float | None = None,
                   gens=None) -> TraceReport:
    from .surfmesh import form_norms
    from .twistedop import assemble_twisted, compute_spectrum
    gens = gens or fuchsian.bolza_group()
    if linf is None:
        linf = form_norms(mesh, omega)[1]
    op = assemble_twisted(mesh, omega, 1.0)
    spec = compute_spectrum(op, mode="dense", vectors=False)
    spec_val, tail = spectral_side(spec, t, cut)
    topo = topological_term(VOLUME, t)
    geo = geometric_side(gens, periods4, t, quad_level, R_trunc, linf=linf)
    res = spec_val - topo - geo.value
    return TraceReport(t, mesh.level, spec_val, topo, geo.value, R_trunc, tail,
                       geo.tail_bound, res, res / spec_val)


# ---------------------------------------------------------------------------
# Weyl law

def weyl_main_term(a: float, b: float, rtol: float = 1e-12) -> float:
    lo, hi = max(a, 0.25), max(b, 0.25)
    if hi <= lo:
        return 0.0
    f = lambda lam: math.tanh(math.pi * math.sqrt(lam - 0.25))
    val, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=rtol, limit=500)
    return val / (4.0 * math.pi)


def weyl_main_term_rho(a: float, b: float, rtol: float = 1e-12) -> float:
    """The same integral after lambda = 1/4 + rho^2."""
    lo, hi = max(a, 0.25), max(b, 0.25)
    if hi <= lo:
        return 0.0
    r0, r1 = math.sqrt(lo - 0.25), math.sqrt(hi - 0.25)
    f = lambda rho: 2.0 * rho * math.tanh(math.pi * rho)
    val, _ = integrate.quad(f, r0, r1, epsabs=0.0, epsrel=rtol, limit=500)
    return val / (4.0 * math.pi)


def remainder_shape(a: float, b: float, g: int = 2) -> float:
    """sqrt((b+1)/log g) * log(2 + (b-a) sqrt(log g/(b+1)))^(1/2), context only."""
    lg = math.log(g)
    return math.sqrt((b + 1) / lg) * math.sqrt(math.log(2 + (b - a) * math.sqrt(lg / (b + 1))))


@dataclass
class WeylReport:
    a: float
    b: float
    count: int
    volume: float
    main_term: float
    remainder: float
    remainder_bound_shape: float
    note: str = "remainder_bound_shape evaluated at g=2, context only"

    def to_dict(self):
        return asdict(self)


def weyl_report(spec: Spectrum, a: float, b: float, vol: float = VOLUME,
                resolved_up_to: float | None = None, tol: float = 1e-10) -> WeylReport:
    """Count of Re lambda in [a, b] against the main term.  Endpoints are
    widened by ``tol`` so a zero mode computed as +-1e-15 counts at b = 0."""
    ev = spec.eigenvalues
    top = resolved_up_to if resolved_up_to is not None else float(ev.real.max())
    if b > top:
        raise ValueError(f"b = {b} beyond resolved range {top}")
    count = int(np.sum((ev.real >= a - tol) & (ev.real <= b + tol)))
    main = weyl_main_term(a, b)
    return WeylReport(a, b, count, vol, main, count / vol - main, remainder_shape(a, b))


def counting_curve(spec: Spectrum, grid, vol: float = VOLUME):
    """Rows (lambda, N(Re <= lambda)/Vol, M(-inf, lambda)) for plotting."""
    re = np.sort(spec.eigenvalues.real)
    lo = min(float(re.min()), 0.0)
    return [(float(x), float(np.searchsorted(re, x, side="right")) / vol,
             weyl_main_term(lo, x)) for x in grid]
