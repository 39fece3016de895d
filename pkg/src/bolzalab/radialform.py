"""Radial averaging of harmonic 1-forms.

For a harmonic form w = df on the universal cover and the kernel
K_t(rho) = 1{rho < t} / sqrt(cosh t), the function

    F(x) = int_H K_t(d(x, y)) f(y) dVol(y)

satisfies dF = mu(t) w with mu(t) = 2 pi (cosh t - 1) / sqrt(cosh t), because
harmonic functions have the mean value property.  Here F is evaluated by
summing over translates of the octagon and differentiated numerically.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import fuchsian
from .hgeom import (hyp_distance, polygon_quadrature, to_hyperboloid)
from .surfmesh import SurfaceMesh, form_norms

STENCIL_EPS = 1e-3
PATCH_RADIUS = 0.6
PATCH_DEGREE = 4


class NonClosedFormError(ValueError):
    pass


@dataclass
class PrimitiveField:
    values: np.ndarray   # on unglued points of the octagon
    anchor: int
    periods: np.ndarray


def primitive_on_domain(mesh: SurfaceMesh, omega, anchor: int = 0, tol: float = 1e-10) -> PrimitiveField:
    """Integrate a closed cochain over a BFS spanning tree of the cut octagon."""
    from .surfmesh import form_periods
    omega = np.asarray(omega, dtype=float)
    curl = mesh.operators.d1 @ omega
    if np.abs(curl).max() > tol * max(1.0, np.abs(omega).max()):
        raise NonClosedFormError("form is not closed")
    n = len(mesh.points)
    adj = [[] for _ in range(n)]
    for (p, q), (e, s) in mesh.uedge_index.items():
        adj[p].append((q, s * omega[e]))
    for nb in adj:
        nb.sort()
    f = np.full(n, np.nan)
    f[anchor] = 0.0
    queue = deque([anchor])
    while queue:
        p = queue.popleft()
        for q, w in adj[p]:
            if np.isnan(f[q]):
                f[q] = f[p] + w
                queue.append(q)
    return PrimitiveField(f, anchor, form_periods(mesh, omega))


def primitive_defect(mesh: SurfaceMesh, field: PrimitiveField, omega) -> float:
    """max over unglued edges of |f(q) - f(p) - w(p -> q)|."""
    worst = 0.0
    for (p, q), (e, s) in mesh.uedge_index.items():
        worst = max(worst, abs(field.values[q] - field.values[p] - s * omega[e]))
    return worst


def mu_factor(t: float) -> float:
    if t <= 0:
        raise ValueError("t must be positive")
    return 2.0 * math.pi * (math.cosh(t) - 1.0) / math.sqrt(math.cosh(t))


def kernel_mass(t: float, n: int = 4001) -> float:
    """2 pi int_0^t K_t(rho) sinh(rho) d rho by composite Simpson quadrature."""
    from scipy.integrate import simpson
    rho = np.linspace(0.0, t, n)
    return 2.0 * math.pi * simpson(np.sinh(rho), x=rho) / math.sqrt(math.cosh(t))


# ---------------------------------------------------------------------------
# Point location and evaluation of the piecewise linear primitive

def _klein(z):
    P = to_hyperboloid(z)
    return P[..., 1:] / P[..., :1]


class MeshLocator:
    """Locate points of the octagon in mesh triangles (straight in the Klein
    model) and interpolate vertex data linearly there."""

    def __init__(self, mesh: SurfaceMesh):
        self.mesh = mesh
        K = _klein(mesh.points)
        self.corners = K[mesh.tri_points]            # (F, 3, 2)
        self.tree = cKDTree(self.corners.mean(axis=1))
        a, b, c = self.corners[:, 0], self.corners[:, 1], self.corners[:, 2]
        self.T = np.stack([b - a, c - a], axis=2)    # (F, 2, 2)
        self.Tinv = np.linalg.inv(self.T)

    def barycentric(self, tri, k):
        lam = np.einsum("nij,nj->ni", self.Tinv[tri], k - self.corners[tri, 0])
        return np.stack([1 - lam[:, 0] - lam[:, 1], lam[:, 0], lam[:, 1]], axis=1)

    def locate(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        k = _klein(z)
        tri = np.full(len(z), -1)
        best = np.full(len(z), -np.inf)
        _, cand = self.tree.query(k, k=min(12, len(self.corners)))
        for j in range(cand.shape[1]):
            bc = self.barycentric(cand[:, j], k)
            m = bc.min(axis=1)
            better = m > best
            tri[better] = cand[better, j]
            best[better] = m[better]
        missing = best < -1e-9
        if missing.any():
            for i in np.nonzero(missing)[0]:
                bc = self.barycentric(np.arange(len(self.corners)),
                                      np.broadcast_to(k[i], (len(self.corners), 2)))
                j = int(np.argmax(bc.min(axis=1)))
                tri[i], best[i] = j, bc[j].min()
        if np.any(best < -1e-6):
            raise ValueError("point outside the octagon")
        return tri, self.barycentric(tri, k)

    def interpolate(self, point_values, z):
        tri, bc = self.locate(z)
        return np.einsum("ni,ni->n", bc, point_values[self.mesh.tri_points[tri]])


def evaluate_primitive(gens, locator: MeshLocator, field: PrimitiveField, z):
    """f on the upper half-plane: f(h y0) = f(y0) + period(h)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty(len(z))
    base = np.empty(len(z), dtype=complex)
    shift = np.empty(len(z))
    for i, zi in enumerate(z):
        word, z0 = fuchsian.reduce_to_domain(gens, zi)
        base[i] = z0
        shift[i] = fuchsian.period(field.periods, word)
    out[:] = locator.interpolate(field.values, base) + shift
    return out


def circle_average(gens, locator, field, x: complex, rho: float, n: int = 256) -> float:
    """Mean of f over the hyperbolic circle of radius rho about x."""
    th = 2 * np.pi * (np.arange(n) + 0.5) / n
    # circle about i, moved to x by the affine isometry w -> Re x + Im x * w
    w = (np.cos(th) * np.sinh(rho) + 1j) / (np.cosh(rho) - np.sin(th) * np.sinh(rho))
    pts = x.real + x.imag * w
    return float(np.mean(evaluate_primitive(gens, locator, field, pts)))


# ---------------------------------------------------------------------------

def stencil_points(x: complex, eps: float = STENCIL_EPS) -> np.ndarray:
    """Points at geodesic distance eps from x along the two unit directions
    (horizontal, vertical): [+e1, -e1, +e2, -e2]."""
    a, b = x.real, x.imag
    horiz = math.tanh(eps) + 1j / math.cosh(eps)
    return np.array([a + b * horiz, a + b * (-horiz.real + 1j * horiz.imag),
                     a + 1j * b * math.exp(eps), a + 1j * b * math.exp(-eps)])


class RadialAverager:
    """Evaluates F and dF for one form, kernel radius t and quadrature level."""

    def __init__(self, gens, mesh: SurfaceMesh, omega, t: float, quad_level: int,
                 field: PrimitiveField | None = None, locator: MeshLocator | None = None,
                 ramp_cells: float = 8.0):
        self.gens, self.mesh, self.t = gens, mesh, t
        self.omega = np.asarray(omega, dtype=float)
        self.field = field or primitive_on_domain(mesh, self.omega)
        self.locator = locator or MeshLocator(mesh)
        quad = polygon_quadrature(gens.vertices, quad_level)
        self.nodes, self.weights = quad.nodes, quad.weights
        self.f_nodes = self.locator.interpolate(self.field.values, self.nodes)
        # width of the smeared ball boundary, in typical quadrature cell diameters
        self.cell = ramp_cells * float(np.sqrt(np.median(self.weights)))
        # every translate meeting B(x, t) for x in D has d(i, g i) <= t + diameter
        R = t + fuchsian.DIAMETER + self.cell
        mats, words, _ = fuchsian.enumerate_arrays(gens, fuchsian.OCTAGON_CENTER, R)
        self.mats = np.concatenate([np.eye(2)[None], mats])
        self.shift = np.concatenate([[0.0], fuchsian.exponent_sums(words) @ self.field.periods])
        M = self.mats
        self.centres = (M[:, 0, 0] * 1j + M[:, 0, 1]) / (M[:, 1, 0] * 1j + M[:, 1, 1])
        self._images = {}
        self._lifted = None

    def _image(self, g):
        if g not in self._images:
            M = self.mats[g]
            self._images[g] = (M[0, 0] * self.nodes + M[0, 1]) / (M[1, 0] * self.nodes + M[1, 1])
        return self._images[g]

    def F(self, xs) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=complex))
        out = np.zeros(len(xs))
        reach = self.t + fuchsian.CIRCUMRADIUS + self.cell
        norm = 1.0 / math.sqrt(math.cosh(self.t))
        for g in range(len(self.mats)):
            near = hyp_distance(np.full(len(xs), self.centres[g]), xs) <= reach
            if not near.any():
                continue
            img = self._image(g)
            vals = self.f_nodes + self.shift[g]
            for i in np.nonzero(near)[0]:
                d = hyp_distance(np.full(len(img), xs[i]), img)
                # linear coverage ramp across the ball boundary
                cover = np.clip(0.5 + (self.t - d) / self.cell, 0.0, 1.0)
                out[i] += math.fsum(cover * self.weights * vals)
        return out * norm

    def dF(self, x: complex, eps: float = STENCIL_EPS) -> np.ndarray:
        v = self.F(stencil_points(x, eps))
        return np.array([(v[0] - v[1]) / (2 * eps), (v[2] - v[3]) / (2 * eps)])

    def omega_at(self, x: complex, radius: float = PATCH_RADIUS, degree: int = PATCH_DEGREE) -> np.ndarray:
        """The form at x in the orthonormal frame (y d/dx, y d/dy).

        Harmonic functions stay harmonic in any conformal chart, so the mesh
        values of the primitive near x are fitted by harmonic polynomials in
        the disk coordinate w = (z - x) / (z - conj(x)); the linear part gives
        the gradient.
        """
        if self._lifted is None:
            M = self.mats
            pts = self.mesh.points
            self._lifted = ((M[:, 0, 0, None] * pts + M[:, 0, 1, None])
                            / (M[:, 1, 0, None] * pts + M[:, 1, 1, None]),
                            self.field.values[None, :] + self.shift[:, None])
        z, vals = self._lifted
        dist = hyp_distance(np.full(z.shape, x), z)
        # widen the patch on coarse meshes until the fit is well overdetermined
        while np.count_nonzero(dist <= radius) < 3 * (2 * degree + 1):
            radius *= 1.25
        near = dist <= radius
        w = (z[near] - x) / (z[near] - np.conj(x))
        cols = [np.ones(len(w))]
        for k in range(1, degree + 1):
            wk = w ** k
            cols += [wk.real, wk.imag]
        A = np.stack(cols, axis=1)
        coef, *_ = np.linalg.lstsq(A, vals[near], rcond=None)
        a1, b1 = coef[1], coef[2]
        return np.array([-b1 / 2.0, a1 / 2.0])


def averaged_operator_apply(gens, mesh, omega, x, t: float, quad_level: int) -> np.ndarray:
    return RadialAverager(gens, mesh, omega, t, quad_level).dF(complex(x))


def sample_points(gens, n: int = 50) -> np.ndarray:
    """Fibonacci-spread points in the octagon interior."""
    return fuchsian.domain_sample(gens, n)


@dataclass
class RadialRow:
    x: complex
    dF_norm: float
    mu_omega: float
    ratio: float
    bound: float
    passed: bool


@dataclass
class RadialReport:
    t: float
    mu: float
    n_loops: int
    inj: float
    l2_norm: float
    bound: float
    rows: list
    max_rel_error: float
    rms_rel_error: float
    linf_est: float
    sup_ratio: float           # linf_est / l2
    sup_ratio_bound: float     # mu^-1 sqrt(2 pi (4 t n / Inj + 2))

    @property
    def violations(self) -> int:
        return sum(not r.passed for r in self.rows)


def supnorm_bound(t: float, n: int, inj: float, l2: float) -> float:
    return math.sqrt(2 * math.pi * (4 * t * n / inj + 2)) * l2


def supnorm_bound_check(gens, mesh, omega, t: float, points, quad_level: int,
                        n_loops: int, inj: float, averager: RadialAverager | None = None) -> RadialReport:
    """Evaluate dF at each point and compare with mu(t) w_x and with the
    Cauchy-Schwarz/lattice-count bound."""
    av = averager or RadialAverager(gens, mesh, omega, t, quad_level)
    mu = mu_factor(t)
    l2, _ = form_norms(mesh, omega)
    bnd = supnorm_bound(t, n_loops, inj, l2)
    rows = []
    errs = []
    linf = 0.0
    for x in points:
        x = complex(x)
        dF = av.dF(x)
        w = av.omega_at(x)
        nd, nw = float(np.hypot(*dF)), float(np.hypot(*w))
        err = float(np.hypot(*(dF - mu * w)))
        ratio = nd / (mu * nw) if nw > 0 else math.nan
        if nw > 0:
            errs.append(err / (mu * nw))
        linf = max(linf, nw)
        rows.append(RadialRow(x, nd, mu * nw, ratio, bnd, nd <= bnd))
    sup_ratio = linf / l2 if l2 > 0 else 0.0
    worst = max(errs, default=0.0)
    rms = math.sqrt(math.fsum(e * e for e in errs) / len(errs)) if errs else 0.0
    return RadialReport(t, mu, n_loops, inj, l2, bnd, rows, worst, rms, linf, sup_ratio,
                        bnd / (mu * l2) if l2 > 0 else math.inf)
