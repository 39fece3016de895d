"""Triangulated Bolza surface and discrete exterior calculus on it.

The octagon is fanned from its centre into eight geodesic triangles and each
triangle is split into four through geodesic edge midpoints, ``level`` times.
Points of the octagon ("unglued" points) keep their coordinates; boundary
points are glued by the side pairings to form the vertices of the surface.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu

from . import fuchsian
from .hgeom import from_hyperboloid, hyp_distance, to_hyperboloid

MAX_LEVEL = 7


class NonClosedFormError(ValueError):
    pass


@dataclass
class SurfaceMesh:
    level: int
    points: np.ndarray          # (P,) complex, unglued points in the octagon
    point_sides: list           # side labels of each unglued point
    vertex_of_point: np.ndarray  # (P,) glued vertex id
    tri_points: np.ndarray      # (F, 3) unglued point ids, counter-clockwise
    edges: np.ndarray           # (E, 2) glued vertex ids (tail, head)
    edge_rep: np.ndarray        # (E, 2) unglued point ids of the representative copy
    tri_edges: np.ndarray       # (F, 3) glued edge ids of (ab, bc, ca)
    tri_signs: np.ndarray       # (F, 3) +-1 orientation of those edges
    uedge_index: dict           # (p, q) unglued oriented pair -> (edge id, sign)
    pairings: list              # (P_on_side_m+4, Q_on_side_m, m) unglued point pairs
    edge_length: np.ndarray     # (E,)
    tri_lengths: np.ndarray     # (F, 3) lengths of ab, bc, ca
    tri_angles: np.ndarray      # (F, 3) angles at a, b, c
    tri_area: np.ndarray        # (F,)
    vertex_area: np.ndarray     # (V,) lumped dual areas
    metadata: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_area)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.tri_points)

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_triangles

    @property
    def total_area(self) -> float:
        return math.fsum(self.tri_area)

    @property
    def tri_vertices(self) -> np.ndarray:
        return self.vertex_of_point[self.tri_points]

    @cached_property
    def operators(self) -> "ExteriorCalculus":
        return exterior_calculus(self)

    @cached_property
    def whitney(self) -> np.ndarray:
        """(F, 2, 3) maps from the three edge values (ab, bc, ca) of a
        triangle to the constant vector of its Whitney 1-form in the
        triangle's flat chart."""
        return _whitney_maps(self.tri_lengths)

    @cached_property
    def hat_gradients(self) -> np.ndarray:
        """(F, 3, 2) gradients of the three hat functions in the flat chart."""
        X = _flat_charts(self.tri_lengths)
        F = len(X)
        G = np.empty((F, 3, 2))
        for k in range(3):
            i, j = (k + 1) % 3, (k + 2) % 3
            e = X[:, j] - X[:, i]                      # edge opposite vertex k
            n = np.stack([e[:, 1], -e[:, 0]], axis=1)  # outward for ccw
            area2 = _cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0])
            G[:, k] = -n / area2[:, None]
        return G


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _flat_charts(lengths: np.ndarray) -> np.ndarray:
    """Flat triangles with the given side lengths (ab, bc, ca): (F, 3, 2)."""
    c, a, b = lengths[:, 0], lengths[:, 1], lengths[:, 2]
    x = (c * c + b * b - a * a) / (2 * c)
    y = np.sqrt(np.maximum(b * b - x * x, 0.0))
    X = np.zeros((len(lengths), 3, 2))
    X[:, 1, 0] = c
    X[:, 2, 0] = x
    X[:, 2, 1] = y
    return X


def _whitney_maps(lengths: np.ndarray) -> np.ndarray:
    X = _flat_charts(lengths)
    E = np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 1], X[:, 0] - X[:, 2]], axis=1)
    return np.linalg.pinv(E)  # (F, 2, 3); exact when the edge values sum to zero


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        a, b = self.find(i), self.find(j)
        if a != b:
            self.parent[max(a, b)] = min(a, b)


def _subdivide(level: int):
    """Unglued points (hyperboloid), their side labels and triangles."""
    gens = fuchsian.bolza_group()
    pts = [to_hyperboloid(fuchsian.OCTAGON_CENTER)] + list(to_hyperboloid(gens.vertices))
    sides = [frozenset()] + [frozenset({(k - 1) % 8, k}) for k in range(8)]
    tris = [(0, 1 + k, 1 + (k + 1) % 8) for k in range(8)]
    for _ in range(level):
        mid = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in mid:
                P = pts[key[0]] + pts[key[1]]
                P = P / math.sqrt(P[0] ** 2 - P[1] ** 2 - P[2] ** 2)
                mid[key] = len(pts)
                pts.append(P)
                sides.append(sides[i] & sides[j])
            return mid[key]

        new = []
        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        tris = new
    return gens, np.array(pts), sides, np.array(tris)


def _law_of_cosines_angles(l_ab, l_bc, l_ca):
    """Angles at a, b, c of a hyperbolic triangle from its side lengths."""
    def angle(opp, s1, s2):
        num = np.cosh(s1) * np.cosh(s2) - np.cosh(opp)
        return np.arccos(np.clip(num / (np.sinh(s1) * np.sinh(s2)), -1.0, 1.0))

    return angle(l_bc, l_ab, l_ca), angle(l_ca, l_ab, l_bc), angle(l_ab, l_bc, l_ca)


def build_mesh(level: int, max_level: int = MAX_LEVEL) -> SurfaceMesh:
    if level < 0 or level > max_level:
        raise ValueError(f"level must be in [0, {max_level}], got {level}")
    gens, H, sides, tris = _subdivide(level)
    points = from_hyperboloid(H)
    n = len(points)

    # glue boundary points of side m+4 to their images on side m
    on_side = {s: np.array([i for i in range(n) if s in sides[i]]) for s in range(8)}
    uf = _UnionFind(n)
    image = {}
    pairings = []
    for m in range(4):
        src = on_side[m + 4]
        dst = on_side[m]
        img = gens.gens[m](points[src])
        dist = hyp_distance(img[:, None], points[dst][None, :])
        j = np.argmin(dist, axis=1)
        if dist[np.arange(len(src)), j].max() > 1e-8:
            raise AssertionError("side pairing does not map mesh points to mesh points")
        for p, q in zip(src, dst[j]):
            uf.union(int(p), int(q))
            image[(int(p), m)] = int(q)
            pairings.append((int(p), int(q), m))
    roots = sorted({uf.find(i) for i in range(n)})
    root_id = {r: k for k, r in enumerate(roots)}
    vertex_of_point = np.array([root_id[uf.find(i)] for i in range(n)])

    # unglued edges; those on sides 4..7 are copies of edges on sides 0..3
    uedges = sorted({(min(a, b), max(a, b)) for t in tris for a, b in
                     ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))})
    uedge_index = {}
    reps = []
    copies = []
    for p, q in uedges:
        shared = sides[p] & sides[q]
        s = next((s for s in shared if s >= 4), None)
        if s is None:
            uedge_index[(p, q)] = (len(reps), 1)
            uedge_index[(q, p)] = (len(reps), -1)
            reps.append((p, q))
        else:
            copies.append((p, q, s - 4))
    for p, q, m in copies:
        P, Q = image[(p, m)], image[(q, m)]
        e, sgn = uedge_index[(P, Q)]
        uedge_index[(p, q)] = (e, sgn)
        uedge_index[(q, p)] = (e, -sgn)
    edge_rep = np.array(reps)
    edges = vertex_of_point[edge_rep]

    F = len(tris)
    tri_edges = np.empty((F, 3), dtype=int)
    tri_signs = np.empty((F, 3), dtype=int)
    for f, (a, b, c) in enumerate(tris):
        for k, (p, q) in enumerate(((a, b), (b, c), (c, a))):
            tri_edges[f, k], tri_signs[f, k] = uedge_index[(p, q)]

    # metric
    za, zb, zc = points[tris[:, 0]], points[tris[:, 1]], points[tris[:, 2]]
    lengths = np.stack([hyp_distance(za, zb), hyp_distance(zb, zc), hyp_distance(zc, za)], axis=1)
    angles = np.stack(_law_of_cosines_angles(lengths[:, 0], lengths[:, 1], lengths[:, 2]), axis=1)
    area = np.pi - angles.sum(axis=1)
    if np.any(angles <= 0):
        raise AssertionError("degenerate triangle in mesh")
    edge_length = hyp_distance(points[edge_rep[:, 0]], points[edge_rep[:, 1]])
    V = len(roots)
    vertex_area = np.zeros(V)
    np.add.at(vertex_area, vertex_of_point[tris].ravel(), np.repeat(area / 3.0, 3))

    mesh = SurfaceMesh(
        level=level, points=points, point_sides=sides, vertex_of_point=vertex_of_point,
        tri_points=tris, edges=edges, edge_rep=edge_rep, tri_edges=tri_edges,
        tri_signs=tri_signs, uedge_index=uedge_index, pairings=pairings,
        edge_length=edge_length, tri_lengths=lengths, tri_angles=angles, tri_area=area,
        vertex_area=vertex_area)
    if mesh.euler_characteristic != -2:
        raise AssertionError(f"Euler characteristic {mesh.euler_characteristic} != -2")
    return mesh


# ---------------------------------------------------------------------------

@dataclass
class ExteriorCalculus:
    d0: sp.csr_matrix     # (E, V)
    d1: sp.csr_matrix     # (F, E)
    star0: np.ndarray     # (V,)
    star1: np.ndarray     # (E,)
    nonpositive_edges: np.ndarray

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Weak-form -Laplacian d0^T star1 d0 (symmetric PSD)."""
        return (self.d0.T @ sp.diags(self.star1) @ self.d0).tocsr()

    def codifferential(self, omega) -> np.ndarray:
        """delta omega = star0^-1 d0^T star1 omega."""
        return (self.d0.T @ (self.star1 * omega)) / self.star0

    @cached_property
    def _poisson(self):
        L = self.laplacian[1:, 1:].tocsc()
        return splu(L)

    def exact_part(self, omega) -> np.ndarray:
        """u (with u[0] = 0) minimising ||omega - d0 u||_star1."""
        rhs = self.d0.T @ (self.star1 * omega)
        u = np.zeros(self.d0.shape[1])
        u[1:] = self._poisson.solve(rhs[1:])
        return u


def exterior_calculus(mesh: SurfaceMesh) -> ExteriorCalculus:
    E, V, F = mesh.n_edges, mesh.n_vertices, mesh.n_triangles
    rows = np.repeat(np.arange(E), 2)
    cols = mesh.edges.ravel()
    vals = np.tile([-1.0, 1.0], E)
    d0 = sp.csr_matrix((vals, (rows, cols)), shape=(E, V))  # loops sum to zero
    d0.eliminate_zeros()
    d1 = sp.csr_matrix((mesh.tri_signs.ravel().astype(float),
                        (np.repeat(np.arange(F), 3), mesh.tri_edges.ravel())), shape=(F, E))
    # angle opposite edge ab is at c, etc.
    opposite = mesh.tri_angles[:, [2, 0, 1]]
    star1 = np.zeros(E)
    np.add.at(star1, mesh.tri_edges.ravel(), 0.5 / np.tan(opposite.ravel()))
    bad = np.nonzero(star1 <= 0)[0]
    if len(bad):
        msg = f"{len(bad)} edges with nonpositive cotan weight"
        mesh.metadata["cotan_warning"] = msg
        warnings.warn(msg)
    return ExteriorCalculus(d0, d1, mesh.vertex_area.copy(), star1, bad)


# ---------------------------------------------------------------------------
# Harmonic forms

@dataclass
class HarmonicForm:
    cochain: np.ndarray
    periods: np.ndarray
    l2_norm: float
    linf_norm: float
    codiff_residual: float = 0.0


def _loop_paths(mesh: SurfaceMesh):
    """For each letter m = 0..3 an unglued oriented point path representing
    the generator loop: centre -> Q on side m, then P -> centre where
    Q = g_m(P) with P on side m+4."""
    n = len(mesh.points)
    ue = np.array([k for k in mesh.uedge_index if k[0] < k[1]])
    w = hyp_distance(mesh.points[ue[:, 0]], mesh.points[ue[:, 1]])
    G = sp.csr_matrix((w, (ue[:, 0], ue[:, 1])), shape=(n, n))
    _, pred = csgraph.dijkstra(G, directed=False, indices=0, return_predecessors=True)

    def path_from_centre(target):
        out = [target]
        while out[-1] != 0:
            out.append(int(pred[out[-1]]))
        return out[::-1]

    loops = []
    for m in range(4):
        # the pairing whose image point is closest to the centre keeps paths short
        cands = [(p, q) for p, q, mm in mesh.pairings if mm == m]
        p, q = min(cands, key=lambda pq: (hyp_distance(mesh.points[pq[1]], 1j), pq))
        loops.append((path_from_centre(q), path_from_centre(p)[::-1]))
    return loops


def _path_sum(mesh: SurfaceMesh, path, omega) -> float:
    total = 0.0
    for a, b in zip(path[:-1], path[1:]):
        e, s = mesh.uedge_index[(a, b)]
        total += s * omega[e]
    return total


def form_periods(mesh: SurfaceMesh, omega, check_closed: bool = True) -> np.ndarray:
    """Periods of a closed cochain over the four generator loops."""
    omega = np.asarray(omega)
    if check_closed:
        curl = mesh.operators.d1 @ omega
        scale = max(1.0, float(np.abs(omega).max()))
        if np.abs(curl).max() > 1e-9 * scale:
            raise NonClosedFormError(f"cochain is not closed (max |d omega| = {np.abs(curl).max():.2e})")
    loops = _cached_loops(mesh)
    return np.array([_path_sum(mesh, a, omega) + _path_sum(mesh, b, omega) for a, b in loops])


def _cached_loops(mesh):
    if "_loops" not in mesh.__dict__:
        mesh.__dict__["_loops"] = _loop_paths(mesh)
    return mesh.__dict__["_loops"]


def whitney_vectors(mesh: SurfaceMesh, omega) -> np.ndarray:
    """(F, 2) constant vector of the 1-form on each triangle (flat chart)."""
    vals = mesh.tri_signs * np.asarray(omega)[mesh.tri_edges]
    return np.einsum("fij,fj->fi", mesh.whitney, vals)


def form_norms(mesh: SurfaceMesh, omega) -> tuple[float, float]:
    v = whitney_vectors(mesh, omega)
    n2 = np.einsum("fi,fi->f", v, v)
    return math.sqrt(math.fsum(mesh.tri_area * n2)), float(np.sqrt(n2.max()))


def cut_cochain(mesh: SurfaceMesh, periods4) -> np.ndarray:
    """Closed cochain d F of a function F on the unglued octagon that jumps by
    periods4[m] from each point P of side m+4 to its partner g_m(P).

    F is integer-valued for integer periods, so the result is closed exactly.
    """
    p = np.asarray(periods4)
    n = len(mesh.points)
    Fv = np.zeros(n, dtype=p.dtype if p.dtype.kind in "iu" else float)
    nbrs = {}
    for a, b, m in mesh.pairings:
        nbrs.setdefault(a, []).append((b, p[m]))
        nbrs.setdefault(b, []).append((a, -p[m]))
    done = set()
    # octagon corners first so that side points inherit their corner value
    corners = [i for i in range(n) if len(mesh.point_sides[i]) == 2]
    start_of_side = {}
    for c in corners:
        s = sorted(mesh.point_sides[c])
        # a corner starts side k if it is vertex k, which lies on sides k-1, k
        k = s[1] if (s[0] + 1) % 8 == s[1] else s[0]
        start_of_side[k] = c
    order = corners + [i for i in range(n) if len(mesh.point_sides[i]) == 1 and
                       min(mesh.point_sides[i]) >= 4]
    for root in order:
        if root in done:
            continue
        if root not in corners:
            Fv[root] = Fv[start_of_side[min(mesh.point_sides[root])]]
        stack = [root]
        done.add(root)
        while stack:
            a = stack.pop()
            for b, jump in nbrs.get(a, ()):
                if b in done:
                    if Fv[b] != Fv[a] + jump:
                        raise AssertionError("inconsistent period jumps at octagon corner")
                    continue
                Fv[b] = Fv[a] + jump
                done.add(b)
                stack.append(b)
    rep = mesh.edge_rep
    return (Fv[rep[:, 1]] - Fv[rep[:, 0]]).astype(float)


def harmonic_projection(mesh: SurfaceMesh, omega) -> np.ndarray:
    ops = mesh.operators
    return omega - ops.d0 @ ops.exact_part(omega)


def harmonic_basis(mesh: SurfaceMesh) -> list[HarmonicForm]:
    """Four harmonic cochains whose generator-loop periods form the identity."""
    ops = mesh.operators
    raw = []
    for k in range(4):
        e = np.zeros(4, dtype=int)
        e[k] = 1
        raw.append(harmonic_projection(mesh, cut_cochain(mesh, e)))
    raw = np.array(raw)
    Pi = np.array([form_periods(mesh, w) for w in raw])  # Pi[i, k] = period_k(raw_i)
    basis = np.linalg.solve(Pi.T, raw) if not np.allclose(Pi, np.eye(4), atol=0) else raw
    out = []
    for w in basis:
        l2, linf = form_norms(mesh, w)
        res = float(np.sqrt(np.sum(ops.star0 * ops.codifferential(w) ** 2)))
        out.append(HarmonicForm(w, form_periods(mesh, w), l2, linf, res))
    return out


def combine(mesh: SurfaceMesh, basis: list[HarmonicForm], coeffs) -> HarmonicForm:
    w = sum(c * b.cochain for c, b in zip(coeffs, basis))
    l2, linf = form_norms(mesh, w)
    res = float(np.sqrt(np.sum(mesh.operators.star0 * mesh.operators.codifferential(w) ** 2)))
    return HarmonicForm(w, form_periods(mesh, w), l2, linf, res)


# ---------------------------------------------------------------------------
# Export

def write_mesh(mesh: SurfaceMesh, path, header: str = "") -> None:
    """Plain-text simplicial complex: counts, vertices, edges, triangles,
    identifications (unglued point -> glued vertex, plus side pairings)."""
    with open(path, "w") as f:
        for line in header.splitlines():
            f.write(f"# {line}\n")
        f.write(f"counts {mesh.n_vertices} {mesh.n_edges} {mesh.n_triangles} {len(mesh.points)}\n")
        f.write("vertices\n")
        reps = np.full(mesh.n_vertices, -1)
        for i in range(len(mesh.points) - 1, -1, -1):
            reps[mesh.vertex_of_point[i]] = i
        for v, i in enumerate(reps):
            z = mesh.points[i]
            f.write(f"{v} {z.real:.17g} {z.imag:.17g}\n")
        f.write("edges\n")
        for e, (a, b) in enumerate(mesh.edges):
            f.write(f"{e} {a} {b} {mesh.edge_length[e]:.17g}\n")
        f.write("triangles\n")
        for t, (a, b, c) in enumerate(mesh.tri_vertices):
            f.write(f"{t} {a} {b} {c}\n")
        f.write("identifications\n")
        for i, z in enumerate(mesh.points):
            f.write(f"{i} {mesh.vertex_of_point[i]} {z.real:.17g} {z.imag:.17g}\n")
        for p, q, m in mesh.pairings:
            f.write(f"pair {p} {q} {m}\n")


def write_form(omega, path, header: str = "") -> None:
    with open(path, "w") as f:
        for line in header.splitlines():
            f.write(f"# {line}\n")
        f.write("edge_id,value\n")
        for e, v in enumerate(omega):
            f.write(f"{e},{v:.17g}\n")
