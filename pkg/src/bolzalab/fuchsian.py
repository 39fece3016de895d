"""The Bolza surface group and lattice-point machinery.

Letters are integers 0..7.  Letter ``j`` is the side pairing that carries
side ``(j + 4) % 8`` of the fundamental octagon onto side ``j``; letters
``j`` and ``(j + 4) % 8`` are mutually inverse.  Consequently the tile
adjacent to the octagon across side ``j`` is ``g_j(D)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hgeom import (MoebiusMap, NotHyperbolicError, as_complex, hyp_distance,
                    translation_length)

DEFAULT_CAP = 12.0

# regular octagon with interior angles pi/4
CIRCUMRADIUS = math.acosh(3.0 + 2.0 * math.sqrt(2.0))
INRADIUS = math.acosh(1.0 + math.sqrt(2.0))
DIAMETER = 2.0 * CIRCUMRADIUS
SYSTOLE_EXACT = 2.0 * INRADIUS

# g0 g1^-1 g2 g3^-1 g0^-1 g1 g2^-1 g3
RELATION = (0, 5, 2, 7, 4, 1, 6, 3)


def inverse_letter(j: int) -> int:
    return (j + 4) % 8


def _disk_to_uhp(w):
    return 1j * (1 + w) / (1 - w)


def _cayley_conjugate(M: np.ndarray) -> MoebiusMap:
    C = np.array([[1j, 1j], [-1, 1]])
    Cinv = np.array([[1, -1j], [1, 1j]]) / 2j
    real = C @ M @ Cinv
    if np.abs(real.imag).max() > 1e-12:
        raise AssertionError("conjugated side pairing is not real")
    return MoebiusMap.from_matrix(real.real)


def octagon_vertices() -> np.ndarray:
    """Vertices (counter-clockwise) of the fundamental octagon in the upper
    half-plane; its centre is i.  Side j joins vertex j to vertex j+1 and
    has its midpoint in direction j*pi/4 in the disk picture."""
    rad = 2.0 ** -0.25  # Euclidean disk radius of the vertices
    w = rad * np.exp(1j * (-np.pi / 8 + np.arange(8) * np.pi / 4))
    return _disk_to_uhp(w)


OCTAGON_CENTER = 1j


@dataclass(frozen=True)
class GeneratorSet:
    gens: tuple  # 8 MoebiusMaps indexed by letter
    relation_word: tuple = RELATION
    vertices: np.ndarray = field(default_factory=octagon_vertices, compare=False)

    def word_map(self, word: Sequence[int]) -> MoebiusMap:
        m = MoebiusMap.identity()
        for j in word:
            m = m @ self.gens[j]
        return m

    @property
    def matrices(self) -> np.ndarray:
        return np.array([g.matrix for g in self.gens])


def bolza_group() -> GeneratorSet:
    L = SYSTOLE_EXACT
    ch, sh = math.cosh(L / 2), math.sinh(L / 2)
    T = np.array([[ch, sh], [sh, ch]], dtype=complex)
    gens = []
    for j in range(8):
        th = j * np.pi / 4
        R = np.diag([np.exp(0.5j * th), np.exp(-0.5j * th)])
        gens.append(_cayley_conjugate(R @ T @ np.conj(R)))
    gs = GeneratorSet(tuple(gens))
    rel = gs.word_map(RELATION)
    if not rel.close_to(MoebiusMap.identity(), 1e-9):
        raise AssertionError("octagon relation does not close up")
    return gs


@dataclass(frozen=True)
class GroupElement:
    word: tuple
    map: MoebiusMap
    displacement: float


class EnumerationCapError(ValueError):
    def __init__(self, R: float, cap: float, found: int = 0):
        super().__init__(f"radius {R} exceeds enumeration cap {cap} "
                         f"(elements found below cap: {found})")
        self.R, self.cap, self.found = R, cap, found


class EmptyEnumerationError(ValueError):
    """No nontrivial element found; retry with a larger search radius."""


def _canonical(M: np.ndarray) -> np.ndarray:
    """Canonical sign for a stack of matrices (n, 2, 2): the first entry of
    magnitude above 1e-9 is made positive."""
    flat = M.reshape(len(M), 4)
    big = np.abs(flat) > 1e-9
    first = np.argmax(big, axis=1)
    s = np.sign(flat[np.arange(len(flat)), first])
    return flat * s[:, None]


class _Dedup:
    """Matrix set with tolerance-aware hashing on a 1e-6 grid."""

    SCALE = 1e6

    def __init__(self):
        self.keys = set()

    def add_new(self, flat: np.ndarray) -> np.ndarray:
        """Insert rows of ``flat`` (n, 4); return mask of rows that were new."""
        scaled = flat * self.SCALE
        k = np.rint(scaled).astype(np.int64)
        frac = scaled - k
        near = np.abs(np.abs(frac) - 0.5) < 0.05
        new = np.zeros(len(flat), dtype=bool)
        for i, row in enumerate(k.tolist()):
            key = tuple(row)
            if key in self.keys:
                continue
            if near[i].any() and self._neighbour_seen(row, near[i], frac[i]):
                continue
            self.keys.add(key)
            new[i] = True
        return new

    def _neighbour_seen(self, row, near, frac) -> bool:
        options = []
        for v, n, f in zip(row, near, frac):
            options.append((v, v + (1 if f > 0 else -1)) if n else (v,))
        for combo in np.array(np.meshgrid(*options)).T.reshape(-1, 4).tolist():
            if tuple(combo) in self.keys:
                return True
        return False


def reduce_to_domain(gens: GeneratorSet, z: complex, max_steps: int = 500):
    """Return (word, z0) with z = word_map(word)(z0) and z0 in the closed octagon.

    The octagon is the Dirichlet domain of i, so while z lies outside it
    some letter strictly decreases the distance to i; apply the best one.
    """
    z0 = complex(z)
    word = []
    for _ in range(max_steps):
        imgs = np.array([g(z0) for g in gens.gens])
        d = hyp_distance(np.full(8, OCTAGON_CENTER), imgs)
        j = int(np.argmin(d))
        if d[j] >= hyp_distance(z0, OCTAGON_CENTER) - 1e-12:
            return _free_reduce(word), z0
        z0 = imgs[j]
        word.append(inverse_letter(j))
    raise RuntimeError("domain reduction did not terminate")


def _reach(gens: GeneratorSet, x: complex) -> float:
    """max distance from x to the octagon (attained at a vertex)."""
    return float(np.max(hyp_distance(np.full(8, x), gens.vertices)))


def _bfs(gens: GeneratorSet, x: complex, R: float):
    """All elements with d(x, gx) <= R for x in the closed octagon.

    Every such element is reached through prefixes whose tiles meet the
    segment [x, gx], so pruning prefixes at R + reach(x) loses nothing.
    """
    G = gens.matrices
    thresh = R + _reach(gens, x)
    # index 8 is the empty word, which forbids nothing
    inv = np.array([inverse_letter(j) for j in range(8)] + [-1])
    seen = _Dedup()
    seen.add_new(np.eye(2).reshape(1, 4))
    mats = np.eye(2)[None]
    words = [()]
    last = np.array([8])
    out_m, out_w, out_d = [], [], []
    xc = complex(x)
    while len(mats):
        cand = np.einsum("nij,gjk->ngik", mats, G).reshape(-1, 2, 2)
        letters = np.tile(np.arange(8), len(mats))
        parent = np.repeat(np.arange(len(mats)), 8)
        ok = letters != inv[np.repeat(last, 8)]
        num = cand[:, 0, 0] * xc + cand[:, 0, 1]
        den = cand[:, 1, 0] * xc + cand[:, 1, 1]
        disp = hyp_distance(np.full(len(cand), xc), num / den)
        ok &= disp <= thresh
        idx = np.nonzero(ok)[0]
        if len(idx) == 0:
            break
        flat = _canonical(cand[idx])
        fresh = seen.add_new(flat)
        idx = idx[fresh]
        mats = cand[idx]
        last = letters[idx]
        words = [words[parent[i]] + (int(letters[i]),) for i in idx]
        keep = disp[idx] <= R
        out_m.append(_canonical(mats[keep]).reshape(-1, 2, 2))
        out_w.extend(w for w, k in zip(words, keep) if k)
        out_d.append(disp[idx][keep])
    if not out_w:
        return np.zeros((0, 2, 2)), [], np.zeros(0)
    return np.concatenate(out_m), out_w, np.concatenate(out_d)


def enumerate_elements(gens: GeneratorSet, x=OCTAGON_CENTER, R: float = 6.0,
                       cap: float = DEFAULT_CAP) -> list[GroupElement]:
    """Nontrivial elements g with d(x, gx) <= R, each exactly once."""
    arrays = enumerate_arrays(gens, x, R, cap)
    return [GroupElement(w, MoebiusMap.from_matrix(m, normalize=False), float(d))
            for m, w, d in zip(*arrays)]


def enumerate_arrays(gens: GeneratorSet, x=OCTAGON_CENTER, R: float = 6.0,
                     cap: float = DEFAULT_CAP):
    """Array form of :func:`enumerate_elements`: (matrices, words, displacements),
    sorted by displacement then word."""
    if R > cap:
        raise EnumerationCapError(R, cap, len(enumerate_arrays(gens, x, cap, cap)[1]))
    xc = as_complex(x)
    hw, x0 = reduce_to_domain(gens, xc)
    mats, words, disp = _bfs(gens, x0, R)
    if len(words) and hw:
        # elements for x are h g h^-1 with g found for x0 = h^-1 x
        h = gens.word_map(hw)
        H, Hi = h.matrix, h.inverse().matrix
        mats = _canonical(np.einsum("ij,njk,kl->nil", H, mats, Hi)).reshape(-1, 2, 2)
        words = [_free_reduce(hw + w + tuple(inverse_letter(j) for j in reversed(hw)))
                 for w in words]
    order = np.lexsort((np.array([str(w) for w in words]), disp)) if len(words) else []
    return mats[order], [words[i] for i in order], disp[order]


def _free_reduce(word) -> tuple:
    out = []
    for j in word:
        if out and out[-1] == inverse_letter(j):
            out.pop()
        else:
            out.append(j)
    return tuple(out)


# ---------------------------------------------------------------------------
# Lattice counting

def cosh_shell_bound(r: float, rg: float) -> float:
    return (math.cosh(r + 1 + rg) - math.cosh(r - rg)) / (math.cosh(rg) - 1)


def exp_shell_bound(r: float, rg: float) -> float:
    return math.exp(rg + 1) / rg ** 2 * math.exp(r)


@dataclass
class ShellTable:
    basepoint: complex
    max_radius: float
    counts: np.ndarray        # counts[r] = #{g : r < d(x, gx) <= r + 1}
    inj_at_base: float
    cosh_bounds: np.ndarray
    exp_bounds: np.ndarray

    @property
    def violations(self) -> int:
        return int(np.sum(self.counts > self.cosh_bounds) + np.sum(self.counts > self.exp_bounds))

    def rows(self):
        for r, (c, cb, eb) in enumerate(zip(self.counts, self.cosh_bounds, self.exp_bounds)):
            yield r, r + 1, int(c), float(cb), float(eb)


def shell_table(gens: GeneratorSet, x=OCTAGON_CENTER, R: float = 8.0,
                cap: float = DEFAULT_CAP) -> ShellTable:
    """Integer-shell histogram of displacements with both lattice bounds.

    Only shells lying entirely inside the enumerated ball are tabulated.
    """
    _, _, disp = enumerate_arrays(gens, x, R, cap)
    if len(disp) == 0:
        raise EmptyEnumerationError(f"no element within {R}; increase R")
    inj = 0.5 * float(disp.min())
    nshell = int(math.floor(R))
    counts = np.zeros(nshell, dtype=int)
    # shell r is (r, r+1]
    idx = np.ceil(disp).astype(int) - 1
    np.add.at(counts, idx[idx < nshell], 1)
    cb = np.array([cosh_shell_bound(r, inj) for r in range(nshell)])
    eb = np.array([exp_shell_bound(r, inj) for r in range(nshell)])
    return ShellTable(as_complex(x), R, counts, inj, cb, eb)


def injectivity_radius(gens: GeneratorSet, x=OCTAGON_CENTER, search_R: float = 8.0) -> float:
    """Half the minimal displacement at x over nontrivial elements."""
    _, _, disp = enumerate_arrays(gens, x, search_R)
    if len(disp) == 0:
        raise EmptyEnumerationError(
            f"no nontrivial element within {search_R} of the basepoint; retry with larger R")
    return 0.5 * float(disp.min())


def domain_sample(gens: GeneratorSet, n: int) -> np.ndarray:
    """Deterministic sample of n points in the octagon.

    A Fibonacci spiral of N points fills the disk circumscribing the octagon
    (in the disk model); N grows until n of them pass the Dirichlet test.
    """
    golden = math.pi * (3.0 - math.sqrt(5.0))
    rad = 2.0 ** -0.25
    total = n
    while True:
        k = np.arange(total)
        w = rad * np.sqrt((k + 0.5) / total) * np.exp(1j * golden * k)
        z = _disk_to_uhp(w)
        pts = [complex(zi) for zi in z if in_domain(gens, complex(zi))]
        if len(pts) >= n:
            return np.array(pts[:n])
        total += max(1, (n - len(pts)))


def in_domain(gens: GeneratorSet, z: complex) -> bool:
    d0 = hyp_distance(z, OCTAGON_CENTER)
    imgs = np.array([g(OCTAGON_CENTER) for g in gens.gens])
    return bool(np.all(hyp_distance(np.full(8, z), imgs) >= d0 - 1e-12))


def surface_injectivity_radius(gens: GeneratorSet, n: int = 64, search_R: float = 8.0):
    """Estimate Inj(X) as the minimum of Inj_x over a sample of the octagon.

    The true value is half the systole (attained on a systolic geodesic);
    the sample estimate is an upper bound for it.  Returns (estimate,
    sample spacing) where the spacing is the largest nearest-neighbour gap.
    """
    pts = domain_sample(gens, n)
    vals = [injectivity_radius(gens, z, search_R) for z in pts]
    D = hyp_distance(pts[:, None], pts[None, :])
    np.fill_diagonal(D, np.inf)
    return float(min(vals)), float(D.min(axis=1).max())


def systole(gens: GeneratorSet, search_R: float | None = None, x=OCTAGON_CENTER) -> float:
    """Shortest translation length in the group.

    Every conjugacy class has a representative whose axis meets the octagon,
    and for such g, d(x, gx) <= l(g) + 2 reach(x).  The default search radius
    covers the generators' translation length plus that margin.
    """
    hw, x0 = reduce_to_domain(gens, as_complex(x))
    if search_R is None:
        search_R = translation_length(gens.gens[0]) + 2 * _reach(gens, x0)
    mats, _, _ = enumerate_arrays(gens, x, search_R)
    tr = np.abs(mats[:, 0, 0] + mats[:, 1, 1])
    tr = tr[tr > 2.0]
    if len(tr) == 0:
        raise EmptyEnumerationError("no hyperbolic element found; increase search_R")
    return float(2.0 * np.arccosh(tr.min() / 2.0))


def period(periods4, word: Sequence[int]) -> float:
    """Integral of the harmonic form with the given generator periods along
    the closed curve represented by ``word`` (abelianisation)."""
    # integer exponent sums first, so relators give exactly zero
    return float(exponent_sums([word])[0] @ np.asarray(periods4, dtype=float))


def exponent_sums(words) -> np.ndarray:
    """(n, 4) integer matrix of generator exponent sums; period = E @ p."""
    E = np.zeros((len(words), 4), dtype=int)
    for i, w in enumerate(words):
        for j in w:
            if j < 4:
                E[i, j] += 1
            else:
                E[i, j - 4] -= 1
    return E


def primitive_loop_count(gens: GeneratorSet, x=OCTAGON_CENTER, L: float = 8.0,
                         cap: float = DEFAULT_CAP) -> int:
    """Number of primitive geodesic loops at x of length <= L, with g and
    g^-1 counted as one loop.

    If g = b^k then d(x, bx) <= d(x, gx), so the root b is enumerated too and
    it suffices to mark the powers of enumerated elements.
    """
    mats, words, disp = enumerate_arrays(gens, x, L, cap)
    if len(words) == 0:
        return 0
    xc = as_complex(x)
    index = {}
    for i, row in enumerate(np.rint(_canonical(mats) * _Dedup.SCALE).astype(np.int64).tolist()):
        index[tuple(row)] = i
    proper_power = np.zeros(len(words), dtype=bool)
    for i in range(len(words)):
        P = mats[i]
        Pk = P @ P
        while True:
            z = (Pk[0, 0] * xc + Pk[0, 1]) / (Pk[1, 0] * xc + Pk[1, 1])
            if hyp_distance(xc, z) > L + 1e-9:
                break
            key = tuple(np.rint(_canonical(Pk[None]) * _Dedup.SCALE).astype(np.int64)[0].tolist())
            j = index.get(key)
            if j is None:
                j = _lookup(mats, Pk)
            if j is not None:
                proper_power[j] = True
            Pk = Pk @ P
    return int((~proper_power).sum()) // 2


def _lookup(mats, M, tol=1e-7):
    diff = np.abs(_canonical(mats) - _canonical(M[None])).max(axis=1)
    j = int(np.argmin(diff))
    return j if diff[j] <= tol else None


def orbit_count(gens: GeneratorSet, z, w, r: float) -> int:
    """#{g in group : d(z, g w) <= r}, identity included."""
    zc, wc = as_complex(z), as_complex(w)
    # d(z, gw) <= r implies d(w, gw) <= r + d(z, w)
    R = r + hyp_distance(zc, wc)
    mats, _, _ = enumerate_arrays(gens, wc, R)
    imgs = (mats[:, 0, 0] * wc + mats[:, 0, 1]) / (mats[:, 1, 0] * wc + mats[:, 1, 1])
    n = int(np.sum(hyp_distance(np.full(len(imgs), zc), imgs) <= r)) if len(imgs) else 0
    return n + (1 if hyp_distance(zc, wc) <= r else 0)


def orbit_bound_check(gens: GeneratorSet, R: float, points, radii, inj: float,
                     n_loops: int | None = None):
    """Check #{g : d(z, g w) <= r/2} <= 2 n r / Inj + 2 over all pairs of
    sample points and radii r <= R, with n = max primitive loop count at
    the sample points (an estimate of N_R).  Returns (n, worst slack, rows).
    """
    pts = [as_complex(p) for p in points]
    if n_loops is None:
        n_loops = max(primitive_loop_count(gens, p, R) for p in pts)
    rows = []
    for r in radii:
        if r > R:
            raise ValueError("radii must not exceed R")
        bound = 2 * n_loops * r / inj + 2
        for z in pts:
            for w in pts:
                c = orbit_count(gens, z, w, r / 2)
                rows.append((z, w, r, c, bound))
    slack = min(b - c for *_, c, b in rows)
    return n_loops, slack, rows
