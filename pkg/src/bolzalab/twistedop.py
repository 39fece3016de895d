"""Discrete twisted Laplacian and its complex spectrum.

With a harmonic cochain w, the weak form of -Delta_w on piecewise linear
functions is

    K + B - V

where K = d0^T star1 d0 is the cotan stiffness, B the transport term
2<w, du> tested against the edge averages of v (so that B is skew up to the
discrete codifferential of w), and V the lumped potential |w|^2.  All
eigenproblems are posed against the lumped mass matrix M = star0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigs

from .surfmesh import SurfaceMesh, whitney_vectors

DENSE_CAP = 6000


class SolverError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


@dataclass
class TwistedOperator:
    stiffness: sp.csr_matrix
    advection: sp.csr_matrix
    potential: sp.csr_matrix
    mass: np.ndarray          # lumped diagonal
    h: float

    @property
    def matrix(self) -> sp.csr_matrix:
        """Weak form of -h^2 Delta_w."""
        return (self.h ** 2 * (self.stiffness + self.advection - self.potential)).tocsr()

    @property
    def n(self) -> int:
        return len(self.mass)


def advection_matrix(mesh: SurfaceMesh, omega) -> sp.csr_matrix:
    """b(u, v) = sum_e star1_e w_e (u_head - u_tail)(v_tail + v_head).

    This is 2<w, du> integrated against v with v averaged along each edge;
    b(u, u) = sum_i u_i^2 (d0^T star1 w)_i vanishes for co-closed w.
    """
    ops = mesh.operators
    c = ops.star1 * np.asarray(omega, dtype=float)
    tail, head = mesh.edges[:, 0], mesh.edges[:, 1]
    rows = np.concatenate([tail, tail, head, head])
    cols = np.concatenate([head, tail, head, tail])
    vals = np.concatenate([c, -c, c, -c])
    V = mesh.n_vertices
    return sp.csr_matrix((vals, (rows, cols)), shape=(V, V))


def potential_matrix(mesh: SurfaceMesh, omega) -> sp.csr_matrix:
    v = whitney_vectors(mesh, omega)
    w = mesh.tri_area * np.einsum("fi,fi->f", v, v) / 3.0
    diag = np.zeros(mesh.n_vertices)
    np.add.at(diag, mesh.tri_vertices.ravel(), np.repeat(w, 3))
    return sp.diags(diag).tocsr()


def assemble_twisted(mesh: SurfaceMesh, omega, h: float = 1.0) -> TwistedOperator:
    if h <= 0:
        raise ValueError("h must be positive")
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (mesh.n_edges,):
        raise ValueError(f"form has {omega.size} values, mesh has {mesh.n_edges} edges")
    ops = mesh.operators
    return TwistedOperator(ops.laplacian, advection_matrix(mesh, omega),
                           potential_matrix(mesh, omega), ops.star0.copy(), h)


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None  # columns, normalised to v* M v = 1
    residuals: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def lambda0_gap(self) -> float:
        ev = self.eigenvalues
        return float(ev[1].real - ev[0].real) if len(ev) > 1 else math.inf


def _sort_key(ev):
    # by real part, conjugate pairs adjacent with negative imaginary part first
    return np.lexsort((np.round(ev.imag, 12), np.round(ev.real, 10)))


def _pair_conjugates(ev: np.ndarray) -> np.ndarray:
    """Make nearly-conjugate eigenvalue pairs exactly conjugate and nearly
    real ones exactly real (the operator is real)."""
    ev = ev.copy()
    used = np.zeros(len(ev), dtype=bool)
    scale = max(1.0, float(np.abs(ev).max())) if len(ev) else 1.0
    for i in range(len(ev)):
        if used[i]:
            continue
        if abs(ev[i].imag) <= 1e-13 * scale:
            ev[i] = ev[i].real
            used[i] = True
            continue
        d = np.abs(ev - np.conj(ev[i]))
        d[used] = np.inf
        d[i] = np.inf
        j = int(np.argmin(d))
        if d[j] <= 1e-9 * scale:
            re = 0.5 * (ev[i].real + ev[j].real)
            im = 0.5 * (abs(ev[i].imag) + abs(ev[j].imag))
            ev[i] = complex(re, np.sign(ev[i].imag) * im)
            ev[j] = complex(re, np.sign(ev[j].imag) * im)
            used[i] = used[j] = True
    return ev


def _residuals(A, M, ev, vecs):
    Mv = M[:, None] * vecs
    R = A @ vecs - Mv * ev[None, :]
    return np.linalg.norm(R, axis=0) / np.linalg.norm(Mv, axis=0)


def compute_spectrum(op: TwistedOperator, k: int | None = None, window=None,
                     mode: str = "auto", vectors: bool = True, tol: float = 1e-8,
                     dense_cap: int = DENSE_CAP) -> Spectrum:
    """Eigenvalues of smallest real part of  A v = lambda M v.

    ``k`` selects a count, ``window=(a, b)`` all eigenvalues with real part in
    [a, b]; with neither the full spectrum is returned (dense only).
    """
    n = op.n
    if mode == "auto":
        mode = "dense" if n <= 1500 or (k is None and window is None) else "iterative"
    if mode == "dense":
        if n > dense_cap:
            raise ValueError(f"dense mode limited to dimension {dense_cap}, got {n}")
        ev, vecs = _dense(op)
    elif mode == "iterative":
        ev, vecs = _iterative(op, k, window)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    order = _sort_key(ev)
    ev, vecs = ev[order], vecs[:, order]
    if window is not None:
        a, b = window
        keep = (ev.real >= a) & (ev.real <= b)
        ev, vecs = ev[keep], vecs[:, keep]
    if k is not None:
        if k > n:
            raise ValueError("k exceeds matrix dimension")
        ev, vecs = ev[:k], vecs[:, :k]
    res = _residuals(op.matrix, op.mass, ev, vecs)
    if len(res) and res.max() > tol:
        raise SolverError(f"eigen-residual {res.max():.2e} exceeds {tol:.0e}", res)
    meta = {"mode": mode, "h": op.h, "dimension": n, "tol": tol}
    return Spectrum(ev, vecs if vectors else None, res, meta)


def _dense(op: TwistedOperator):
    s = 1.0 / np.sqrt(op.mass)
    A = op.matrix.toarray() * s[:, None] * s[None, :]
    if abs(op.advection).sum() == 0:
        ev, W = sla.eigh(A)
        ev = ev.astype(complex)
        W = W.astype(complex)
    else:
        ev, W = sla.eig(A)
        ev = _pair_conjugates(ev)
    vecs = W * s[:, None]
    vecs /= np.sqrt(np.einsum("ij,i,ij->j", vecs.conj(), op.mass, vecs).real)[None, :]
    return ev, _fix_phase(vecs)


def _fix_phase(vecs):
    """Deterministic phase: the largest-modulus entry of each vector is real
    and positive."""
    idx = np.argmax(np.abs(vecs) - 1e-12 * np.arange(len(vecs))[:, None], axis=0)
    ph = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(ph) / ph)[None, :]


def _iterative(op: TwistedOperator, k, window):
    A = op.matrix.tocsc()
    M = sp.diags(op.mass).tocsc()
    # lambda_0 >= -h^2 c(1+c); shifting below the spectrum makes the nearest
    # eigenvalues those of smallest real part
    bound = float(op.potential.diagonal().max() / op.mass.min()) if op.potential.nnz else 0.0
    sigma = -op.h ** 2 * (bound + 1.0)
    want = k if k is not None else 16
    rng = np.random.default_rng(0)
    v0 = rng.standard_normal(op.n)
    while True:
        nev = min(want + 8, op.n - 2)
        ev, W = eigs(A, k=nev, M=M, sigma=sigma, which="LM", v0=v0, tol=0)
        order = np.argsort(ev.real)
        ev, W = ev[order], W[:, order]
        # trust the eigenvalues whose real part is below the farthest one
        done_k = k is not None and np.sum(ev.real < ev.real.max()) >= k
        done_w = window is not None and ev.real.max() > window[1]
        if done_k or done_w or nev >= op.n - 2:
            break
        want *= 2
    ev = _pair_conjugates(ev)
    W = W / np.sqrt(np.einsum("ij,i,ij->j", W.conj(), op.mass, W).real)[None, :]
    return ev, _fix_phase(W)


# ---------------------------------------------------------------------------

@dataclass
class RayleighReport:
    re_mismatch: np.ndarray
    im_mismatch: np.ndarray
    residuals: np.ndarray

    @property
    def max_mismatch(self) -> float:
        return float(max(self.re_mismatch.max(), self.im_mismatch.max()))

    def within(self, factor: float = 10.0, floor: float = 1e-12) -> bool:
        scale = np.maximum(factor * self.residuals, floor)
        return bool(np.all(self.re_mismatch <= scale) and np.all(self.im_mismatch <= scale))


def verify_rayleigh(spec: Spectrum, op: TwistedOperator) -> RayleighReport:
    """Recompute each eigenvalue from the two quadrature identities

        Re l = int |d phi|^2 - int |w|^2 |phi|^2
        Im l = -2i int <w, d phi> conj(phi)

    (the pairing <w, d phi> is bilinear, never conjugated)."""
    if spec.eigenvectors is None:
        raise ValueError("spectrum has no eigenvectors")
    h2 = op.h ** 2
    re_m, im_m = [], []
    for lam, v in zip(spec.eigenvalues, spec.eigenvectors.T):
        norm = float(np.real(np.vdot(v, op.mass * v)))
        energy = float(np.real(np.vdot(v, op.stiffness @ v)))
        pot = float(np.real(np.vdot(v, op.potential @ v)))
        transport = np.vdot(v, op.advection @ v)  # = 2 int <w, d phi> conj(phi)
        re_rec = h2 * (energy - pot) / norm
        im_rec = h2 * float(np.real(-1j * transport)) / norm
        re_m.append(abs(lam.real - re_rec))
        im_m.append(abs(lam.imag - im_rec))
    return RayleighReport(np.array(re_m), np.array(im_m), spec.residuals.copy())


def strip_bound(c: float, b: float) -> float:
    return 2.0 * c * math.sqrt(b + c * c)


def pressure_from_lambda0(lambda0: float, tol: float = 1e-10) -> float:
    """Root Pr >= 1 of Pr (1 - Pr) = lambda0."""
    if lambda0 > tol:
        raise ValueError(f"lambda0 must be <= 0, got {lambda0}")
    return 0.5 * (1.0 + math.sqrt(1.0 - 4.0 * min(lambda0, 0.0)))


def pdelta_modify(eigs_real, I, delta: float) -> np.ndarray:
    """Push eigenvalues out of the delta-bands around the ends of I=[a, b]."""
    a, b = I
    if delta <= 0 or a > b:
        raise ValueError("need delta > 0 and a <= b")
    lam = np.asarray(eigs_real, dtype=float)
    out = lam.copy()
    c1 = (lam > a - delta) & (lam < a)
    c2 = (lam >= a) & (lam < a + delta)
    c3 = (lam > b - delta) & (lam <= b) & ~c2
    c4 = (lam > b) & (lam < b + delta) & ~c1
    out[c1] = a - delta
    out[c2] = a + delta
    out[c3] = b - delta
    out[c4] = b + delta
    return out


def count_in(values, I) -> int:
    a, b = I
    v = np.asarray(values)
    re = v.real if np.iscomplexobj(v) else v
    return int(np.sum((re >= a) & (re <= b)))


@dataclass
class FlowResult:
    ts: np.ndarray
    counts: np.ndarray
    count_P: int              # N^P(lambda in I)
    count_Pdelta: int         # N^{P^delta}(lambda in I)
    count_Pomega: int         # N^{P_w}(Re lambda in I)
    boundary_count: int       # N^P(lambda in dI + (-delta, delta))
    min_boundary_gap: float
    delta: float

    @property
    def constant(self) -> bool:
        return bool(np.all(self.counts == self.counts[0]))

    @property
    def comparison_constant(self) -> float:
        """|N^{P_w} - N^P| / N^P(dI + (-delta, delta)); inf if the latter is 0
        but the former is not."""
        diff = abs(self.count_Pomega - self.count_P)
        if self.boundary_count == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / self.boundary_count


def spectral_flow_count(mesh: SurfaceMesh, omega, I, delta: float, h: float = 1.0,
                        steps: int = 16, max_refine: int = 8) -> FlowResult:
    """Counts of P^delta_{t w} eigenvalues with Re in I for t = j/steps.

    P = -h^2 Delta is diagonalised in full; P^delta is diagonal in that basis
    and the twist h^2 (t B - t^2 V) is transformed into it.  When a step sees
    an eigenvalue within 1e-10 of an end of I the step is nudged by
    bisection towards its neighbour.
    """
    a, b = I
    zero = np.zeros(mesh.n_edges)
    base = assemble_twisted(mesh, zero, h)
    if base.n > DENSE_CAP:
        raise ValueError("flow experiment needs a dense-solvable mesh")
    s = 1.0 / np.sqrt(base.mass)
    mu, W = sla.eigh(base.matrix.toarray() * s[:, None] * s[None, :])
    Phi = W * s[:, None]  # M-orthonormal eigenvectors of P
    mu_d = pdelta_modify(mu, I, delta)
    tw = assemble_twisted(mesh, omega, h)
    Bt = Phi.T @ (h ** 2 * tw.advection.toarray()) @ Phi
    Vt = Phi.T @ (h ** 2 * tw.potential.toarray()) @ Phi

    def spectrum_at(t):
        return sla.eigvals(np.diag(mu_d) + t * Bt - t * t * Vt)

    def gap(ev):
        return float(np.min(np.minimum(np.abs(ev.real - a), np.abs(ev.real - b))))

    ts, counts, gaps = [], [], []
    for j in range(steps + 1):
        t = j / steps
        ev = spectrum_at(t)
        lo, hi = (t - 1 / steps if j else t), t
        tries = 0
        while gap(ev) < 1e-10:
            if tries >= max_refine:
                raise SolverError(f"eigenvalue on the window boundary at t={t}")
            t = 0.5 * (lo + hi) if j else 0.5 * (t + 1 / steps)
            hi = t
            ev = spectrum_at(t)
            tries += 1
        ts.append(t)
        counts.append(count_in(ev, I))
        gaps.append(gap(ev))
    A_om = (h ** 2) * (base.stiffness + tw.advection - tw.potential).toarray()
    ev_om = sla.eigvals(A_om * s[:, None] * s[None, :])
    return FlowResult(
        ts=np.array(ts), counts=np.array(counts), count_P=count_in(mu, I),
        count_Pdelta=count_in(mu_d, I), count_Pomega=count_in(ev_om, I),
        boundary_count=int(np.sum((np.abs(mu - a) < delta) | (np.abs(mu - b) < delta))),
        min_boundary_gap=float(min(gaps)), delta=delta)


def default_delta(c: float, h: float) -> float:
    """delta = 4000 c h (the companion epsilon = 20 c h = delta / 200)."""
    return 4000.0 * c * h
