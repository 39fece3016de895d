import math

import numpy as np
import pytest
from scipy.sparse import csgraph, csr_matrix

from bolzalab import surfmesh
from bolzalab.surfmesh import (
    NonClosedFormError, build_mesh, combine, cut_cochain, form_norms, form_periods,
    harmonic_projection, write_form, write_mesh,
)


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_mesh_topology_and_area(mesh_at, level):
    m = mesh_at(level)
    assert m.n_vertices - m.n_edges + m.n_triangles == -2
    assert m.euler_characteristic == -2
    assert abs(m.total_area - 4 * math.pi) <= 1e-6
    deficit = np.pi - m.tri_angles.sum(axis=1)
    assert abs(math.fsum(deficit) - 4 * math.pi) <= 1e-6
    if level:
        assert m.n_triangles == 4 * mesh_at(level - 1).n_triangles


def test_mesh_counts_level5(mesh_at):
    m = mesh_at(5)
    assert (m.n_vertices, m.n_edges, m.n_triangles) == (4094, 12288, 8192)


def test_mesh_level_bounds():
    with pytest.raises(ValueError):
        build_mesh(-1)
    with pytest.raises(ValueError):
        build_mesh(8)


def test_side_pairings_are_isometries(mesh_at, gens):
    m = mesh_at(3)
    for p, q, k in m.pairings:
        assert gens.gens[k](m.points[p]) == pytest.approx(m.points[q], abs=1e-9)
        assert m.vertex_of_point[p] == m.vertex_of_point[q]


def test_d1_d0_zero(mesh_at, rng):
    ops = mesh_at(3).operators
    for _ in range(100):
        u = rng.integers(-1000, 1000, size=ops.d0.shape[1]).astype(float)
        assert not np.any(ops.d1 @ (ops.d0 @ u))
    assert not np.any(ops.d0 @ np.ones(ops.d0.shape[1]))


def test_laplacian_psd_and_hat_energy(mesh_at):
    ops = mesh_at(3).operators
    L = ops.laplacian
    assert abs(L - L.T).max() == 0
    hat = np.zeros(L.shape[0])
    hat[5] = 1.0
    assert hat @ (L @ hat) > 0
    ev = np.linalg.eigvalsh(L.toarray())
    assert ev.min() > -1e-10


def test_cotan_warning_recorded(mesh_at):
    m = mesh_at(3)
    _ = m.operators
    assert "cotan_warning" in m.metadata


def _oracle_periods(m, omega, base):
    """Loop sums from a different base vertex and through a different pairing."""
    ue = np.array([k for k in m.uedge_index if k[0] < k[1]])
    n = len(m.points)
    G = csr_matrix((np.ones(len(ue)), (ue[:, 0], ue[:, 1])), shape=(n, n))
    _, pred = csgraph.shortest_path(G, directed=False, unweighted=True, indices=base,
                                    return_predecessors=True)

    def path(t):
        out = [t]
        while out[-1] != base:
            out.append(int(pred[out[-1]]))
        return out[::-1]

    def psum(pts):
        tot = 0.0
        for a, b in zip(pts[:-1], pts[1:]):
            e, s = m.uedge_index[(a, b)]
            tot += s * omega[e]
        return tot

    out = []
    for k in range(4):
        cands = [(p, q) for p, q, mm in m.pairings if mm == k]
        p, q = max(cands)
        out.append(psum(path(q)) + psum(path(p)[::-1]))
    return np.array(out)


def test_harmonic_basis(mesh_at, basis_at):
    m = mesh_at(3)
    basis = basis_at(3)
    ops = m.operators
    P = np.array([_oracle_periods(m, b.cochain, base=7) for b in basis])
    assert np.abs(P - np.eye(4)).max() <= 1e-8
    for b in basis:
        assert np.abs(ops.d1 @ b.cochain).max() <= 1e-12
        cod = ops.codifferential(b.cochain)
        assert math.sqrt(np.sum(ops.star0 * cod ** 2)) <= 1e-8 * b.l2_norm
        assert np.abs(b.periods - form_periods(m, b.cochain)).max() == 0


def test_fifth_closed_form_reduces(mesh_at, basis_at, rng):
    m = mesh_at(3)
    basis = basis_at(3)
    p = np.array([2, -1, 0, 3])
    u = rng.normal(size=m.n_vertices)
    w = cut_cochain(m, p) + m.operators.d0 @ u
    h = harmonic_projection(m, w)
    resid = h - sum(c * b.cochain for c, b in zip(p, basis))
    assert np.abs(resid).max() <= 1e-8
    assert np.allclose(form_periods(m, w), p, atol=1e-10)


def test_exact_form_has_zero_periods(mesh_at, rng):
    m = mesh_at(2)
    w = m.operators.d0 @ rng.normal(size=m.n_vertices)
    assert np.abs(form_periods(m, w)).max() <= 1e-10


def test_periods_linear(mesh_at, basis_at):
    m = mesh_at(2)
    b = basis_at(2)
    w1, w2 = b[0].cochain + 0.5 * b[3].cochain, b[1].cochain
    lhs = form_periods(m, w1 + w2)
    assert np.allclose(lhs, form_periods(m, w1) + form_periods(m, w2), atol=1e-14)


def test_nonclosed_rejected(mesh_at):
    m = mesh_at(2)
    w = np.zeros(m.n_edges)
    w[0] = 1.0
    with pytest.raises(NonClosedFormError):
        form_periods(m, w)


def test_norms(mesh_at, basis_at):
    m = mesh_at(3)
    assert form_norms(m, np.zeros(m.n_edges)) == (0.0, 0.0)
    w = basis_at(3)[1].cochain
    l2, linf = form_norms(m, w)
    l2b, linfb = form_norms(m, 3 * w)
    assert l2b == pytest.approx(3 * l2, rel=1e-15)
    assert linfb == pytest.approx(3 * linf, rel=1e-15)
    assert linf >= l2 / math.sqrt(4 * math.pi)


def test_combine(mesh_at, basis_at):
    m = mesh_at(2)
    hf = combine(m, basis_at(2), [0.1, 0, -2, 0])
    assert np.allclose(hf.periods, [0.1, 0, -2, 0], atol=1e-10)


def test_writers(tmp_path, mesh_at, basis_at):
    m = mesh_at(1)
    write_mesh(m, tmp_path / "m.txt", header="level = 1")
    text = (tmp_path / "m.txt").read_text().splitlines()
    assert text[0] == "# level = 1"
    assert text[1] == f"counts {m.n_vertices} {m.n_edges} {m.n_triangles} {len(m.points)}"
    assert sum(line.startswith("pair ") for line in text) == len(m.pairings)
    write_form(basis_at(1)[0].cochain, tmp_path / "f.csv")
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert rows[0] == "edge_id,value"
    vals = np.array([float(r.split(",")[1]) for r in rows[1:]])
    assert np.array_equal(vals, basis_at(1)[0].cochain)
