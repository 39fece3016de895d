import math

import numpy as np
import pytest

from bolzalab import traceweyl as tw
from bolzalab import twistedop as to

# tests/oracles/topological_term.py (mpmath, 40 digits)
TOPO_ORACLE = {0.5: 1.6971637527140970397, 1.0: 0.72301562349214743365, 2.0: 0.26474168286852422106}


@pytest.mark.parametrize("t", sorted(TOPO_ORACLE))
def test_topological_term(t):
    assert tw.topological_term(tw.VOLUME, t) == pytest.approx(TOPO_ORACLE[t], abs=1e-10)


def test_topological_term_properties():
    assert tw._topological_integrand(0.0, 1.0) == 0.0
    vals = [tw.topological_term(tw.VOLUME, t) for t in (0.5, 1, 2, 4)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        tw.topological_term(tw.VOLUME, 0.0)


def _spectrum(mesh, omega):
    return to.compute_spectrum(to.assemble_twisted(mesh, omega), mode="dense", vectors=False)


def test_spectral_side(mesh_at, basis_at):
    m = mesh_at(2)
    zero = _spectrum(m, np.zeros(m.n_edges))
    val, tail = tw.spectral_side(zero, 1.0)
    assert val >= 1.0 and tail >= 0
    w = basis_at(2)[0].cochain * 0.5
    spec = _spectrum(m, w)
    big, _ = tw.spectral_side(spec, 8.0)
    lam0 = spec.eigenvalues[0].real
    assert big == pytest.approx(math.exp(-8 * lam0), rel=1e-6)
    with pytest.raises(ValueError):
        tw.spectral_side(spec, 1.0, cut=-10.0)


def test_heat_kernel_table(gens):
    table = tw.HeatKernelTable(1.0, 7.0)
    from bolzalab.hgeom import heat_kernel
    for d in (0.0, 0.37, 2.5, 6.9):
        assert table(d) == pytest.approx(heat_kernel(1.0, d), rel=1e-8)
    with pytest.raises(ValueError):
        table(8.0)


def test_geometric_side_symmetry_and_truncation(gens):
    p = (0.1, 0.0, -0.05, 0.0)
    plus = tw.geometric_side(gens, p, 1.0, quad_level=2, R_trunc=5.0)
    minus = tw.geometric_side(gens, tuple(-x for x in p), 1.0, quad_level=2, R_trunc=5.0)
    assert plus.value == pytest.approx(minus.value, abs=1e-10)
    short = tw.geometric_side(gens, p, 1.0, quad_level=2, R_trunc=3.5)
    assert abs(plus.value - short.value) <= short.tail_bound
    assert plus.value > 0


def test_geometric_side_dominated_by_systole_classes(gens):
    # at t = 1 the shell around the systole carries most of the sum
    full = tw.geometric_side(gens, (0, 0, 0, 0), 1.0, quad_level=2, R_trunc=6.0)
    short = tw.geometric_side(gens, (0, 0, 0, 0), 1.0, quad_level=2, R_trunc=4.2)
    assert short.value > 0.5 * full.value


def test_trace_residual_level3(mesh_at, gens):
    m = mesh_at(3)
    r05 = tw.trace_residual(m, np.zeros(m.n_edges), (0, 0, 0, 0), 0.5, quad_level=2, gens=gens)
    r2 = tw.trace_residual(m, np.zeros(m.n_edges), (0, 0, 0, 0), 2.0, quad_level=2, gens=gens)
    assert abs(r2.residual) < abs(r05.residual)
    assert abs(r05.relative_residual) < 0.05
    d = r2.to_dict()
    assert set(d) >= {"spectral_side", "geometric_term", "residual", "truncation_radius"}


def test_weyl_main_term():
    assert tw.weyl_main_term(0.0, 0.25) == 0.0
    assert tw.weyl_main_term(3.0, 2.0) == 0.0
    a = tw.weyl_main_term(0.25, 1.25)
    assert a == pytest.approx(tw.weyl_main_term_rho(0.25, 1.25), abs=1e-12)
    assert abs(tw.weyl_main_term(0, 5) + tw.weyl_main_term(5, 20) - tw.weyl_main_term(0, 20)) <= 1e-10


def test_weyl_report(mesh_at):
    m = mesh_at(2)
    spec = _spectrum(m, np.zeros(m.n_edges))
    rep = tw.weyl_report(spec, -1.0, 0.0)
    assert rep.count == 1 and rep.main_term == 0.0
    assert rep.remainder == pytest.approx(1 / (4 * math.pi), rel=1e-15)
    with pytest.raises(ValueError):
        tw.weyl_report(spec, 0.0, 1e9)
    rows = tw.counting_curve(spec, [0.0, 5.0, 10.0])
    assert [r[0] for r in rows] == [0.0, 5.0, 10.0]
    assert all(a[1] <= b[1] for a, b in zip(rows, rows[1:]))


def test_weyl_twisted_vs_untwisted(mesh_at, basis_at):
    # counts differ by at most the number of untwisted eigenvalues near the ends
    m = mesh_at(3)
    c, h = 0.05, 1.0
    w = basis_at(3)[0].cochain * (c / basis_at(3)[0].linf_norm)
    e0 = _spectrum(m, np.zeros(m.n_edges)).eigenvalues.real
    e1 = _spectrum(m, w).eigenvalues
    a, b = 0.0, 20.0
    delta = 2 * c * math.sqrt(b + c * c) + c * (1 + c)
    band = int(np.sum((np.abs(e0 - a) < delta) | (np.abs(e0 - b) < delta)))
    diff = abs(to.count_in(e1, (a, b)) - to.count_in(e0, (a, b)))
    assert diff <= max(band, 1)
