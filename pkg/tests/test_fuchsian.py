import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bolzalab import fuchsian
from bolzalab.hgeom import hyp_distance, polygon_quadrature, translation_length

# distinct nontrivial elements with d(i, g i) <= 6 from an unpruned search
# over all reduced words of length <= 7 in the disk model
# (tests/oracles/group_bruteforce.py; same count at depths 5, 6 and 7)
BRUTE_COUNT_R6 = 96


def test_relation_closes(gens):
    M = gens.word_map(fuchsian.RELATION).matrix
    assert np.abs(M - np.eye(2)).max() <= 1e-9


def test_generators_pair_sides_and_inverses(gens):
    for j in range(8):
        g, gi = gens.gens[j], gens.gens[fuchsian.inverse_letter(j)]
        assert (g @ gi).close_to(gens.gens[0] @ gens.gens[0].inverse())
    lengths = [translation_length(g) for g in gens.gens]
    assert max(lengths) - min(lengths) <= 1e-9
    assert lengths[0] == pytest.approx(fuchsian.SYSTOLE_EXACT, abs=1e-9)


def test_octagon_area(gens):
    assert polygon_quadrature(gens.vertices, 2).total == pytest.approx(4 * math.pi, abs=1e-9)


def test_empty_below_twice_injectivity(gens):
    assert fuchsian.enumerate_elements(gens, 1j, 3.0) == []


def test_enumeration_matches_bruteforce(gens):
    els = fuchsian.enumerate_elements(gens, 1j, 6.0)
    assert len(els) == BRUTE_COUNT_R6


def test_enumeration_closed_under_inverse(gens):
    els = fuchsian.enumerate_elements(gens, 0.3 + 1.2j, 6.5)
    mats = np.array([e.map.matrix for e in els])
    for e in els:
        inv = e.map.inverse().matrix
        diff = np.minimum(np.abs(mats - inv).max(axis=(1, 2)), np.abs(mats + inv).max(axis=(1, 2)))
        assert diff.min() < 1e-8


def test_enumeration_words_reproduce_maps(gens):
    for e in fuchsian.enumerate_elements(gens, 0.2 + 0.9j, 5.0):
        assert gens.word_map(e.word).close_to(e.map, 1e-7)
        z = 0.2 + 0.9j
        assert hyp_distance(z, e.map(z)) == pytest.approx(e.displacement, abs=1e-9)


def test_enumeration_basepoint_outside_domain(gens):
    # conjugation: counts at x and at g x agree
    x = 0.1 + 1.1j
    gx = gens.gens[2](x)
    assert len(fuchsian.enumerate_elements(gens, x, 6.0)) == len(fuchsian.enumerate_elements(gens, gx, 6.0))


def test_enumeration_cap(gens):
    with pytest.raises(fuchsian.EnumerationCapError):
        fuchsian.enumerate_elements(gens, 1j, 13.0, cap=12.0)


def test_reduce_to_domain(gens):
    z = (gens.gens[1] @ gens.gens[6] @ gens.gens[3])(0.1 + 1.05j)
    word, z0 = fuchsian.reduce_to_domain(gens, z)
    assert fuchsian.in_domain(gens, z0)
    assert gens.word_map(word)(z0) == pytest.approx(z, abs=1e-9)


def test_shell_table(gens):
    tab = fuchsian.shell_table(gens, 1j, 8.0)
    assert tab.counts.tolist()[:6] == [0, 0, 0, 8, 40, 48]
    assert tab.violations == 0
    for r in range(8):
        if r + 1 < 2 * tab.inj_at_base:
            assert tab.counts[r] == 0
    # shells partition the enumeration
    n = len(fuchsian.enumerate_elements(gens, 1j, 8.0))
    assert tab.counts.sum() == n


def test_shell_bound_at_sample_points(gens):
    for x in fuchsian.domain_sample(gens, 4):
        assert fuchsian.shell_table(gens, complex(x), 7.0).violations == 0


def test_injectivity_radius(gens):
    inj = fuchsian.injectivity_radius(gens, 1j)
    # at the centre: half the generator displacement, by the enumeration oracle
    disp = min(hyp_distance(1j, g(1j)) for g in gens.gens)
    assert inj == pytest.approx(disp / 2, abs=1e-12)
    x = 0.4 + 0.8j
    assert fuchsian.injectivity_radius(gens, x, 8.0) == fuchsian.injectivity_radius(gens, x, 11.0)
    assert fuchsian.injectivity_radius(gens, x) <= 0.5 * hyp_distance(x, gens.gens[0](x))
    with pytest.raises(fuchsian.EmptyEnumerationError):
        fuchsian.injectivity_radius(gens, 1j, 1.0)


def test_surface_injectivity_radius(gens):
    est, spacing = fuchsian.surface_injectivity_radius(gens, 32)
    assert fuchsian.SYSTOLE_EXACT / 2 <= est + 1e-12
    assert est - fuchsian.SYSTOLE_EXACT / 2 <= spacing


def test_systole(gens):
    s = fuchsian.systole(gens)
    assert abs(s - 2 * math.acosh(1 + math.sqrt(2))) <= 1e-6
    # cross-check against all elements with displacement <= 8
    mats, _, _ = fuchsian.enumerate_arrays(gens, 1j, 8.0)
    tr = np.abs(mats[:, 0, 0] + mats[:, 1, 1])
    assert s == pytest.approx(2 * np.arccosh(tr[tr > 2].min() / 2), abs=1e-12)
    for g in gens.gens:
        assert s <= translation_length(g) + 1e-12
    x = 0.3 + 0.7j
    assert fuchsian.systole(gens, x=x) == pytest.approx(fuchsian.systole(gens, x=gens.gens[5](x)), abs=1e-9)


def test_period_examples():
    assert fuchsian.period([1, 0, 0, 0], (0, 1, 4)) == 0
    for p in ([1, 2, 3, 4], [0.3, -1.2, 5.0, 0.01]):
        assert fuchsian.period(p, fuchsian.RELATION) == 0


words = st.lists(st.integers(0, 7), max_size=12)


@settings(max_examples=100, deadline=None)
@given(words, words, st.lists(st.floats(-10, 10), min_size=4, max_size=4))
def test_period_additive(w1, w2, p):
    lhs = fuchsian.period(p, tuple(w1) + tuple(w2))
    assert lhs == pytest.approx(fuchsian.period(p, w1) + fuchsian.period(p, w2), abs=1e-12)
    E = fuchsian.exponent_sums([tuple(w1)])
    assert float(E[0] @ np.array(p)) == pytest.approx(fuchsian.period(p, w1), abs=1e-12)


def test_primitive_loop_count(gens):
    assert fuchsian.primitive_loop_count(gens, 1j, 2.0) == 0
    assert fuchsian.primitive_loop_count(gens, 1j, 4.0) == 4
    # the square of a generator has displacement 2 L < 8 and is not counted
    n8 = fuchsian.primitive_loop_count(gens, 1j, 8.0)
    mats, words, _ = fuchsian.enumerate_arrays(gens, 1j, 8.0)
    assert n8 < len(words) // 2
    assert any(w == (0, 0) for w in words)


def test_orbit_count_includes_identity(gens):
    assert fuchsian.orbit_count(gens, 1j, 1j, 0.5) == 1
    assert fuchsian.orbit_count(gens, 1j, 1j, fuchsian.SYSTOLE_EXACT + 1e-9) == 9


def test_orbit_bound(gens):
    pts = fuchsian.domain_sample(gens, 4)
    n, slack, rows = fuchsian.orbit_bound_check(gens, 6.0, pts, [2.0, 4.0, 6.0],
                                               fuchsian.SYSTOLE_EXACT / 2)
    assert n >= 1
    assert slack >= 0
    assert len(rows) == 4 * 4 * 3


def test_domain_sample(gens):
    pts = fuchsian.domain_sample(gens, 50)
    assert len(pts) == 50
    assert all(fuchsian.in_domain(gens, complex(z)) for z in pts)
    assert np.array_equal(pts, fuchsian.domain_sample(gens, 50))
