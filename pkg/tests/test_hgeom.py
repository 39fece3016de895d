import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bolzalab.hgeom import (
    HPoint, MoebiusMap, NotHyperbolicError, ball_area, geodesic_midpoint, heat_bound_constant,
    heat_kernel, heat_kernel_mass, hyp_distance, mobius_apply, polygon_quadrature,
    selberg_heat_transform, to_hyperboloid, translation_length, triangle_angles,
)

# k(t, rho) from the spectral integral with conical functions,
# tests/oracles/heat_kernel_spectral.py (mpmath, 30 digits)
HEAT_ORACLE = {
    (0.5, 0.0): 0.13505600024042,
    (1.0, 0.0): 0.057535755205722,
    (1.0, 1.0): 0.0414911839578222,
    (2.0, 0.5): 0.0200342582064589,
    (2.0, 3.0): 0.00388022138945334,
    (1.0, 4.0): 0.000415480225622607,
}


def random_sl2(rng):
    while True:
        a, b, c = rng.normal(size=3)
        if abs(a) > 0.2:
            return MoebiusMap(a, b, c, (1 + b * c) / a)


upper = st.builds(complex, st.floats(-5, 5), st.floats(0.05, 5))


def test_hpoint_rejects_lower_half_plane():
    with pytest.raises(ValueError):
        HPoint(0.0, 0.0)
    with pytest.raises(ValueError):
        HPoint(1.0, -2.0)
    assert HPoint(1.0, 2.0).z == 1 + 2j


def test_moebius_examples():
    assert mobius_apply(MoebiusMap(1, 1, 0, 1), 1j) == pytest.approx(1 + 1j)
    z = 0.3 + 0.7j
    assert mobius_apply(MoebiusMap.identity(), z) == z
    s = math.sqrt(2)
    assert mobius_apply(MoebiusMap(s, 0, 0, 1 / s), 1j) == pytest.approx(2j)
    assert mobius_apply(MoebiusMap(1, 1, 0, 1), HPoint(0, 1)) == HPoint(1.0, 1.0)


def test_moebius_rejects_bad_determinant():
    with pytest.raises(ValueError):
        MoebiusMap(1, 1, 1, 1)


def test_moebius_canonical_sign_and_group_law(rng):
    g, h = random_sl2(rng), random_sl2(rng)
    neg = MoebiusMap(-g.a, -g.b, -g.c, -g.d)
    assert neg.close_to(g)
    z = 0.2 + 1.3j
    assert mobius_apply(g @ h, z) == pytest.approx(mobius_apply(g, mobius_apply(h, z)))
    assert mobius_apply(g.inverse() @ g, z) == pytest.approx(z)


def test_distance_examples():
    assert hyp_distance(1j, 2j) == pytest.approx(math.log(2), abs=1e-15)
    assert hyp_distance(0.4 + 0.3j, 0.4 + 0.3j) == 0.0


def test_distance_isometry_invariance(rng):
    worst = 0.0
    for _ in range(100):
        g = random_sl2(rng)
        z, w = complex(rng.normal(), rng.uniform(0.1, 3)), complex(rng.normal(), rng.uniform(0.1, 3))
        worst = max(worst, abs(hyp_distance(g(z), g(w)) - hyp_distance(z, w)))
    assert worst <= 1e-10


@settings(max_examples=60, deadline=None)
@given(upper, upper, upper)
def test_triangle_inequality(a, b, c):
    assert hyp_distance(a, c) <= hyp_distance(a, b) + hyp_distance(b, c) + 1e-9


@settings(max_examples=60, deadline=None)
@given(upper, upper)
def test_midpoint_is_equidistant(a, b):
    m = complex(geodesic_midpoint(a, b))
    d = hyp_distance(a, b)
    assert hyp_distance(a, m) == pytest.approx(d / 2, abs=1e-8)
    assert hyp_distance(m, b) == pytest.approx(d / 2, abs=1e-8)


def test_translation_length():
    assert translation_length(MoebiusMap(2, 0, 0, 0.5)) == pytest.approx(2 * math.log(2), abs=1e-14)
    with pytest.raises(NotHyperbolicError):
        translation_length(MoebiusMap.identity())
    with pytest.raises(NotHyperbolicError):
        translation_length(MoebiusMap(0, -1, 1, 0))


def test_translation_length_is_minimal_displacement(rng):
    # sampled minimisation oracle: displacement is minimal, and attained, on the axis
    for _ in range(5):
        while True:
            g = random_sl2(rng)
            if abs(g.trace) > 2.2:
                break
        ell = translation_length(g)
        z = rng.normal(size=4000) + 1j * np.exp(rng.normal(size=4000))
        disp = hyp_distance(z, g(z))
        assert disp.min() >= ell - 1e-6
        # fixed points of g on the real line give the axis
        a, b, c, d = g.a, g.b, g.c, g.d
        if abs(c) > 1e-9:
            disc = math.sqrt((a + d) ** 2 - 4)
            p, q = (a - d + disc) / (2 * c), (a - d - disc) / (2 * c)
            on_axis = (p + q) / 2 + 1j * abs(p - q) / 2
            assert hyp_distance(on_axis, g(on_axis)) == pytest.approx(ell, abs=1e-8)


def test_ball_area():
    assert ball_area(0) == 0
    assert ball_area(1) == 2 * math.pi * (math.cosh(1) - 1)
    assert ball_area(1) == pytest.approx(3.41228, abs=1e-5)
    assert ball_area(2) == pytest.approx(17.35539, abs=1e-5)


def _triangle_with_angle(alpha):
    # equilateral triangle about i with all angles alpha
    # side from the hyperbolic law of cosines; circumradius from the right triangle
    cos_a = math.cos(alpha)
    side = math.acosh((cos_a + cos_a ** 2) / math.sin(alpha) ** 2)
    R = math.asinh(math.sinh(side / 2) / math.sin(math.pi / 3))
    th = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    w = math.tanh(R / 2) * np.exp(1j * th)
    return list(1j * (1 + w) / (1 - w))


def test_quadrature_equilateral_triangle():
    verts = _triangle_with_angle(math.pi / 4)
    ang = triangle_angles(*to_hyperboloid(np.array(verts)))
    assert np.allclose(ang, math.pi / 4)
    for level in range(4):
        assert polygon_quadrature(verts, level).total == pytest.approx(math.pi / 4, abs=1e-12)


def test_quadrature_regular_octagon(gens):
    totals = [polygon_quadrature(gens.vertices, L).total for L in range(5)]
    for tot in totals:
        assert abs(tot - 4 * math.pi) <= 1e-8
    assert max(abs(a - b) for a, b in zip(totals, totals[1:])) < 1e-10


def test_quadrature_integrates_smooth_function(gens):
    # int_D d(i, z)^2 dVol converges as the level grows
    vals = [polygon_quadrature(gens.vertices, L).integrate(
        hyp_distance(1j, polygon_quadrature(gens.vertices, L).nodes) ** 2) for L in (3, 4, 5)]
    assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0])


def test_quadrature_rejects_degenerate():
    with pytest.raises(ValueError):
        polygon_quadrature([1j, 2j, 3j], 1)
    with pytest.raises(ValueError):
        polygon_quadrature([1j, 2j], 1)


@pytest.mark.parametrize("key", sorted(HEAT_ORACLE))
def test_heat_kernel_against_spectral_oracle(key):
    t, rho = key
    assert heat_kernel(t, rho) == pytest.approx(HEAT_ORACLE[key], rel=1e-11)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_heat_kernel_unit_mass(t):
    assert abs(heat_kernel_mass(t) - 1.0) <= 1e-6


def test_heat_kernel_monotone_and_bounded():
    assert heat_kernel(1, 0.5) > heat_kernel(1, 1.0) > heat_kernel(1, 2.0)
    ts = np.linspace(0.25, 4, 6)
    ds = np.linspace(0, 10, 11)
    C = heat_bound_constant(ts, ds)
    assert math.isfinite(C) and C > 0
    for t in ts:
        for d in ds:
            assert heat_kernel(t, d) <= C / t * math.exp(-d * d / (8 * t)) * (1 + 1e-12)


def test_heat_kernel_rejects_bad_input():
    with pytest.raises(ValueError):
        heat_kernel(0.0, 1.0)
    with pytest.raises(ValueError):
        heat_kernel(1.0, -1.0)


def test_selberg_transform():
    assert selberg_heat_transform(1, 0) == pytest.approx(math.exp(-0.25), abs=1e-6)
    assert selberg_heat_transform(1, math.sqrt(3) / 2) == pytest.approx(math.exp(-1), abs=1e-12)
    assert selberg_heat_transform(1, 60.0) < 1e-300
    r = np.linspace(0, 5, 51)
    for t, s in [(0.5, 1.0), (0.3, 2.2)]:
        lhs = selberg_heat_transform(t, r) * selberg_heat_transform(s, r)
        assert np.max(np.abs(lhs - selberg_heat_transform(t + s, r))) <= 1e-12
