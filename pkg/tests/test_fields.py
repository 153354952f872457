from __future__ import annotations

import math

import numpy as np
import pytest

from transgress import geometry, zoo
from transgress.errors import DegenerateZero, NonGenericField, SamplingTooCoarse, ZeroOnSphere
from transgress.fields import (VectorFieldScenario, alpha, boundary_decompose, boundary_parts, degree_oracle,
                               find_zeros, local_index, sphere_degree, sphere_mesh, total_indices)
from transgress.transgression import equator_project


def scenario(name, which=None, **params):
    entry = zoo.ZOO[name]
    m = entry.manifold()
    return m, entry.scenario(m, which, **params)


def constant_frame_field(manifold, collar, coeffs):
    """Field whose frame coordinates are constant on the collar chart."""
    col = manifold.collar(collar)

    def fn(cid, p):
        E = geometry._frame_matrix(manifold.chart(cid), p, col.outward_sign)
        return E @ np.asarray(coeffs, dtype=float)

    return VectorFieldScenario("const", fn)


# ----------------------------------------------------------------------------
# alpha


@pytest.mark.parametrize("coeffs,phi", [((1, 0), 0.0), ((-1, 0), math.pi), ((1, 1), math.pi / 4)])
def test_alpha_examples(coeffs, phi):
    m = zoo.flat_cylinder()
    V = constant_frame_field(m, "top", coeffs)
    bp = alpha(V, m, "cyl", np.array([1.0, 0.7]), "top")
    assert bp.phi == pytest.approx(phi, abs=1e-12)


def test_alpha_interior_has_no_angle():
    m, V = scenario("warped-collar-disk")
    bp = alpha(V, m, "polar", np.array([0.5, 0.2]))
    assert math.isnan(bp.phi) and abs(np.linalg.norm(bp.u) - 1) < 1e-12


# ----------------------------------------------------------------------------
# boundary decomposition


def test_cylinder_decomposition():
    m, V = scenario("flat-cylinder")
    dec = boundary_decompose(V, m)
    assert dec.minus_region["bottom"].all() and dec.plus_region["top"].all()
    bottom = [z for z in dec.zeros if z.collar == "bottom"]
    assert [round(z.point[0], 8) for z in bottom] == [0.0, round(math.pi, 8)]
    assert all(z.region == "-" for z in bottom)
    assert np.allclose(dec.normal_component("bottom", "cyl", np.array([[0.4]])), -1.0)


def test_disk_spiral_decomposition():
    m, V = scenario("warped-collar-disk")
    dec = boundary_decompose(V, m)
    assert not dec.minus_region["circle"].any()
    assert dec.zeros == []
    y = np.linspace(0, 6, 13)[:, None]
    tang = dec.tangential("circle", "polar", y)
    # dV = eps d/dtheta in polar coordinates
    assert np.allclose(tang[:, 0], 0.5)


def test_ball_rotation_decomposition():
    m, V = scenario("collared-ball")
    dec = boundary_decompose(V, m)
    assert dec.plus_region["sphere"].all()
    assert len(dec.zeros_plus) == 2 and dec.zeros_minus == []
    # both zeros sit at the poles of the rotation, the equator of the sph_x chart
    for z in dec.zeros_plus:
        assert z.chart_id == "sph_x" and z.point[0] == pytest.approx(math.pi / 2, abs=1e-8)


@pytest.mark.parametrize("name,which", [("flat-cylinder", None), ("warped-collar-disk", "uniform"),
                                        ("collared-ball", "rotation"), ("collared-ball", "uniform")])
def test_normal_iff_tangential_zero(name, which):
    """|dV| small exactly where alpha_V is close to the normal."""
    m, V = scenario(name, which)
    rng = np.random.default_rng(0)
    dec = boundary_decompose(V, m, oracle=False)
    for col in m.collars:
        chart = m.chart(col.chart_id)
        lo = np.array(chart.lower[1:])
        hi = np.array(chart.upper[1:])
        y = lo + (hi - lo) * rng.uniform(0.02, 0.98, size=(200, len(lo)))
        # include the exact zeros found on this chart
        exact = [z.point for z in dec.zeros if z.collar == col.name and z.chart_id == col.chart_id]
        if exact:
            y = np.vstack([y, np.array(exact)])
        _, _, c = boundary_parts(V, m, col, col.chart_id, y)
        dv = np.linalg.norm(c[:, 1:], axis=-1)
        sin_phi = dv / np.linalg.norm(c, axis=-1)
        assert np.array_equal(dv < 1e-9, sin_phi < 1e-9)
        assert np.all((dv < 1e-6) <= (sin_phi < 1e-6 / np.min(np.linalg.norm(c, axis=-1)) + 1e-12))
        if exact:
            assert np.all(sin_phi[-len(exact):] < 1e-8)


@pytest.mark.parametrize("name,which", [("flat-cylinder", None), ("warped-collar-disk", "spiral"),
                                        ("collared-ball", "rotation"), ("solid-torus", None)])
def test_equator_projection_of_alpha(name, which):
    """equator_project(alpha_V(x)) equals dV/|dV| in the boundary frame."""
    m, V = scenario(name, which)
    rng = np.random.default_rng(1)
    for col in m.collars:
        chart = m.chart(col.chart_id)
        lo = np.array(chart.lower[1:])
        hi = np.array(chart.upper[1:])
        ys = lo + (hi - lo) * rng.uniform(0.1, 0.9, size=(40, len(lo)))
        for y in ys:
            _, _, c = boundary_parts(V, m, col, col.chart_id, y[None])
            if np.linalg.norm(c[0, 1:]) <= 1e-3:
                continue
            ep = equator_project(alpha(V, m, col.chart_id, col.embed(y), col))
            assert np.abs(ep.u_e - c[0, 1:] / np.linalg.norm(c[0, 1:])).max() < 1e-8


# ----------------------------------------------------------------------------
# local indices


def test_local_index_examples():
    assert local_index(lambda p: p, np.zeros(2)) == 1
    assert local_index(lambda p: p * np.array([1.0, -1.0]), np.zeros(2)) == -1
    circle = lambda t: np.sin(t)  # noqa: E731
    assert local_index(circle, np.array([0.0])) == 1
    assert local_index(circle, np.array([math.pi])) == -1


def test_local_index_with_oracle():
    spiral = lambda p: np.stack([p[..., 0] - 0.5 * p[..., 1], p[..., 1] + 0.5 * p[..., 0]], -1)  # noqa: E731
    assert local_index(spiral, np.zeros(2), oracle=True) == (1, 1)
    saddle3 = lambda p: p * np.array([1.0, 1.0, -1.0])  # noqa: E731
    assert local_index(saddle3, np.zeros(3), oracle=True) == (-1, -1)


def test_degenerate_zero():
    with pytest.raises(DegenerateZero):
        local_index(lambda p: p**2, np.zeros(2))


def test_degree_oracle_circle():
    t = 2 * np.pi * np.arange(64) / 64
    assert degree_oracle(np.stack([np.cos(t), np.sin(t)], -1), 1) == 1
    assert degree_oracle(np.stack([np.cos(2 * t), np.sin(2 * t)], -1), 1) == 2
    assert degree_oracle(np.stack([np.cos(t), -np.sin(t)], -1), 1) == -1


def test_degree_oracle_z_squared():
    z2 = lambda p: np.stack([p[..., 0] ** 2 - p[..., 1] ** 2, 2 * p[..., 0] * p[..., 1]], -1)  # noqa: E731
    assert sphere_degree(z2, np.zeros(2), radius=0.1) == 2


def test_degree_oracle_s2():
    pts, tri = sphere_mesh(256)
    assert degree_oracle(pts, 2, tri) == 1
    assert degree_oracle(-pts, 2, tri) == -1
    assert degree_oracle(pts * np.array([1, 1, -1]), 2, tri) == -1


def test_degree_oracle_s0():
    assert degree_oracle(np.array([[-1.0], [1.0]]), 0) == 1
    assert degree_oracle(np.array([[1.0], [1.0]]), 0) == 0


def test_degree_oracle_errors():
    t = 2 * np.pi * np.arange(3) / 3
    with pytest.raises(SamplingTooCoarse):
        degree_oracle(np.stack([np.cos(t), np.sin(t)], -1), 1)
    t = 2 * np.pi * np.arange(64) / 64
    img = np.stack([np.cos(t), np.sin(t)], -1)
    img[5] = 0.0
    with pytest.raises(ZeroOnSphere):
        degree_oracle(img, 1)


def test_find_zeros_periodic_dedupe():
    fn = lambda p: np.stack([np.sin(p[..., 0]), p[..., 1]], -1)  # noqa: E731
    pts = find_zeros(fn, [0.0, -1.0], [2 * math.pi, 1.0], (True, False), 16)
    assert np.allclose(sorted(pts[:, 0]), [0.0, math.pi], atol=1e-9)


# ----------------------------------------------------------------------------
# totals


@pytest.mark.parametrize("name,which,expected", [
    ("warped-collar-disk", "spiral", (1, 0, 0)),
    ("warped-collar-disk", "uniform", (0, -1, 1)),
    ("flat-cylinder", "tilt", (0, 0, 0)),
    ("collared-ball", "rotation", (1, 2, 0)),
    ("collared-ball", "sink-rotation", (-1, 0, 2)),
    ("collared-ball", "uniform", (0, 1, 1)),
    ("solid-torus", "spiral", (0, 0, 0)),
])
def test_total_indices(name, which, expected):
    m, V = scenario(name, which)
    rep = total_indices(V, m)
    assert (rep.ind_V, rep.ind_dplus, rep.ind_dminus) == expected
    assert rep.boundary_consistent
    assert all(z.oracle_index == z.index for z in rep.interior_zeros + rep.boundary_zeros)


def test_declared_zero_hints():
    m = zoo.warped_collar_disk()
    V = zoo.ZOO["warped-collar-disk"].scenario(m)
    hinted = VectorFieldScenario(V.name, V.field_fn, (("cart", (0.01, -0.02)),))
    rep = total_indices(hinted, m)
    assert rep.ind_V == 1 and np.allclose(rep.interior_zeros[0].point, 0.0, atol=1e-10)


def test_non_generic_interface_zero():
    """A field normal to the whole boundary circle has no isolated dV zeros."""
    m = zoo.warped_collar_disk()
    V = zoo.ZOO["warped-collar-disk"].scenario(m, "spiral", eps=0.0)
    # eps = 0 gives dV = 0 everywhere on the circle: all boundary points are degenerate zeros
    with pytest.raises((NonGenericField, DegenerateZero)):
        total_indices(V, m)


def test_zero_on_boundary_rejected():
    m = zoo.flat_cylinder()
    V = VectorFieldScenario("vanish", lambda cid, p: np.stack([p[..., 0] - 1.0, np.sin(p[..., 1])], -1))
    with pytest.raises(NonGenericField):
        boundary_decompose(V, m)
