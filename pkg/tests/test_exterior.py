from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transgress.errors import ArityMismatch, DegreeMismatch, DimensionMismatch, StencilOutsideDomain
from transgress.exterior import (FormField, FormValue, QuadratureGrid, eval_form, exterior_derivative, integrate,
                                 map_chunks, pairwise_sum, pullback, pushforward, wedge)


def dx(i, dim=2):
    return FormValue.basis(i, dim)


def test_basis_wedge():
    assert wedge(dx(0), dx(1)).as_dict() == {(1, 2): 1.0}


def test_odd_form_wedge_itself_vanishes():
    a = FormValue(1, 3, np.array([0.3, -1.2, 2.0]))
    assert wedge(a, a).max_abs() == 0.0


def test_bilinear_expansion():
    w = wedge(dx(0) + dx(1), dx(0) - dx(1))
    assert w.as_dict() == {(1, 2): -2.0}


def test_wedge_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        wedge(dx(0, 2), dx(0, 3))


coeff = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(coeff, min_size=4, max_size=4), st.lists(coeff, min_size=6, max_size=6))
def test_graded_commutativity(a, b):
    alpha = FormValue(1, 4, np.array(a))
    beta = FormValue(2, 4, np.array(b))
    assert np.allclose(wedge(alpha, beta).coeffs, wedge(beta, alpha).coeffs)
    gamma = FormValue(1, 4, np.array(a[::-1]))
    assert np.allclose(wedge(alpha, gamma).coeffs, -wedge(gamma, alpha).coeffs)


@settings(max_examples=40, deadline=None)
@given(st.lists(coeff, min_size=9, max_size=9), st.lists(coeff, min_size=3, max_size=3))
def test_eval_is_multilinear_and_alternating(vals, w):
    form = wedge(FormValue(1, 3, np.array(w)), FormValue.basis(2, 3))
    V = np.array(vals).reshape(3, 3)[:, :2]
    swapped = V[:, ::-1]
    assert eval_form(form, V) == pytest.approx(-eval_form(form, swapped), abs=1e-9)
    scaled = V.copy()
    scaled[:, 0] *= 2.5
    assert eval_form(form, scaled) == pytest.approx(2.5 * eval_form(form, V), abs=1e-9)


def test_eval_examples():
    w = wedge(dx(0), dx(1))
    e = np.eye(2)
    assert eval_form(w, e) == 1.0
    assert eval_form(w, e[:, ::-1]) == -1.0
    v = np.array([[0.4, 0.4], [1.1, 1.1]])
    assert eval_form(w, v) == 0.0
    with pytest.raises(ArityMismatch):
        eval_form(w, e[:, :1])


def test_from_dict_roundtrip():
    f = FormValue.from_dict(2, 4, {(1, 3): 2.0, (2, 4): -1.0})
    assert f.as_dict() == {(1, 3): 2.0, (2, 4): -1.0}
    with pytest.raises(ValueError):
        FormValue.from_dict(2, 4, {(3, 1): 1.0})


def _x_dy():
    return FormField(1, 2, lambda p: FormValue(1, 2, np.stack([np.zeros(p.shape[:-1]), p[..., 0]], -1)))


def test_d_of_x_dy():
    d = exterior_derivative(_x_dy(), np.array([0.3, -0.7]))
    assert d.as_dict() == pytest.approx({(1, 2): 1.0}, abs=1e-10)


def test_d_of_exact_form_vanishes():
    f = lambda p: np.sin(p[..., 0]) * np.exp(p[..., 1]) + p[..., 2] ** 3  # noqa: E731
    F0 = FormField(0, 3, lambda p: FormValue(0, 3, f(p)[..., None]))
    dF = FormField(1, 3, lambda p: exterior_derivative(F0, p, 1e-4))
    dd = exterior_derivative(dF, np.array([0.2, 0.1, -0.4]), 1e-3)
    assert dd.max_abs() < 1e-6


def _poly_field(rng, degree, dim):
    """Random form whose coefficients are quadratic polynomials."""
    n = math.comb(dim, degree)
    A = rng.normal(size=(n,))
    B = rng.normal(size=(n, dim))
    C = rng.normal(size=(n, dim, dim))

    def ev(p):
        c = A + p @ B.T + np.einsum("...i,kij,...j->...k", p, C, p)
        return FormValue(degree, dim, c)

    return FormField(degree, dim, ev)


def test_dd_zero_random_polynomials():
    rng = np.random.default_rng(3)
    for _ in range(10):
        F = _poly_field(rng, 1, 3)
        dF = FormField(2, 3, lambda p, F=F: exterior_derivative(F, p, 1e-3))
        p = rng.normal(size=3)
        assert exterior_derivative(dF, p, 1e-3).max_abs() < 1e-6


def test_polynomial_derivative_exact():
    rng = np.random.default_rng(4)
    F = _poly_field(rng, 1, 2)
    p = np.array([0.3, 0.2])
    d = exterior_derivative(F, p, 1e-2)
    d_fine = exterior_derivative(F, p, 1e-4)
    assert np.allclose(d.coeffs, d_fine.coeffs, atol=1e-10)


def test_richardson_improves_accuracy():
    F = FormField(0, 1, lambda p: FormValue(0, 1, np.sin(3 * p)))
    plain = exterior_derivative(F, np.array([0.4]), 1e-2).coeffs[0]
    rich = exterior_derivative(F, np.array([0.4]), 1e-2, richardson=True).coeffs[0]
    exact = 3 * math.cos(1.2)
    assert abs(rich - exact) < abs(plain - exact) / 100


def test_stokes_on_box():
    rng = np.random.default_rng(5)
    F = _poly_field(rng, 1, 2)
    dF = FormField(2, 2, lambda p: exterior_derivative(F, p, 1e-3))
    grid = QuadratureGrid((0.0, 0.0), (1.0, 2.0), (8, 8))
    lhs = integrate(dF, grid, workers=1)
    # boundary, counter-clockwise
    nodes, w = np.polynomial.legendre.leggauss(8)
    t = 0.5 * (nodes + 1)
    wt = 0.5 * w
    rhs = 0.0
    for start, end in (((0, 0), (1, 0)), ((1, 0), (1, 2)), ((1, 2), (0, 2)), ((0, 2), (0, 0))):
        a, b = np.array(start, float), np.array(end, float)
        pts = a + t[:, None] * (b - a)
        rhs += np.sum(wt * (F(pts).coeffs @ (b - a)))
    assert lhs == pytest.approx(rhs, abs=1e-6)


def test_stencil_outside_domain():
    F = FormField(0, 1, lambda p: FormValue(0, 1, p), lower=(0.0,), upper=(1.0,))
    with pytest.raises(StencilOutsideDomain):
        exterior_derivative(F, np.array([0.00001]), 1e-4)


def test_pullback_identity_and_constant():
    F = _x_dy()
    p = np.array([0.5, 0.25])
    ident = pullback(lambda q: q, F, p)
    assert np.allclose(ident.coeffs, F(p).coeffs, atol=1e-10)
    const = pullback(lambda q: np.zeros_like(q) + 1.0, F, p)
    assert const.max_abs() == 0.0


def test_pullback_polar_area():
    area = FormField(2, 2, lambda p: FormValue(2, 2, np.ones(p.shape[:-1] + (1,))))
    polar = lambda q: np.stack([q[..., 0] * np.cos(q[..., 1]), q[..., 0] * np.sin(q[..., 1])], -1)  # noqa: E731
    pb = pullback(polar, area, np.array([0.7, 1.1]))
    assert pb.coeffs[0] == pytest.approx(0.7, abs=1e-8)


def test_pullback_functoriality():
    rng = np.random.default_rng(6)
    F = _poly_field(rng, 2, 3)
    for _ in range(5):
        A = rng.normal(size=(3, 3))
        B = rng.normal(size=(3, 3))
        f = lambda p, A=A: np.tanh(p @ A.T)  # noqa: E731
        g = lambda p, B=B: np.sin(p @ B.T)  # noqa: E731
        p = rng.normal(size=3) * 0.3
        direct = pullback(lambda q: f(g(q)), F, p)
        gF = FormField(2, 3, lambda q: pullback(f, F, q))
        composed = pullback(g, gF, p)
        assert np.allclose(direct.coeffs, composed.coeffs, atol=1e-4)


def test_pushforward_shapes():
    img, P = pushforward(lambda q: np.stack([q[..., 0] ** 2, q[..., 1], q[..., 0]], -1), np.array([[1.0, 2.0]]))
    assert img.shape == (1, 3) and P.shape == (1, 3, 2)
    assert P[0, 0, 0] == pytest.approx(2.0)


def test_grid_weights_sum_to_volume():
    g = QuadratureGrid((0.0, -1.0, 2.0), (math.pi, 1.0, 2.5), (16, 8, 12), (True, False, False))
    assert g.weights.sum() == pytest.approx(g.volume, abs=1e-12)


def test_grid_rejects_bad_counts():
    with pytest.raises(ValueError):
        QuadratureGrid((0.0,), (1.0,), (6,))


def test_circle_and_sphere_volumes():
    circ = FormField(1, 1, lambda p: FormValue(1, 1, np.ones(p.shape[:-1] + (1,))))
    assert integrate(circ, QuadratureGrid((0.0,), (2 * math.pi,), (32,), (True,))) == pytest.approx(2 * math.pi)
    area = FormField(2, 2, lambda p: FormValue(2, 2, np.sin(p[..., :1])))
    g = QuadratureGrid((0.0, 0.0), (math.pi, 2 * math.pi), (256, 256), (False, True))
    assert abs(integrate(area, g) - 4 * math.pi) < 1e-6
    sin0 = FormField(1, 1, lambda p: FormValue(1, 1, np.ones(p.shape[:-1] + (1,))))
    assert integrate(sin0, QuadratureGrid((0.0,), (math.pi,), (4,))) == pytest.approx((2 * math.pi) / 2)


def test_integrate_degree_mismatch():
    with pytest.raises(DegreeMismatch):
        integrate(_x_dy(), QuadratureGrid((0.0, 0.0), (1.0, 1.0), (4, 4)))


def test_refinement_order():
    f = FormField(1, 1, lambda p: FormValue(1, 1, np.exp(np.sin(3 * p))))
    ref = integrate(f, QuadratureGrid((0.0,), (1.0,), (256,)))
    e1 = abs(integrate(f, QuadratureGrid((0.0,), (1.0,), (4,))) - ref)
    e2 = abs(integrate(f, QuadratureGrid((0.0,), (1.0,), (8,))) - ref)
    assert e2 < e1 / 4


def test_pairwise_sum_and_chunks_deterministic():
    rng = np.random.default_rng(7)
    x = rng.normal(size=10001)
    assert pairwise_sum(x) == pairwise_sum(x.copy())
    assert pairwise_sum(x) == pytest.approx(math.fsum(x), abs=1e-10)
    pts = rng.normal(size=(9000, 2))
    fn = lambda p: p[:, 0] * np.cos(p[:, 1])  # noqa: E731
    a = map_chunks(fn, pts, workers=1, chunk=1000)
    b = map_chunks(fn, pts, workers=4, chunk=777)
    assert np.array_equal(a, b)


def test_formfield_degree_checked():
    bad = FormField(2, 2, lambda p: FormValue(1, 2, np.zeros(p.shape[:-1] + (2,))))
    with pytest.raises(DegreeMismatch):
        bad(np.zeros(2))
