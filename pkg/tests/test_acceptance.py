"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line."""
from __future__ import annotations

import math
import time

import numpy as np
import pytest

from transgress import zoo
from transgress.fields import total_indices
from transgress.transgression import i_b
from transgress.verify import (check_basic_formula, check_closedness_boundary, check_closedness_interior,
                               check_decomposition, check_exactness, check_gauss_bonnet, check_ib_recurrence,
                               check_lemma, check_volume_identity, i_b_quadrature, integrate_phi_over_boundary)

SCENARIOS = {
    "warped-collar-disk": "spiral",
    "flat-cylinder": "tilt",
    "collared-ball": "rotation",
    "solid-torus": "spiral",
}


@pytest.fixture
def report(capsys):
    def emit(criterion: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[acceptance {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def _setup(name):
    entry = zoo.ZOO[name]
    m = entry.manifold()
    return m, entry.scenario(m, SCENARIOS[name])


def test_criterion_1_exactness(report):
    parts, ok = [], True
    for name, tol in (("flat-cylinder", 1e-6), ("solid-torus", 1e-6),
                      ("warped-collar-disk", 1e-3), ("collared-ball", 1e-3)):
        m = zoo.ZOO[name].manifold()
        t0 = time.perf_counter()
        rec = check_exactness(m, 50, np.random.default_rng(101))
        dt = time.perf_counter() - t0
        ok &= rec.residual < tol and dt < 30
        parts.append(f"{name} max|Phi-dGamma|={rec.residual:.2e} (<{tol:g}) in {dt:.1f}s")
    report(1, ok, "; ".join(parts))


def test_criterion_2_index_theorem(report):
    parts, ok = [], True
    for name, expected, tol in (("warped-collar-disk", 0.0, 1e-4), ("flat-cylinder", 0.0, 1e-4)):
        m, V = _setup(name)
        idx = total_indices(V, m)
        val = integrate_phi_over_boundary(V, m, grid=128, zeros=idx.boundary_zeros).value
        ok &= abs(val - expected) < tol and abs(val + idx.ind_dminus) < tol
        parts.append(f"{name} int Phi={val:.3e}, ind d-V={idx.ind_dminus}")
    m, V = _setup("collared-ball")
    t0 = time.perf_counter()
    idx = total_indices(V, m)
    val = integrate_phi_over_boundary(V, m, grid=128, zeros=idx.boundary_zeros).value
    dt = time.perf_counter() - t0
    odd = 0.5 * (idx.ind_dplus - idx.ind_dminus)
    reform = m.euler_X - idx.ind_dminus
    ok &= abs(val - 1.0) < 1e-2 and abs(val - odd) < 1e-2 and abs(val - reform) < 1e-2 and dt < 120
    parts.append(f"collared-ball int Phi={val:.6f} vs (ind d+ - ind d-)/2={odd:g} and chi(X)-ind d-={reform} "
                 f"in {dt:.1f}s at 128x128")
    report(2, ok, "; ".join(parts))


def test_criterion_3_sha(report):
    parts, ok = [], True
    for name in SCENARIOS:
        m, V = _setup(name)
        idx = total_indices(V, m)
        val = integrate_phi_over_boundary(V, m, zeros=idx.boundary_zeros).value
        even = m.dim_n % 2 == 0
        target = m.euler_X if even else 0
        tol = 1e-4 if even else 1e-2
        lhs = idx.ind_V - val
        ok &= abs(lhs - target) < tol
        parts.append(f"{name} ind V - int Phi={lhs:.6f} vs {target}")
    report(3, ok, "; ".join(parts))


def test_criterion_4_law(report):
    parts, ok = [], True
    for name, entry in zoo.ZOO.items():
        m = entry.manifold()
        for s in entry.scenarios:
            idx = total_indices(entry.scenario(m, s), m)
            ok &= idx.ind_V + idx.ind_dminus == m.euler_X
            parts.append(f"{name}/{s} {idx.ind_V}+{idx.ind_dminus}={m.euler_X}")
    report(4, ok, "; ".join(parts))


def test_criterion_5_basic_formula(report):
    rec = check_basic_formula(zoo.collared_ball(), 50, 0, np.random.default_rng(105))
    report(5, rec.residual < 1e-4, f"collared-ball k=0 residual={rec.residual:.2e} (<1e-4) at 50 STM points")


def test_criterion_6_lemma_decomposition(report):
    parts, ok = [], True
    for name in SCENARIOS:
        m = zoo.ZOO[name].manifold()
        a = check_lemma(m, 100, np.random.default_rng(106)).residual
        b = check_decomposition(m, 100, np.random.default_rng(107)).residual
        ok &= a < 1e-6 and b < 1e-6
        parts.append(f"{name} lemma={a:.1e} decomposition={b:.1e}")
    report(6, ok, "; ".join(parts))


def test_criterion_7_i_b(report):
    rec = check_ib_recurrence(8, 50)
    parity = 0.0
    for n in range(2, 10):
        lo, hi = float(i_b(n - 2, 0.0)), float(i_b(n - 2, math.pi))
        if n % 2 == 0:
            parity = max(parity, abs(lo), abs(hi - i_b_quadrature(n - 2, math.pi)))
        else:
            full = i_b_quadrature(n - 2, math.pi) - i_b_quadrature(n - 2, 0.0)
            parity = max(parity, abs(lo + full / 2), abs(hi - full / 2))
    vol = max(check_volume_identity(n).residual for n in (2, 3, 4))
    ok = rec.residual < 1e-10 and parity < 1e-12 and vol < 1e-10
    report(7, ok, f"recurrence vs quadrature={rec.residual:.1e}, parity={parity:.1e}, volume identity={vol:.1e}")


def test_criterion_8_closedness(report):
    parts, ok = [], True
    for name in SCENARIOS:
        r = check_closedness_boundary(zoo.ZOO[name].manifold(), 40, np.random.default_rng(108)).residual
        ok &= r < 1e-3
        parts.append(f"{name} boundary dPhi={r:.1e}")
    disk = zoo.warped_collar_disk()
    inner = check_closedness_interior(disk, 40, np.random.default_rng(109)).residual
    gb = check_gauss_bonnet(disk)
    ok &= inner < 1e-3 and gb.residual < 1e-3
    parts.append(f"disk interior dPhi+Omega={inner:.1e}; Gauss-Bonnet {gb.lhs:.7f} vs {gb.rhs:g}")
    report(8, ok, "; ".join(parts))
