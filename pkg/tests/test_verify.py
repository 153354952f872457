from __future__ import annotations

import math

import numpy as np
import pytest

from transgress import zoo
from transgress.fields import VectorFieldScenario
from transgress.verify import (CHECK_IDS, TOLERANCE_TABLE_VERSION, TOLERANCES, CheckRecord, VerificationReport,
                               applicable_checks, check_basic_formula, check_closedness_boundary,
                               check_closedness_interior, check_collar_audit, check_decomposition, check_exactness,
                               check_gauss_bonnet, check_ib_recurrence, check_lemma, check_volume_identity,
                               integrate_phi_over_boundary, run_checks, volume_identity_sides)

ALL_SCENARIOS = [(name, s) for name, e in sorted(zoo.ZOO.items()) for s in e.scenarios]


def scenario(name, which=None):
    entry = zoo.ZOO[name]
    m = entry.manifold()
    return m, entry.scenario(m, which)


# ----------------------------------------------------------------------------
# the boundary integral


@pytest.mark.parametrize("name,which,expected,tol", [
    ("warped-collar-disk", "spiral", 0.0, 1e-4),
    ("flat-cylinder", "tilt", 0.0, 1e-4),
    ("collared-ball", "rotation", 1.0, 1e-2),
])
def test_integral_examples(name, which, expected, tol):
    m, V = scenario(name, which)
    assert abs(integrate_phi_over_boundary(V, m).value - expected) < tol


def test_integral_with_excision_two_dim():
    m, V = scenario("warped-collar-disk", "uniform")
    res = integrate_phi_over_boundary(V, m)
    # even case: -ind d-V = -1
    assert res.value == pytest.approx(-1.0, abs=1e-4)
    assert len(res.by_radius) == 3


def test_integral_uniform_ball_poles_and_caps():
    m, V = scenario("collared-ball", "uniform")
    assert abs(integrate_phi_over_boundary(V, m).value) < 1e-2


@pytest.mark.parametrize("name,which", [("warped-collar-disk", "spiral"), ("warped-collar-disk", "uniform"),
                                        ("flat-cylinder", "tilt"), ("solid-torus", "spiral"),
                                        ("collared-ball", "rotation")])
def test_grid_refinement_stable(name, which):
    m, V = scenario(name, which)
    tol = 1e-4 if m.dim_n % 2 == 0 else 1e-2
    coarse = integrate_phi_over_boundary(V, m, grid=64).value
    fine = integrate_phi_over_boundary(V, m, grid=128).value
    assert abs(coarse - fine) < tol / 2


def test_integral_deterministic_across_workers():
    m, V = scenario("collared-ball", "rotation")
    a = integrate_phi_over_boundary(V, m, grid=32, workers=1).value
    b = integrate_phi_over_boundary(V, m, grid=32, workers=4).value
    assert a == b


# ----------------------------------------------------------------------------
# pointwise checks


@pytest.mark.parametrize("name", sorted(zoo.ZOO))
def test_exactness(name):
    m = zoo.ZOO[name].manifold()
    rec = check_exactness(m, 50, np.random.default_rng(0))
    assert rec.passed
    flat = name in ("flat-cylinder", "solid-torus")
    assert rec.residual < (1e-6 if flat else 1e-3)


def test_exactness_flat_cylinder_tight():
    assert check_exactness(zoo.flat_cylinder(), 50, np.random.default_rng(1)).residual < 1e-8


@pytest.mark.parametrize("name", sorted(zoo.ZOO))
def test_lemma_and_decomposition(name):
    m = zoo.ZOO[name].manifold()
    assert check_lemma(m, 100, np.random.default_rng(2)).residual < 1e-6
    assert check_decomposition(m, 100, np.random.default_rng(3)).residual < 1e-6


def test_basic_formula_ball():
    rec = check_basic_formula(zoo.collared_ball(), 50, 0, np.random.default_rng(4))
    assert rec.passed and rec.residual < 1e-4


@pytest.mark.parametrize("name", sorted(zoo.ZOO))
def test_closedness_boundary(name):
    assert check_closedness_boundary(zoo.ZOO[name].manifold(), 40, np.random.default_rng(5)).residual < 1e-3


def test_closedness_interior():
    assert check_closedness_interior(zoo.flat_cylinder(), 20, np.random.default_rng(6)).residual < 1e-6
    assert check_closedness_interior(zoo.warped_collar_disk(), 40, np.random.default_rng(7)).residual < 1e-3
    assert check_closedness_interior(zoo.collared_ball(), 20, np.random.default_rng(8)).residual < 1e-3


def test_gauss_bonnet():
    rec = check_gauss_bonnet(zoo.warped_collar_disk())
    assert rec.rhs == 1 and rec.residual < 1e-3
    assert check_gauss_bonnet(zoo.flat_cylinder()).residual < 1e-3


def test_collar_audit_records():
    assert check_collar_audit(zoo.collared_ball()).passed
    assert not check_collar_audit(zoo.round_disk_no_collar()).passed


@pytest.mark.parametrize("n,lhs", [(2, 2 * math.pi), (3, 4 * math.pi), (4, 2 * math.pi**2)])
def test_volume_identity(n, lhs):
    a, b = volume_identity_sides(n)
    assert a == pytest.approx(lhs, rel=1e-14)
    assert abs(a - b) < 1e-10
    assert check_volume_identity(n).passed


def test_ib_recurrence_check():
    rec = check_ib_recurrence()
    assert rec.passed and rec.residual < 1e-10


# ----------------------------------------------------------------------------
# theorem-level checks and reports


EXPECTED = {
    ("warped-collar-disk", "spiral"): {"index_theorem": (0.0, 0.0), "sha": (1.0, 1.0), "law": (1.0, 1.0)},
    ("flat-cylinder", "tilt"): {"index_theorem": (0.0, 0.0), "sha": (0.0, 0.0), "law": (0.0, 0.0)},
    ("collared-ball", "rotation"): {"index_theorem": (1.0, 1.0), "index_reform": (1.0, 1.0),
                                    "sha": (0.0, 0.0), "law": (1.0, 1.0)},
}


@pytest.mark.parametrize("key", sorted(EXPECTED))
def test_theorem_examples(key):
    m, V = scenario(*key)
    checks = tuple(EXPECTED[key])
    rep = run_checks(m, V, checks)
    assert rep.passed
    for rec in rep.records:
        lhs, rhs = EXPECTED[key][rec.check_id]
        assert rec.rhs == rhs
        assert rec.lhs == pytest.approx(lhs, abs=rec.tolerance)


@pytest.mark.parametrize("name,which", ALL_SCENARIOS)
def test_all_checks_pass_on_zoo(name, which):
    m, V = scenario(name, which)
    rep = run_checks(m, V)
    failed = [r for r in rep.records if not r.passed]
    assert not failed, failed
    ids = [r.check_id for r in rep.records]
    assert ids == list(applicable_checks(m.dim_n))


def test_round_disk_control_fails():
    entry = zoo.CONTROLS["round-disk-no-collar"]
    m = entry.manifold()
    rep = run_checks(m, entry.scenario(m), ("collar_audit", "exactness", "law"))
    by_id = {r.check_id: r for r in rep.records}
    assert not by_id["collar_audit"].passed and not rep.passed


def test_report_invariants():
    m, V = scenario("flat-cylinder")
    rep = run_checks(m, V, ("sha", "exactness", "law", "volume_identity"))
    # fixed order, each check once
    assert [r.check_id for r in rep.records] == ["exactness", "sha", "law", "volume_identity"]
    for r in rep.records:
        assert r.residual == abs(r.lhs - r.rhs)
        assert r.passed == (r.residual < r.tolerance)
        assert len(r.machine_line().split()) == 6
    assert rep.params["grid"] == 128
    assert "checks passed" in rep.human()
    assert rep.machine() == run_checks(m, V, ("sha", "exactness", "law", "volume_identity")).machine()


def test_error_is_captured_in_report():
    m = zoo.flat_cylinder()
    V = VectorFieldScenario("vanish", lambda cid, p: np.stack([p[..., 0] - 1.0, np.sin(p[..., 1])], -1))
    rep = run_checks(m, V, ("index_theorem", "law", "volume_identity"))
    assert not rep.passed
    bad = rep.records[0]
    assert bad.check_id == "index_theorem" and "NonGenericField" in bad.error and math.isnan(bad.lhs)
    assert "nan" in bad.machine_line() and bad.machine_line().endswith("fail")
    assert rep.records[-1].passed
    assert "error: NonGenericField" in rep.human()


def test_record_formatting():
    rec = CheckRecord.compare("law", -0.0, 0.0, 0.5)
    assert rec.machine_line() == "law 0 0 0 0.5 pass"
    rec = CheckRecord.compare("exactness", 0.1, 0.0, 1e-3)
    assert not rec.passed and rec.machine_line().split()[1] == "0.10000000000000001"


def test_tolerance_table():
    assert TOLERANCE_TABLE_VERSION == "1"
    assert TOLERANCES["exactness"] == 1e-3 and TOLERANCES["lemma"] == 1e-6
    assert set(applicable_checks(2)) == set(CHECK_IDS) - {"index_reform"}
    assert set(applicable_checks(3)) == set(CHECK_IDS) - {"index_consistency", "gauss_bonnet"}


def test_empty_report_passes():
    rep = VerificationReport("s", "m", {}, [])
    assert rep.passed and rep.machine() == ""
