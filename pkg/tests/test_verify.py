import numpy as np
import pytest

from reftrack import constitutive as cst
from reftrack import kinematics as kin
from reftrack.errors import UnknownCase
from reftrack.fields import Grid
from reftrack.momentum import MomentumProblem
from reftrack.verify import (
    SUITES,
    brute_force_min,
    fd_gradient_oracle,
    manufactured_transport_case,
    rotation_suite,
    run_suites,
)


def test_fd_oracle_of_det_is_cofactor():
    np.testing.assert_allclose(fd_gradient_oracle(kin.det, np.eye(2)), np.eye(2), atol=1e-9)
    M = np.array([[1.0, 2.0], [0.5, 3.0]])
    np.testing.assert_allclose(fd_gradient_oracle(kin.det, M), kin.cofactor(M), atol=1e-9)


def test_fd_oracle_of_half_norm_squared_is_identity_map():
    F = np.random.default_rng(0).normal(size=(3, 3))
    np.testing.assert_allclose(fd_gradient_oracle(lambda X: 0.5 * np.sum(X * X), F), F, atol=1e-9)


def test_fd_oracle_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        fd_gradient_oracle(kin.det, np.eye(2), 0.0)


def test_unknown_case():
    with pytest.raises(UnknownCase):
        manufactured_transport_case("vortex-street")
    with pytest.raises(UnknownCase):
        run_suites(["nope"])


def test_translation_reference():
    case = manufactured_transport_case("translation")
    x = case.grid.coords()
    np.testing.assert_allclose(case.xi_exact(0.5, x), x - 0.5 * np.array([0.3, 0.2]))


def test_rotation_suite_controls():
    nh = cst.SolidParams()
    assert rotation_suite(lambda F: cst.solid_energy(nh, F), 100)["max_error"] <= 1e-10
    svk = cst.SolidParams(model="svk")
    assert rotation_suite(lambda F: cst.solid_energy(svk, F), 100, d=3)["max_error"] <= 1e-10
    # negative control: a frame-dependent "energy"
    assert rotation_suite(lambda F: F[0, 1], 100)["max_error"] > 0.1
    with pytest.raises(ValueError):
        rotation_suite(lambda F: 0.0, 0)


def test_brute_force_zero_forcing():
    g = Grid.unit(6)
    spec = cst.MaterialSpec(gravity=(0.0, 0.0))
    prob = MomentumProblem(g.coords(), spec, g, 0.2)
    v, info = brute_force_min(prob)
    assert np.all(v == 0.0) and info["iterations"] == 0


def test_brute_force_refuses_large_grids():
    g = Grid.unit(16)
    prob = MomentumProblem(g.coords(), cst.MaterialSpec(), g, 0.2)
    with pytest.raises(ValueError):
        brute_force_min(prob)


def test_brute_force_reports_best_iterate_at_cap():
    g = Grid.unit(6)
    prob = MomentumProblem(g.coords(), cst.MaterialSpec(), g, 0.2)
    v, info = brute_force_min(prob, max_iters=3)
    assert not info["converged"] and info["iterations"] == 3
    assert np.all(np.isfinite(v))


@pytest.mark.parametrize("name", sorted(SUITES))
def test_builtin_suites_pass(name):
    checks = run_suites([name])
    assert checks and all(c.passed for c in checks), [c.row() for c in checks]
