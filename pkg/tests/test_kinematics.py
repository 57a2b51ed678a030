import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from reftrack import kinematics as kin
from reftrack.errors import DegenerateDistortion

finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)


def mats(d):
    return arrays(np.float64, (d, d), elements=finite)


def test_identity_is_a_fixed_point():
    for d in (2, 3):
        I = np.eye(d)
        np.testing.assert_array_equal(kin.deformation_gradient(I), I)
        assert kin.det(I) == 1.0


def test_det_and_cofactor_match_numpy(rng):
    for d in (2, 3):
        M = rng.normal(size=(50, d, d))
        np.testing.assert_allclose(kin.det(M), np.linalg.det(M), rtol=1e-12, atol=1e-12)
        inv_T = np.swapaxes(np.linalg.inv(M), -1, -2)
        np.testing.assert_allclose(kin.cofactor(M), np.linalg.det(M)[:, None, None] * inv_T, atol=1e-10)


def test_cofactor_of_diagonal():
    M = np.diag([2.0, 3.0, 5.0])
    np.testing.assert_allclose(kin.cofactor(M), np.diag([15.0, 10.0, 6.0]))


@pytest.mark.parametrize("d", [2, 3])
@given(data=st.data())
def test_cofactor_identity(d, data):
    M = data.draw(mats(d))
    lhs = M @ kin.cofactor(M).T
    scale = max(1.0, float(np.max(np.abs(M)))) ** d
    np.testing.assert_allclose(lhs, kin.det(M) * np.eye(d), atol=1e-12 * scale)


@pytest.mark.parametrize("d", [2, 3])
@given(data=st.data())
def test_F_inverts_distortion(d, data):
    A = data.draw(mats(d))
    det = np.linalg.det(A)
    if det < 1e-2 or np.linalg.cond(A) > 1e4:
        return
    F = kin.deformation_gradient(A)
    np.testing.assert_allclose(F @ A, np.eye(d), atol=1e-10 * np.linalg.cond(A))


@given(A=mats(2), rho=st.floats(0.1, 10.0))
def test_mass_identity(A, rho):
    det = kin.det(A)
    if det <= 1e-3:
        return
    F = kin.deformation_gradient(A)
    assert abs(kin.density(A, rho) * kin.det(F) - rho) <= 1e-10 * rho * max(1.0, det * kin.det(F))


def test_folded_distortion_raises():
    A = np.diag([1.0, -0.5])
    with pytest.raises(DegenerateDistortion):
        kin.deformation_gradient(A)
    with pytest.raises(DegenerateDistortion):
        kin.deformation_gradient(np.zeros((2, 2)))


def test_det_floor_is_configurable():
    A = np.diag([1.0, 1e-6])
    kin.deformation_gradient(A)
    with pytest.raises(DegenerateDistortion):
        kin.deformation_gradient(A, det_floor=1e-3)


def test_green_lagrange_of_rotation_vanishes():
    c, s = np.cos(0.7), np.sin(0.7)
    Q = np.array([[c, -s], [s, c]])
    np.testing.assert_allclose(kin.green_lagrange(Q), 0.0, atol=1e-15)


def test_snapshot_fields(rng):
    A = np.eye(2) + 0.1 * rng.normal(size=(5, 6, 2, 2))
    snap = kin.KinematicSnapshot(A, rho_ref=2.0)
    np.testing.assert_allclose(snap.F @ A, np.broadcast_to(np.eye(2), A.shape), atol=1e-12)
    np.testing.assert_allclose(snap.rho * snap.J, 2.0, rtol=1e-12)
    assert snap.detgrad_min == pytest.approx(np.min(np.linalg.det(A)))


def test_shape_validation():
    with pytest.raises(ValueError):
        kin.det(np.zeros((2, 3)))
