"""Small dense matrix algebra and Eulerian kinematics.

All functions broadcast over leading axes: a "matrix" argument has shape
``(..., d, d)`` with ``d`` in {2, 3}.
"""
import numpy as np

from .errors import DegenerateDistortion

DET_FLOOR = 1e-12


def _check_dim(M):
    d = M.shape[-1]
    if M.shape[-2] != d or d not in (2, 3):
        raise ValueError(f"expected (..., d, d) with d in (2, 3), got {M.shape}")
    return d


def det(M):
    M = np.asarray(M, dtype=float)
    d = _check_dim(M)
    if d == 2:
        return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    return (
        M[..., 0, 0] * (M[..., 1, 1] * M[..., 2, 2] - M[..., 1, 2] * M[..., 2, 1])
        - M[..., 0, 1] * (M[..., 1, 0] * M[..., 2, 2] - M[..., 1, 2] * M[..., 2, 0])
        + M[..., 0, 2] * (M[..., 1, 0] * M[..., 2, 1] - M[..., 1, 1] * M[..., 2, 0])
    )


def cofactor(M):
    """Matrix of signed (d-1)x(d-1) minors, so that Cof M = det(M) M^{-T}."""
    M = np.asarray(M, dtype=float)
    d = _check_dim(M)
    C = np.empty_like(M)
    if d == 2:
        C[..., 0, 0] = M[..., 1, 1]
        C[..., 0, 1] = -M[..., 1, 0]
        C[..., 1, 0] = -M[..., 0, 1]
        C[..., 1, 1] = M[..., 0, 0]
        return C
    # rows of Cof are cross products of the other two rows
    r0, r1, r2 = M[..., 0, :], M[..., 1, :], M[..., 2, :]
    C[..., 0, :] = np.cross(r1, r2)
    C[..., 1, :] = np.cross(r2, r0)
    C[..., 2, :] = np.cross(r0, r1)
    return C


def frobenius(M):
    M = np.asarray(M, dtype=float)
    return np.sqrt(np.sum(M * M, axis=(-2, -1)))


def identity_like(M):
    d = np.shape(M)[-1]
    return np.broadcast_to(np.eye(d), np.shape(M)).copy()


def deformation_gradient(grad_xi, det_floor=DET_FLOOR):
    """F = Cof(grad xi)^T / det(grad xi), i.e. the inverse of the distortion.

    Raises DegenerateDistortion where det(grad xi) <= det_floor.
    """
    A = np.asarray(grad_xi, dtype=float)
    J_inv = det(A)
    if np.any(J_inv <= det_floor):
        raise DegenerateDistortion(
            f"det(grad xi) = {np.min(J_inv):.3e} <= floor {det_floor:.1e}"
        )
    return np.swapaxes(cofactor(A), -1, -2) / J_inv[..., None, None]


def density(grad_xi, rho_ref, det_floor=DET_FLOOR):
    """Current mass density rho = rho_ref * det(grad xi)."""
    A = np.asarray(grad_xi, dtype=float)
    dA = det(A)
    if np.any(dA <= det_floor):
        raise DegenerateDistortion(
            f"det(grad xi) = {np.min(dA):.3e} <= floor {det_floor:.1e}"
        )
    return np.asarray(rho_ref) * dA


def green_lagrange(F):
    F = np.asarray(F, dtype=float)
    C = np.swapaxes(F, -1, -2) @ F
    return 0.5 * (C - identity_like(C))


class KinematicSnapshot:
    """Fields derived from the return map: A = grad xi, F, J = det F, rho.

    Never evolved on its own; rebuilt from xi after every transport step.
    """

    def __init__(self, A, rho_ref, det_floor=DET_FLOOR):
        self.A = np.asarray(A, dtype=float)
        self.F = deformation_gradient(self.A, det_floor)
        self.J = det(self.F)
        self.rho = density(self.A, rho_ref, det_floor)

    @property
    def detgrad_min(self):
        return float(np.min(det(self.A)))
