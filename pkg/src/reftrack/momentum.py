"""Per-step quasistatic momentum solve for the velocity given the return map.

The discrete problem is the trapezoid-quadrature version of the weak form:
find v, zero on the boundary nodes, with

    sum_n w_n [ (T + D(e(v))) : e(w) + H(grad e(v)) ::: grad e(w) - f . w ] = 0

for every nodal test field w vanishing on the boundary.  With the linear
viscous law it is the stationarity condition of the strictly convex functional

    Phi_h(v) = sum_n w_n [ mu|e|^2 + lam/2 (tr e)^2 + nu/s |grad e|^s + T:e - f.v ],

which :func:`solve_velocity` minimizes by Newton's method.
"""
import functools
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fields
from . import kinematics as kin
from .constitutive import Material, det_eps
from .errors import NonConvergence

log = logging.getLogger(__name__)

CLOSURE = "sbp"


@dataclass
class SolverConfig:
    tol_abs: float = 1e-9
    tol_rel: float = 1e-8
    max_iters: int = 200
    line_search: bool = True
    hessian_floor: float = 1e-12
    linear_solver: str = "direct"  # or "cg"


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: List[float] = field(default_factory=list)
    converged: bool = False


@functools.lru_cache(maxsize=16)
def _operators(grid):
    """Sparse E: v -> e(v) and B: v -> grad e(v) on component-major flattened fields.

    Layouts: v[c*N + n], e[(i*d + j)*N + n], G[((i*d + j)*d + k)*N + n].
    """
    d, N = grid.dim, grid.size
    Dk = []
    for k in range(d):
        mats = [sp.identity(s, format="csr") for s in grid.shape]
        mats[k] = fields.diff_matrix_1d(grid.shape[k], grid.h[k], CLOSURE)
        M = mats[0]
        for m in mats[1:]:
            M = sp.kron(M, m, format="csr")
        Dk.append(M)
    zero = sp.csr_matrix((N, N))
    E_blocks = []
    for i in range(d):
        for j in range(d):
            row = [zero] * d
            row[i] = row[i] + 0.5 * Dk[j]
            row[j] = row[j] + 0.5 * Dk[i]
            E_blocks.append(row)
    E = sp.bmat(E_blocks, format="csr")
    Gd = sp.block_diag([sp.vstack(Dk)] * (d * d), format="csr")
    # block_diag of vstack(D_k) maps e_(ij) to rows (ij, k): matches the G layout
    B = (Gd @ E).tocsr()
    return E, B


def _as_field(flat, grid, comps):
    N = grid.size
    arr = flat.reshape(comps + (N,))
    arr = np.moveaxis(arr, tuple(range(len(comps))), tuple(range(-len(comps), 0)))
    return arr.reshape(grid.shape + comps)


def _as_flat(arr, grid, comps):
    a = arr.reshape((grid.size,) + comps)
    return np.moveaxis(a, 0, -1).ravel()


class MomentumProblem:
    """Frozen-xi data for one quasistatic solve.

    Precomputes at every node: A = grad xi, F = Cof(A)^T / det_eps(A), the
    reference phase of xi, the regularized stress T_eps(F), viscosities and
    the body force det_eps(A) rho_r g.
    """

    def __init__(self, xi, spec, grid, eps, xi_closure="second_order", solid=None):
        self.grid = grid
        self.spec = spec
        self.eps = float(eps)
        self.material = Material(spec, eps)
        xi = np.asarray(xi, dtype=float)
        self.xi = xi
        self.A = fields.gradient(xi, grid, xi_closure)
        self.detA = kin.det(self.A)
        dA_eps = det_eps(self.detA, self.eps)
        self.F = np.swapaxes(kin.cofactor(self.A), -1, -2) / dA_eps[..., None, None]
        # phase labels normally come from xi; an explicit mask is accepted for diagnostics
        self.solid = spec.geometry.is_solid(xi) if solid is None else np.asarray(solid, dtype=bool)
        self.rho_ref = self.material.rho_ref(self.solid)
        self.mu, self.lam = self.material.viscosities(self.solid)
        self.T = self.material.regularized_stress(self.solid, self.F)
        g = np.asarray(spec.gravity, dtype=float)
        self.force = (dA_eps * self.rho_ref)[..., None] * g
        self.nu = float(spec.nu)
        self.s = float(spec.s_exp)
        self._setup()

    def _setup(self):
        grid = self.grid
        d, N = grid.dim, grid.size
        self.E, self.B = _operators(grid)
        self.w = grid.weights().ravel()
        self.wd = np.tile(self.w, d)
        self.wdd = np.tile(self.w, d * d)
        self.wddd = np.tile(self.w, d**3)
        free = ~grid.boundary_mask().ravel()
        self.free = np.tile(free, d)
        self.free_idx = np.nonzero(self.free)[0]
        Ts = 0.5 * (self.T + np.swapaxes(self.T, -1, -2))
        self.T_flat = _as_flat(Ts, grid, (d, d))
        self.f_flat = _as_flat(self.force, grid, (d,))
        mu = self.mu.ravel()
        lam = self.lam.ravel()
        self.mu_e = np.tile(mu, d * d)
        self.lam_n = lam
        # quadratic part of the Hessian: E^T W C E with C = 2 mu I + lam (delta x delta)
        diag = sp.diags(self.wdd * 2.0 * self.mu_e)
        tr_sel = sp.hstack(
            [sp.identity(N) if i == j else sp.csr_matrix((N, N)) for i in range(d) for j in range(d)]
        ).tocsr()
        C = diag + tr_sel.T @ sp.diags(self.w * lam) @ tr_sel
        self._trace_sel = tr_sel
        self.K_quad = (self.E.T @ C @ self.E).tocsr()

    # -- pieces ---------------------------------------------------------------

    def strain_parts(self, v_flat):
        e = self.E @ v_flat
        G = self.B @ v_flat
        return e, G

    def _gnorm(self, G):
        d, N = self.grid.dim, self.grid.size
        return np.sqrt(np.sum(G.reshape(d**3, N) ** 2, axis=0))

    def _visc(self, e):
        d, N = self.grid.dim, self.grid.size
        tr = self._trace_sel @ e
        De = 2.0 * self.mu_e * e
        De += (self._trace_sel.T @ (self.lam_n * tr))
        return De

    def energy_flat(self, v_flat):
        e, G = self.strain_parts(v_flat)
        d, N = self.grid.dim, self.grid.size
        tr = self._trace_sel @ e
        quad = np.sum(self.wdd * self.mu_e * e * e) + 0.5 * np.sum(self.w * self.lam_n * tr * tr)
        gn = self._gnorm(G)
        hyper = self.nu / self.s * np.sum(self.w * gn**self.s)
        stress = np.sum(self.wdd * self.T_flat * e)
        load = np.sum(self.wd * self.f_flat * v_flat)
        return quad + hyper + stress - load

    def residual_flat(self, v_flat):
        e, G = self.strain_parts(v_flat)
        d, N = self.grid.dim, self.grid.size
        gn = self._gnorm(G)
        H = self.nu * np.tile(gn ** (self.s - 2.0), d**3) * G
        R = self.E.T @ (self.wdd * (self._visc(e) + self.T_flat))
        R += self.B.T @ (self.wddd * H)
        R -= self.wd * self.f_flat
        R[~self.free] = 0.0
        return R

    def hessian_flat(self, v_flat, floor=1e-12):
        d, N = self.grid.dim, self.grid.size
        G = self.B @ v_flat
        Gn = G.reshape(d**3, N)
        gn = np.sqrt(np.sum(Gn**2, axis=0))
        scal = np.maximum(gn ** (self.s - 2.0), floor)
        unit = np.divide(Gn, gn, out=np.zeros_like(Gn), where=gn > 0)
        m = d**3
        # per node: nu w (scal I + (s-2)|G|^(s-2) g g^T)
        outer = (self.s - 2.0) * gn ** (self.s - 2.0) * unit[:, None, :] * unit[None, :, :]
        blocks = outer + scal[None, None, :] * np.eye(m)[:, :, None]
        blocks *= (self.nu * self.w)[None, None, :]
        a, b = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        nodes = np.arange(N)
        rows = (a[:, :, None] * N + nodes[None, None, :]).ravel()
        cols = (b[:, :, None] * N + nodes[None, None, :]).ravel()
        Hs = sp.csr_matrix((blocks.ravel(), (rows, cols)), shape=(m * N, m * N))
        return (self.K_quad + self.B.T @ Hs @ self.B).tocsr()

    # -- field-level API -----------------------------------------------------

    def flatten(self, v):
        return _as_flat(np.asarray(v, dtype=float), self.grid, (self.grid.dim,))

    def unflatten(self, v_flat):
        return _as_field(v_flat, self.grid, (self.grid.dim,))

    def energy(self, v):
        """Discrete functional Phi_h(v)."""
        return self.energy_flat(self.flatten(v))


def weak_residual(v, prob):
    """Nodal dual residual R(v); rows at boundary nodes are zero."""
    return prob.unflatten(prob.residual_flat(prob.flatten(v)))


def _solve_linear(K, rhs, cfg):
    if cfg.linear_solver == "cg":
        diag = K.diagonal()
        M = sp.diags(1.0 / diag)
        x, info = spla.cg(K, rhs, M=M, rtol=1e-12, atol=0.0, maxiter=20 * K.shape[0])
        if info != 0:
            log.warning("CG stopped with info=%d", info)
        return x
    # K is SPD: symmetric-mode SuperLU with a minimum-degree ordering on A + A^T
    lu = spla.splu(
        K.tocsc(),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options=dict(SymmetricMode=True),
    )
    return lu.solve(rhs)


def solve_velocity(prob, cfg=None, v0=None):
    """Newton iteration with backtracking on ||R|| for the unique discrete velocity.

    Converged when ||R(v)|| <= tol_abs + tol_rel ||R(0)||.  Raises
    NonConvergence (carrying the report) after ``max_iters`` iterations.
    """
    cfg = cfg or SolverConfig()
    n = prob.grid.size * prob.grid.dim
    v = np.zeros(n) if v0 is None else prob.flatten(v0).copy()
    v[~prob.free] = 0.0
    fi = prob.free_idx
    r0_norm = float(np.linalg.norm(prob.residual_flat(np.zeros(n))))
    tol = cfg.tol_abs + cfg.tol_rel * r0_norm
    R = prob.residual_flat(v)
    rn = float(np.linalg.norm(R))
    report = SolveReport(residual_history=[rn])
    while rn > tol:
        if report.iterations >= cfg.max_iters:
            raise NonConvergence(
                f"momentum solve: ||R|| = {rn:.3e} > {tol:.3e} after {report.iterations} iterations",
                report,
            )
        K = prob.hessian_flat(v, cfg.hessian_floor)[fi][:, fi]
        step = np.zeros(n)
        step[fi] = _solve_linear(K, -R[fi], cfg)
        alpha = 1.0
        v_new = v + step
        R_new = prob.residual_flat(v_new)
        rn_new = float(np.linalg.norm(R_new))
        if cfg.line_search:
            while rn_new > (1.0 - 1e-4 * alpha) * rn and alpha > 1e-10:
                alpha *= 0.5
                v_new = v + alpha * step
                R_new = prob.residual_flat(v_new)
                rn_new = float(np.linalg.norm(R_new))
            if rn_new >= rn:
                # no further progress is representable in floating point
                report.iterations += 1
                break
        v, R, rn = v_new, R_new, rn_new
        report.iterations += 1
        report.residual_history.append(rn)
    report.converged = rn <= tol
    if not report.converged:
        raise NonConvergence(f"momentum solve stalled at ||R|| = {rn:.3e} > {tol:.3e}", report)
    return prob.unflatten(v), report
