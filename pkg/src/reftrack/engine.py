"""Coupled quasistatic time loop, energy-dissipation audit and cut-off monitor.

One step solves the momentum problem for v at the current return map and
then advects xi with that v.  Optional Picard sweeps re-solve v at the
advected candidate and re-advect from the start-of-step state, which realises
the v -> xi -> v fixed-point composition literally.
"""
import csv
import itertools
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import fields
from . import kinematics as kin
from .constitutive import Material, auto_eps, det_eps
from .errors import InterpenetrationDetected, NonConvergence, StepFailure
from .momentum import CLOSURE, MomentumProblem, solve_velocity
from .transport import ReturnMapField, advect, gradient_of_return_map, phase_change_fraction

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "t",
    "stored",
    "dissipation_rate",
    "gravity_power",
    "balance_residual",
    "pi_min",
    "detgrad_min",
    "solver_iterations",
)


def _box_spline_cdf(c, t):
    """P(sum_k c_k U_k <= t), U_k ~ U(-1/2, 1/2) independent, all c_k > 0 (closed form)."""
    m = c.shape[-1]
    half = 0.5 * np.sum(c, axis=-1)
    t = np.clip(t, -half, half)
    acc = np.zeros(t.shape)
    for corner in itertools.product((0, 1), repeat=m):
        sigma = np.asarray(corner, dtype=float)
        shift = t + half - np.sum(sigma * c, axis=-1)
        acc += (-1.0) ** int(sigma.sum()) * np.maximum(shift, 0.0) ** m
    return np.clip(acc / (math.factorial(m) * np.prod(c, axis=-1)), 0.0, 1.0)


def _uniform_sum_cdf(c, t, rel_tol=1e-6):
    """P(sum_k c_k U_k <= t) for c_k >= 0; ``c`` has shape (n, d), ``t`` shape (n,).

    Coefficients below ``rel_tol`` times the largest are treated as zero,
    which reduces the dimension of the box spline; with all of them zero the
    result is the closed step t >= 0.
    """
    c = np.sort(np.abs(c), axis=-1)[:, ::-1]
    live = c > rel_tol * c[:, :1]
    n_live = np.where(c[:, 0] > 0, np.sum(live, axis=-1), 0)
    out = (t >= 0).astype(float)
    for m in range(1, c.shape[-1] + 1):
        sel = n_live == m
        if np.any(sel):
            out[sel] = _box_spline_cdf(c[sel, :m], t[sel])
    return out


def solid_fraction(geometry, xi, A, grid, subdivisions=None):
    """Solid volume fraction of each node's dual cell.

    Near a node the return map is linearized, xi(x_n + u) ~ xi_n + A_n u.
    The dual cell is split into ``subdivisions``^d subcells (default 16 per axis in 2D, 6 in 3D).  In each subcell
    the pulled-back interface is treated as planar: a point is solid when
    sd(X_j) + (A^T grad sd(X_j)) . (u - u_j) <= 0, where sd is the signed
    distance of the reference solid and X_j = xi_n + A_n u_j.  The result is
    exact for planar interfaces.  Unlike the sampled nodal label it varies
    C^1 with xi, and subdividing shrinks the curvature error by
    ``subdivisions``^2.
    """
    xi = np.asarray(xi, dtype=float)
    d = xi.shape[-1]
    h = np.asarray(grid.h)
    sd, g = geometry.signed_distance(xi)
    m = np.einsum("...ji,...j->...i", A, g)
    reach = 0.5 * np.sum(np.abs(m) * h, axis=-1)
    theta = (sd <= 0).astype(float)
    band = np.isfinite(sd) & (np.abs(sd) < 2.0 * reach + 1e-300)
    if not np.any(band):
        return theta
    xb, Ab = xi[band], A[band]
    xn = grid.coords()[band]
    lo, hi = np.asarray(grid.lower), np.asarray(grid.upper)
    k = int(subdivisions or (16 if d == 2 else 6))
    hs = h / k
    offs = (np.arange(k) + 0.5) / k - 0.5
    acc = np.zeros(len(xb))
    count = np.zeros(len(xb))
    for idx in itertools.product(range(k), repeat=d):
        u = offs[list(idx)] * h
        # boundary nodes own only the part of their dual cell inside the box
        inside = np.all((xn + u >= lo) & (xn + u <= hi), axis=-1)
        sdj, gj = geometry.signed_distance(xb + Ab @ u)
        mj = np.einsum("nji,nj->ni", Ab, gj)
        c = np.abs(mj) * hs
        acc += np.where(inside, _uniform_sum_cdf(c, -sdj), 0.0)
        count += inside
    theta[band] = acc / count
    return theta


class RegularizationActiveWarning(UserWarning):
    """The cut-off pi_eps dropped below 1 somewhere: the run left the unregularized regime."""


@dataclass
class SimState:
    xi: ReturnMapField
    step: int = 0
    A: Optional[np.ndarray] = None  # grad xi, refreshed with xi
    v: Optional[np.ndarray] = None  # last solved velocity, used as a warm start

    @property
    def t(self):
        return self.xi.t


@dataclass
class EnergyReport:
    t: float
    stored: float
    dissipation_rate: float
    gravity_power: float
    balance_residual: float
    pi_min: float
    detgrad_min: float
    solver_iterations: int = 0
    stored_unregularized: Optional[float] = None
    phase_change_fraction: float = 0.0
    picard_gaps: List[float] = field(default_factory=list)

    def csv_row(self):
        return [getattr(self, c) for c in CSV_COLUMNS]


class Simulation:
    """Holds the immutable run setup (grid, material, solver and coupling options)."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.grid = cfg.grid
        self.spec = cfg.material
        self.order = "cubic" if cfg.transport.interpolation == "bicubic" else "linear"
        xi0 = ReturnMapField.identity(self.grid)
        A0 = gradient_of_return_map(xi0, self.grid)
        if self.spec.eps is None:
            self.eps = auto_eps(kin.deformation_gradient(A0))
        else:
            self.eps = float(self.spec.eps)
        self.material = Material(self.spec, self.eps)

    # -- state helpers --------------------------------------------------------

    def initial_state(self):
        xi = ReturnMapField.identity(self.grid)
        return SimState(xi=xi, step=0, A=gradient_of_return_map(xi, self.grid))

    def _F(self, A):
        dA = det_eps(kin.det(A), self.eps)
        return np.swapaxes(kin.cofactor(A), -1, -2) / dA[..., None, None]

    def stored_energy(self, state):
        """Regularized stored energy and its unregularized twin (None unless pi_eps = 1 everywhere).

        The integrand is theta psi_s + (1 - theta) psi_f with psi = pi phi / det_eps(F)
        and theta the dual-cell solid fraction from :func:`solid_fraction`.
        """
        F = self._F(state.A)
        theta = solid_fraction(self.spec.geometry, state.xi.values, state.A, self.grid)
        pi_min = float(np.min(self.material.cutoff(F)))
        dens = self._mix(theta, F, self.material.regularized_energy_density)
        stored = fields.integrate(dens, self.grid)
        unreg = None
        if pi_min >= 1.0 and np.all(kin.det(F) > 0):
            unreg = fields.integrate(self._mix(theta, F, self.material.energy_density), self.grid)
        return stored, unreg, pi_min

    @staticmethod
    def _mix(theta, F, density):
        out = np.zeros(theta.shape)
        has_s, has_f = theta > 0, theta < 1
        if np.any(has_s):
            out[has_s] += theta[has_s] * density(np.ones(int(has_s.sum()), bool), F[has_s])
        if np.any(has_f):
            out[has_f] += (1 - theta[has_f]) * density(np.zeros(int(has_f.sum()), bool), F[has_f])
        return out

    def problem(self, xi_values):
        return MomentumProblem(xi_values, self.spec, self.grid, self.eps)

    def dissipation_rate(self, prob, v):
        e = fields.sym_grad(v, self.grid, CLOSURE)
        G = fields.grad_of_sym_grad(v, self.grid, CLOSURE)
        De = 2.0 * prob.mu[..., None, None] * e
        De += (prob.lam * np.trace(e, axis1=-2, axis2=-1))[..., None, None] * np.eye(self.grid.dim)
        gn = np.sqrt(np.sum(G * G, axis=(-3, -2, -1)))
        dens = np.sum(De * e, axis=(-2, -1)) + prob.nu * gn**prob.s
        return fields.integrate(dens, self.grid)

    def gravity_power(self, prob, v):
        g = np.asarray(self.spec.gravity, dtype=float)
        JF = det_eps(kin.det(prob.F), self.eps)
        dens = prob.rho_ref * np.sum(g * v, axis=-1) / JF
        return fields.integrate(dens, self.grid)

    # -- public operations ----------------------------------------------------

    def energy_audit(self, prev, new, prob, v, dt, stored_prev=None):
        """Discrete regularized energy balance for the step prev -> new.

        ``prob`` is the momentum problem v was solved on.  The residual is
        (stored_new - stored_prev)/dt + dissipation - gravity power.
        """
        if stored_prev is None:
            stored_prev, _, _ = self.stored_energy(prev)
        stored_new, unreg, pi_min = self.stored_energy(new)
        diss = self.dissipation_rate(prob, v)
        grav = self.gravity_power(prob, v)
        resid = (stored_new - stored_prev) / dt + diss - grav
        return EnergyReport(
            t=new.t,
            stored=stored_new,
            dissipation_rate=diss,
            gravity_power=grav,
            balance_residual=resid,
            pi_min=pi_min,
            detgrad_min=float(np.min(kin.det(new.A))),
            stored_unregularized=unreg,
        )

    def regularization_monitor(self, state):
        """Flags for the cut-off activity; raises InterpenetrationDetected on det(grad xi) <= 0."""
        detgrad_min = float(np.min(kin.det(state.A)))
        if detgrad_min <= 0.0:
            raise InterpenetrationDetected(f"min det(grad xi) = {detgrad_min:.3e} <= 0")
        F = self._F(state.A)
        pi_min = float(np.min(self.material.cutoff(F)))
        active = pi_min < 1.0
        if active:
            msg = f"cut-off active at t = {state.t:.6g}: min pi_eps = {pi_min:.6g}"
            log.warning(msg)
            warnings.warn(msg, RegularizationActiveWarning, stacklevel=2)
        return {"cutoff_active": active, "pi_min": pi_min, "detgrad_min": detgrad_min}

    def step(self, state, stored_prev=None):
        """Advance one time step; returns (new_state, EnergyReport)."""
        cfg = self.cfg
        dt = cfg.time.dt
        if float(np.min(kin.det(state.A))) <= 0.0:
            raise StepFailure("unhealthy state: det(grad xi) <= 0", state=state)
        xi_current = state.xi
        v_prev = None
        gaps = []
        iterations = 0
        v_guess = state.v
        try:
            for k in range(cfg.coupling.picard_iters):
                prob = self.problem(xi_current.values)
                v, rep = solve_velocity(prob, cfg.solver, v0=v_guess)
                iterations += rep.iterations
                candidate = advect(
                    state.xi, v, dt, self.grid, cfg.transport.cfl_max, self.order
                )
                if v_prev is not None:
                    gaps.append(float(np.max(np.abs(v - v_prev))))
                    if gaps[-1] <= cfg.coupling.picard_tol:
                        break
                v_prev = v
                v_guess = v
                xi_current = candidate
        except NonConvergence as exc:
            raise StepFailure(f"momentum solve failed at step {state.step}", cause=exc, state=state) from exc
        except Exception as exc:
            raise StepFailure(f"step {state.step} failed: {exc}", cause=exc, state=state) from exc
        new = SimState(
            xi=candidate,
            step=state.step + 1,
            A=gradient_of_return_map(candidate, self.grid),
            v=v,
        )
        detgrad_min = float(np.min(kin.det(new.A)))
        if detgrad_min <= 0.0:
            exc = InterpenetrationDetected(f"min det(grad xi) = {detgrad_min:.3e} <= 0")
            raise StepFailure(f"interpenetration at step {new.step}", cause=exc, state=state) from exc
        # the audit pairs v with the configuration it was solved on
        report = self.energy_audit(state, new, prob, v, dt, stored_prev)
        report.solver_iterations = iterations
        report.picard_gaps = gaps
        solid_old = self.spec.geometry.is_solid(state.xi.values)
        solid_new = self.spec.geometry.is_solid(new.xi.values)
        report.phase_change_fraction = phase_change_fraction(solid_old, solid_new)
        return new, report

    def dump(self, state, path, v=None):
        F = self._F(state.A)
        J = kin.det(F)
        solid = self.spec.geometry.is_solid(state.xi.values)
        rho = self.material.rho_ref(solid) * kin.det(state.A)
        vectors = {"xi": state.xi.values}
        if v is not None:
            vectors["v"] = v
        fields.write_vtk(
            path,
            self.grid,
            scalars={
                "J": J,
                "rho": rho,
                "solid": solid.astype(float),
                "pi_eps": self.material.cutoff(F),
            },
            vectors=vectors,
            title=f"reftrack t={state.t!r}",
        )

    def run(self, n_steps=None, out_dir=None, callback=None):
        """Run the time loop; returns (final_state, reports).

        Writes ``energy.csv`` and ``fields_XXXXX.vtk`` dumps into ``out_dir``
        when given.  On StepFailure the last healthy state is dumped to
        ``failure.vtk`` before the error propagates.
        """
        n_steps = self.cfg.time.n_steps if n_steps is None else n_steps
        dump_every = self.cfg.time.dump_every
        state = self.initial_state()
        self.regularization_monitor(state)
        stored_prev, _, _ = self.stored_energy(state)
        reports = []
        writer = fh = None
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            fh = open(os.path.join(out_dir, "energy.csv"), "w", newline="")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            if dump_every:
                self.dump(state, os.path.join(out_dir, "fields_00000.vtk"))
        try:
            for _ in range(n_steps):
                try:
                    new, rep = self.step(state, stored_prev)
                except StepFailure:
                    if out_dir is not None:
                        self.dump(state, os.path.join(out_dir, "failure.vtk"), state.v)
                    raise
                flags = self.regularization_monitor(new)
                log.info(
                    "step %d t=%.6g stored=%.9g residual=%.3e pi_min=%.6g iters=%d",
                    new.step, new.t, rep.stored, rep.balance_residual, flags["pi_min"], rep.solver_iterations,
                )
                reports.append(rep)
                stored_prev = rep.stored
                state = new
                if writer is not None:
                    writer.writerow([_fmt(x) for x in rep.csv_row()])
                    if dump_every and new.step % dump_every == 0:
                        self.dump(new, os.path.join(out_dir, f"fields_{new.step:05d}.vtk"), new.v)
                if callback is not None:
                    callback(new, rep)
        finally:
            if fh is not None:
                fh.close()
        return state, reports


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def run(cfg, n_steps=None, out_dir=None):
    """Build a :class:`Simulation` from a RunConfig and run it."""
    return Simulation(cfg).run(n_steps=n_steps, out_dir=out_dir)
