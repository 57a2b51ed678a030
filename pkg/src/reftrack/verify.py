"""Independent oracles: finite differences, closed-form transport cases,
a brute-force minimizer for the momentum functional and property drivers.

None of these reuse the code paths they check: the fd oracle only calls the
scalar function, the transport references are closed forms, and the
brute-force minimizer assembles its own dense operators by probing the
field-level derivative routines with unit vectors.
"""
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from . import constitutive as cst
from . import fields
from . import kinematics as kin
from .errors import UnknownCase
from .fields import Grid


# ------------------------------------------------------------------ fd oracle


def fd_gradient_oracle(f, F, h=1e-6):
    """Central-difference gradient of a scalar function of a matrix, entry by entry."""
    if h <= 0:
        raise ValueError("h must be positive")
    F = np.asarray(F, dtype=float)
    out = np.zeros_like(F)
    for idx in np.ndindex(*F.shape):
        Fp, Fm = F.copy(), F.copy()
        Fp[idx] += h
        Fm[idx] -= h
        out[idx] = (f(Fp) - f(Fm)) / (2.0 * h)
    return out


def relative_error(a, b, floor=1e-12):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), floor))


# ------------------------------------------------------ manufactured transport


@dataclass
class TransportCase:
    """Closed-form transport reference.

    ``velocity(x)`` is the stationary field, ``xi_exact(t, x)`` and
    ``F_exact(t, x)`` the exact return map and deformation gradient, and
    ``compare(grid, t, n_steps)`` a boolean mask of nodes where the comparison is fair
    (away from pinned walls and inflow pollution).
    """

    name: str
    grid: Grid
    velocity: Callable
    xi_exact: Callable
    F_exact: Callable
    compare: Callable
    period: Optional[float] = None

    def velocity_field(self, grid=None):
        grid = grid or self.grid
        return self.velocity(grid.coords())


def _rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _translation(n=32, a=(0.3, 0.2)):
    a = np.asarray(a, dtype=float)
    grid = Grid((n, n), (0.0, 0.0), (1.0, 1.0))

    def velocity(x):
        return np.broadcast_to(a, x.shape).copy()

    def xi_exact(t, x):
        return x - t * a

    def F_exact(t, x):
        return np.broadcast_to(np.eye(2), x.shape + (2,)).copy()

    def compare(g, t, n_steps):
        # pinned wall values leak at most two cells per step past the characteristics
        x = g.coords()
        margin = 2.0 * max(g.h) * (n_steps + 1) + t * np.abs(a)
        return np.all((x >= margin) & (x <= 1.0 - margin), axis=-1)

    return TransportCase("translation", grid, velocity, xi_exact, F_exact, compare)


def _linear_shear(n=32, gamma=0.5):
    grid = Grid((4 * n, n), (-2.0, 0.0), (2.0, 1.0))

    def velocity(x):
        return np.stack([gamma * x[..., 1], np.zeros(x.shape[:-1])], -1)

    def xi_exact(t, x):
        return np.stack([x[..., 0] - gamma * t * x[..., 1], x[..., 1]], -1)

    def F_exact(t, x):
        F = np.zeros(x.shape + (2,))
        F[..., 0, 0] = F[..., 1, 1] = 1.0
        F[..., 0, 1] = gamma * t
        return F

    def compare(g, t, n_steps):
        x = g.coords()
        return (np.abs(x[..., 0]) <= 1.0) & (~g.boundary_mask())

    return TransportCase("linear-shear", grid, velocity, xi_exact, F_exact, compare)


def _smootherstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def _smootherstep_dt(t):
    t = np.clip(t, 0.0, 1.0)
    return 30.0 * t * t * (t - 1.0) ** 2


def _interior_rotation(n=32, omega=2.0 * np.pi, center=(0.5, 0.5), r_in=0.2, r_out=0.4):
    """Rigid rotation for r <= r_in tapering smoothly to rest at r_out."""
    c = np.asarray(center, dtype=float)
    grid = Grid((n, n), (0.0, 0.0), (1.0, 1.0))
    width = r_out - r_in

    def psi(r):
        return 1.0 - _smootherstep((r - r_in) / width)

    def dpsi(r):
        return -_smootherstep_dt((r - r_in) / width) / width

    def velocity(x):
        y = x - c
        r = np.sqrt(np.sum(y * y, axis=-1))
        rate = omega * psi(r)
        return np.stack([-rate * y[..., 1], rate * y[..., 0]], -1)

    def xi_exact(t, x):
        y = x - c
        r = np.sqrt(np.sum(y * y, axis=-1))
        R = _rot(-omega * psi(r) * t)
        return c + np.einsum("...ij,...j->...i", R, y)

    def grad_xi(t, x):
        y = x - c
        r = np.sqrt(np.sum(y * y, axis=-1))
        theta = -omega * psi(r) * t
        R = _rot(theta)
        dR = _rot(theta + 0.5 * np.pi)  # derivative of R(theta) in theta
        safe = np.where(r > 0, r, 1.0)
        grad_theta = (-omega * t * dpsi(r) / safe)[..., None] * y
        return R + np.einsum("...i,...j->...ij", np.einsum("...ij,...j->...i", dR, y), grad_theta)

    def F_exact(t, x):
        return np.linalg.inv(grad_xi(t, x))

    def compare(g, t, n_steps):
        return ~g.boundary_mask()

    return TransportCase(
        "interior-rotation", grid, velocity, xi_exact, F_exact, compare, period=2.0 * np.pi / omega
    )


TRANSPORT_CASES = {
    "translation": _translation,
    "linear-shear": _linear_shear,
    "interior-rotation": _interior_rotation,
}


def manufactured_transport_case(name, n=32, **params):
    """Closed-form transport case by name; raises UnknownCase."""
    try:
        make = TRANSPORT_CASES[name]
    except KeyError:
        raise UnknownCase(f"no manufactured case {name!r}; known: {sorted(TRANSPORT_CASES)}") from None
    return make(n, **params)


def run_transport_case(case, t_end, n_steps, order="linear", cfl_max=50.0):
    """Advect xi from the identity to t_end; returns (xi_values, sup error on the compare mask)."""
    from .transport import ReturnMapField, advect

    grid = case.grid
    v = case.velocity_field()
    dt = t_end / n_steps
    xi = ReturnMapField.identity(grid)
    for _ in range(n_steps):
        xi = advect(xi, v, dt, grid, cfl_max=cfl_max, order=order)
    mask = case.compare(grid, t_end, n_steps)
    err = np.abs(xi.values - case.xi_exact(t_end, grid.coords()))
    return xi.values, float(np.max(err[mask]))


# ---------------------------------------------------------- brute-force minimizer


def _probe_operator(op, grid, out_comps):
    """Dense matrix of a linear field map by applying it to every unit vector field."""
    d, N = grid.dim, grid.size
    cols = []
    for c in range(d):
        for n in range(N):
            v = np.zeros((N, d))
            v[n, c] = 1.0
            cols.append(np.asarray(op(v.reshape(grid.shape + (d,)))).reshape(N, -1).ravel())
    # columns ordered (component, node); rows (node, output component)
    return np.array(cols).T


def brute_force_min(problem, tol=1e-12, max_iters=10**6, v0=None):
    """Gradient descent with Armijo backtracking on the discrete functional.

    Builds its own dense strain operators and weights from the field-level
    routines and reads only the frozen data (viscosities, stress, force,
    nu, s) from ``problem``.  Returns (v field, info dict); after
    ``max_iters`` the best iterate is returned with ``converged=False``.
    """
    from .momentum import CLOSURE

    grid = problem.grid
    d, N = grid.dim, grid.size
    if max(grid.shape) > 13:
        raise ValueError("brute_force_min is meant for grids with at most 12 intervals per axis")
    E = _probe_operator(lambda v: fields.sym_grad(v, grid, CLOSURE), grid, (d, d))
    Gm = _probe_operator(lambda v: fields.grad_of_sym_grad(v, grid, CLOSURE), grid, (d, d, d))
    w = grid.weights().ravel()
    mu = problem.mu.ravel()
    lam = problem.lam.ravel()
    T = 0.5 * (problem.T + np.swapaxes(problem.T, -1, -2))
    T = T.reshape(N, d * d)
    f = problem.force.reshape(N, d)
    nu, s = problem.nu, problem.s
    free = ~grid.boundary_mask().ravel()
    eye_flat = np.eye(d).ravel()

    def unpack(x):
        v = np.zeros((N, d))
        v[free] = x.reshape(-1, d)
        return v

    def pack(v):
        return v[free].ravel()

    # reorder columns to act on v flattened node-major, like the rows
    perm = np.arange(N * d).reshape(d, N).T.ravel()
    E = E[:, perm]
    Gm = Gm[:, perm]

    def strains(v):
        e = (E @ v.ravel()).reshape(N, d * d)
        G = (Gm @ v.ravel()).reshape(N, d**3)
        return e, G

    def phi(x):
        v = unpack(x)
        e, G = strains(v)
        tr = e @ eye_flat
        gn = np.sqrt(np.sum(G * G, axis=1))
        dens = mu * np.sum(e * e, axis=1) + 0.5 * lam * tr * tr + nu / s * gn**s
        dens += np.sum(T * e, axis=1) - np.sum(f * v, axis=1)
        return float(np.sum(w * dens))

    def grad(x):
        v = unpack(x)
        e, G = strains(v)
        tr = e @ eye_flat
        gn = np.sqrt(np.sum(G * G, axis=1))
        S = 2.0 * mu[:, None] * e + (lam * tr)[:, None] * eye_flat + T
        H = (nu * gn ** (s - 2.0))[:, None] * G
        g = E.T @ (w[:, None] * S).ravel() + Gm.T @ (w[:, None] * H).ravel()
        g = g.reshape(N, d) - w[:, None] * f
        return pack(g)

    x = np.zeros(int(free.sum()) * d) if v0 is None else pack(np.asarray(v0).reshape(N, d))
    fx, gx = phi(x), grad(x)
    step = 1.0 / max(np.max(np.abs(gx)), 1.0)
    x_prev = g_prev = None
    best = (float(np.linalg.norm(gx)), x)
    it = 0
    while it < max_iters:
        gn = float(np.linalg.norm(gx))
        if gn < best[0]:
            best = (gn, x)
        if gn <= tol:
            break
        if x_prev is not None:
            sk, yk = x - x_prev, gx - g_prev
            sy = float(sk @ yk)
            if sy > 0:
                step = float(sk @ sk) / sy  # Barzilai-Borwein trial step
        alpha = step
        slack = 10.0 * np.finfo(float).eps * abs(fx)
        while True:
            x_new = x - alpha * gx
            f_new = phi(x_new)
            if f_new <= fx - 1e-4 * alpha * gn * gn + slack or alpha < 1e-30:
                break
            alpha *= 0.5
        x_prev, g_prev = x, gx
        x, fx = x_new, f_new
        gx = grad(x)
        it += 1
    gn = float(np.linalg.norm(gx))
    if gn < best[0]:
        best = (gn, x)
    v = unpack(best[1])
    return v.reshape(grid.shape + (d,)), {"iterations": it, "grad_norm": best[0], "converged": best[0] <= tol}


# ----------------------------------------------------------------- rotations


def random_rotations(n_samples, d=2, seed=0):
    """Rotations from uniform angles (2D) or uniform axis and angle (3D)."""
    rng = np.random.default_rng(seed)
    if d == 2:
        return _rot(rng.uniform(0.0, 2.0 * np.pi, n_samples))
    axis = rng.normal(size=(n_samples, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    angle = rng.uniform(0.0, np.pi, n_samples)
    K = np.zeros((n_samples, 3, 3))
    K[:, 0, 1], K[:, 0, 2], K[:, 1, 2] = -axis[:, 2], axis[:, 1], -axis[:, 0]
    K -= np.swapaxes(K, 1, 2)
    s, c = np.sin(angle)[:, None, None], np.cos(angle)[:, None, None]
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def random_deformations(n_samples, d=2, seed=1, spread=0.3):
    """Random F = I + perturbation with det F > 0."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n_samples:
        F = np.eye(d) + spread * rng.normal(size=(d, d))
        if np.linalg.det(F) > 0.2:
            out.append(F)
    return np.array(out)


def rotation_suite(phi, n_samples=100, d=2, seed=0):
    """max |phi(QF) - phi(F)| over sampled rotations Q and deformations F."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    Q = random_rotations(n_samples, d, seed)
    F = random_deformations(n_samples, d, seed + 1)
    errs = [abs(float(phi(Q[i] @ F[i])) - float(phi(F[i]))) for i in range(n_samples)]
    return {"max_error": max(errs), "n_samples": n_samples}


# --------------------------------------------------------------------- suites


@dataclass
class Check:
    name: str
    value: float
    bound: float
    passed: bool

    def row(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<52s} {self.value:11.3e}  (bound {self.bound:.1e})"


def _le(name, value, bound):
    return Check(name, float(value), float(bound), bool(value <= bound))


def _ge(name, value, bound):
    return Check(name, float(value), float(bound), bool(value >= bound))


def suite_kinematics():
    rng = np.random.default_rng(7)
    A = np.eye(2) + 0.4 * rng.normal(size=(1000, 2, 2))
    A = A[np.linalg.det(A) > 0.05]
    F = kin.deformation_gradient(A)
    rho_r = rng.uniform(0.5, 3.0, len(A))
    rho = kin.density(A, rho_r)
    M = rng.normal(size=(1000, 3, 3))
    return [
        _le("F(grad xi) grad xi = I", np.max(np.abs(F @ A - np.eye(2))), 1e-10),
        _le("rho det F = rho_ref", np.max(np.abs(rho * kin.det(F) - rho_r)), 1e-10),
        _le(
            "M Cof(M)^T = det(M) I (3D)",
            np.max(np.abs(M @ np.swapaxes(kin.cofactor(M), -1, -2) - kin.det(M)[:, None, None] * np.eye(3))),
            1e-12,
        ),
    ]


def suite_constitutive():
    out = []
    nh = cst.SolidParams(model="neo_hookean")
    svk = cst.SolidParams(model="svk")
    for label, p in (("neo-Hookean", nh), ("SVK", svk)):
        r = rotation_suite(lambda F, p=p: cst.solid_energy(p, F), 100)
        out.append(_le(f"frame indifference, {label}", r["max_error"], 1e-10))
        T0 = cst.cauchy_stress(cst.PhaseSample(cst.Phase.SOLID, p), np.eye(2))
        out.append(_le(f"T(I) = 0, {label}", np.max(np.abs(T0)), 1e-12))
        worst = 0.0
        for F in random_deformations(20, seed=3):
            num = fd_gradient_oracle(lambda X, p=p: float(cst.solid_energy(p, X)), F)
            worst = max(worst, relative_error(cst.solid_dF(p, F), num))
        out.append(_le(f"d phi/dF vs central differences, {label}", worst, 1e-6))
    J = np.geomspace(1.0, 1e3, 400)
    p = cst.fluid_pressure(J, 1.0, 3.0)
    out.append(_le("p = K_f/J^kappa decreasing on [1, 1e3]", float(np.max(np.diff(p))), -0.0 + 0.0))
    return out


def suite_cutoff():
    eps = 0.2
    F = np.diag([1.0, 0.75 * eps])  # det F = 3 eps / 4, |F| ~ 1
    pi = float(cst.cutoff_pi(F, eps))
    return [_le("pi_eps = 0.5 at det F = 3 eps/4", abs(pi - 0.5), 1e-12)]


def suite_transport():
    out = []
    case = manufactured_transport_case("translation", 64)
    _, err = run_transport_case(case, 0.25, 2, "cubic")
    out.append(_le("translation, sup error", err, 1e-12))
    case = manufactured_transport_case("linear-shear", 16)
    _, err = run_transport_case(case, 1.0, 10, "linear")
    out.append(_le("linear shear, sup error", err, 1e-12))
    errs = []
    for n in (32, 64):
        case = manufactured_transport_case("interior-rotation", n)
        _, e = run_transport_case(case, case.period, n // 2, "cubic")
        errs.append(e)
    out.append(_ge("interior rotation, bicubic order (32 -> 64)", np.log2(errs[0] / errs[1]), 1.5))
    return out


def suite_momentum():
    from .momentum import MomentumProblem, SolverConfig, solve_velocity
    from .transport import ReturnMapField

    grid = Grid((8, 8), (0.0, 0.0), (1.0, 1.0))
    spec = cst.MaterialSpec(
        geometry=cst.Geometry((0.0, 0.0), (1.0, 1.0), (cst.Disk((0.5, 0.5), 0.25),)),
        gravity=(0.0, -1.0),
    )
    xi = ReturnMapField.identity(grid).values
    prob = MomentumProblem(xi, spec, grid, 0.25)
    v, rep = solve_velocity(prob, SolverConfig(tol_abs=1e-13, tol_rel=1e-14))
    vb, info = brute_force_min(prob, 1e-12)
    hist = np.asarray(rep.residual_history)
    return [
        _le("Newton vs brute-force minimizer, sup", np.max(np.abs(v - vb)), 1e-6),
        _le("residual history strictly decreasing", float(np.max(np.diff(hist))), -1e-300),
    ]


SUITES = {
    "kinematics": suite_kinematics,
    "constitutive": suite_constitutive,
    "cutoff": suite_cutoff,
    "transport": suite_transport,
    "momentum": suite_momentum,
}


def run_suites(names=None) -> List[Check]:
    """Run the named suites (all by default); raises UnknownCase for an unknown name."""
    names = list(SUITES) if not names else list(names)
    out = []
    for name in names:
        if name not in SUITES:
            raise UnknownCase(f"no verify suite {name!r}; known: {sorted(SUITES)}")
        for chk in SUITES[name]():
            chk.name = f"{name}: {chk.name}"
            out.append(chk)
    return out
