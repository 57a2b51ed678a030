"""Stored energies, stresses, cut-off regularization and the monolithic material map.

Every stress function broadcasts over leading axes of ``F`` (shape ``(..., d, d)``).
Phase-dependent evaluation over a whole grid goes through :class:`Material`,
which takes a boolean ``solid`` mask of the same leading shape.
"""
import enum
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import kinematics as kin
from .errors import DegenerateDeformation, NonSymmetricInput, OutOfDomain

PHASE_TOL = 1e-9


class Phase(enum.Enum):
    SOLID = "solid"
    FLUID = "fluid"


@dataclass(frozen=True)
class SolidParams:
    model: str = "neo_hookean"  # or "svk"
    K_e: float = 10.0
    G_e: float = 2.0
    mu: float = 1.0
    lam: float = 0.0
    rho: float = 2.0
    log_term: bool = False


@dataclass(frozen=True)
class FluidParams:
    K_f: float = 1.0
    kappa: float = 3.0
    mu: float = 0.1
    lam: float = 0.0
    rho: float = 1.0


@dataclass(frozen=True)
class Disk:
    """Closed ball (a disk for d = 2)."""

    center: Tuple[float, ...]
    radius: float

    def contains(self, X):
        c = np.asarray(self.center, dtype=float)
        r2 = np.sum((np.asarray(X, dtype=float) - c) ** 2, axis=-1)
        return r2 <= self.radius**2

    def signed_distance(self, X):
        """Distance to the circle, negative inside; returns (value, unit gradient)."""
        r = np.asarray(X, dtype=float) - np.asarray(self.center, dtype=float)
        norm = np.sqrt(np.sum(r * r, axis=-1))
        safe = np.where(norm > 0, norm, 1.0)
        grad = r / safe[..., None]
        grad[norm == 0] = 0.0
        grad[norm == 0, 0] = 1.0
        return norm - self.radius, grad

    def describe(self):
        return "disk(" + ", ".join(_fmt(v) for v in (*self.center, self.radius)) + ")"


@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned box."""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def contains(self, X):
        X = np.asarray(X, dtype=float)
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        return np.all((X >= lo) & (X <= hi), axis=-1)

    def signed_distance(self, X):
        """Exact box distance, negative inside; returns (value, gradient)."""
        X = np.asarray(X, dtype=float)
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        c, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        r = X - c
        q = np.abs(r) - half
        qp = np.maximum(q, 0.0)
        out_norm = np.sqrt(np.sum(qp * qp, axis=-1))
        qmax = np.max(q, axis=-1)
        value = out_norm + np.minimum(qmax, 0.0)
        sign = np.where(r < 0, -1.0, 1.0)
        safe = np.where(out_norm > 0, out_norm, 1.0)
        g_out = sign * qp / safe[..., None]
        g_in = sign * (np.arange(X.shape[-1]) == np.argmax(q, axis=-1)[..., None])
        grad = np.where((qmax > 0)[..., None], g_out, g_in)
        return value, grad

    def describe(self):
        return "rect(" + ", ".join(_fmt(v) for v in (*self.lower, *self.upper)) + ")"


def _fmt(x):
    return repr(float(x))


@dataclass(frozen=True)
class Geometry:
    """Reference-phase layout: the union of ``solids`` is Omega_s, the rest of the box is fluid."""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    solids: Tuple = ()

    @property
    def dim(self):
        return len(self.lower)

    def is_solid(self, X):
        """Vectorized closed-solid classification; raises OutOfDomain beyond PHASE_TOL."""
        X = np.asarray(X, dtype=float)
        lo = np.asarray(self.lower) - PHASE_TOL
        hi = np.asarray(self.upper) + PHASE_TOL
        outside = np.any((X < lo) | (X > hi), axis=-1)
        if np.any(outside):
            bad = X[outside][0] if X.ndim > 1 else X
            raise OutOfDomain(f"reference point {bad} lies outside the domain box")
        mask = np.zeros(X.shape[:-1], dtype=bool)
        for prim in self.solids:
            mask |= prim.contains(X)
        return mask

    def signed_distance(self, X):
        """Signed distance-like function of the solid union (negative inside) and its gradient.

        The union uses the minimum over primitives; far from the solids
        (or with no solids) the value is +inf.
        """
        X = np.asarray(X, dtype=float)
        value = np.full(X.shape[:-1], np.inf)
        grad = np.zeros(X.shape)
        grad[..., 0] = 1.0
        for prim in self.solids:
            v, g = prim.signed_distance(X)
            take = v < value
            value = np.where(take, v, value)
            grad = np.where(take[..., None], g, grad)
        return value, grad


@dataclass(frozen=True)
class PhaseSample:
    phase: Phase
    params: object  # SolidParams or FluidParams


@dataclass(frozen=True)
class MaterialSpec:
    solid: SolidParams = field(default_factory=SolidParams)
    fluid: FluidParams = field(default_factory=FluidParams)
    nu: float = 1e-3
    s_exp: float = 4.0
    eps: Optional[float] = None  # None: pick automatically from the initial state
    gravity: Tuple[float, ...] = (0.0, -1.0)
    geometry: Geometry = field(default_factory=lambda: Geometry((0.0, 0.0), (1.0, 1.0)))


def phase_lookup(spec, X):
    """Phase of a single reference point X (points on the solid boundary are solid)."""
    if spec.geometry.is_solid(np.asarray(X, dtype=float)):
        return PhaseSample(Phase.SOLID, spec.solid)
    return PhaseSample(Phase.FLUID, spec.fluid)


def auto_eps(F0):
    """eps = 1/4 min(min det F0, 1 / max |F0|) for an initial deformation-gradient field."""
    F0 = np.asarray(F0, dtype=float)
    return 0.25 * min(float(np.min(kin.det(F0))), 1.0 / float(np.max(kin.frobenius(F0))))


# ---------------------------------------------------------------- stored energies


def _require_positive_det(J, what):
    if np.any(J <= 0):
        raise DegenerateDeformation(f"{what} needs det F > 0, got {np.min(J):.3e}")


def neo_hookean_energy(F, K_e, G_e, log_term=False):
    d = F.shape[-1]
    J = kin.det(F)
    _require_positive_det(J, "neo-Hookean energy")
    I1 = np.sum(F * F, axis=(-2, -1))
    phi = 0.5 * K_e * (J - 1.0) ** 2 + 0.5 * G_e * (I1 / J ** (2.0 / d) - d)
    if log_term:
        phi = phi - 0.5 * G_e * np.log(J)
    return phi


def neo_hookean_dF(F, K_e, G_e, log_term=False):
    d = F.shape[-1]
    J = kin.det(F)
    _require_positive_det(J, "neo-Hookean energy")
    cof = kin.cofactor(F)
    I1 = np.sum(F * F, axis=(-2, -1))
    Jm = J ** (-2.0 / d)
    coef_cof = K_e * (J - 1.0) - G_e / d * I1 * Jm / J
    if log_term:
        coef_cof = coef_cof - 0.5 * G_e / J
    return coef_cof[..., None, None] * cof + (G_e * Jm)[..., None, None] * F


def svk_energy(F, K_e, G_e):
    d = F.shape[-1]
    E = kin.green_lagrange(F)
    trE = np.trace(E, axis1=-2, axis2=-1)
    lame = K_e - 2.0 * G_e / d
    return 0.5 * lame * trE**2 + G_e * np.sum(E * E, axis=(-2, -1))


def svk_dF(F, K_e, G_e):
    d = F.shape[-1]
    E = kin.green_lagrange(F)
    trE = np.trace(E, axis1=-2, axis2=-1)
    lame = K_e - 2.0 * G_e / d
    S = lame * trE[..., None, None] * kin.identity_like(E) + 2.0 * G_e * E
    return F @ S


def fluid_energy(J, K_f, kappa):
    J = np.asarray(J, dtype=float)
    _require_positive_det(J, "fluid energy")
    return K_f / ((kappa - 1.0) * J ** (kappa - 1.0))


def fluid_denergy(J, K_f, kappa):
    """phi_f'(J) = -p with p = K_f / J**kappa."""
    J = np.asarray(J, dtype=float)
    _require_positive_det(J, "fluid energy")
    return -K_f / J**kappa


def fluid_pressure(J, K_f, kappa):
    return -fluid_denergy(J, K_f, kappa)


def solid_energy(params, F):
    if params.model == "svk":
        return svk_energy(F, params.K_e, params.G_e)
    return neo_hookean_energy(F, params.K_e, params.G_e, params.log_term)


def solid_dF(params, F):
    if params.model == "svk":
        return svk_dF(F, params.K_e, params.G_e)
    return neo_hookean_dF(F, params.K_e, params.G_e, params.log_term)


def stored_energy(sample, F):
    F = np.asarray(F, dtype=float)
    if sample.phase is Phase.SOLID:
        return solid_energy(sample.params, F)
    p = sample.params
    return fluid_energy(kin.det(F), p.K_f, p.kappa)


def stored_energy_dF(sample, F):
    F = np.asarray(F, dtype=float)
    if sample.phase is Phase.SOLID:
        return solid_dF(sample.params, F)
    p = sample.params
    return fluid_denergy(kin.det(F), p.K_f, p.kappa)[..., None, None] * kin.cofactor(F)


def cauchy_stress(sample, F):
    """Conservative Cauchy stress phi'(F) F^T / det F (fluid: phi_f'(J) I)."""
    F = np.asarray(F, dtype=float)
    J = kin.det(F)
    _require_positive_det(J, "Cauchy stress")
    if sample.phase is Phase.FLUID:
        p = sample.params
        return fluid_denergy(J, p.K_f, p.kappa)[..., None, None] * kin.identity_like(F)
    P = solid_dF(sample.params, F)
    return P @ np.swapaxes(F, -1, -2) / J[..., None, None]


# ---------------------------------------------------------------- dissipation


def dissipative_stress(sample, e):
    """Linear Kelvin-Voigt viscous stress 2 mu e + lam tr(e) I."""
    e = np.asarray(e, dtype=float)
    asym = kin.frobenius(e - np.swapaxes(e, -1, -2))
    if np.any(asym > 1e-9 * kin.frobenius(e)):
        raise NonSymmetricInput("strain rate must be symmetric")
    p = sample.params
    tr = np.trace(e, axis1=-2, axis2=-1)
    return 2.0 * p.mu * e + p.lam * tr[..., None, None] * kin.identity_like(e)


def hyperstress(G, nu, s_exp):
    """nu |G|^(s-2) G with the Frobenius norm over the last three axes."""
    G = np.asarray(G, dtype=float)
    norm = np.sqrt(np.sum(G * G, axis=(-3, -2, -1)))
    return nu * (norm ** (s_exp - 2.0))[..., None, None, None] * G


# ---------------------------------------------------------------- cut-off


def _smoothstep(t):
    return t * t * (3.0 - 2.0 * t)


def _smoothstep_dt(t):
    return 6.0 * t * (1.0 - t)


def _cutoff_parts(F, eps):
    J = kin.det(F)
    nF = kin.frobenius(F)
    t1 = np.clip((2.0 * J - eps) / eps, 0.0, 1.0)
    t2 = np.clip(eps * nF - 1.0, 0.0, 1.0)
    return J, nF, t1, t2


def cutoff_pi(F, eps):
    """C^1 cut-off: 1 on {det F >= eps, |F| <= 1/eps}, 0 on {det F <= eps/2 or |F| >= 2/eps}.

    The norm factor descends (1 - smoothstep) so both stated plateaus hold.
    """
    F = np.asarray(F, dtype=float)
    _, _, t1, t2 = _cutoff_parts(F, eps)
    return _smoothstep(t1) * (1.0 - _smoothstep(t2))


def cutoff_pi_dF(F, eps):
    F = np.asarray(F, dtype=float)
    J, nF, t1, t2 = _cutoff_parts(F, eps)
    f1 = _smoothstep(t1)
    f2 = 1.0 - _smoothstep(t2)
    # derivatives of the clamped arguments vanish outside the open bands
    in1 = (t1 > 0.0) & (t1 < 1.0)
    in2 = (t2 > 0.0) & (t2 < 1.0)
    df1 = np.where(in1, _smoothstep_dt(t1) * 2.0 / eps, 0.0)
    df2 = np.where(in2, -_smoothstep_dt(t2) * eps / np.where(nF > 0, nF, 1.0), 0.0)
    return (df1 * f2)[..., None, None] * kin.cofactor(F) + (f1 * df2)[..., None, None] * F


def det_eps(J, eps):
    return np.clip(J, 0.5 * eps, 2.0 / eps)


def regularized_energy_parts(sample, F, eps):
    """Return (pi, phi, [pi phi]') with phi left at 0 wherever pi vanishes."""
    F = np.asarray(F, dtype=float)
    pi = cutoff_pi(F, eps)
    live = pi > 0.0
    phi = np.zeros(F.shape[:-2])
    dphi = np.zeros(F.shape)
    if np.any(live):
        Fl = F[live] if F.ndim > 2 else F
        phi_l = stored_energy(sample, Fl)
        dphi_l = stored_energy_dF(sample, Fl)
        if F.ndim > 2:
            phi[live] = phi_l
            dphi[live] = dphi_l
        else:
            phi, dphi = np.asarray(phi_l), dphi_l
    dpi = cutoff_pi_dF(F, eps)
    d_pi_phi = dpi * phi[..., None, None] + pi[..., None, None] * dphi
    return pi, phi, d_pi_phi


def regularized_stress(sample, F, eps):
    """T_eps = [pi_eps phi]'(F) F^T / det_eps(F); total in F and zero off the cut-off support."""
    F = np.asarray(F, dtype=float)
    pi, _, d_pi_phi = regularized_energy_parts(sample, F, eps)
    J = kin.det(F)
    dj = det_eps(J, eps)
    T = d_pi_phi @ np.swapaxes(F, -1, -2) / dj[..., None, None]
    # on the plateau (pi = 1 with zero slope, det_eps = det) hand back T itself, bit for bit
    t1, t2 = _cutoff_parts(F, eps)[2:]
    flat = (t1 >= 1.0) & (t2 <= 0.0) & (dj == J)
    if np.any(flat):
        if F.ndim == 2:
            return cauchy_stress(sample, F)
        T[flat] = cauchy_stress(sample, F[flat])
    return T


def sample_stress_bound(sample, eps, n_samples=100_000, d=2, seed=0):
    """Sampled estimate of L_eps = sup_F |T_eps(F)| over random F in the cut-off support."""
    rng = np.random.default_rng(seed)
    scale = 2.0 / eps / np.sqrt(d)
    F = rng.uniform(-scale, scale, size=(n_samples, d, d))
    T = regularized_stress(sample, F, eps)
    return float(np.max(kin.frobenius(T)))


# ---------------------------------------------------------------- monolithic map


class Material:
    """Monolithic material map evaluated on whole fields.

    ``solid`` is a boolean mask over the leading axes of the argument fields.
    """

    def __init__(self, spec, eps):
        self.spec = spec
        self.eps = float(eps)
        self.solid_sample = PhaseSample(Phase.SOLID, spec.solid)
        self.fluid_sample = PhaseSample(Phase.FLUID, spec.fluid)

    def _split(self, func, solid, *arrays, out_shape):
        out = np.zeros(out_shape)
        for mask, sample in ((solid, self.solid_sample), (~solid, self.fluid_sample)):
            if np.any(mask):
                out[mask] = func(sample, *(a[mask] for a in arrays))
        return out

    def rho_ref(self, solid):
        return np.where(solid, self.spec.solid.rho, self.spec.fluid.rho)

    def viscosities(self, solid):
        mu = np.where(solid, self.spec.solid.mu, self.spec.fluid.mu)
        lam = np.where(solid, self.spec.solid.lam, self.spec.fluid.lam)
        return mu, lam

    def regularized_stress(self, solid, F):
        return self._split(
            lambda s, f: regularized_stress(s, f, self.eps), solid, F, out_shape=F.shape
        )

    def regularized_energy_density(self, solid, F):
        """pi_eps phi / det_eps(F): the stored-energy integrand of the regularized balance."""

        def dens(sample, f):
            pi, phi, _ = regularized_energy_parts(sample, f, self.eps)
            return pi * phi / det_eps(kin.det(f), self.eps)

        return self._split(dens, solid, F, out_shape=F.shape[:-2])

    def energy_density(self, solid, F):
        """phi / det F, the unregularized stored-energy integrand."""

        def dens(sample, f):
            return stored_energy(sample, f) / kin.det(f)

        return self._split(dens, solid, F, out_shape=F.shape[:-2])

    def cutoff(self, F):
        return cutoff_pi(F, self.eps)
