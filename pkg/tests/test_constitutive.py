import numpy as np
import pytest
from hypothesis import given, strategies as st

from reftrack import constitutive as cst
from reftrack import kinematics as kin
from reftrack.errors import DegenerateDeformation, NonSymmetricInput, OutOfDomain
from reftrack.verify import fd_gradient_oracle, random_rotations, relative_error

NH = cst.SolidParams(model="neo_hookean", K_e=10.0, G_e=2.0)
NH_LOG = cst.SolidParams(model="neo_hookean", K_e=10.0, G_e=2.0, log_term=True)
SVK = cst.SolidParams(model="svk", K_e=10.0, G_e=2.0)
FLUID = cst.FluidParams(K_f=1.5, kappa=3.0)
SOLID_SAMPLES = [cst.PhaseSample(cst.Phase.SOLID, p) for p in (NH, NH_LOG, SVK)]
FLUID_SAMPLE = cst.PhaseSample(cst.Phase.FLUID, FLUID)


def deformations(d=2, lo=0.3):
    def build(entries):
        F = np.eye(d) + np.array(entries).reshape(d, d)
        return F

    return st.lists(st.floats(-0.5, 0.5), min_size=d * d, max_size=d * d).map(build).filter(
        lambda F: np.linalg.det(F) > lo
    )


@pytest.mark.parametrize("sample", SOLID_SAMPLES + [FLUID_SAMPLE], ids=["nh", "nh-log", "svk", "fluid"])
@given(F=deformations())
def test_energy_derivative_matches_central_differences(sample, F):
    num = fd_gradient_oracle(lambda X: float(cst.stored_energy(sample, X)), F, 1e-6)
    assert relative_error(cst.stored_energy_dF(sample, F), num, floor=1.0) <= 1e-6


@given(F=deformations(3, 0.4))
def test_energy_derivative_3d(F):
    for p in (NH, SVK):
        num = fd_gradient_oracle(lambda X: float(cst.solid_energy(p, X)), F, 1e-6)
        assert relative_error(cst.solid_dF(p, F), num, floor=1.0) <= 1e-6


@pytest.mark.parametrize("params", [NH, NH_LOG, SVK], ids=["nh", "nh-log", "svk"])
@given(F=deformations(), theta=st.floats(0.0, 2 * np.pi))
def test_frame_indifference(params, F, theta):
    c, s = np.cos(theta), np.sin(theta)
    Q = np.array([[c, -s], [s, c]])
    assert abs(cst.solid_energy(params, Q @ F) - cst.solid_energy(params, F)) <= 1e-10


@pytest.mark.parametrize("params", [NH, SVK], ids=["nh", "svk"])
def test_frame_indifference_3d(params):
    Q = random_rotations(50, 3, seed=4)
    F = np.eye(3) + 0.2 * np.random.default_rng(5).normal(size=(50, 3, 3))
    err = np.abs(cst.solid_energy(params, Q @ F) - cst.solid_energy(params, F))
    assert np.max(err) <= 1e-10


@pytest.mark.parametrize("params", [NH, SVK], ids=["nh", "svk"])
@pytest.mark.parametrize("d", [2, 3])
def test_reference_is_stress_free(params, d):
    T = cst.cauchy_stress(cst.PhaseSample(cst.Phase.SOLID, params), np.eye(d))
    assert np.max(np.abs(T)) <= 1e-12


def test_log_term_gives_reference_pressure():
    # the log augmentation shifts the reference stress to -G/2 I
    T = cst.cauchy_stress(cst.PhaseSample(cst.Phase.SOLID, NH_LOG), np.eye(2))
    np.testing.assert_allclose(T, -0.5 * NH_LOG.G_e * np.eye(2), atol=1e-14)


def test_log_term_blows_up_under_compression():
    small = [cst.solid_energy(NH_LOG, np.diag([j, 1.0])) for j in (1e-2, 1e-4, 1e-8)]
    assert small[0] < small[1] < small[2]


def test_fluid_pressure_law():
    J = np.geomspace(1.0, 1e3, 500)
    p = cst.fluid_pressure(J, 2.0, 3.0)
    np.testing.assert_allclose(p, 2.0 / J**3, rtol=1e-14)
    assert np.all(np.diff(p) < 0)
    assert p[-1] < 1e-8


def test_fluid_stress_is_isotropic_pressure():
    F = np.array([[1.2, 0.3], [0.0, 0.9]])
    J = np.linalg.det(F)
    T = cst.cauchy_stress(FLUID_SAMPLE, F)
    np.testing.assert_allclose(T, -cst.fluid_pressure(J, FLUID.K_f, FLUID.kappa) * np.eye(2), rtol=1e-14)


def test_cauchy_stress_is_symmetric(rng):
    F = np.eye(2) + 0.3 * rng.normal(size=(40, 2, 2))
    F = F[np.linalg.det(F) > 0.2]
    for s in SOLID_SAMPLES:
        T = cst.cauchy_stress(s, F)
        np.testing.assert_allclose(T, np.swapaxes(T, -1, -2), atol=1e-12)


def test_degenerate_deformation_raises():
    with pytest.raises(DegenerateDeformation):
        cst.cauchy_stress(SOLID_SAMPLES[0], np.diag([1.0, -1.0]))
    with pytest.raises(DegenerateDeformation):
        cst.fluid_energy(0.0, 1.0, 3.0)


def test_dissipative_stress():
    s = cst.PhaseSample(cst.Phase.SOLID, cst.SolidParams(mu=1.5, lam=0.5))
    e = np.array([[1.0, 0.2], [0.2, -0.5]])
    np.testing.assert_allclose(cst.dissipative_stress(s, e), 3.0 * e + 0.25 * np.eye(2))
    with pytest.raises(NonSymmetricInput):
        cst.dissipative_stress(s, np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_hyperstress_is_gradient_of_power():
    G = np.random.default_rng(0).normal(size=(2, 2, 2))
    nu, s = 0.3, 4.0

    def pot(X):
        return nu / s * np.sum(X * X) ** (s / 2)

    num = np.zeros_like(G)
    for idx in np.ndindex(*G.shape):
        Gp, Gm = G.copy(), G.copy()
        Gp[idx] += 1e-6
        Gm[idx] -= 1e-6
        num[idx] = (pot(Gp) - pot(Gm)) / 2e-6
    np.testing.assert_allclose(cst.hyperstress(G, nu, s), num, rtol=1e-7)


# -------------------------------------------------------------------- cut-off

EPS = 0.2


def test_cutoff_plateau_and_excluded_set():
    assert cst.cutoff_pi(np.eye(2), EPS) == 1.0
    assert cst.cutoff_pi(np.diag([1.0, EPS]), EPS) == 1.0  # det = eps, on the plateau edge
    assert cst.cutoff_pi(np.diag([1.0, EPS / 2]), EPS) == 0.0
    assert cst.cutoff_pi(np.diag([2.0 / EPS, 1.0]), EPS) == 0.0  # |F| > 2/eps
    big = np.eye(2) * (1.0 / EPS) / np.sqrt(2)  # |F| = 1/eps exactly
    assert cst.cutoff_pi(big, EPS) == pytest.approx(1.0, abs=1e-12)


def test_cutoff_half_value():
    F = np.diag([1.0, 0.75 * EPS])
    assert abs(cst.cutoff_pi(F, EPS) - 0.5) <= 1e-12


@given(F=st.lists(st.floats(-12.0, 12.0), min_size=4, max_size=4).map(lambda v: np.array(v).reshape(2, 2)))
def test_cutoff_in_unit_interval(F):
    pi = cst.cutoff_pi(F, EPS)
    assert 0.0 <= pi <= 1.0


def test_cutoff_derivative_matches_fd_in_band(rng):
    worst = 0.0
    checked = 0
    while checked < 20:
        F = rng.uniform(-6, 6, size=(2, 2))
        pi = cst.cutoff_pi(F, EPS)
        if not 0.05 < pi < 0.95:
            continue
        num = fd_gradient_oracle(lambda X: float(cst.cutoff_pi(X, EPS)), F, 1e-7)
        worst = max(worst, relative_error(cst.cutoff_pi_dF(F, EPS), num))
        checked += 1
    assert worst <= 1e-5


def test_cutoff_is_C1_across_seams():
    # the det factor along F = diag(1, j) with seams at j = eps/2 and j = eps
    for seam in (0.5 * EPS, EPS):
        for delta in (1e-5, 1e-7):
            lo = cst.cutoff_pi_dF(np.diag([1.0, seam - delta]), EPS)
            hi = cst.cutoff_pi_dF(np.diag([1.0, seam + delta]), EPS)
            assert np.max(np.abs(hi - lo)) <= 1e3 * delta
    # the norm factor along F = a I with seams at |F| = 1/eps and 2/eps
    for seam in (1.0 / EPS, 2.0 / EPS):
        a = seam / np.sqrt(2)
        lo = cst.cutoff_pi_dF((a - 1e-7) * np.eye(2), EPS)
        hi = cst.cutoff_pi_dF((a + 1e-7) * np.eye(2), EPS)
        assert np.max(np.abs(hi - lo)) <= 1e-4


@pytest.mark.parametrize("sample", SOLID_SAMPLES + [FLUID_SAMPLE], ids=["nh", "nh-log", "svk", "fluid"])
def test_regularized_stress_vanishes_off_support(sample):
    for F in (np.diag([1.0, 0.5 * EPS]), np.diag([1.0, 0.1 * EPS]), np.diag([2.0 / EPS, 1.0]), np.diag([1.0, -1.0])):
        assert np.all(cst.regularized_stress(sample, F, EPS) == 0.0)


@pytest.mark.parametrize("sample", SOLID_SAMPLES + [FLUID_SAMPLE], ids=["nh", "nh-log", "svk", "fluid"])
def test_regularized_stress_equals_stress_on_plateau(sample, rng):
    F = np.eye(2) + 0.3 * rng.normal(size=(30, 2, 2))
    F = F[(np.linalg.det(F) > EPS) & (kin.frobenius(F) < 1 / EPS)]
    np.testing.assert_array_equal(cst.cutoff_pi(F, EPS), 1.0)
    np.testing.assert_allclose(cst.regularized_stress(sample, F, EPS), cst.cauchy_stress(sample, F), rtol=1e-14, atol=1e-14)


def test_stress_bound_is_finite():
    for s in SOLID_SAMPLES + [FLUID_SAMPLE]:
        L = cst.sample_stress_bound(s, EPS, n_samples=20000)
        assert np.isfinite(L) and L > 0


def test_auto_eps():
    assert cst.auto_eps(np.broadcast_to(np.eye(2), (3, 3, 2, 2))) == pytest.approx(0.25 / np.sqrt(2))
    assert cst.auto_eps(np.broadcast_to(np.eye(3), (2, 3, 3))) == pytest.approx(0.25 / np.sqrt(3))


# ------------------------------------------------------------------- geometry


def test_disk_boundary_is_solid():
    geo = cst.Geometry((0.0, 0.0), (1.0, 1.0), (cst.Disk((0.5, 0.5), 0.25),))
    assert geo.is_solid(np.array([0.75, 0.5]))
    assert not geo.is_solid(np.array([0.75 + 1e-12, 0.5]))
    spec = cst.MaterialSpec(geometry=geo)
    assert cst.phase_lookup(spec, [0.5, 0.25]).phase is cst.Phase.SOLID
    assert cst.phase_lookup(spec, [0.1, 0.1]).phase is cst.Phase.FLUID


def test_rect_union():
    geo = cst.Geometry((0.0, 0.0), (1.0, 1.0), (cst.Rect((0.1, 0.1), (0.3, 0.3)), cst.Disk((0.7, 0.7), 0.1)))
    X = np.array([[0.2, 0.2], [0.3, 0.3], [0.7, 0.75], [0.5, 0.5]])
    np.testing.assert_array_equal(geo.is_solid(X), [True, True, True, False])


def test_out_of_domain_raises():
    geo = cst.Geometry((0.0, 0.0), (1.0, 1.0))
    geo.is_solid(np.array([1.0 + 1e-12, 0.0]))  # within the tolerance
    with pytest.raises(OutOfDomain):
        geo.is_solid(np.array([[0.5, 0.5], [1.1, 0.5]]))


def test_signed_distance():
    disk = cst.Disk((0.5, 0.5), 0.2)
    v, g = disk.signed_distance(np.array([[0.9, 0.5], [0.5, 0.5]]))
    np.testing.assert_allclose(v, [0.2, -0.2])
    np.testing.assert_allclose(g[0], [1.0, 0.0])
    rect = cst.Rect((0.0, 0.0), (1.0, 2.0))
    v, g = rect.signed_distance(np.array([[2.0, 3.0], [0.5, 1.9], [0.5, 1.0]]))
    np.testing.assert_allclose(v, [np.sqrt(2.0), -0.1, -0.5])
    np.testing.assert_allclose(g[0], [1 / np.sqrt(2), 1 / np.sqrt(2)])
    np.testing.assert_allclose(g[1], [0.0, 1.0])


def test_material_dispatches_by_phase():
    spec = cst.MaterialSpec(solid=SVK, fluid=FLUID)
    mat = cst.Material(spec, EPS)
    F = np.broadcast_to(np.diag([1.1, 0.95]), (2, 3, 2, 2)).copy()
    solid = np.array([[True, False, True], [False, False, True]])
    T = mat.regularized_stress(solid, F)
    np.testing.assert_allclose(T[0, 0], cst.cauchy_stress(SOLID_SAMPLES[2], F[0, 0]))
    np.testing.assert_allclose(T[0, 1], cst.cauchy_stress(FLUID_SAMPLE, F[0, 1]))
    mu, lam = mat.viscosities(solid)
    assert mu[0, 0] == SVK.mu and mu[0, 1] == FLUID.mu
