import numpy as np
import pytest
from hypothesis import given, strategies as st

from reftrack import fields
from reftrack.fields import Grid


def test_grid_basics():
    g = Grid((4, 8), (0.0, -1.0), (1.0, 1.0))
    assert g.shape == (5, 9) and g.size == 45
    assert g.h == (0.25, 0.25)
    assert g.coords().shape == (5, 9, 2)
    assert g.weights().sum() == pytest.approx(g.volume)
    assert g.boundary_mask().sum() == 45 - 3 * 7
    with pytest.raises(ValueError):
        Grid((3, 8), (0.0, 0.0), (1.0, 1.0))
    with pytest.raises(ValueError):
        Grid((4, 4), (0.0, 0.0), (0.0, 1.0))


@pytest.mark.parametrize("closure", ["second_order", "sbp"])
def test_derivative_of_linear_is_exact(closure):
    g = Grid((6, 7), (0.0, 0.0), (1.5, 1.0))
    x = g.coords()
    f = 2.0 * x[..., 0] - 3.0 * x[..., 1] + 0.5
    grad = fields.gradient(f, g, closure)
    np.testing.assert_allclose(grad[..., 0], 2.0, atol=1e-12)
    np.testing.assert_allclose(grad[..., 1], -3.0, atol=1e-12)


def test_second_order_closure_is_exact_on_quadratics():
    g = Grid((5, 5), (0.0, 0.0), (1.0, 1.0))
    x = g.coords()
    f = x[..., 0] ** 2 + x[..., 0] * x[..., 1]
    grad = fields.gradient(f, g)
    np.testing.assert_allclose(grad[..., 0], 2 * x[..., 0] + x[..., 1], atol=1e-12)
    np.testing.assert_allclose(grad[..., 1], x[..., 0], atol=1e-12)


def test_second_order_convergence():
    errs = []
    for n in (16, 32, 64):
        g = Grid.unit(n)
        x = g.coords()
        f = np.sin(3 * x[..., 0]) * np.cos(2 * x[..., 1])
        d0 = fields.diff(f, g, 0)
        errs.append(np.max(np.abs(d0 - 3 * np.cos(3 * x[..., 0]) * np.cos(2 * x[..., 1]))))
    assert np.log2(errs[0] / errs[1]) > 1.9 and np.log2(errs[1] / errs[2]) > 1.9


@given(st.lists(st.floats(-5, 5), min_size=9, max_size=9), st.lists(st.floats(-5, 5), min_size=9, max_size=9))
def test_sbp_summation_by_parts(u, v):
    # sum w u Dv + sum w v Du = u_N v_N - u_0 v_0
    n = 9
    h = 0.125
    D = fields.diff_matrix_1d(n, h, "sbp").toarray()
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    u, v = np.array(u), np.array(v)
    lhs = w @ (u * (D @ v)) + w @ (v * (D @ u))
    assert lhs == pytest.approx(u[-1] * v[-1] - u[0] * v[0], abs=1e-9)


def test_sbp_weak_equilibrium_of_constant_stress():
    g = Grid((8, 6), (0.0, 0.0), (1.0, 1.0))
    rng = np.random.default_rng(1)
    v = rng.normal(size=g.shape + (2,))
    v[g.boundary_mask()] = 0.0
    div = fields.divergence(v, g, "sbp")
    assert abs(fields.integrate(div, g)) < 1e-13


def test_sym_grad_and_its_gradient():
    g = Grid.unit(6)
    x = g.coords()
    v = np.stack([x[..., 1] ** 2, x[..., 0] * x[..., 1]], -1)
    e = fields.sym_grad(v, g)
    np.testing.assert_allclose(e[..., 0, 1], x[..., 1] + 0.5 * x[..., 1], atol=1e-12)
    np.testing.assert_allclose(e[..., 1, 1], x[..., 0], atol=1e-12)
    G = fields.grad_of_sym_grad(v, g)
    np.testing.assert_allclose(G[..., 0, 1, 1], 1.5, atol=1e-10)
    np.testing.assert_allclose(G[..., 1, 1, 0], 1.0, atol=1e-10)


@pytest.mark.parametrize("order", ["linear", "cubic"])
def test_interpolation_reproduces_nodes_and_linear_fields(order):
    g = Grid((5, 7), (0.0, 0.0), (1.0, 2.0))
    x = g.coords()
    f = np.stack([1.0 + 2 * x[..., 0] - x[..., 1], x[..., 1]], -1)
    np.testing.assert_allclose(fields.interpolate(f, x, g, order), f, atol=1e-13)
    p = np.random.default_rng(0).uniform([0, 0], [1, 2], size=(100, 2))
    exact = np.stack([1.0 + 2 * p[:, 0] - p[:, 1], p[:, 1]], -1)
    np.testing.assert_allclose(fields.interpolate(f, p, g, order), exact, atol=1e-12)


def test_cubic_is_exact_on_quadratics_in_the_interior():
    g = Grid.unit(10)
    x = g.coords()
    f = x[..., 0] ** 2 - x[..., 0] * x[..., 1] + 0.3 * x[..., 1] ** 2
    p = np.random.default_rng(2).uniform(0.15, 0.85, size=(200, 2))
    exact = p[:, 0] ** 2 - p[:, 0] * p[:, 1] + 0.3 * p[:, 1] ** 2
    np.testing.assert_allclose(fields.interpolate(f, p, g, "cubic"), exact, atol=1e-12)


def test_interpolation_clamps_points():
    g = Grid.unit(4)
    f = g.coords()[..., 0]
    assert fields.interpolate(f, np.array([[2.0, 0.5]]), g)[0] == pytest.approx(1.0)


def test_interpolation_3d():
    g = Grid.unit(4, 3)
    x = g.coords()
    f = x[..., 0] + 2 * x[..., 1] - x[..., 2]
    p = np.array([[0.3, 0.6, 0.1]])
    assert fields.interpolate(f, p, g)[0] == pytest.approx(0.3 + 1.2 - 0.1)


def test_vtk_round_trip(tmp_path):
    g = Grid((4, 5), (0.0, 1.0), (2.0, 2.0))
    x = g.coords()
    path = tmp_path / "f.vtk"
    fields.write_vtk(path, g, scalars={"s": x[..., 0] * x[..., 1]}, vectors={"v": x})
    text = path.read_text().splitlines()
    assert text[0] == "# vtk DataFile Version 3.0"
    assert text[4] == "DIMENSIONS 5 6 1"
    header, scalars, vectors = fields.read_vtk(path)
    assert header["POINT_DATA"] == 30
    np.testing.assert_array_equal(scalars["s"].reshape(g.shape, order="F"), x[..., 0] * x[..., 1])
    np.testing.assert_array_equal(vectors["v"][:, :2].reshape(g.shape + (2,), order="F"), x)
    np.testing.assert_array_equal(vectors["v"][:, 2], 0.0)
