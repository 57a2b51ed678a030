"""Structured-grid storage and discrete differential operators.

Fields are numpy arrays whose leading axes are the node axes of a
:class:`Grid`; trailing axes hold the component kind (nothing for scalars,
``(d,)`` vectors, ``(d, d)`` matrices, ``(d, d, d)`` third-order tensors).

Two boundary closures are available for first derivatives:

``"second_order"``
    one-sided three-point stencils, second order everywhere.
``"sbp"``
    first-order one-sided boundary rows.  Together with trapezoid weights the
    operator satisfies summation by parts, so constant stress fields are
    exactly in weak equilibrium against test fields vanishing on the boundary.
    The momentum weak form uses this closure.
"""
import functools
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.sparse as sp

CLOSURES = ("second_order", "sbp")


@dataclass(frozen=True)
class Grid:
    """Axis-aligned box [lower, upper] split into ``n[k]`` cells along axis k."""

    n: Tuple[int, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        if not (len(self.n) == len(self.lower) == len(self.upper)):
            raise ValueError("n, lower and upper must have the same length")
        if self.dim not in (2, 3):
            raise ValueError("grid dimension must be 2 or 3")
        if any(int(k) < 4 for k in self.n):
            raise ValueError("need at least 4 cells per axis")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("upper must exceed lower on every axis")

    @classmethod
    def unit(cls, n, d=2):
        return cls((n,) * d, (0.0,) * d, (1.0,) * d)

    @property
    def dim(self):
        return len(self.n)

    @property
    def shape(self):
        return tuple(int(k) + 1 for k in self.n)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def h(self):
        return tuple((hi - lo) / k for lo, hi, k in zip(self.lower, self.upper, self.n))

    @property
    def volume(self):
        return float(np.prod([hi - lo for lo, hi in zip(self.lower, self.upper)]))

    def axis_coords(self, k):
        return np.linspace(self.lower[k], self.upper[k], self.shape[k])

    def coords(self):
        axes = [self.axis_coords(k) for k in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def weights(self):
        """Trapezoid quadrature weights at the nodes."""
        w = np.ones(self.shape)
        for k in range(self.dim):
            wk = np.full(self.shape[k], self.h[k])
            wk[0] = wk[-1] = 0.5 * self.h[k]
            shape = [1] * self.dim
            shape[k] = -1
            w = w * wk.reshape(shape)
        return w

    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        for k in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = -1
            mask[tuple(idx)] = True
        return mask

    def clamp(self, p):
        return np.clip(p, np.asarray(self.lower), np.asarray(self.upper))


@functools.lru_cache(maxsize=64)
def diff_matrix_1d(n_nodes, h, closure="second_order"):
    """Sparse first-derivative matrix on ``n_nodes`` equispaced nodes."""
    if closure not in CLOSURES:
        raise ValueError(f"unknown closure {closure!r}")
    n = n_nodes
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5 / h, 0.5 / h]
    if closure == "second_order":
        rows += [0, 0, 0, n - 1, n - 1, n - 1]
        cols += [0, 1, 2, n - 1, n - 2, n - 3]
        vals += [-1.5 / h, 2.0 / h, -0.5 / h, 1.5 / h, -2.0 / h, 0.5 / h]
    else:
        rows += [0, 0, n - 1, n - 1]
        cols += [0, 1, n - 1, n - 2]
        vals += [-1.0 / h, 1.0 / h, 1.0 / h, -1.0 / h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def diff(f, grid, axis, closure="second_order"):
    """Partial derivative of a field along node axis ``axis``."""
    f = np.asarray(f, dtype=float)
    D = diff_matrix_1d(grid.shape[axis], grid.h[axis], closure)
    moved = np.moveaxis(f, axis, 0)
    out = D @ moved.reshape(moved.shape[0], -1)
    return np.moveaxis(out.reshape(moved.shape), 0, axis)


def gradient(f, grid, closure="second_order"):
    """Appends a trailing axis k holding the derivative along node axis k."""
    return np.stack([diff(f, grid, k, closure) for k in range(grid.dim)], axis=-1)


def divergence(v, grid, closure="second_order"):
    return sum(diff(v[..., k], grid, k, closure) for k in range(grid.dim))


def sym_grad(v, grid, closure="second_order"):
    """Symmetric velocity gradient e(v) = (grad v + grad v^T) / 2, grad v[..., i, j] = d_j v_i."""
    g = gradient(v, grid, closure)
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def grad_of_sym_grad(v, grid, closure="second_order"):
    """grad e(v) with entry [..., i, j, k] = d_k e_ij."""
    return gradient(sym_grad(v, grid, closure), grid, closure)


def integrate(f, grid):
    return float(np.sum(grid.weights() * np.asarray(f, dtype=float)))


# ---------------------------------------------------------------- interpolation


def _keys(t):
    """Keys cubic convolution weights (a = -1/2) for offsets -1, 0, 1, 2."""
    t2, t3 = t * t, t * t * t
    return (
        0.5 * (-t3 + 2 * t2 - t),
        0.5 * (3 * t3 - 5 * t2 + 2),
        0.5 * (-3 * t3 + 4 * t2 + t),
        0.5 * (t3 - t2),
    )


def _pad_linear(f, dim):
    """Add one ghost layer per side along each node axis by linear extrapolation."""
    for k in range(dim):
        f = np.moveaxis(f, k, 0)
        lo = 2.0 * f[0] - f[1]
        hi = 2.0 * f[-1] - f[-2]
        f = np.concatenate([lo[None], f, hi[None]], axis=0)
        f = np.moveaxis(f, 0, k)
    return f


def interpolate(f, p, grid, order="linear"):
    """Evaluate a nodal field at points ``p`` (shape ``(..., d)``), clamped to the box.

    ``order="linear"`` is multilinear (exact on multilinear fields, overshoot
    free); ``order="cubic"`` uses Keys cubic convolution with linearly
    extrapolated ghost nodes (exact on quadratics in the interior).
    """
    f = np.asarray(f, dtype=float)
    d = grid.dim
    p = grid.clamp(np.asarray(p, dtype=float))
    lead = p.shape[:-1]
    p = p.reshape(-1, d)
    comp_shape = f.shape[d:]
    idx, frac = [], []
    for k in range(d):
        s = (p[:, k] - grid.lower[k]) / grid.h[k]
        i = np.clip(np.floor(s).astype(int), 0, grid.n[k] - 1)
        idx.append(i)
        frac.append(s - i)
    if order == "linear":
        out = np.zeros((p.shape[0],) + comp_shape)
        for corner in range(2**d):
            w = np.ones(p.shape[0])
            sel = []
            for k in range(d):
                bit = (corner >> k) & 1
                w = w * (frac[k] if bit else 1.0 - frac[k])
                sel.append(idx[k] + bit)
            out += w.reshape((-1,) + (1,) * len(comp_shape)) * f[tuple(sel)]
    elif order == "cubic":
        fp = _pad_linear(f, d)
        wts = [_keys(t) for t in frac]
        out = np.zeros((p.shape[0],) + comp_shape)
        for offs in np.ndindex(*(4,) * d):
            w = np.ones(p.shape[0])
            sel = []
            for k in range(d):
                w = w * wts[k][offs[k]]
                # padded index of node (i + off - 1) is i + off; clamp keeps
                # the stencil inside the single ghost layer
                sel.append(np.clip(idx[k] + offs[k], 0, grid.shape[k] + 1))
            out += w.reshape((-1,) + (1,) * len(comp_shape)) * fp[tuple(sel)]
    else:
        raise ValueError(f"unknown interpolation order {order!r}")
    return out.reshape(lead + comp_shape)


# ---------------------------------------------------------------- field dumps


def write_vtk(path, grid, scalars=None, vectors=None, title="reftrack fields"):
    """Legacy-VTK ASCII STRUCTURED_POINTS dump (x index fastest)."""
    scalars = scalars or {}
    vectors = vectors or {}
    d = grid.dim
    dims = list(grid.shape) + [1] * (3 - d)
    origin = list(grid.lower) + [0.0] * (3 - d)
    spacing = list(grid.h) + [1.0] * (3 - d)
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS " + " ".join(str(v) for v in dims),
        "ORIGIN " + " ".join(repr(float(v)) for v in origin),
        "SPACING " + " ".join(repr(float(v)) for v in spacing),
        f"POINT_DATA {grid.size}",
    ]
    for name, arr in scalars.items():
        flat = np.asarray(arr, dtype=float).reshape(grid.shape).ravel(order="F")
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(repr(float(x)) for x in flat)
    for name, arr in vectors.items():
        arr = np.asarray(arr, dtype=float).reshape(grid.shape + (d,))
        flat = arr.reshape(-1, d, order="F")
        if d == 2:
            flat = np.hstack([flat, np.zeros((flat.shape[0], 1))])
        lines.append(f"VECTORS {name} double")
        lines.extend(" ".join(repr(float(x)) for x in row) for row in flat)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk(path):
    """Read back a dump written by :func:`write_vtk` (header dict, scalar and vector arrays)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    header = {}
    scalars, vectors = {}, {}
    i = 4
    while i < len(lines):
        tok = lines[i].split()
        if not tok:
            i += 1
            continue
        key = tok[0]
        if key in ("DIMENSIONS", "ORIGIN", "SPACING"):
            header[key] = [float(t) for t in tok[1:]]
            i += 1
        elif key == "POINT_DATA":
            n = int(tok[1])
            header[key] = n
            i += 1
        elif key == "SCALARS":
            i += 2
            scalars[tok[1]] = np.array([float(x) for x in lines[i : i + n]])
            i += n
        elif key == "VECTORS":
            i += 1
            vectors[tok[1]] = np.array([[float(x) for x in ln.split()] for ln in lines[i : i + n]])
            i += n
        else:
            i += 1
    return header, scalars, vectors
