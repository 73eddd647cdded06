"""Finite element spaces for systems of order 2m in the plane.

Two conforming families:

* :class:`TriP1Space` -- continuous piecewise-linear triangles for
  second-order systems (m = 1), any simple polygon;
* :class:`RectBFSSpace` -- Bogner-Fox-Schmit bicubic rectangles (nodal
  dofs u, u_x, u_y, u_xy), C^1-conforming for fourth-order systems
  (m = 2) on lattice-aligned rectangle meshes.

Both expose the same protocol used by assembly, norms and solvers:
``basis_arrays`` (order-m derivative arrays at the mesh quadrature),
``derivative_sampler`` (sparse evaluation of order-k derivative arrays at
arbitrary points), boundary/interior dof sets, the polynomial kernel of
grad^m, and the moment gauge that pins Neumann solutions.

Derivative arrays use the weighted multiindex convention of
:mod:`divform.coefficients` (mixed Hessian slot scaled by sqrt(2)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .coefficients import multiindices, multiindex_weight
from .geometry import RectMesh, TriMesh


def _component_blocks(n_comp, nloc_scalar, C_scalar, B_scalar):
    """Lift scalar local arrays (..., nloc, C) to N components block-wise."""
    shape = B_scalar.shape[:-2]
    nloc, C = B_scalar.shape[-2:]
    out = np.zeros(shape + (n_comp * nloc, n_comp * C), dtype=B_scalar.dtype)
    for k in range(n_comp):
        out[..., k * nloc : (k + 1) * nloc, k * C : (k + 1) * C] = B_scalar
    return out


@dataclass
class FESolution:
    """Dof vector plus the bookkeeping needed to interpret it."""

    space: object
    dofs: np.ndarray
    kind: str = "generic"          # dirichlet | neumann | potential | generic
    gauge: dict | None = None

    def gradient_array(self):
        """Order-m derivative array at the mesh quadrature (GradientArray)."""
        from .assembly import gradient_array_of

        return gradient_array_of(self)

    def eval(self, points, order=None):
        """Values (order=0) or derivative arrays of the given order at points."""
        order = self.space.m if order is None else order
        E = self.space.derivative_sampler(np.atleast_2d(points), order)
        n = len(np.atleast_2d(points))
        return (E @ self.dofs).reshape(n, -1)

    def copy(self):
        return FESolution(self.space, self.dofs.copy(), self.kind, self.gauge)


# ---------------------------------------------------------------------------
# P1 triangles, m = 1
# ---------------------------------------------------------------------------

class TriP1Space:
    """Continuous P1 vector elements on a triangulation; m = 1."""

    m = 1
    degree = 1
    quad_order = 2

    def __init__(self, mesh: TriMesh, n_components: int = 1):
        self.mesh = mesh
        self.N = n_components
        self.mis = multiindices(1)
        self.n_mi = len(self.mis)          # 2
        self.C = self.N * self.n_mi
        self.n_scalar = mesh.n_vertices
        self.n_dofs = self.N * self.n_scalar
        self._grads = None
        self._basis = None

    # -- geometry ------------------------------------------------------------

    def _cell_grads(self):
        """Gradients of the three barycentric functions, (nt, 3, 2)."""
        if self._grads is None:
            v = self.mesh.cell_vertices
            T = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=1)  # rows
            Tinv = np.linalg.inv(T)                  # columns: grads of lam1, lam2
            g12 = np.transpose(Tinv, (0, 2, 1))      # (nt, 2 funcs, 2 coords)
            g0 = -g12.sum(axis=1, keepdims=True)
            self._grads = np.concatenate([g0, g12], axis=1)
        return self._grads

    def cell_dofs(self):
        """Global dofs per cell, (nt, 3N), component-major."""
        tri = self.mesh.triangles
        return np.concatenate(
            [k * self.n_scalar + tri for k in range(self.N)], axis=1
        )

    def basis_arrays(self):
        """(B, quadrature) with B of shape (nt, nq, 3N, 2N): gradient arrays."""
        if self._basis is None:
            pts, wts = self.mesh.quadrature(self.quad_order)
            g = self._cell_grads()                          # (nt, 3, 2)
            nq = pts.shape[1]
            B1 = np.broadcast_to(g[:, None, :, :], (g.shape[0], nq, 3, 2))
            B = _component_blocks(self.N, 3, 2, B1)
            self._basis = (B, pts, wts)
        return self._basis

    # -- dof sets -------------------------------------------------------------

    def boundary_dofs(self):
        vb = self.mesh.boundary_vertex_ids()
        return np.concatenate([k * self.n_scalar + vb for k in range(self.N)])

    def interior_dofs(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.boundary_dofs()] = False
        return np.nonzero(mask)[0]

    def kernel_dof_basis(self):
        """Constants per component: dof-space basis of ker(grad), (ndofs, N)."""
        K = np.zeros((self.n_dofs, self.N))
        for k in range(self.N):
            K[k * self.n_scalar : (k + 1) * self.n_scalar, k] = 1.0
        return K

    # -- evaluation -----------------------------------------------------------

    def derivative_sampler(self, points, order):
        """Sparse map dofs -> stacked derivative arrays at the points.

        Shape (npts * N * n_mi(order), ndofs); order 0 gives values,
        order 1 gradient arrays.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cells = self.mesh.locate(pts)
        if (cells < 0).any():
            bad = pts[cells < 0][0]
            raise ValueError(f"point {bad} is outside the mesh")
        lam = self.mesh.barycentric(pts, cells)              # (n, 3)
        if order == 0:
            loc = lam                                        # (n, 3)
            Cor = 1
        elif order == 1:
            loc = self._cell_grads()[cells]                  # (n, 3, 2)
            Cor = 2
        else:
            raise ValueError("P1 supports derivative orders 0 and 1")
        n = len(pts)
        tri = self.mesh.triangles[cells]                     # (n, 3)
        rows, cols, vals = [], [], []
        for k in range(self.N):
            for v in range(3):
                for a in range(Cor):
                    rows.append(np.arange(n) * (self.N * Cor) + k * Cor + a)
                    cols.append(k * self.n_scalar + tri[:, v])
                    vals.append(loc[:, v] if Cor == 1 else loc[:, v, a])
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n * self.N * Cor, self.n_dofs),
        )

    def interpolate(self, fn):
        """Nodal interpolation; fn(points) -> (n,) or (n, N)."""
        vals = np.asarray(fn(self.mesh.vertices))
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape != (self.n_scalar, self.N):
            raise ValueError("interpolation values have the wrong shape")
        return vals.T.reshape(-1).astype(complex)

    # -- gauge ----------------------------------------------------------------

    def moments(self, dofs):
        """Component means of u (the grad^{m-1}=identity moments), (N,)."""
        areas = self.mesh.areas
        tri = self.mesh.triangles
        out = np.empty(self.N, dtype=complex)
        for k in range(self.N):
            u = dofs[k * self.n_scalar : (k + 1) * self.n_scalar]
            out[k] = np.sum(areas / 3.0 * u[tri].sum(axis=1))
        return out

    def remove_kernel(self, dofs):
        """Subtract the kernel polynomial making all moments vanish."""
        area = self.mesh.domain.area
        out = dofs.astype(complex).copy()
        coeffs = self.moments(dofs) / area
        for k in range(self.N):
            out[k * self.n_scalar : (k + 1) * self.n_scalar] -= coeffs[k]
        return out, {"constant": coeffs}


# ---------------------------------------------------------------------------
# Bogner-Fox-Schmit bicubic rectangles, m = 2
# ---------------------------------------------------------------------------

def _hermite_1d(t, deriv):
    """The four cubic Hermite functions on [0,1] or a derivative of them.

    Order: value@0, slope@0, value@1, slope@1.
    """
    t = np.asarray(t, dtype=float)
    if deriv == 0:
        return np.stack(
            [
                1 - 3 * t**2 + 2 * t**3,
                t - 2 * t**2 + t**3,
                3 * t**2 - 2 * t**3,
                -(t**2) + t**3,
            ],
            axis=-1,
        )
    if deriv == 1:
        return np.stack(
            [
                -6 * t + 6 * t**2,
                1 - 4 * t + 3 * t**2,
                6 * t - 6 * t**2,
                -2 * t + 3 * t**2,
            ],
            axis=-1,
        )
    if deriv == 2:
        return np.stack(
            [-6 + 12 * t, -4 + 6 * t, 6 - 12 * t, -2 + 6 * t], axis=-1
        )
    if deriv == 3:
        ones = np.ones_like(t)
        return np.stack([12 * ones, 6 * ones, -12 * ones, 6 * ones], axis=-1)
    raise ValueError("cubic Hermites have derivatives 0..3")


# local dof layout per vertex: (value, d/dx, d/dy, d2/dxdy)
_SLOTS = ((0, 0), (1, 0), (0, 1), (1, 1))
# local vertex order matches RectMesh cells: CCW from lower-left
_CORNERS = ((0, 0), (1, 0), (1, 1), (0, 1))
_SQ2 = np.sqrt(2.0)


class RectBFSSpace:
    """Bogner-Fox-Schmit C^1 bicubics on a uniform rectangle mesh; m = 2."""

    m = 2
    degree = 3
    quad_order = 4        # 4x4 Gauss: exact through degree 7 = 2*degree + 1

    def __init__(self, mesh: RectMesh, n_components: int = 1):
        self.mesh = mesh
        self.N = n_components
        self.mis = multiindices(2)
        self.n_mi = len(self.mis)          # 3
        self.C = self.N * self.n_mi
        self.n_scalar = 4 * mesh.n_vertices
        self.n_dofs = self.N * self.n_scalar
        self._basis = None

    def _local_arrays(self, ref_pts, order):
        """Scalar local derivative arrays at reference points in [0,1]^2.

        Returns (npts, 16, n_mi(order)) in weighted multiindex order.
        """
        h = self.mesh.pitch
        xi, eta = ref_pts[..., 0], ref_pts[..., 1]
        Hx = [_hermite_1d(xi, k) for k in range(order + 1)]   # (..., 4)
        Hy = [_hermite_1d(eta, k) for k in range(order + 1)]
        mis = multiindices(order)
        out = np.zeros(ref_pts.shape[:-1] + (16, len(mis)))
        # 1-D hermite index for (corner coordinate c, slot derivative s)
        def h1(c, s):
            return 2 * c + s
        for vloc, (cx, cy) in enumerate(_CORNERS):
            for sloc, (sx, sy) in enumerate(_SLOTS):
                scale0 = h ** (sx + sy)
                for imi, (a, b) in enumerate(mis):
                    w = multiindex_weight((a, b))
                    val = (
                        Hx[a][..., h1(cx, sx)]
                        * Hy[b][..., h1(cy, sy)]
                        * scale0
                        / h ** (a + b)
                    )
                    out[..., vloc * 4 + sloc, imi] = w * val
        return out

    def cell_dofs(self):
        """(nc, 16N) global dofs, component-major then vertex-major."""
        quads = self.mesh.cells                              # (nc, 4)
        base = (quads[:, :, None] * 4 + np.arange(4)[None, None, :]).reshape(
            len(quads), 16
        )
        return np.concatenate(
            [k * self.n_scalar + base for k in range(self.N)], axis=1
        )

    def basis_arrays(self):
        """(B, pts, wts) with B (nc, nq, 16N, 3N): weighted Hessian arrays."""
        if self._basis is None:
            pts, wts = self.mesh.quadrature(self.quad_order)
            corner = self.mesh.vertices[self.mesh.cells[:, 0]]
            ref = (pts - corner[:, None, :]) / self.mesh.pitch
            B1 = self._local_arrays(ref[0], 2)               # identical cells
            B1 = np.broadcast_to(B1[None], (self.mesh.n_cells,) + B1.shape)
            B = _component_blocks(self.N, 16, 3, B1)
            self._basis = (B, pts, wts)
        return self._basis

    def boundary_dofs(self):
        vb = self.mesh.boundary_vertex_ids()
        scalar = (vb[:, None] * 4 + np.arange(4)[None, :]).reshape(-1)
        return np.concatenate([k * self.n_scalar + scalar for k in range(self.N)])

    def interior_dofs(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.boundary_dofs()] = False
        return np.nonzero(mask)[0]

    def kernel_dof_basis(self):
        """Degree <= 1 polynomials per component: (ndofs, 3N)."""
        v = self.mesh.vertices
        polys = []
        for coeff in ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)):
            a, b, c = coeff                                  # a + b x + c y
            dofs = np.zeros(self.n_scalar)
            dofs[0::4] = a + b * v[:, 0] + c * v[:, 1]
            dofs[1::4] = b
            dofs[2::4] = c
            polys.append(dofs)
        K = np.zeros((self.n_dofs, 3 * self.N))
        for k in range(self.N):
            for j, p in enumerate(polys):
                K[k * self.n_scalar : (k + 1) * self.n_scalar, 3 * k + j] = p
        return K

    def derivative_sampler(self, points, order):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if not 0 <= order <= 2:
            raise ValueError("BFS sampler supports derivative orders 0..2")
        cells = self.mesh.locate(pts)
        if (cells < 0).any():
            bad = pts[cells < 0][0]
            raise ValueError(f"point {bad} is outside the mesh")
        corner = self.mesh.vertices[self.mesh.cells[cells, 0]]
        ref = (pts - corner) / self.mesh.pitch
        loc = self._local_arrays(ref, order)                 # (n, 16, Cor)
        Cor = loc.shape[-1]
        dmap = self.cell_dofs()[cells]                       # (n, 16N)
        n = len(pts)
        rows, cols, vals = [], [], []
        for k in range(self.N):
            for l in range(16):
                for a in range(Cor):
                    rows.append(np.arange(n) * (self.N * Cor) + k * Cor + a)
                    cols.append(dmap[:, k * 16 + l])
                    vals.append(loc[:, l, a])
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n * self.N * Cor, self.n_dofs),
        )

    def interpolate(self, fn, fx, fy, fxy):
        """Nodal BFS interpolation from value and derivative callables."""
        v = self.mesh.vertices
        out = np.zeros(self.n_dofs, dtype=complex)
        for k in range(self.N):
            comp = lambda g: np.asarray(g(v), dtype=complex).reshape(len(v), -1)[:, k]
            blk = out[k * self.n_scalar : (k + 1) * self.n_scalar]
            blk[0::4] = comp(fn)
            blk[1::4] = comp(fx)
            blk[2::4] = comp(fy)
            blk[3::4] = comp(fxy)
        return out

    def moments(self, dofs):
        """Means of (u, u_x, u_y) per component over the domain, (N, 3)."""
        pts, wts = self.mesh.quadrature(self.quad_order)
        flat = pts.reshape(-1, 2)
        w = wts.reshape(-1)
        out = np.empty((self.N, 3), dtype=complex)
        v0 = (self.derivative_sampler(flat, 0) @ dofs).reshape(-1, self.N)
        v1 = (self.derivative_sampler(flat, 1) @ dofs).reshape(-1, self.N, 2)
        for k in range(self.N):
            out[k, 0] = np.sum(w * v0[:, k])
            out[k, 1] = np.sum(w * v1[:, k, 0])
            out[k, 2] = np.sum(w * v1[:, k, 1])
        return out

    def remove_kernel(self, dofs):
        """Subtract a + b x + c y per component so all moments vanish."""
        pts, wts = self.mesh.quadrature(self.quad_order)
        w = wts.reshape(-1)
        flat = pts.reshape(-1, 2)
        area = float(w.sum())
        ix = float(np.sum(w * flat[:, 0]))
        iy = float(np.sum(w * flat[:, 1]))
        mom = self.moments(dofs)
        out = dofs.astype(complex).copy()
        v = self.mesh.vertices
        record = {}
        for k in range(self.N):
            b = mom[k, 1] / area
            c = mom[k, 2] / area
            a = (mom[k, 0] - b * ix - c * iy) / area
            blk = out[k * self.n_scalar : (k + 1) * self.n_scalar]
            blk[0::4] -= a + b * v[:, 0] + c * v[:, 1]
            blk[1::4] -= b
            blk[2::4] -= c
            record[k] = (a, b, c)
        return out, {"poly": record}
