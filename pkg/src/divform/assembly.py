"""Assembly and energy solvers for divergence-form systems.

The weak problem is posed against order-m derivative arrays: find u with

    <grad^m phi, A grad^m u>_Omega = <grad^m phi, H>_Omega  (+ boundary term)

for all test functions phi in the discrete space.  Data H is itself a
derivative array sampled at the mesh quadrature (:class:`GradientArray`).
Dirichlet problems constrain the boundary trace dofs; Neumann problems
solve the full system with the polynomial kernel pinned through a
bordered saddle system and report incompatible data (nonzero pairing
against the kernel) instead of silently projecting it away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficients import CoefficientTensor
from .fespace import FESolution, RectBFSSpace, TriP1Space
from .geometry import PolygonalDomain, RectMesh, TriMesh


class IncompatibleDataError(ValueError):
    """Neumann data pairs nontrivially with the polynomial kernel."""

    def __init__(self, violation, scale):
        self.violation = violation
        self.scale = scale
        super().__init__(
            f"Neumann data violates the kernel compatibility: pairing {violation:.3e} "
            f"against data of size {scale:.3e}"
        )


# ---------------------------------------------------------------------------
# derivative arrays at quadrature points
# ---------------------------------------------------------------------------

@dataclass
class GradientArray:
    """Order-m derivative array sampled on mesh quadrature points.

    values: (ncells, nq, C) complex, C = N * #multiindices(m), weighted
    multiindex convention.  points/weights are the owning quadrature.
    """

    values: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    m: int
    N: int

    @classmethod
    def from_field(cls, space, field_or_fn):
        pts, wts = space.mesh.quadrature(space.quad_order)
        fn = field_or_fn.eval if hasattr(field_or_fn, "eval") else field_or_fn
        vals = np.asarray(fn(pts.reshape(-1, 2)), dtype=complex)
        vals = vals.reshape(pts.shape[0], pts.shape[1], -1)
        if vals.shape[2] != space.C:
            raise ValueError(
                f"field has {vals.shape[2]} components, space wants {space.C}"
            )
        return cls(vals, pts, wts, space.m, space.N)

    @classmethod
    def zero(cls, space):
        pts, wts = space.mesh.quadrature(space.quad_order)
        return cls(
            np.zeros(pts.shape[:2] + (space.C,), dtype=complex),
            pts,
            wts,
            space.m,
            space.N,
        )

    @property
    def cells(self):
        nc, nq = self.weights.shape
        return np.broadcast_to(np.arange(nc)[:, None], (nc, nq))

    def inner(self, other) -> complex:
        """<self, other> = sum_k int conj(self_k) other_k (conjugate-linear left)."""
        return complex(
            np.einsum("cq,cqa,cqa->", self.weights, self.values.conj(), other.values)
        )

    def norm_l2(self) -> float:
        return math.sqrt(max(self.inner(self).real, 0.0))

    def apply_tensor(self, T: CoefficientTensor) -> "GradientArray":
        vals = T.apply(self.values, points=self.points, cells=self.cells)
        return GradientArray(vals, self.points, self.weights, self.m, self.N)

    def __add__(self, other):
        return GradientArray(
            self.values + other.values, self.points, self.weights, self.m, self.N
        )

    def __sub__(self, other):
        return GradientArray(
            self.values - other.values, self.points, self.weights, self.m, self.N
        )

    def __rmul__(self, c):
        return GradientArray(c * self.values, self.points, self.weights, self.m, self.N)


def gradient_array_of(sol: FESolution) -> GradientArray:
    """Order-m derivative array of a discrete solution at the mesh quadrature."""
    space = sol.space
    B, pts, wts = space.basis_arrays()
    dmap = space.cell_dofs()
    vals = np.einsum("cqia,ci->cqa", B, sol.dofs[dmap])
    return GradientArray(vals, pts, wts, space.m, space.N)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def assemble_stiffness(space, A: CoefficientTensor) -> sp.csr_matrix:
    """S[i,j] = <grad^m phi_i, A grad^m phi_j> over the mesh quadrature."""
    B, pts, wts = space.basis_arrays()
    nc, nq = wts.shape
    cells = np.broadcast_to(np.arange(nc)[:, None], (nc, nq))
    M = A.sample(pts, cells=cells)
    # basis arrays are real, so no conjugation is needed on the test index
    Sloc = np.einsum("cq,cqia,cqab,cqjb->cij", wts, B, M, B, optimize=True)
    dmap = space.cell_dofs()
    nloc = dmap.shape[1]
    rows = np.repeat(dmap, nloc, axis=1).ravel()
    cols = np.tile(dmap, (1, nloc)).ravel()
    S = sp.coo_matrix(
        (Sloc.ravel(), (rows, cols)), shape=(space.n_dofs, space.n_dofs)
    )
    return S.tocsr()


def assemble_gram(space) -> sp.csr_matrix:
    """Gram matrix of grad^m in L^2 (identity coefficient)."""
    B, pts, wts = space.basis_arrays()
    Sloc = np.einsum("cq,cqia,cqja->cij", wts, B, B, optimize=True)
    dmap = space.cell_dofs()
    nloc = dmap.shape[1]
    rows = np.repeat(dmap, nloc, axis=1).ravel()
    cols = np.tile(dmap, (1, nloc)).ravel()
    G = sp.coo_matrix(
        (Sloc.ravel(), (rows, cols)), shape=(space.n_dofs, space.n_dofs)
    )
    return G.tocsr()


def gram_diagonal(space) -> np.ndarray:
    B, _, wts = space.basis_arrays()
    loc = np.einsum("cq,cqia,cqia->ci", wts, B, B)
    out = np.zeros(space.n_dofs)
    np.add.at(out, space.cell_dofs(), loc)
    return out


def assemble_load(space, H) -> np.ndarray:
    """b[i] = <grad^m phi_i, H> for array data H (GradientArray or field)."""
    if not isinstance(H, GradientArray):
        H = GradientArray.from_field(space, H)
    B, _, wts = space.basis_arrays()
    if H.values.shape[:2] != wts.shape:
        raise ValueError("data array does not match the space quadrature")
    loc = np.einsum("cq,cqia,cqa->ci", wts, B, H.values, optimize=True)
    out = np.zeros(space.n_dofs, dtype=complex)
    np.add.at(out, space.cell_dofs(), loc)
    return out


def boundary_functional(space, g_fn, order: int = 6) -> np.ndarray:
    """Discrete trace functional phi -> <Tr_{m-1} phi, g>_{boundary}.

    g_fn(points, normals) returns the boundary array (npts, N * n_mi(m-1)).
    The result is a full-length dof vector supported on boundary dofs.
    """
    from .geometry import boundary_quadrature

    bq = boundary_quadrature(space.mesh, order)
    T = space.derivative_sampler(bq.points, space.m - 1)
    g = np.asarray(g_fn(bq.points, bq.normals), dtype=complex).reshape(len(bq.points), -1)
    vec = T.T @ (bq.weights[:, None] * g).reshape(-1)
    out = np.zeros(space.n_dofs, dtype=complex)
    bd = space.boundary_dofs()
    out[bd] = vec[bd]
    return out


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

class DirichletSolver:
    """Zero/inhomogeneous-trace energy solver; factorization reused across loads."""

    def __init__(self, space, A: CoefficientTensor):
        self.space = space
        self.A = A
        self.S = assemble_stiffness(space, A)
        self.idx = space.interior_dofs()
        self.bd = space.boundary_dofs()
        SI = self.S[self.idx]
        self._SII = SI[:, self.idx].tocsc()
        self._SIB = SI[:, self.bd].tocsr()
        self._lu = spla.splu(self._SII)

    def solve(self, H=None, trace=None) -> FESolution:
        """Solve with array data H and optional trace dofs (full-length vector)."""
        b = (
            assemble_load(self.space, H)
            if H is not None
            else np.zeros(self.space.n_dofs, dtype=complex)
        )
        u = np.zeros(self.space.n_dofs, dtype=complex)
        if trace is not None:
            u[self.bd] = np.asarray(trace, dtype=complex)[self.bd]
        rhs = b[self.idx] - (self._SIB @ u[self.bd] if trace is not None else 0.0)
        u[self.idx] = self._lu.solve(np.asarray(rhs, dtype=complex))
        return FESolution(self.space, u, kind="dirichlet")


class NeumannSolver:
    """Natural-boundary energy solver with the polynomial kernel pinned.

    Solves the bordered system [[S, K], [K^H, 0]] where K spans the
    degree <= m-1 polynomial kernel; afterwards the solution is re-gauged
    so the means of all derivatives of order < m vanish.  Incompatible
    data (pairing against the kernel beyond compat_tol relative) raises
    :class:`IncompatibleDataError` with the violating value.
    """

    def __init__(self, space, A: CoefficientTensor, compat_tol: float = 1e-8):
        self.space = space
        self.A = A
        self.compat_tol = compat_tol
        self.S = assemble_stiffness(space, A)
        K = np.asarray(space.kernel_dof_basis(), dtype=complex)
        K, _ = np.linalg.qr(K)
        self.K = K
        bord = sp.bmat(
            [[self.S, sp.csc_matrix(K)], [sp.csc_matrix(K.conj().T), None]],
            format="csc",
        )
        self._lu = spla.splu(bord)

    def solve(self, H=None, g=None, check_compatibility: bool = True) -> FESolution:
        b = (
            assemble_load(self.space, H)
            if H is not None
            else np.zeros(self.space.n_dofs, dtype=complex)
        )
        if g is not None:
            gv = np.zeros(self.space.n_dofs, dtype=complex)
            bd = self.space.boundary_dofs()
            gv[bd] = np.asarray(g, dtype=complex)[bd]
            b = b + gv
        scale = float(np.linalg.norm(b))
        if check_compatibility and scale > 0.0:
            viol = float(np.linalg.norm(self.K.conj().T @ b))
            if viol > self.compat_tol * scale:
                raise IncompatibleDataError(viol, scale)
        rhs = np.concatenate([b, np.zeros(self.K.shape[1], dtype=complex)])
        x = self._lu.solve(rhs)
        dofs, gauge = self.space.remove_kernel(x[: self.space.n_dofs])
        return FESolution(self.space, dofs, kind="neumann", gauge=gauge)


def solve_dirichlet(A, H, space, trace=None) -> FESolution:
    return DirichletSolver(space, A).solve(H, trace=trace)


def solve_neumann(A, H, space, g=None, check_compatibility=True) -> FESolution:
    return NeumannSolver(space, A).solve(H, g=g, check_compatibility=check_compatibility)


def extract_neumann_data(A, sol: FESolution, H=None, S=None) -> np.ndarray:
    """Weak conormal data of (sol, H): phi -> <grad^m phi, A grad^m sol - H>.

    Returned as a full-length dof vector supported on the boundary trace
    dofs (the functional is well defined there because Galerkin residuals
    vanish against interior test functions).
    """
    space = sol.space
    if S is None:
        S = assemble_stiffness(space, A)
    r = S @ sol.dofs
    if H is not None:
        r = r - assemble_load(space, H)
    out = np.zeros(space.n_dofs, dtype=complex)
    bd = space.boundary_dofs()
    out[bd] = r[bd]
    return out


def residual(A, sol: FESolution, H=None, kind=None, S=None) -> float:
    """Scaled Galerkin residual: max_i |<grad^m phi_i, A grad^m u - H>| /
    (||grad^m phi_i|| (||A grad^m u|| + ||H||)).

    Dirichlet solutions are tested against interior basis functions only.
    """
    space = sol.space
    kind = kind or sol.kind
    if S is None:
        S = assemble_stiffness(space, A)
    if H is not None and not isinstance(H, GradientArray):
        H = GradientArray.from_field(space, H)
    b = assemble_load(space, H) if H is not None else 0.0
    r = S @ sol.dofs - b
    G = gradient_array_of(sol).apply_tensor(A)
    scale = G.norm_l2() + (H.norm_l2() if H is not None else 0.0)
    if scale == 0.0:
        return float(np.max(np.abs(r)))
    gd = np.sqrt(np.maximum(gram_diagonal(space), 1e-300))
    rows = space.interior_dofs() if kind == "dirichlet" else np.arange(space.n_dofs)
    return float(np.max(np.abs(r[rows]) / (gd[rows] * scale)))


# ---------------------------------------------------------------------------
# Newton potential on a padded lattice box
# ---------------------------------------------------------------------------

def _lattice_pitch(mesh) -> float:
    if isinstance(mesh, RectMesh):
        return mesh.pitch
    # uniform grid triangulations have cell area pitch^2 / 2
    areas = mesh.areas
    pitch = math.sqrt(2.0 * float(np.median(areas)))
    lo, _ = mesh.domain.bounding_box
    rel = (mesh.vertices - lo[None, :]) / pitch
    if not np.allclose(rel, np.round(rel), atol=1e-8):
        raise ValueError(
            "Newton potentials need a lattice-aligned mesh "
            "(uniform grid; build_mesh of an axis-aligned square produces one)"
        )
    return pitch


def _lattice_rectmesh(domain: PolygonalDomain, origin, nx, ny, pitch) -> RectMesh:
    """Full rectangle mesh on an explicit lattice (every cell present)."""
    xs = origin[0] + pitch * np.arange(nx + 1)
    ys = origin[1] + pitch * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    cells, cij = [], []
    for i in range(nx):
        for j in range(ny):
            cells.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
            cij.append((i, j))
    return RectMesh(
        domain=domain,
        origin=np.asarray(origin, dtype=float),
        pitch=pitch,
        vertices=verts,
        cells=np.array(cells, dtype=np.int64),
        cell_ij=np.array(cij, dtype=np.int64),
    )


def _lattice_trimesh(domain: PolygonalDomain, origin, nx, ny, pitch, diagonal="ne") -> TriMesh:
    """Uniform grid triangulation; each cell is split along the given diagonal."""
    xs = origin[0] + pitch * np.arange(nx + 1)
    ys = origin[1] + pitch * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            if diagonal == "ne":
                tris.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
                tris.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))
            else:
                tris.append((vid(i, j), vid(i + 1, j), vid(i, j + 1)))
                tris.append((vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
    return TriMesh(domain, verts, np.array(tris, dtype=np.int64))


def _tri_lattice_diagonal(mesh: TriMesh, origin, pitch) -> str:
    """Which cell diagonal a lattice triangulation uses ('ne' or 'se').

    Half-cell centroids sit at thirds of the lattice: (2/3, 1/3)-type
    fractional parts for north-east diagonals, (1/3, 1/3)-type for
    south-east ones.
    """
    c = mesh.cell_vertices[0].mean(axis=0)
    k = np.round(3.0 * (c - origin) / pitch).astype(np.int64) % 3
    key = (int(k[0]), int(k[1]))
    if key in ((2, 1), (1, 2)):
        return "ne"
    if key in ((1, 1), (2, 2)):
        return "se"
    raise ValueError("mesh triangles are not half-cells of the lattice")


@dataclass
class NewtonResult:
    solution: FESolution
    truncation_indicator: float
    padding_factor: float
    box_dofs: int
    box_solution: FESolution = field(repr=False, default=None)


def newton_potential(
    A0: CoefficientTensor,
    H: GradientArray,
    space,
    padding_factor: float = 4.0,
    truncation_check: bool = True,
) -> NewtonResult:
    """Whole-space solve against data supported in the domain, restricted back.

    The constant-coefficient problem is solved with zero trace on a box of
    side padding_factor * diam(domain), meshed by extending the domain
    lattice, so domain dofs embed exactly into box dofs.  The truncation
    indicator is the relative gradient change when the padding doubles.
    """
    if not A0.is_constant:
        raise ValueError("Newton potentials are defined for constant tensors only")
    sol = _newton_once(A0, H, space, padding_factor)
    indicator = float("nan")
    if truncation_check:
        sol2 = _newton_once(A0, H, space, 2.0 * padding_factor)
        d = sol2.solution.gradient_array() - sol.solution.gradient_array()
        ref = sol.solution.gradient_array().norm_l2()
        indicator = d.norm_l2() / max(ref, 1e-300)
    return NewtonResult(
        solution=sol.solution,
        truncation_indicator=indicator,
        padding_factor=padding_factor,
        box_dofs=sol.box_dofs,
        box_solution=sol.box_solution,
    )


def _newton_once(A0, H, space, padding_factor):
    mesh = space.mesh
    domain = mesh.domain
    pitch = _lattice_pitch(mesh)
    lo, hi = domain.bounding_box
    extent = hi - lo
    target = padding_factor * domain.diameter
    pad = [max(1, math.ceil((target - extent[k]) / 2.0 / pitch)) for k in (0, 1)]
    origin = lo - np.array([pad[0] * pitch, pad[1] * pitch])
    nx = int(round(extent[0] / pitch)) + 2 * pad[0]
    ny = int(round(extent[1] / pitch)) + 2 * pad[1]
    box = PolygonalDomain(
        np.array(
            [
                origin,
                origin + (nx * pitch, 0.0),
                origin + (nx * pitch, ny * pitch),
                origin + (0.0, ny * pitch),
            ]
        )
    )
    if isinstance(mesh, RectMesh):
        box_mesh = _lattice_rectmesh(box, origin, nx, ny, pitch)
        box_space = RectBFSSpace(box_mesh, space.N)
        slots = 4
    else:
        diag = _tri_lattice_diagonal(mesh, origin, pitch)
        box_mesh = _lattice_trimesh(box, origin, nx, ny, pitch, diagonal=diag)
        box_space = TriP1Space(box_mesh, space.N)
        slots = 1

    def lattice_key(points, mult):
        rel = (np.atleast_2d(points) - origin[None, :]) * (mult / pitch)
        return np.round(rel).astype(np.int64)

    # vertex and cell correspondences through the lattice
    box_vid = {tuple(k): i for i, k in enumerate(lattice_key(box_mesh.vertices, 1))}
    vmap = np.empty(mesh.n_vertices, dtype=np.int64)
    for i, k in enumerate(lattice_key(mesh.vertices, 1)):
        try:
            vmap[i] = box_vid[tuple(k)]
        except KeyError:
            raise ValueError("domain mesh does not embed into the box lattice") from None

    if isinstance(mesh, RectMesh):
        # cell centers sit at half-integers: key on 2x lattice coordinates
        centers = mesh.vertices[mesh.cells[:, 0]] + 0.5 * pitch
        box_centers = box_mesh.vertices[box_mesh.cells[:, 0]] + 0.5 * pitch
        mult = 2
    else:
        # triangle centroids sit at thirds: key on 3x lattice coordinates
        centers = mesh.cell_vertices.mean(axis=1)
        box_centers = box_mesh.cell_vertices.mean(axis=1)
        mult = 3
    ckey = {tuple(k): c for c, k in enumerate(lattice_key(box_centers, mult))}
    cmap = np.empty(mesh.n_cells, dtype=np.int64)
    for c, k in enumerate(lattice_key(centers, mult)):
        try:
            cmap[c] = ckey[tuple(k)]
        except KeyError:
            raise ValueError(
                "mesh cells do not align with the box lattice; Newton potentials "
                "need a uniform grid mesh"
            ) from None

    # extend data by zero and solve with zero trace on the box
    Hbox = GradientArray.zero(box_space)
    Hbox.values[cmap] = H.values
    u_box = DirichletSolver(box_space, A0).solve(Hbox)

    # restrict to the domain dofs
    n_box_scalar = box_space.n_scalar
    dofs = np.empty(space.n_dofs, dtype=complex)
    for k in range(space.N):
        for s in range(slots):
            dofs[k * space.n_scalar + slots * np.arange(mesh.n_vertices) + s] = u_box.dofs[
                k * n_box_scalar + slots * vmap + s
            ]
    return NewtonResult(
        solution=FESolution(space, dofs, kind="potential"),
        truncation_indicator=float("nan"),
        padding_factor=padding_factor,
        box_dofs=box_space.n_dofs,
        box_solution=u_box,
    )


# ---------------------------------------------------------------------------
# interior Caccioppoli / reverse Holder ratio
# ---------------------------------------------------------------------------

def _disk_rule(n_radial: int = 6, n_angular: int = 16):
    """Quadrature on the unit disk: weights sum to pi."""
    from numpy.polynomial.legendre import leggauss

    r, wr = leggauss(n_radial)
    r = 0.5 * (r + 1.0)
    wr = 0.5 * wr
    th = 2.0 * np.pi * (np.arange(n_angular) + 0.5) / n_angular
    wth = 2.0 * np.pi / n_angular
    R, T = np.meshgrid(r, th, indexing="ij")
    pts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
    wts = (np.outer(wr * r, np.full(n_angular, wth))).ravel()
    return pts, wts


def caccioppoli_ratio(
    A,
    sol: FESolution,
    H,
    center,
    r: float,
    p: float,
    check_harmonic: bool = True,
    harmonic_tol: float = 1e-8,
) -> float:
    """LHS/RHS of the interior weak reverse Holder estimate.

    LHS = (avg_{B_r} |grad^m u|^2)^{1/2},
    RHS = (avg_{B_2r} |grad^m u|^p)^{1/p} + (avg_{B_2r} |H|^2)^{1/2},
    for 0 < p < 2.  H may be None (A-harmonic u) or a callable field.
    """
    if not 0.0 < p < 2.0:
        raise ValueError("the reverse Holder exponent must satisfy 0 < p < 2")
    space = sol.space
    center = np.asarray(center, dtype=float)
    dist = space.mesh.domain.distance_to_boundary(center[None, :])[0]
    if 2.0 * r > dist:
        raise ValueError(f"B(center, 2r) leaves the domain (dist {dist:.3g} < 2r)")
    if check_harmonic:
        _check_local_harmonicity(A, sol, H, center, 2.0 * r, harmonic_tol)
    upts, uwts = _disk_rule()

    def avg(radius, fn, power):
        vals = fn(center[None, :] + radius * upts)
        mag = np.linalg.norm(vals, axis=1)
        return (np.sum(uwts * mag**power) / np.pi) ** (1.0 / power)

    grad = lambda pts: sol.eval(pts, order=space.m)
    lhs = avg(r, grad, 2.0)
    rhs = avg(2.0 * r, grad, p)
    if H is not None:
        fn = H.eval if hasattr(H, "eval") else H
        rhs += avg(2.0 * r, lambda pts: np.asarray(fn(pts)).reshape(len(pts), -1), 2.0)
    return lhs / max(rhs, 1e-300)


def _check_local_harmonicity(A, sol, H, center, radius, tol):
    space = sol.space
    mesh = space.mesh
    h = mesh.h
    vdist = np.linalg.norm(mesh.vertices - center[None, :], axis=1)
    near = vdist <= radius - h
    if not near.any():
        return
    if isinstance(space, TriP1Space):
        scalar_rows = np.nonzero(near)[0]
        per = 1
    else:
        scalar_rows = (np.nonzero(near)[0][:, None] * 4 + np.arange(4)[None, :]).reshape(-1)
        per = 4
    rows = np.concatenate(
        [k * space.n_scalar + scalar_rows for k in range(space.N)]
    )
    S = assemble_stiffness(space, A)
    rvec = S @ sol.dofs
    if H is not None:
        if not isinstance(H, GradientArray):
            H = GradientArray.from_field(space, H)
        rvec = rvec - assemble_load(space, H)
    gd = np.sqrt(np.maximum(gram_diagonal(space), 1e-300))
    scale = gradient_array_of(sol).norm_l2()
    worst = float(np.max(np.abs(rvec[rows]) / (gd[rows] * max(scale, 1e-300))))
    if worst > tol:
        raise ValueError(
            f"solution is not discretely A-harmonic on the ball: residual {worst:.3e}"
        )
