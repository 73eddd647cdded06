"""Coefficient tensors for divergence-form systems of order 2m.

An operator ``(Lu)_j = sum_{|a|=|b|=m} D^a (A^{jk}_{ab} D^b u_k)`` is
represented pointwise by a complex matrix acting on *derivative arrays*.
A derivative array stacks, for each of the N components, the order-m
partial derivatives indexed by multiindices in the order produced by
:func:`multiindices`.  Each slot carries the combinatorial weight
``sqrt(m!/beta!)`` so that the Euclidean inner product of two arrays
equals the full (multiplicity-counting) derivative pairing; for m = 2 in
the plane the array is ``[u_xx, sqrt(2) u_xy, u_yy]`` and its squared
length is the Frobenius norm of the Hessian.  Coefficient matrices are
stored in these weighted coordinates throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np


def multiindices(m: int, d: int = 2):
    """All length-d multiindices of order m, graded reverse-lexicographic.

    For d = 2: [(m,0), (m-1,1), ..., (0,m)].
    """
    if m < 0 or d < 1:
        raise ValueError("need m >= 0 and d >= 1")
    out = []
    for combo in product(range(m, -1, -1), repeat=d - 1):
        rest = m - sum(combo)
        if rest >= 0:
            out.append(combo + (rest,))
    return out


def multiindex_weight(beta) -> float:
    """sqrt(m!/beta!) -- the array-slot weight for multiindex beta."""
    m = sum(beta)
    w = math.factorial(m)
    for b in beta:
        w /= math.factorial(b)
    return math.sqrt(w)


def array_size(m: int, N: int, d: int = 2) -> int:
    return N * len(multiindices(m, d))


class CoefficientError(ValueError):
    pass


@dataclass
class CoefficientTensor:
    """Pointwise matrix A(x) acting on weighted derivative arrays.

    kind is one of 'constant' (one matrix), 'cellwise' (one matrix per
    mesh cell; sampling requires cell indices) or 'callable' (a function
    of point coordinates).
    """

    m: int
    N: int
    kind: str
    data: object
    d: int = 2

    def __post_init__(self):
        if self.kind not in ("constant", "cellwise", "callable"):
            raise CoefficientError(f"unknown tensor kind {self.kind!r}")
        C = self.size
        if self.kind == "constant":
            mat = np.asarray(self.data, dtype=complex)
            if mat.shape != (C, C):
                raise CoefficientError(
                    f"constant tensor matrix must be {C}x{C}, got {mat.shape}"
                )
            self.data = mat
        elif self.kind == "cellwise":
            mat = np.asarray(self.data, dtype=complex)
            if mat.ndim != 3 or mat.shape[1:] != (C, C):
                raise CoefficientError(
                    f"cellwise tensor needs shape (ncells, {C}, {C}), got {mat.shape}"
                )
            self.data = mat

    @property
    def size(self) -> int:
        return array_size(self.m, self.N, self.d)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def sample(self, points, cells=None):
        """Matrices at sample points: shape points.shape[:-1] + (C, C)."""
        points = np.asarray(points, dtype=float)
        lead = points.shape[:-1]
        C = self.size
        if self.kind == "constant":
            return np.broadcast_to(self.data, lead + (C, C))
        if self.kind == "cellwise":
            if cells is None:
                raise CoefficientError("cellwise tensor needs cell indices to sample")
            return self.data[np.asarray(cells)]
        out = np.asarray(self.data(points.reshape(-1, self.d)), dtype=complex)
        return out.reshape(lead + (C, C))

    def apply(self, values, points=None, cells=None):
        """A(x) @ value array, batched over leading axes."""
        M = self.sample(points if points is not None else np.zeros((1, self.d)), cells)
        return np.einsum("...ab,...b->...a", M, values)

    def adjoint(self) -> "CoefficientTensor":
        """Adjoint tensor: (A*)^{kj}_{ba} = conj(A^{jk}_{ab}), an involution."""
        if self.kind == "constant":
            return CoefficientTensor(self.m, self.N, "constant", self.data.conj().T, self.d)
        if self.kind == "cellwise":
            return CoefficientTensor(
                self.m, self.N, "cellwise", self.data.conj().transpose(0, 2, 1), self.d
            )
        fn = self.data
        return CoefficientTensor(
            self.m,
            self.N,
            "callable",
            lambda pts: np.conj(np.swapaxes(np.asarray(fn(pts)), -1, -2)),
            self.d,
        )

    def __add__(self, other):
        return _combine(self, other, 1.0)

    def __sub__(self, other):
        return _combine(self, other, -1.0)

    def __rmul__(self, c):
        c = complex(c)
        if self.kind in ("constant", "cellwise"):
            return CoefficientTensor(self.m, self.N, self.kind, c * self.data, self.d)
        fn = self.data
        return CoefficientTensor(self.m, self.N, "callable", lambda pts: c * np.asarray(fn(pts)), self.d)

    def sup_operator_norm(self, points, cells=None) -> float:
        """Largest pointwise spectral norm over the sample points."""
        M = self.sample(points, cells)
        M = M.reshape(-1, self.size, self.size)
        return float(np.linalg.svd(M, compute_uv=False)[:, 0].max())


def _combine(a: CoefficientTensor, b: CoefficientTensor, sign: float) -> CoefficientTensor:
    if (a.m, a.N, a.d) != (b.m, b.N, b.d):
        raise CoefficientError("tensor shapes do not match")
    if a.kind == b.kind == "constant":
        return CoefficientTensor(a.m, a.N, "constant", a.data + sign * b.data, a.d)
    if a.kind in ("constant", "cellwise") and b.kind in ("constant", "cellwise"):
        if a.kind == "cellwise" and b.kind == "cellwise" and len(a.data) != len(b.data):
            raise CoefficientError("cellwise tensors live on different meshes")
        da = a.data if a.kind == "cellwise" else a.data[None]
        db = b.data if b.kind == "cellwise" else b.data[None]
        return CoefficientTensor(a.m, a.N, "cellwise", da + sign * db, a.d)

    def fn(pts, a=a, b=b, sign=sign):
        return a.sample(pts) + sign * b.sample(pts)

    if "callable" in (a.kind, b.kind) and "cellwise" in (a.kind, b.kind):
        raise CoefficientError("cannot combine cellwise with callable tensors")
    return CoefficientTensor(a.m, a.N, "callable", fn, a.d)


# ---------------------------------------------------------------------------
# stock tensors
# ---------------------------------------------------------------------------

def identity_tensor(m: int, N: int = 1, d: int = 2) -> CoefficientTensor:
    C = array_size(m, N, d)
    return CoefficientTensor(m, N, "constant", np.eye(C, dtype=complex), d)


def laplacian_tensor() -> CoefficientTensor:
    """Scalar second-order Laplacian: the identity on gradient arrays."""
    return identity_tensor(1, 1)


def biharmonic_rho_tensor(rho: float) -> CoefficientTensor:
    """One-parameter biharmonic family in the plane (m=2, N=1).

    In weighted Hessian coordinates [u_xx, sqrt(2) u_xy, u_yy] the form
    ``rho * conj(Dpsi) Dphi + (1-rho) * Hessian-Frobenius pairing`` is the
    matrix (1-rho) I + rho v v^T with v = (1, 0, 1).  Eigenvalues are
    1 + rho, 1 - rho, 1 - rho: coercive exactly for -1 < rho < 1 (d = 2).
    The family is affine in rho.
    """
    v = np.array([1.0, 0.0, 1.0])
    mat = (1.0 - rho) * np.eye(3) + rho * np.outer(v, v)
    return CoefficientTensor(2, 1, "constant", mat.astype(complex))


def constant_tensor(matrix, m: int, N: int = 1, d: int = 2) -> CoefficientTensor:
    return CoefficientTensor(m, N, "constant", matrix, d)


def cellwise_tensor(matrices, m: int, N: int = 1, d: int = 2) -> CoefficientTensor:
    return CoefficientTensor(m, N, "cellwise", matrices, d)


def rotation_perturbation() -> CoefficientTensor:
    """Constant antisymmetric gradient rotation with unit operator norm (m=1, N=1)."""
    return CoefficientTensor(1, 1, "constant", np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex))


def random_unit_perturbation(m, N, ncells, rng, complex_entries=True, d=2):
    """Cellwise tensor with unit spectral norm in every cell."""
    C = array_size(m, N, d)
    R = rng.standard_normal((ncells, C, C))
    if complex_entries:
        R = R + 1j * rng.standard_normal((ncells, C, C))
    R /= np.linalg.svd(R, compute_uv=False)[:, :1, None]
    return CoefficientTensor(m, N, "cellwise", R, d)


def diag_real_tindep_tensor(mesh, rng, m=1, N=1, lo=1.0, hi=2.0, n_strips=8):
    """Diagonal real coefficients depending on x_1 only (strip-wise constant)."""
    C = array_size(m, N, 2)
    vals = rng.uniform(lo, hi, size=(n_strips, C))
    (xmin, _), (xmax, _) = mesh.domain.bounding_box
    if hasattr(mesh, "cell_vertices"):
        cx = mesh.cell_vertices.mean(axis=1)[:, 0]
    else:
        cx = mesh.vertices[mesh.cells].mean(axis=1)[:, 0]
    strip = np.clip(
        ((cx - xmin) / max(xmax - xmin, 1e-300) * n_strips).astype(int), 0, n_strips - 1
    )
    mats = np.zeros((len(cx), C, C), dtype=complex)
    idx = np.arange(C)
    mats[:, idx, idx] = vals[strip]
    return CoefficientTensor(m, N, "cellwise", mats)


def tensor_from_cell_table(rows, m: int, N: int, ncells: int, d: int = 2) -> CoefficientTensor:
    """Build a cellwise tensor from (cell, j, k, alpha, beta, re, im) records.

    alpha/beta are colon-separated multiindex strings such as "1:1".
    Unlisted entries are zero.
    """
    mis = multiindices(m, d)
    mi_index = {mi: i for i, mi in enumerate(mis)}
    C = N * len(mis)
    mats = np.zeros((ncells, C, C), dtype=complex)
    for r, row in enumerate(rows):
        cell, j, k, alpha, beta, re, im = row
        try:
            a = tuple(int(t) for t in str(alpha).split(":"))
            b = tuple(int(t) for t in str(beta).split(":"))
            ia, ib = mi_index[a], mi_index[b]
        except (KeyError, ValueError) as exc:
            raise CoefficientError(f"bad multiindex in tensor table row {r}: {exc}") from exc
        cell, j, k = int(cell), int(j), int(k)
        if not (0 <= cell < ncells and 0 <= j < N and 0 <= k < N):
            raise CoefficientError(f"tensor table row {r} out of range")
        mats[cell, j * len(mis) + ia, k * len(mis) + ib] = float(re) + 1j * float(im)
    return CoefficientTensor(m, N, "cellwise", mats, d)


def sup_distance(A: CoefficientTensor, B: CoefficientTensor, points, cells=None) -> float:
    """sup over sample points of the spectral norm of (A - B)(x).

    A pseudometric on tensors of matching shape: symmetric, triangle
    inequality, zero iff the sampled matrices coincide.
    """
    if (A.m, A.N, A.d) != (B.m, B.N, B.d):
        raise CoefficientError("tensors act on different array shapes")
    D = A.sample(points, cells) - B.sample(points, cells)
    D = D.reshape(-1, A.size, A.size)
    return float(np.linalg.svd(D, compute_uv=False)[:, 0].max())


# ---------------------------------------------------------------------------
# ellipticity constants
# ---------------------------------------------------------------------------

@dataclass
class EllipticityReport:
    lambda_hat: float
    Lambda_hat: float
    n_dofs: int
    kernel_dim: int
    domain_local: bool
    mesh_h: float

    @property
    def coercive(self) -> bool:
        return self.lambda_hat > 0.0


def estimate_garding_constant(
    A: CoefficientTensor,
    space,
    local: bool = True,
    dense_cutoff: int = 3500,
) -> EllipticityReport:
    """Sharp discrete Garding constant of Re <grad^m phi, A grad^m phi>.

    Solves the generalized eigenproblem for the Hermitian part of the
    stiffness matrix in the grad^m Gram metric.  With ``local=True`` the
    quotient runs over the space on the domain mesh with the polynomial
    kernel (degree <= m-1 per component) deflated; with ``local=False``
    the caller passes a space on a large box containing the domain and
    the quotient runs over the zero-trace subspace (whole-space proxy).
    Also reports Lambda_hat, the sup of pointwise spectral norms.
    """
    import scipy.linalg as sla

    from .assembly import assemble_gram, assemble_stiffness

    S = assemble_stiffness(space, A)
    G = assemble_gram(space)
    if local:
        idx = np.arange(space.n_dofs)
        K = space.kernel_dof_basis()
    else:
        idx = space.interior_dofs()
        K = None
    if len(idx) > dense_cutoff:
        raise CoefficientError(
            f"{len(idx)} dofs exceed the dense eigensolver cutoff {dense_cutoff}; "
            "use a coarser mesh for constant estimation"
        )
    Sd = S.toarray()[np.ix_(idx, idx)]
    Gd = G.toarray()[np.ix_(idx, idx)]
    Ssym = 0.5 * (Sd + Sd.conj().T)
    Gd = 0.5 * (Gd + Gd.conj().T)
    kdim = 0
    if K is not None and K.shape[1] > 0:
        kdim = K.shape[1]
        Z = sla.null_space(K.conj().T)
        Ssym = Z.conj().T @ Ssym @ Z
        Gd = Z.conj().T @ Gd @ Z
    lam = sla.eigh(Ssym, Gd, eigvals_only=True, subset_by_index=[0, 0])[0]
    pts, _ = space.mesh.quadrature(space.quad_order)
    Lam = A.sup_operator_norm(pts, cells=np.arange(space.mesh.n_cells)[:, None])
    return EllipticityReport(
        lambda_hat=float(lam),
        Lambda_hat=float(Lam),
        n_dofs=len(idx),
        kernel_dim=kdim,
        domain_local=local,
        mesh_h=space.mesh.h,
    )
