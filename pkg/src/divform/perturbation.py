"""Operator perturbation by Neumann-type series, and duality experiments.

Given a coercive reference tensor A and a nearby tensor B with
eps = sup_x |A(x) - B(x)| small, the B-problem is solved constructively:

    u_0 solves the A-problem with the original data,
    u_{j+1} solves the A-problem with data (A - B) grad^m u_j,
    u = sum_j u_j.

The series contracts at rate C0 * eps, where C0 is the (p, s)-operator
norm of the A-solver; the guard uses a randomized probe C0_hat (a lower
bound), so a non-decay diagnostic backs it up.  Dirichlet terms keep zero
trace exactly; Neumann terms are re-gauged every step so kernel drift
cannot accumulate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    DirichletSolver,
    GradientArray,
    NeumannSolver,
    extract_neumann_data,
    gradient_array_of,
    newton_potential,
    residual,
)
from .coefficients import CoefficientTensor, sup_distance
from .fespace import FESolution
from .norms import (
    CallableField,
    NormParams,
    operator_norm_probe,
    random_cube_field,
    whitney_norm,
)


class PerturbationRefusedError(ValueError):
    """The contraction guard C0_hat * eps < 1 failed."""

    def __init__(self, c0_hat, eps):
        self.c0_hat = c0_hat
        self.eps = eps
        super().__init__(
            f"refusing the series: C0_hat*eps = {c0_hat * eps:.4g} >= 1 "
            f"(C0_hat={c0_hat:.4g}, eps={eps:.4g})"
        )


class PerturbationDivergenceError(RuntimeError):
    """Successive term norms failed to decay for several steps."""

    def __init__(self, trace):
        self.trace = trace
        tail = ", ".join(f"{r:.3f}" for r in trace.ratios[-5:])
        super().__init__(
            f"series shows no decay after {trace.terms_used} terms "
            f"(last ratios {tail})"
        )


@dataclass
class PerturbationTrace:
    term_norms: list
    ratios: list
    epsilon: float
    C0_hat: float
    C2_predicted: float
    converged: bool
    terms_used: int
    params: NormParams
    C2_observed: float = None
    residual_B: float = None


def predicted_c2(c0_hat: float, eps: float, params: NormParams) -> float:
    """Series bound: C0/(1-C0 eps) for p >= 1, the p-th-power form below."""
    if c0_hat * eps >= 1.0:
        return math.inf
    if params.p >= 1.0:
        return c0_hat / (1.0 - c0_hat * eps)
    p = params.p
    return (c0_hat**p / (1.0 - (c0_hat * eps) ** p)) ** (1.0 / p)


def _grad_field(u: FESolution):
    return CallableField(lambda pts: u.eval(pts, order=u.space.m), u.space.C)


def perturb_solve(
    A: CoefficientTensor,
    B: CoefficientTensor,
    H,
    space,
    grid,
    params: NormParams,
    kind: str = "dirichlet",
    tol: float = 1e-8,
    max_terms: int = 200,
    c0_hat: float = None,
    probe_trials: int = 16,
    seed: int = 0,
    raise_on_divergence: bool = True,
    solver=None,
):
    """Solve the B-problem through the A-series; returns (u, trace).

    H is a field (anything with .eval) or a GradientArray on the space
    quadrature.  The A-solver factorization is built once and shared by
    every term.  Terms stop at relative Whitney-norm tol or max_terms.
    """
    if solver is None:
        solver = (
            DirichletSolver(space, A) if kind == "dirichlet" else NeumannSolver(space, A)
        )
    pts, wts = space.mesh.quadrature(space.quad_order)
    cells = np.broadcast_to(
        np.arange(len(wts))[:, None], wts.shape
    )
    eps = sup_distance(A, B, pts, cells)

    if c0_hat is None:
        probe = operator_norm_probe(
            lambda f: solver.solve(GradientArray.from_field(space, f)),
            space,
            grid,
            params,
            trials=probe_trials,
            seed=seed,
        )
        c0_hat = probe.c0_hat
    if c0_hat * eps >= 1.0:
        raise PerturbationRefusedError(c0_hat, eps)

    Hga = H if isinstance(H, GradientArray) else GradientArray.from_field(space, H)
    D = A - B

    u_j = solver.solve(Hga)
    acc = u_j.dofs.copy()
    term_norms = [whitney_norm(_grad_field(u_j), grid, params).value]
    ratios = []
    # eps = 0 terminates the series at its first term
    converged = term_norms[0] == 0.0 or eps == 0.0
    n_bad = 0
    j = 0
    while not converged and j < max_terms:
        data = gradient_array_of(u_j).apply_tensor(D)
        u_j = solver.solve(data)
        acc += u_j.dofs
        term_norms.append(whitney_norm(_grad_field(u_j), grid, params).value)
        ratios.append(
            term_norms[-1] / term_norms[-2] if term_norms[-2] > 0 else 0.0
        )
        j += 1
        if term_norms[-1] <= tol * term_norms[0]:
            converged = True
            break
        n_bad = n_bad + 1 if ratios[-1] >= 1.0 else 0
        if n_bad >= 5:
            trace = PerturbationTrace(
                term_norms, ratios, eps, c0_hat,
                predicted_c2(c0_hat, eps, params), False, j + 1, params,
            )
            if raise_on_divergence:
                raise PerturbationDivergenceError(trace)
            u = FESolution(space, acc, kind=kind)
            return u, trace

    u = FESolution(space, acc, kind=kind)
    if kind == "neumann":
        dofs, gauge = space.remove_kernel(u.dofs)
        u = FESolution(space, dofs, kind=kind, gauge=gauge)
    trace = PerturbationTrace(
        term_norms, ratios, eps, c0_hat,
        predicted_c2(c0_hat, eps, params), converged, len(term_norms), params,
    )
    trace.residual_B = residual(B, u, Hga, kind=kind)
    return u, trace


@dataclass
class C2Report:
    c2_observed: float
    c2_predicted: float
    slack: float
    passed: bool
    h_norm: float
    u_norm: float


def verify_c2_bound(
    trace: PerturbationTrace, u: FESolution, H, grid, slack: float = 0.05
) -> C2Report:
    """Check ||grad^m u||_{p,s} <= C2_predicted (1 + slack) ||H||_{p,s}."""
    params = trace.params
    h_norm = whitney_norm(H, grid, params).value
    u_norm = whitney_norm(_grad_field(u), grid, params).value
    c2_obs = u_norm / h_norm if h_norm > 0 else 0.0
    trace.C2_observed = c2_obs
    passed = c2_obs <= trace.C2_predicted * (1.0 + slack)
    return C2Report(c2_obs, trace.C2_predicted, slack, passed, h_norm, u_norm)


# ---------------------------------------------------------------------------
# reductions between inhomogeneous and homogeneous boundary data
# ---------------------------------------------------------------------------

def reduce_to_homogeneous_boundary(
    A: CoefficientTensor,
    H,
    space,
    F: FESolution = None,
    g=None,
    kind: str = "dirichlet",
    solver=None,
):
    """Split off the boundary data: u = v + F with v a zero-trace solve.

    Dirichlet: v solves the zero-trace problem with data Phi = H - A grad^m F,
    so u = v + F attains F's trace dofs bit-exactly.  Neumann: the data
    functional g rides along with H in one natural solve (Phi = H "+" g).
    """
    Hga = (
        H
        if isinstance(H, GradientArray) or H is None
        else GradientArray.from_field(space, H)
    )
    if kind == "dirichlet":
        if F is None:
            F = FESolution(space, np.zeros(space.n_dofs, dtype=complex), kind="generic")
        if solver is None:
            solver = DirichletSolver(space, A)
        shift = gradient_array_of(F).apply_tensor(A)
        Phi = Hga - shift if Hga is not None else (-1.0) * shift
        v = solver.solve(Phi)
        u = FESolution(space, v.dofs + F.dofs, kind="dirichlet")
        bd = space.boundary_dofs()
        if not np.array_equal(u.dofs[bd], F.dofs[bd]):
            raise AssertionError("boundary dofs drifted during the reduction")
        return u, v
    if solver is None:
        solver = NeumannSolver(space, A)
    u = solver.solve(Hga, g=g)
    return u, u


def reduce_via_newton(
    A0: CoefficientTensor,
    H,
    space,
    trace=None,
    g=None,
    kind: str = "dirichlet",
    padding_factor: float = 4.0,
    truncation_warn: float = 0.05,
):
    """Converse reduction: u = Pi H - v with v a homogeneous-data solve.

    The Newton potential w = Pi H carries the inhomogeneity; its boundary
    data (trace for Dirichlet, weak conormal for Neumann) is corrected by
    an A0-harmonic solve so u attains the requested data.  Returns
    (u, info) where info holds the truncation indicator and a warning
    flag when it exceeds truncation_warn.
    """
    Hga = H if isinstance(H, GradientArray) else GradientArray.from_field(space, H)
    res = newton_potential(A0, Hga, space, padding_factor=padding_factor)
    w = res.solution
    info = {
        "truncation_indicator": res.truncation_indicator,
        "truncation_warning": bool(res.truncation_indicator > truncation_warn),
        "padding_factor": padding_factor,
    }
    if kind == "dirichlet":
        trace_target = (
            np.zeros(space.n_dofs, dtype=complex) if trace is None else trace
        )
        # v is A0-harmonic with trace (Tr w - f); u = w - v has trace f
        corr = np.zeros(space.n_dofs, dtype=complex)
        bd = space.boundary_dofs()
        corr[bd] = w.dofs[bd] - np.asarray(trace_target, dtype=complex)[bd]
        v = DirichletSolver(space, A0).solve(None, trace=corr)
        u = FESolution(space, w.dofs - v.dofs, kind="dirichlet")
        return u, info
    gamma = extract_neumann_data(A0, w, Hga)
    g_target = np.zeros(space.n_dofs, dtype=complex) if g is None else g
    v = NeumannSolver(space, A0).solve(None, g=gamma - g_target)
    dofs, gauge = space.remove_kernel(w.dofs - v.dofs)
    u = FESolution(space, dofs, kind="neumann", gauge=gauge)
    return u, info


# ---------------------------------------------------------------------------
# duality experiments
# ---------------------------------------------------------------------------

@dataclass
class DualityReport:
    max_identity_error: float
    trials: int
    c0_hat: float
    c0_star_hat: float
    product_ratio: float          # c0_star_hat / (C1 * c0_hat), C1 = 1
    identity_errors: list = field(repr=False, default=None)


def duality_experiment(
    A: CoefficientTensor,
    space,
    grid,
    params: NormParams,
    trials: int = 32,
    seed: int = 0,
    kind: str = "dirichlet",
    probe_trials: int = 24,
) -> DualityReport:
    """Adjoint pairing identity and conjugate-exponent operator norms.

    For random data pairs (H, Phi): u solves the A-problem with data H, v
    the A*-problem with data Phi; then <H, grad^m v> = <grad^m u, Phi>
    exactly at the Galerkin level (checked to solver roundoff).  Operator
    norms are probed at (p, s) for A and at the conjugate (p', s') for A*.
    """
    Astar = A.adjoint()
    make = DirichletSolver if kind == "dirichlet" else NeumannSolver
    solver = make(space, A)
    solver_star = make(space, Astar)

    errors = []
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        Hf = random_cube_field(grid, space.C, rng)
        Pf = random_cube_field(grid, space.C, rng)
        Hga = GradientArray.from_field(space, Hf)
        Pga = GradientArray.from_field(space, Pf)
        u = solver.solve(Hga)
        v = solver_star.solve(Pga)
        lhs = Hga.inner(gradient_array_of(v))
        rhs = gradient_array_of(u).inner(Pga)
        scale = max(abs(lhs), abs(rhs), 1e-300)
        errors.append(abs(lhs - rhs) / scale)

    probe = operator_norm_probe(
        lambda f: solver.solve(GradientArray.from_field(space, f)),
        space, grid, params, trials=probe_trials, seed=seed,
    )
    dual = params.dual()
    probe_star = operator_norm_probe(
        lambda f: solver_star.solve(GradientArray.from_field(space, f)),
        space, grid, dual, trials=probe_trials, seed=seed + 1,
    )
    ratio = probe_star.c0_hat / probe.c0_hat if probe.c0_hat > 0 else math.inf
    return DualityReport(
        max_identity_error=float(max(errors)),
        trials=trials,
        c0_hat=probe.c0_hat,
        c0_star_hat=probe_star.c0_hat,
        product_ratio=ratio,
        identity_errors=errors,
    )
