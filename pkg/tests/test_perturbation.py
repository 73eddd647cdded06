import math

import numpy as np
import pytest

from divform.assembly import (
    DirichletSolver,
    GradientArray,
    NeumannSolver,
    gradient_array_of,
    residual,
)
from divform.coefficients import laplacian_tensor, random_unit_perturbation
from divform.fespace import FESolution, TriP1Space
from divform.geometry import build_mesh, unit_square, whitney_decompose
from divform.norms import NormParams, random_cube_field
from divform.perturbation import (
    PerturbationDivergenceError,
    PerturbationRefusedError,
    duality_experiment,
    perturb_solve,
    predicted_c2,
    reduce_to_homogeneous_boundary,
    reduce_via_newton,
    verify_c2_bound,
)

P = NormParams(p=2.0, s=0.5)


@pytest.fixture(scope="module")
def setup():
    dom = unit_square()
    space = TriP1Space(build_mesh(dom, 1.0 / 16.0))
    grid = whitney_decompose(dom, 5)
    return dom, space, grid


def _perturbed_pair(space, eps, seed=0):
    A = laplacian_tensor()
    R = random_unit_perturbation(1, 1, space.mesh.n_cells, np.random.default_rng(seed))
    return A, A + eps * R


# -- the series ---------------------------------------------------------------

def test_series_matches_direct_solve(setup):
    _, space, grid = setup
    A, B = _perturbed_pair(space, 0.05)
    H = random_cube_field(grid, space.C, np.random.default_rng(1))
    u, trace = perturb_solve(A, B, H, space, grid, P, tol=1e-12, probe_trials=4)
    direct = DirichletSolver(space, B).solve(GradientArray.from_field(space, H))
    rel = np.linalg.norm(u.dofs - direct.dofs) / np.linalg.norm(direct.dofs)
    assert trace.converged
    assert rel < 1e-6
    assert trace.residual_B < 1e-6


def test_series_terms_actually_contract(setup):
    _, space, grid = setup
    A, B = _perturbed_pair(space, 0.05)
    H = random_cube_field(grid, space.C, np.random.default_rng(2))
    _, trace = perturb_solve(A, B, H, space, grid, P, probe_trials=4)
    # every measured ratio sits below the guaranteed contraction rate
    assert all(r <= trace.C0_hat * trace.epsilon * 1.05 for r in trace.ratios)
    assert trace.epsilon == pytest.approx(0.05, rel=1e-12)


def test_identical_tensors_terminate_after_one_term(setup):
    _, space, grid = setup
    A = laplacian_tensor()
    H = random_cube_field(grid, space.C, np.random.default_rng(3))
    u, trace = perturb_solve(A, A, H, space, grid, P, probe_trials=4)
    assert trace.converged
    assert trace.terms_used == 1
    assert trace.ratios == []
    assert trace.epsilon == 0.0
    direct = DirichletSolver(space, A).solve(GradientArray.from_field(space, H))
    np.testing.assert_array_equal(u.dofs, direct.dofs)


def test_contraction_guard_refuses(setup):
    _, space, grid = setup
    A, B = _perturbed_pair(space, 0.5)
    H = random_cube_field(grid, space.C, np.random.default_rng(4))
    with pytest.raises(PerturbationRefusedError) as err:
        perturb_solve(A, B, H, space, grid, P, c0_hat=5.0)
    assert err.value.c0_hat == 5.0
    assert err.value.eps == pytest.approx(0.5, rel=1e-12)


def test_divergence_detected_and_reported(setup):
    # B = -A/2 makes each term 1.5x the previous one (the A-solve of
    # (A - B) grad u_j returns 1.5 u_j exactly); the lowballed c0_hat lets
    # the series start, and the non-decay diagnostic has to catch it
    _, space, grid = setup
    A = laplacian_tensor()
    B = (-0.5) * A
    H = random_cube_field(grid, space.C, np.random.default_rng(5))
    with pytest.raises(PerturbationDivergenceError) as err:
        perturb_solve(A, B, H, space, grid, P, c0_hat=0.5)
    trace = err.value.trace
    assert not trace.converged
    assert len(trace.ratios) >= 5
    assert all(r == pytest.approx(1.5, rel=1e-9) for r in trace.ratios[-5:])

    u, trace = perturb_solve(
        A, B, H, space, grid, P, c0_hat=0.5, raise_on_divergence=False
    )
    assert not trace.converged
    assert isinstance(u, FESolution)


def test_neumann_series_matches_direct(setup):
    _, space, grid = setup
    A, B = _perturbed_pair(space, 0.05, seed=6)
    H = random_cube_field(grid, space.C, np.random.default_rng(6))
    u, trace = perturb_solve(
        A, B, H, space, grid, P, kind="neumann", tol=1e-12, probe_trials=4
    )
    direct = NeumannSolver(space, B).solve(GradientArray.from_field(space, H))
    rel = np.linalg.norm(u.dofs - direct.dofs) / np.linalg.norm(direct.dofs)
    assert trace.converged
    assert rel < 1e-6


# -- the solvability bound ------------------------------------------------------

def test_predicted_c2_formulas():
    assert predicted_c2(2.0, 0.1, P) == pytest.approx(2.0 / 0.8)
    low = NormParams(p=0.9, s=0.5)
    c0, eps = 1.5, 0.2
    want = (c0**0.9 / (1.0 - (c0 * eps) ** 0.9)) ** (1.0 / 0.9)
    assert predicted_c2(c0, eps, low) == pytest.approx(want)
    assert predicted_c2(2.0, 0.5, P) == math.inf
    assert predicted_c2(2.0, 0.6, low) == math.inf


def test_verify_c2_bound_on_converged_series(setup):
    _, space, grid = setup
    A, B = _perturbed_pair(space, 0.05, seed=7)
    H = random_cube_field(grid, space.C, np.random.default_rng(7))
    u, trace = perturb_solve(A, B, H, space, grid, P, probe_trials=8)
    report = verify_c2_bound(trace, u, H, grid)
    assert report.h_norm > 0 and report.u_norm > 0
    assert report.c2_observed == trace.C2_observed
    assert report.c2_predicted == trace.C2_predicted
    assert report.passed, (report.c2_observed, report.c2_predicted)


# -- boundary reductions ---------------------------------------------------------

def test_reduction_keeps_boundary_dofs_bit_exact(setup):
    _, space, grid = setup
    A = laplacian_tensor()
    F = FESolution(space, space.interpolate(lambda p: p[:, 0] ** 2 - p[:, 1]))
    H = random_cube_field(grid, space.C, np.random.default_rng(8))
    u, v = reduce_to_homogeneous_boundary(A, H, space, F=F)
    bd = space.boundary_dofs()
    assert np.array_equal(u.dofs[bd], F.dofs[bd])
    assert np.all(v.dofs[bd] == 0.0)
    Hga = GradientArray.from_field(space, H)
    assert residual(A, u, Hga, kind="dirichlet") < 1e-10


def test_reduction_with_matching_data_gives_zero_correction(setup):
    _, space, _ = setup
    A = laplacian_tensor()
    F = FESolution(space, space.interpolate(lambda p: np.sin(p[:, 0]) * p[:, 1]))
    H = gradient_array_of(F).apply_tensor(A)
    u, v = reduce_to_homogeneous_boundary(A, H, space, F=F)
    assert np.linalg.norm(v.dofs) <= 1e-12 * np.linalg.norm(F.dofs)
    np.testing.assert_allclose(u.dofs, F.dofs, atol=1e-12)


def test_newton_route_agrees_with_direct_solve(setup):
    _, space, grid = setup
    A = laplacian_tensor()
    H = random_cube_field(grid, space.C, np.random.default_rng(9))
    u, info = reduce_via_newton(A, H, space)
    assert info["truncation_indicator"] < 0.05
    assert not info["truncation_warning"]
    direct = DirichletSolver(space, A).solve(GradientArray.from_field(space, H))
    rel = np.linalg.norm(u.dofs - direct.dofs) / np.linalg.norm(direct.dofs)
    assert rel < 1e-8


def test_newton_route_hits_requested_trace(setup):
    _, space, grid = setup
    A = laplacian_tensor()
    H = random_cube_field(grid, space.C, np.random.default_rng(10))
    trace = space.interpolate(lambda p: p[:, 0] + 2.0 * p[:, 1])
    u, _ = reduce_via_newton(A, H, space, trace=trace)
    bd = space.boundary_dofs()
    np.testing.assert_allclose(u.dofs[bd], trace[bd], atol=1e-10)


# -- duality ----------------------------------------------------------------------

def test_adjoint_pairing_identity(setup):
    _, space, grid = setup
    A, B = _perturbed_pair(space, 0.25, seed=11)   # B: non-self-adjoint
    rep = duality_experiment(B, space, grid, P, trials=4, probe_trials=4)
    assert rep.max_identity_error <= 1e-8
    assert rep.trials == 4
    assert np.isfinite(rep.product_ratio) and rep.product_ratio > 0
