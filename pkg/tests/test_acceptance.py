"""Acceptance gate: one criterion per test, one PASS/FAIL line per criterion.

Run `pytest -s tests/test_acceptance.py` to see the lines as they are
produced (pytest captures stdout otherwise).  Every line carries the
measured value next to its threshold, so a transcript of this file is a
self-contained summary of the numerical evidence.
"""

import math
import time

import numpy as np
import pytest

from divform.assembly import (
    DirichletSolver,
    GradientArray,
    caccioppoli_ratio,
    gradient_array_of,
    solve_dirichlet,
)
from divform.cli import main
from divform.coefficients import laplacian_tensor, random_unit_perturbation
from divform.experiments import run_experiment
from divform.fespace import TriP1Space
from divform.geometry import build_mesh, unit_square, whitney_decompose
from divform.norms import (
    CallableField,
    NormParams,
    operator_norm_probe,
    random_cube_field,
)
from divform.perturbation import perturb_solve, predicted_c2, verify_c2_bound


def _criterion(num: int, label: str, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'} criterion {num:>2} [{label}]: {detail}"
    print(line)
    assert ok, line


def _by_name(rows):
    return {r.name: r for r in rows}


# -- shared fixtures (each experiment runs once for the whole gate) -----------

@pytest.fixture(scope="module")
def series_setup():
    dom = unit_square()
    space = TriP1Space(build_mesh(dom, 1.0 / 32.0))
    grid = whitney_decompose(dom, 5)
    A = laplacian_tensor()
    R = random_unit_perturbation(1, 1, space.mesh.n_cells, np.random.default_rng(0))
    P = NormParams(p=2.0, s=0.5)
    solver = DirichletSolver(space, A)
    probe = operator_norm_probe(
        lambda f: solver.solve(GradientArray.from_field(space, f)),
        space, grid, P, trials=16, seed=0,
    )
    H = random_cube_field(grid, space.C, np.random.default_rng(1))
    return space, grid, A, R, P, probe.c0_hat, H


@pytest.fixture(scope="module")
def sweep_result():
    return run_experiment("perturb-sweep", {})


@pytest.fixture(scope="module")
def duality_rows():
    return _by_name(run_experiment("duality", {})[0])


@pytest.fixture(scope="module")
def norm_rows():
    return _by_name(run_experiment("norms", {})[0])


@pytest.fixture(scope="module")
def garding_rows():
    return run_experiment("garding", {})[0]


@pytest.fixture(scope="module")
def newton_rows():
    return run_experiment("newton", {})[0]


@pytest.fixture(scope="module")
def poincare_rows():
    return run_experiment("poincare", {})[0]


# -- criteria -------------------------------------------------------------------

def test_criterion_01_series_decay(series_setup):
    space, grid, A, R, P, c0_hat, H = series_setup
    t0 = time.perf_counter()
    eps = 0.05
    u, trace = perturb_solve(A, A + eps * R, H, space, grid, P,
                             tol=1e-9, c0_hat=c0_hat)
    direct = DirichletSolver(space, A + eps * R).solve(
        GradientArray.from_field(space, H))
    rel = ((gradient_array_of(u) - gradient_array_of(direct)).norm_l2()
           / gradient_array_of(direct).norm_l2())
    runtime = time.perf_counter() - t0
    cap = c0_hat * eps * 1.05
    worst = max(trace.ratios)
    ok = (trace.converged and worst <= cap and rel <= 1e-6 and runtime < 30.0)
    _criterion(1, "series decay", ok,
               f"max ratio {worst:.4f} <= {cap:.4f}, series vs direct "
               f"{rel:.3g} <= 1e-06, runtime {runtime:.1f}s < 30s")


def test_criterion_02_solvability_bound(series_setup):
    space, grid, A, R, P, c0_hat, H = series_setup
    worst = 0.0
    for eps in (0.01, 0.02, 0.05, 0.1):
        u, trace = perturb_solve(A, A + eps * R, H, space, grid, P, c0_hat=c0_hat)
        rep = verify_c2_bound(trace, u, H, grid, slack=0.05)
        worst = max(worst, rep.c2_observed / rep.c2_predicted)
        if not rep.passed:
            _criterion(2, "C2 bound", False,
                       f"eps={eps}: observed {rep.c2_observed:.4f} > "
                       f"predicted {rep.c2_predicted:.4f} x 1.05")

    # p = 1 goes through the p-th-power form of the series bound
    P1 = NormParams(p=1.0, s=0.5)
    solver = DirichletSolver(space, A)
    probe1 = operator_norm_probe(
        lambda f: solver.solve(GradientArray.from_field(space, f)),
        space, grid, P1, trials=16, seed=0,
    )
    assert predicted_c2(probe1.c0_hat, 0.05, P1) == pytest.approx(
        (probe1.c0_hat / (1.0 - probe1.c0_hat * 0.05)), rel=1e-12)
    u1, tr1 = perturb_solve(A, A + 0.05 * R, H, space, grid, P1,
                            c0_hat=probe1.c0_hat)
    rep1 = verify_c2_bound(tr1, u1, H, grid, slack=0.05)
    ok = worst <= 1.05 and rep1.passed
    _criterion(2, "C2 bound", ok,
               f"max observed/predicted {worst:.3f} <= 1.05 over 4 epsilons; "
               f"p=1 branch {rep1.c2_observed:.3f} <= "
               f"{rep1.c2_predicted:.3f} x 1.05")


def test_criterion_03_parameter_neighborhood(sweep_result):
    rows, artifacts, runtime = sweep_result
    n_conv = sum(r.values.get("converged", False) for r in rows)
    ok = all(r.passed for r in rows) and runtime < 300.0
    _criterion(3, "lattice sweep", ok,
               f"{n_conv}/{len(rows)} lattice solves converged "
               f"(5x5 grid, Neumann, eps in {{0, 0.02}}), "
               f"runtime {runtime:.0f}s < 300s")


def test_criterion_04_duality(duality_rows):
    pairing = duality_rows["pairing_identity_dirichlet"]
    holder = duality_rows["holder_constant"]
    neumann = duality_rows["pairing_identity_neumann"]
    ok = pairing.passed and holder.passed and neumann.passed
    _criterion(4, "duality", ok,
               f"pairing identity max err {pairing.values['max_identity_err']:.2e}"
               f" <= 1e-08 over {pairing.params['trials']} trials; Holder "
               f"constant {holder.values['max_ratio']:.12f} <= 1 + 1e-12 "
               f"on {holder.params['pairs']} pairs")


def test_criterion_05_norm_identities(norm_rows):
    l2 = norm_rows["l2_identity_bracket"]
    brackets = [r for n, r in norm_rows.items() if n.startswith("ball_bracket_")]
    quasi = norm_rows["quasi_norm_p_le_1"]
    assert len(brackets) == 9
    drift = max(r.values["drift"] for r in brackets)
    ok = l2.passed and all(r.passed for r in brackets) and quasi.passed
    _criterion(5, "norm identities", ok,
               f"whitney/L2 in [{l2.values['ratio_min']:.3f}, "
               f"{l2.values['ratio_max']:.3f}] (cap [1/8, 8]); ball/cube "
               f"geomean drift {drift:.3f} <= {math.log1p(0.10):.3f} over 9 "
               f"(p,s) pairs; quasi-norm max {quasi.values['max_ratio']:.3f} <= 1")


def test_criterion_06_embedding_and_growth(norm_rows):
    embeds = [r for n, r in norm_rows.items() if n.startswith("embedding_")]
    restr = norm_rows["restriction_growth_slope"]
    indic = norm_rows["indicator_growth_slope"]
    assert len(embeds) == 2
    ok = all(r.passed for r in embeds) and restr.passed and indic.passed
    worst_embed = max(r.values["max_ratio"] for r in embeds)
    _criterion(6, "embedding/growth", ok,
               f"embedding ratios finite (max {worst_embed:.3f}) on "
               f"{embeds[0].params['fields']} fields x 2 pairs; slopes "
               f"{restr.values['slope']:.3f} and {indic.values['slope']:.3f} "
               f"within 0.15 of 1.0")


def test_criterion_07_sequence_holder(norm_rows):
    row = norm_rows["sequence_holder"]
    sharp = norm_rows["sequence_holder_sharpness"]
    ok = row.passed and sharp.passed
    _criterion(7, "sequence Holder", ok,
               f"max interpolation ratio {row.values['max_ratio']:.12f} <= "
               f"1 + 1e-12 on {row.params['fields']} fields; single-cube "
               f"sharpness {sharp.values['ratio']:.9f}")


def test_criterion_08_biharmonic_window(garding_rows):
    named = _by_name(garding_rows)
    window = [r for r in garding_rows if r.name.startswith("a_rho_")
              and "endpoint" not in r.name and "monotone" not in r.name]
    assert len(window) == 9
    rho0 = named["a_rho_+0.000"]
    mono = named["a_rho_monotone_to_zero"]
    conv = named["bfs_dirichlet_convergence"]
    ok = all(r.passed for r in garding_rows)
    _criterion(8, "biharmonic family", ok,
               f"lambda_hat > 0 at 9 rho points (min "
               f"{min(r.values['lambda_hat'] for r in window):.3f}); "
               f"lambda_hat(A_0) = {rho0.values['lambda_hat']:.8f} (1 +- 1e-6); "
               f"monotone to 0 (max rise {mono.values['max_rise']:.1e}); "
               f"BFS rate {conv.values['rate']:.2f} >= 0.9")


def test_criterion_09_newton_potential(newton_rows):
    named = _by_name(newton_rows)
    inv = named["form_inversion_identity"]
    adj = named["adjoint_pairing"]
    unis = [r for r in newton_rows if r.name.startswith("uniformity_")]
    assert len(unis) == 2
    ok = all(r.passed for r in newton_rows)
    worst = max(r.values["worst_over_ref"] for r in unis)
    _criterion(9, "Newton potential", ok,
               f"form inversion dof err {inv.values['dof_rel_err']:.2e} <= 1e-06; "
               f"adjoint pairing {adj.values['max_rel_err']:.2e} <= 1e-08; "
               f"table max/ref {worst:.2f} <= 20 at paddings 4 and 8")


def test_criterion_10_caccioppoli_poincare(poincare_rows):
    named = _by_name(poincare_rows)
    stab = named["refinement_stability"]

    field = CallableField(
        lambda p: np.stack(
            [np.where(p[:, 0] > 0.85, 1.0, 0.0), np.zeros(len(p))], axis=1), 2)
    A = laplacian_tensor()
    cacc = {}
    for h in (1.0 / 16.0, 1.0 / 32.0):
        space = TriP1Space(build_mesh(unit_square(), h))
        sol = solve_dirichlet(A, GradientArray.from_field(space, field), space)
        cacc[h] = caccioppoli_ratio(A, sol, field, center=(0.35, 0.5),
                                    r=0.12, p=1.0)
    cfac = cacc[1.0 / 16.0] / cacc[1.0 / 32.0]
    ok = (all(r.passed for r in poincare_rows)
          and all(np.isfinite(v) for v in cacc.values())
          and 0.5 <= cfac <= 2.0)
    _criterion(10, "Caccioppoli/Poincare", ok,
               f"Caccioppoli ratios {cacc[1.0 / 16.0]:.3f}/{cacc[1.0 / 32.0]:.3f} "
               f"(factor {cfac:.3f} within 2) for a harmonic field; Poincare "
               f"max ratios factor {stab.values['factor']:.3f} within "
               f"{stab.criterion.split('factor ')[1].split(' ')[0]} over 100 functions")


def test_criterion_11_determinism(tmp_path):
    outs = {}
    for tag, threads in (("run_a", 1), ("run_b", 1), ("threads4", 4)):
        out = tmp_path / tag
        code = main(["all", "--seed", "1", "--threads", str(threads),
                     "--out", str(out)])
        assert code == 0, f"{tag}: exit code {code}"
        outs[tag] = {
            f.name: f.read_bytes()
            for f in sorted(out.iterdir()) if f.suffix in (".csv", ".svg")
        }
    names = sorted(outs["run_a"])
    assert len([n for n in names if n.endswith(".csv")]) == 6
    same_run = all(outs["run_a"][n] == outs["run_b"][n] for n in names)
    same_threads = all(outs["run_a"][n] == outs["threads4"][n] for n in names)
    ok = same_run and same_threads
    _criterion(11, "determinism", ok,
               f"{len(names)} artifacts byte-identical across repeated runs "
               f"({same_run}) and across threads 1 vs 4 ({same_threads})")
