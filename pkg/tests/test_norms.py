import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from divform.geometry import unit_square, whitney_decompose
from divform.norms import (
    CallableField,
    CubeField,
    NormParamError,
    NormParams,
    SampledField,
    ball_norm,
    besov_boundary_seminorm,
    embedding_admissible,
    embedding_check,
    holder_dual_field,
    indicator_norm_growth,
    interpolated_params,
    l1_restriction_growth,
    l2_norm_covered,
    operator_norm_probe,
    pairing,
    p_min,
    random_cube_field,
    sequence_holder_check,
    single_cube_field,
    whitney_norm,
)

DOM = unit_square()
GRID = whitney_decompose(DOM, 5)


# -- parameter bookkeeping -----------------------------------------------------

def test_p_min_values():
    assert p_min(0.5) == pytest.approx(2.0 / 3.0)
    assert p_min(1.0) == pytest.approx(0.5)


def test_params_validation():
    with pytest.raises(NormParamError):
        NormParams(p=0.5, s=0.5)       # below p_min
    with pytest.raises(NormParamError):
        NormParams(p=2.0, s=1.5)       # s outside (0, 1)
    NormParams(p=math.inf, s=0.25)     # sup form is fine


def test_conjugate_exponents():
    P = NormParams(p=2.0, s=0.5)
    assert P.p_prime == pytest.approx(2.0)
    assert P.s_prime == pytest.approx(0.5)
    Q = NormParams(p=4.0, s=0.6)
    assert Q.p_prime == pytest.approx(4.0 / 3.0)
    assert Q.s_prime == pytest.approx(0.4)
    # below p = 1 the conjugate is the sup form with shifted smoothness
    R = NormParams(p=0.8, s=0.75)
    assert R.p_prime == math.inf
    assert R.s_prime == pytest.approx((1.0 - 0.75) + (1.0 / 0.8 - 1.0))


@given(st.floats(1.01, 8.0), st.floats(0.05, 0.95))
@settings(max_examples=60, deadline=None)
def test_dual_is_an_involution_for_finite_p(p, s):
    P = NormParams(p=p, s=s)
    try:
        D = P.dual()
    except NormParamError:
        assume(False)
    back = D.dual()
    assert back.p == pytest.approx(P.p, rel=1e-12)
    assert back.s == pytest.approx(P.s, rel=1e-12)


# -- norm identities -------------------------------------------------------------

def test_l2_half_whitney_norm_is_l2():
    f = random_cube_field(GRID, 2, np.random.default_rng(0))
    P = NormParams(p=2.0, s=0.5)
    assert whitney_norm(f, GRID, P).value == pytest.approx(
        l2_norm_covered(f, GRID), rel=1e-12)


@given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
@settings(max_examples=40, deadline=None)
def test_norm_homogeneity(re, im):
    c = complex(re, im)
    assume(abs(c) > 1e-6)
    f = random_cube_field(GRID, 1, np.random.default_rng(1))
    P = NormParams(p=1.5, s=0.3)
    n1 = whitney_norm(CubeField(GRID, c * f.values), GRID, P).value
    assert n1 == pytest.approx(abs(c) * whitney_norm(f, GRID, P).value, rel=1e-10)


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 4.0, math.inf])
def test_holder_duality_sharp(p):
    s = 0.5
    P = NormParams(p=p, s=s)
    f = random_cube_field(GRID, 2, np.random.default_rng(3))
    g = holder_dual_field(f, P)
    num = abs(pairing(f, g, GRID))
    # the extremizer saturates ||f|| in the conjugate pair against ||g|| in (p, s)
    den = whitney_norm(f, GRID, P.dual()).value * whitney_norm(g, GRID, P).value
    assert num / den == pytest.approx(1.0, abs=1e-9)


@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_holder_duality_never_exceeds_one(seed):
    rng = np.random.default_rng(seed)
    P = NormParams(p=1.5, s=0.4)
    f = random_cube_field(GRID, 2, rng)
    g = random_cube_field(GRID, 2, rng)
    den = whitney_norm(f, GRID, P).value * whitney_norm(g, GRID, P.dual()).value
    assume(den > 0)
    assert abs(pairing(f, g, GRID)) <= den * (1.0 + 1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_quasi_norm_inequality_below_one(seed):
    rng = np.random.default_rng(seed)
    P = NormParams(p=0.9, s=0.5)
    f = random_cube_field(GRID, 1, rng)
    g = random_cube_field(GRID, 1, rng)
    nf = whitney_norm(f, GRID, P).value
    ng = whitney_norm(g, GRID, P).value
    ns = whitney_norm(f + g, GRID, P).value
    assert ns**P.p <= nf**P.p + ng**P.p + 1e-12 * (nf**P.p + ng**P.p)


def test_sup_norm_uses_exact_supremum():
    vals = np.zeros((len(GRID.corners), 1))
    k = int(np.argmin(GRID.sides))
    vals[k, 0] = 3.0
    P = NormParams(p=math.inf, s=0.25)
    expected = 3.0 * GRID.sides[k] ** (1.0 - 0.25)
    assert whitney_norm(CubeField(GRID, vals), GRID, P).value == pytest.approx(expected)


# -- ball form -------------------------------------------------------------------

def test_ball_norm_constant_field_at_l2_params():
    # for H = 1 at (2, 1/2) the ball form integrates dist^0 over the cover
    f = CallableField(lambda p: np.ones((len(p), 1)), 1)
    samp = SampledField.from_grid(f, GRID, quad_order=5)
    P = NormParams(p=2.0, s=0.5)
    v = ball_norm(samp, DOM, P).value
    covered = DOM.area * (1.0 - GRID.tail_fraction)
    assert v == pytest.approx(math.sqrt(covered), rel=1e-12)


def test_ball_norm_warns_when_underresolved():
    f = CallableField(lambda p: np.ones((len(p), 1)), 1)
    samp = SampledField.from_grid(f, GRID, quad_order=1)
    with pytest.warns(UserWarning, match="under-resolved"):
        ball_norm(samp, DOM, NormParams(p=2.0, s=0.5))


# -- interpolation and embedding ---------------------------------------------------

def test_sequence_holder_bounded_and_sharp():
    P0 = NormParams(p=2.0, s=0.5)
    P1 = NormParams(p=4.0, s=0.25)
    mid = interpolated_params(P0, P1, 0.5)
    assert 1.0 / mid.p == pytest.approx(0.5 / 2.0 + 0.5 / 4.0)
    assert mid.s == pytest.approx(0.375)
    f = random_cube_field(GRID, 2, np.random.default_rng(4))
    assert sequence_holder_check(f, GRID, P0, P1, 0.5) <= 1.0 + 1e-12
    one = single_cube_field(GRID, 7, [1.0])
    assert sequence_holder_check(one, GRID, P0, P1, 0.5) == pytest.approx(1.0, abs=1e-12)


def test_embedding_admissibility_classification():
    line_low = NormParams(p=2.0, s=0.3)
    line_high = NormParams(p=10.0 / 7.0, s=0.5)
    assert embedding_admissible(line_low, line_high) == "line"
    win_low = NormParams(p=1.0, s=0.3)
    win_high = NormParams(p=2.0, s=0.6)
    assert embedding_admissible(win_low, win_high) == "window"
    with pytest.raises(NormParamError):
        embedding_admissible(NormParams(p=2.0, s=0.6), NormParams(p=2.0, s=0.3))


def test_embedding_check_reports_finite_ratio():
    f = random_cube_field(GRID, 1, np.random.default_rng(5))
    rep = embedding_check(f, GRID, NormParams(p=1.0, s=0.3), NormParams(p=2.0, s=0.6))
    assert rep.bullet == "window"
    assert not rep.vacuous
    assert np.isfinite(rep.ratio)


# -- boundary Besov seminorm ---------------------------------------------------------

def test_besov_constant_vanishes():
    P = NormParams(p=2.0, s=0.5)
    v, converged, _ = besov_boundary_seminorm(DOM, lambda p: np.ones(len(p)), P)
    assert v == pytest.approx(0.0, abs=1e-14)
    assert converged


def test_besov_linear_function_converges():
    P = NormParams(p=2.0, s=0.5)
    v, converged, rel = besov_boundary_seminorm(DOM, lambda p: p[:, 0], P)
    assert v > 0.0
    assert converged, f"relative change {rel}"


def test_besov_scaling_homogeneity():
    P = NormParams(p=2.0, s=0.5)
    v1, _, _ = besov_boundary_seminorm(DOM, lambda p: p[:, 0], P)
    v3, _, _ = besov_boundary_seminorm(DOM, lambda p: 3.0 * p[:, 0], P)
    assert v3 == pytest.approx(3.0 * v1, rel=1e-12)


# -- growth probes and the operator-norm estimate --------------------------------

def test_restriction_growth_slope_matches_prediction():
    # at (2, 1/2) on the unit square the predicted exponent (d-1)+s-(d-1)/p = 1
    grid6 = whitney_decompose(DOM, 6)
    P = NormParams(p=2.0, s=0.5)
    x0 = (0.3125, 0.4375)
    radii = [2.0**-k for k in (1, 2, 3, 4)]
    vals, slope = l1_restriction_growth(grid6, P, x0, radii)
    # radii smaller than the local cube size contain no full cube and drop out
    assert np.count_nonzero(vals) >= 2
    assert slope == pytest.approx(1.0, abs=0.15)


def test_indicator_growth_slope_matches_prediction():
    grid6 = whitney_decompose(DOM, 6)
    P = NormParams(p=2.0, s=0.5)
    vals, slope = indicator_norm_growth(grid6, P, (0.3125, 0.4375),
                                        [2.0**-k for k in (1, 2, 3, 4)])
    assert slope == pytest.approx(1.0, abs=0.15)   # 1 - s + (d-1)/p


def test_indicator_growth_degenerate_radii_give_nan():
    P = NormParams(p=2.0, s=0.5)
    vals, slope = indicator_norm_growth(GRID, P, (0.3, 0.4), [1e-9, 2e-9])
    assert np.all(vals == 0.0)
    assert math.isnan(slope)


def test_operator_probe_identity_tensor_near_one():
    # for A = I the solve is an energy projection, so the ratio never exceeds
    # one and the power iterate (a discrete gradient fed back in) attains it
    from divform.assembly import DirichletSolver, GradientArray
    from divform.coefficients import laplacian_tensor
    from divform.fespace import TriP1Space
    from divform.geometry import build_mesh

    space = TriP1Space(build_mesh(DOM, 1.0 / 8.0))
    A = laplacian_tensor()
    solver = DirichletSolver(space, A)
    grid4 = whitney_decompose(DOM, 4)
    probe = operator_norm_probe(
        lambda f: solver.solve(GradientArray.from_field(space, f)),
        space, grid4, NormParams(p=2.0, s=0.5), trials=6, seed=0,
    )
    assert probe.lower_bound
    assert 0.9 <= probe.c0_hat <= 1.0 + 1e-9
