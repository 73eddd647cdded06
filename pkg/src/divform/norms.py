"""Weighted averaged norms on Whitney structures.

Two computable forms of the same family of norms:

* the Whitney-cube form  (sum over grid cubes of local L^2 averages,
  weighted by ell(Q)^{(d-1) + p - p s}), evaluated exactly on the finite
  cube sum, and
* the ball form          (outer quadrature over the domain of L^2 averages
  over B(x, dist(x)/2), weighted by dist(x)^{p - 1 - p s}).

Both extend to p = infinity as genuine suprema.  The module also carries
the duality pairing over the same cube quadrature (so the Holder
inequality with constant one is exact on the finite sums), the boundary
Besov seminorm, embedding and sequence-space interpolation checks, the
two growth-exponent measurements, and randomized operator-norm probes.

All reductions use a fixed summation order, so results are bit-stable
across runs and thread counts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PolygonalDomain, WhitneyGrid


class NormParamError(ValueError):
    pass


def p_min(s: float, d: int = 2) -> float:
    """Default lower exponent threshold (d-1)/(d-1+s)."""
    return (d - 1.0) / (d - 1.0 + s)


@dataclass(frozen=True)
class NormParams:
    """Exponent pair (p, s) for the weighted averaged norms.

    p may be math.inf.  The admissible window is 0 < s < 1 and
    p > p_floor, where p_floor defaults to (d-1)/(d-1+s); pass an explicit
    p_floor to widen or narrow the window (the threshold is recorded with
    every run rather than hard-coded).
    """

    p: float
    s: float
    d: int = 2
    p_floor: float = None

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise NormParamError(f"s={self.s} outside (0, 1)")
        floor = self.p_floor if self.p_floor is not None else p_min(self.s, self.d)
        object.__setattr__(self, "p_floor", floor)
        if not (self.p == math.inf or self.p > floor):
            raise NormParamError(f"p={self.p} not above the threshold {floor:.6g}")

    @property
    def p_prime(self) -> float:
        if self.p == math.inf:
            return 1.0
        inv = max(0.0, 1.0 - 1.0 / self.p)
        return math.inf if inv == 0.0 else 1.0 / inv

    @property
    def s_prime(self) -> float:
        extra = 0.0 if self.p == math.inf else max(1.0 / self.p - 1.0, 0.0)
        return (1.0 - self.s) + (self.d - 1) * extra

    def dual(self) -> "NormParams":
        sp = self.s_prime
        if not 0.0 < sp < 1.0:
            raise NormParamError(
                f"conjugate smoothness s'={sp:.6g} leaves (0,1); "
                "duality is used with p >= 1"
            )
        return NormParams(self.p_prime, sp, self.d)

    @property
    def cube_exponent(self) -> float:
        """Weight exponent on ell(Q) in the cube sum, (d-1) + p(1-s)."""
        if self.p == math.inf:
            raise NormParamError("cube_exponent is a finite-p quantity")
        return (self.d - 1) + self.p * (1.0 - self.s)

    @property
    def sup_exponent(self) -> float:
        """p = infinity limit exponent on ell(Q): 1 - s."""
        return 1.0 - self.s

    @property
    def ball_exponent(self) -> float:
        """Weight exponent on dist(x) in the ball form, p - 1 - p s."""
        if self.p == math.inf:
            raise NormParamError("ball_exponent is a finite-p quantity")
        return self.p - 1.0 - self.p * self.s


@dataclass
class NormValue:
    value: float
    form: str                    # "whitney" | "ball"
    params: NormParams
    tail_fraction: float = 0.0

    def __float__(self):
        return float(self.value)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

class CubeField:
    """Piecewise-constant array field on the cubes of a Whitney grid.

    values: (ncubes, C) complex; zero outside the covered region.
    """

    def __init__(self, grid: WhitneyGrid, values):
        self.grid = grid
        self.values = np.asarray(values, dtype=complex)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if len(self.values) != len(grid.corners):
            raise ValueError("one value row per grid cube required")

    @property
    def C(self):
        return self.values.shape[1]

    def eval(self, points):
        pts = np.atleast_2d(points)
        idx = self.grid.locate(pts)
        out = np.zeros((len(pts), self.C), dtype=complex)
        hit = idx >= 0
        out[hit] = self.values[idx[hit]]
        return out

    def __add__(self, other):
        if not isinstance(other, CubeField) or other.grid is not self.grid:
            return NotImplemented
        return CubeField(self.grid, self.values + other.values)

    def __sub__(self, other):
        if not isinstance(other, CubeField) or other.grid is not self.grid:
            return NotImplemented
        return CubeField(self.grid, self.values - other.values)

    def __mul__(self, c):
        return CubeField(self.grid, self.values * c)

    __rmul__ = __mul__


class CallableField:
    def __init__(self, fn, C):
        self.fn = fn
        self.C = C

    def eval(self, points):
        return np.asarray(self.fn(np.atleast_2d(points)), dtype=complex).reshape(
            -1, self.C
        )


def random_cube_field(grid: WhitneyGrid, C: int, rng) -> CubeField:
    """Unit-variance complex Gaussian entries per cube per index."""
    n = len(grid.corners)
    v = (rng.standard_normal((n, C)) + 1j * rng.standard_normal((n, C))) / math.sqrt(2)
    return CubeField(grid, v)


def single_cube_field(grid: WhitneyGrid, cube: int, direction) -> CubeField:
    v = np.zeros((len(grid.corners), len(direction)), dtype=complex)
    v[cube] = direction
    return CubeField(grid, v)


def random_fourier_field(C: int, rng, n_modes: int = 4):
    """Smooth random field independent of any grid (for cross-grid checks)."""
    ks = rng.integers(1, 5, size=(n_modes, 2))
    a = rng.standard_normal((n_modes, C)) + 1j * rng.standard_normal((n_modes, C))

    def fn(p):
        phase = np.exp(1j * math.pi * (p @ ks.T))        # (n, modes)
        return phase @ a

    return CallableField(fn, C)


# ---------------------------------------------------------------------------
# cube averages and the Whitney form
# ---------------------------------------------------------------------------

def _cube_averages(field, grid: WhitneyGrid, quad_order: int) -> np.ndarray:
    """fint_Q |field|^2 for every cube, (ncubes,)."""
    if isinstance(field, CubeField) and field.grid is grid:
        return np.sum(np.abs(field.values) ** 2, axis=1)
    pts, wts = grid.quadrature(quad_order)
    vals = field.eval(pts.reshape(-1, 2))
    sq = np.sum(np.abs(vals) ** 2, axis=1).reshape(wts.shape)
    return np.einsum("cq,cq->c", wts, sq) / grid.sides**2


def whitney_from_averages(
    avg: np.ndarray, grid: WhitneyGrid, params: NormParams
) -> NormValue:
    """Finish the cube sum from precomputed per-cube averages fint_Q |H|^2."""
    if params.p == math.inf:
        val = float(np.max(np.sqrt(avg) * grid.sides**params.sup_exponent))
    else:
        total = float(
            np.sum(avg ** (params.p / 2.0) * grid.sides**params.cube_exponent)
        )
        val = total ** (1.0 / params.p)
    return NormValue(val, "whitney", params, grid.tail_fraction)


def whitney_norm(
    field, grid: WhitneyGrid, params: NormParams, quad_order: int = 3
) -> NormValue:
    """The cube-sum form: (sum_Q (fint_Q |H|^2)^{p/2} ell^{(d-1)+p-ps})^{1/p}.

    For p = infinity: sup_Q (fint_Q |H|^2)^{1/2} ell^{1-s}.
    """
    if len(grid.corners) == 0:
        raise NormParamError("empty Whitney grid")
    avg = _cube_averages(field, grid, quad_order)
    return whitney_from_averages(avg, grid, params)


def pairing(F, G, grid: WhitneyGrid, quad_order: int = 3) -> complex:
    """<F, G> over the covered region, conjugate-linear in F.

    Uses the same per-cube quadrature as whitney_norm, so the Holder
    inequality against the dual-exponent norms is exact on the cube sums.
    """
    fast = (
        isinstance(F, CubeField)
        and isinstance(G, CubeField)
        and F.grid is grid
        and G.grid is grid
    )
    if fast:
        dots = np.sum(F.values.conj() * G.values, axis=1)
        return complex(np.sum(dots * grid.sides**2))
    pts, wts = grid.quadrature(quad_order)
    flat = pts.reshape(-1, 2)
    fv = F.eval(flat)
    gv = G.eval(flat)
    dots = np.sum(fv.conj() * gv, axis=1).reshape(wts.shape)
    return complex(np.einsum("cq,cq->", wts, dots))


def holder_dual_field(F: CubeField, params: NormParams) -> CubeField:
    """The cube field saturating |<F, G>| = ||F||_{p',s'} ||G||_{p,s}.

    Writing a_Q = |F_Q| and e = (d-1) + p(1-s), scalar Holder on the cube
    sum has equality when |G_Q|^p ell^e is proportional to |F_Q|^{p'}
    ell^{e'} and the cube values are parallel, which pins
    G_Q = F_Q a_Q^{p'/p - 1} ell^{(e'-e)/p} for 1 < p < infinity.  At the
    endpoints the dual norm is a weighted sup, so the extremizer either
    concentrates on the argmax cube (p = 1) or flattens the weighted
    magnitude (p = infinity).
    """
    grid = F.grid
    dual = params.dual()
    a = np.linalg.norm(F.values, axis=1)
    ell = grid.sides
    v = np.zeros_like(F.values)
    nz = a > 0
    if not nz.any():
        return CubeField(grid, v)
    if params.p == 1.0:
        # equality needs |F| ell^{1-s'} constant on supp G: concentrate
        q = int(np.argmax(a * ell ** (1.0 - dual.s)))
        v[q] = F.values[q] / a[q]
    elif params.p == math.inf:
        # flatten: |G| ell^{1-s} constant wherever F is active
        v[nz] = F.values[nz] / a[nz, None] * (ell[nz] ** (params.s - 1.0))[:, None]
    else:
        e = params.cube_exponent
        ep = dual.cube_exponent
        expo = (ep - e) / params.p
        v[nz] = (
            F.values[nz]
            * (a[nz] ** (dual.p / params.p - 1.0))[:, None]
            * (ell[nz] ** expo)[:, None]
        )
    return CubeField(grid, v)


def l2_norm_covered(field, grid: WhitneyGrid, quad_order: int = 3) -> float:
    """Plain L^2 norm over the union of grid cubes (same quadrature)."""
    avg = _cube_averages(field, grid, quad_order)
    return math.sqrt(float(np.sum(avg * grid.sides**2)))


# ---------------------------------------------------------------------------
# ball form
# ---------------------------------------------------------------------------

@dataclass
class SampledField:
    """A field known through quadrature samples (points, weights, values)."""

    points: np.ndarray       # (n, 2)
    weights: np.ndarray      # (n,)
    values: np.ndarray       # (n, C)
    tail_fraction: float = 0.0

    @classmethod
    def from_grid(cls, field, grid: WhitneyGrid, quad_order: int = 3):
        pts, wts = grid.quadrature(quad_order)
        flat = pts.reshape(-1, 2)
        vals = field.eval(flat)
        return cls(flat, wts.reshape(-1), vals, grid.tail_fraction)

    @classmethod
    def from_gradient_array(cls, ga):
        return cls(
            ga.points.reshape(-1, 2),
            ga.weights.reshape(-1),
            ga.values.reshape(-1, ga.values.shape[-1]),
        )


def ball_averages(
    samples: SampledField,
    domain: PolygonalDomain,
    min_ball_samples: int = 8,
):
    """Inner averages fint_{B(x, dist(x)/2)} |H|^2 at every interior sample.

    Returns (avg, dist, outer_weights), each restricted to samples strictly
    inside the domain.  The averages do not depend on (p, s), so one call
    can feed several parameter choices via ball_from_averages.
    """
    pts = samples.points
    dist = domain.distance_to_boundary(pts)
    keep = dist > 0.0
    pts_k = pts[keep]
    dist_k = dist[keep]
    sq = np.sum(np.abs(samples.values) ** 2, axis=1)
    w = samples.weights

    tree = cKDTree(pts)
    lists = tree.query_ball_point(pts_k, dist_k / 2.0)
    counts = np.array([len(l) for l in lists])
    n_min = int(counts.min()) if len(counts) else 0
    if n_min < min_ball_samples:
        warnings.warn(
            f"ball averages under-resolved: min {n_min} samples per ball "
            f"(want >= {min_ball_samples}); refine the sampling",
            stacklevel=2,
        )
    flat = np.concatenate(lists) if len(lists) else np.array([], dtype=int)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)
    wsum = np.add.reduceat(w[flat], offsets) if len(flat) else np.zeros(0)
    wsq = np.add.reduceat((w * sq)[flat], offsets) if len(flat) else np.zeros(0)
    empty = counts == 0
    wsum[empty] = 1.0
    avg = wsq / wsum
    return avg, dist_k, w[keep]


def ball_from_averages(
    avg: np.ndarray,
    dist: np.ndarray,
    outer_weights: np.ndarray,
    params: NormParams,
    tail_fraction: float = 0.0,
) -> NormValue:
    if params.p == math.inf:
        val = float(np.max(np.sqrt(avg) * dist**params.sup_exponent))
    else:
        total = float(
            np.sum(outer_weights * avg ** (params.p / 2.0) * dist**params.ball_exponent)
        )
        val = total ** (1.0 / params.p)
    return NormValue(val, "ball", params, tail_fraction)


def ball_norm(
    samples: SampledField,
    domain: PolygonalDomain,
    params: NormParams,
    min_ball_samples: int = 8,
) -> NormValue:
    """The ball form of the norm from one dense sampling of the field.

    The sample set serves both as the outer quadrature over the domain and
    as the empirical measure for the inner averages over B(x, dist(x)/2).
    Under-resolved inner balls (fewer than min_ball_samples samples)
    trigger a refinement warning but are still averaged.
    """
    avg, dist_k, w_k = ball_averages(samples, domain, min_ball_samples)
    return ball_from_averages(avg, dist_k, w_k, params, samples.tail_fraction)


# ---------------------------------------------------------------------------
# boundary Besov seminorm
# ---------------------------------------------------------------------------

def _boundary_panels(domain: PolygonalDomain, n_panels: int):
    """Split the boundary into roughly equal-length straight panels."""
    out = []
    per = domain.perimeter
    for a, b in domain.edges():
        length = float(np.linalg.norm(b - a))
        k = max(1, round(n_panels * length / per))
        for i in range(k):
            out.append((a + (b - a) * i / k, a + (b - a) * (i + 1) / k))
    return out


def besov_boundary_seminorm(
    domain: PolygonalDomain,
    f_fn,
    params: NormParams,
    n_panels: int = 48,
    grading_levels: int = 4,
    gauss: int = 4,
):
    """Boundary double integral (sum |f(x)-f(y)|^p / |x-y|^{(d-1)+ps})^{1/p}.

    Panel pairs too close together (relative to their length) are refined
    geometrically toward the singularity; pairs still touching at the
    finest grading level are dropped, which excludes the integrable
    diagonal.  Returns (value, converged, relative_change) where the flag
    compares one extra grading level.
    """
    if not 1.0 <= params.p < math.inf:
        raise NormParamError("boundary seminorm implemented for 1 <= p < inf")

    def run(levels):
        total = _besov_sum(domain, f_fn, params, n_panels, levels, gauss)
        return total ** (1.0 / params.p)

    v0 = run(grading_levels)
    v1 = run(grading_levels + 1)
    rel = abs(v1 - v0) / max(v1, 1e-300)
    return v1, rel < 0.02, rel


def _besov_sum(domain, f_fn, params, n_panels, levels, gauss):
    from numpy.polynomial.legendre import leggauss

    x, w = leggauss(gauss)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    base = _boundary_panels(domain, n_panels)
    min_len = min(float(np.linalg.norm(b - a)) for a, b in base) / 2**levels

    # adaptive pair refinement: split any too-close pair until separated
    # or until the panels reach the finest grading length.  The multiplier
    # tracks orderings: distinct base pairs are enumerated once (x2), while
    # descendants of a diagonal pair already cover both orderings (x1).
    pairs = []
    stack = [
        (a1, b1, a2, b2, 1.0 if i == j else 2.0)
        for i, (a1, b1) in enumerate(base)
        for j, (a2, b2) in enumerate(base)
        if j >= i
    ]
    while stack:
        a1, b1, a2, b2, mult = stack.pop()
        l1 = float(np.linalg.norm(b1 - a1))
        l2 = float(np.linalg.norm(b2 - a2))
        gap = _segment_gap(a1, b1, a2, b2)
        if gap >= 0.5 * max(l1, l2):
            pairs.append((a1, b1, a2, b2, mult))
            continue
        if max(l1, l2) <= min_len * (1 + 1e-9):
            continue                        # touching at finest level: dropped
        if l1 >= l2:
            m = 0.5 * (a1 + b1)
            stack.append((a1, m, a2, b2, mult))
            stack.append((m, b1, a2, b2, mult))
        else:
            m = 0.5 * (a2 + b2)
            stack.append((a1, b1, a2, m, mult))
            stack.append((a1, b1, m, b2, mult))

    expo = (params.d - 1) + params.p * params.s
    total = 0.0
    for a1, b1, a2, b2, mult in pairs:
        t1 = (b1 - a1)[None, :]
        t2 = (b2 - a2)[None, :]
        p1 = a1[None, :] + x[:, None] * t1
        p2 = a2[None, :] + x[:, None] * t2
        f1 = np.asarray(f_fn(p1), dtype=complex).reshape(len(p1), -1)
        f2 = np.asarray(f_fn(p2), dtype=complex).reshape(len(p2), -1)
        df = np.linalg.norm(f1[:, None, :] - f2[None, :, :], axis=2)
        dx = np.linalg.norm(p1[:, None, :] - p2[None, :, :], axis=2)
        ww = np.outer(w, w) * (np.linalg.norm(t1) * np.linalg.norm(t2))
        total += mult * float(np.sum(ww * df**params.p / dx**expo))
    return total


def _segment_gap(a1, b1, a2, b2) -> float:
    from .geometry import segment_segment_distance

    return segment_segment_distance(a1, b1, a2, b2)


# ---------------------------------------------------------------------------
# embedding and interpolation checks
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingReport:
    ratio: float
    scale: float            # diam^{(d-1)/q - (d-1)/r + omega - sigma}
    bullet: str             # which admissibility condition held
    vacuous: bool
    lhs: float
    rhs: float


def embedding_admissible(low: NormParams, high: NormParams) -> str:
    """Which of the two admissible regimes embeds (r, omega) into (q, sigma).

    low = (q, sigma), high = (r, omega); requires sigma < omega.  Returns
    "line" ((d-1)/q - sigma = (d-1)/r - omega), "window" (bounded domain,
    0 <= (d-1)/r <= (d-1)/q + omega - sigma), or raises with the reason.
    """
    q, sg = low.p, low.s
    r, om = high.p, high.s
    d = low.d
    if not sg < om:
        raise NormParamError(f"need sigma < omega, got {sg} >= {om}")
    iq = 0.0 if q == math.inf else 1.0 / q
    ir = 0.0 if r == math.inf else 1.0 / r
    if abs((d - 1) * iq - sg - ((d - 1) * ir - om)) <= 1e-12:
        return "line"
    if 0.0 <= (d - 1) * ir <= (d - 1) * iq + om - sg:
        return "window"
    raise NormParamError(
        "parameters admit neither the line condition "
        f"((d-1)/q - sigma = {(d-1)*iq - sg:.4g} vs (d-1)/r - omega = "
        f"{(d-1)*ir - om:.4g}) nor the bounded-domain window "
        f"(need 0 <= {(d-1)*ir:.4g} <= {(d-1)*iq + om - sg:.4g})"
    )


def embedding_check(
    field, grid: WhitneyGrid, low: NormParams, high: NormParams, quad_order: int = 3
) -> EmbeddingReport:
    """Measured constant in ||Psi||_{q,sigma} <= C diam^{...} ||Psi||_{r,omega}."""
    bullet = embedding_admissible(low, high)
    domain_diam = grid.domain.diameter
    q, sg = low.p, low.s
    r, om = high.p, high.s
    d = low.d
    iq = 0.0 if q == math.inf else 1.0 / q
    ir = 0.0 if r == math.inf else 1.0 / r
    scale = domain_diam ** ((d - 1) * iq - (d - 1) * ir + om - sg)
    lhs = whitney_norm(field, grid, low, quad_order).value
    rhs = whitney_norm(field, grid, high, quad_order).value
    if rhs == 0.0:
        return EmbeddingReport(0.0, scale, bullet, True, lhs, rhs)
    return EmbeddingReport(lhs / (scale * rhs), scale, bullet, False, lhs, rhs)


def interpolated_params(P0: NormParams, P1: NormParams, sigma: float) -> NormParams:
    """Intermediate exponents: 1/p and s interpolate linearly in sigma."""
    inv = (1.0 - sigma) / P0.p + sigma / P1.p
    return NormParams(1.0 / inv, (1.0 - sigma) * P0.s + sigma * P1.s, P0.d)


def sequence_holder_check(
    field, grid: WhitneyGrid, P0: NormParams, P1: NormParams, sigma: float,
    quad_order: int = 3,
) -> float:
    """||H||_{p_sigma, s_sigma} / (||H||_{p0,s0}^{1-sigma} ||H||_{p1,s1}^sigma).

    Holder's inequality on the finite cube sums makes this <= 1 exactly;
    a single-cube field attains 1 (log-linearity of one term).
    """
    if not (1.0 <= P0.p < math.inf and 1.0 <= P1.p < math.inf):
        raise NormParamError("interpolation check wants 1 <= p0, p1 < inf")
    if not 0.0 < sigma < 1.0:
        raise NormParamError("sigma must lie in (0, 1)")
    Ps = interpolated_params(P0, P1, sigma)
    mid = whitney_norm(field, grid, Ps, quad_order).value
    n0 = whitney_norm(field, grid, P0, quad_order).value
    n1 = whitney_norm(field, grid, P1, quad_order).value
    den = n0 ** (1.0 - sigma) * n1**sigma
    if den == 0.0:
        return 0.0
    return mid / den


# ---------------------------------------------------------------------------
# growth-exponent measurements
# ---------------------------------------------------------------------------

def l1_restriction_growth(
    grid: WhitneyGrid, params: NormParams, x0, radii, quad_order: int = 3
):
    """Measured growth of sup_H ||H||_{L^1(B(x0,R) & covered)} over unit-norm
    single-cube fields, per radius.

    Returns (values, slope): values[k] is the largest L^1 mass over cubes
    contained in B(x0, radii[k]), each probe normalized in the (p, s)
    Whitney norm; slope is the log-log fit.  Restricting a unit-norm field
    to a shrinking ball costs a factor R^((d-1) + s - (d-1)/p), so that is
    the expected slope.
    """
    x0 = np.asarray(x0, dtype=float)
    _, wts = grid.quadrature(quad_order)
    sides = grid.sides
    # cube fully inside the ball: all four corners within R
    cc = grid.corners[:, None, :] + sides[:, None, None] * np.array(
        [[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float
    )
    cdist = np.linalg.norm(cc - x0[None, None, :], axis=2).max(axis=1)

    # one-term cube sums, evaluated through the same quadrature machinery
    # the norm uses: unit probe on cube q has average avg[q] and norm
    # (avg^{p/2} ell^e)^{1/p}; its L^1 mass is the quadrature weight sum
    ones = CubeField(grid, np.ones((len(sides), 1)))
    avg = _cube_averages(ones, grid, quad_order)
    if params.p == math.inf:
        nrm = np.sqrt(avg) * sides**params.sup_exponent
    else:
        nrm = (avg ** (params.p / 2.0) * sides**params.cube_exponent) ** (
            1.0 / params.p
        )
    l1 = np.sum(wts, axis=1)

    values = []
    for R in radii:
        inside = cdist <= R
        values.append(float(np.max(l1[inside] / nrm[inside])) if inside.any() else 0.0)
    values = np.asarray(values)
    good = values > 0
    slope = float(
        np.polyfit(np.log(np.asarray(radii)[good]), np.log(values[good]), 1)[0]
    )
    return values, slope


def l1_restriction_bound_constant(
    field, grid: WhitneyGrid, params: NormParams, x0, radii, quad_order: int = 3
):
    """Empirical C in ||H||_{L^1(B & covered)} <= C ||H||_{p,s} R^{(d-1)+s-(d-1)/p}."""
    x0 = np.asarray(x0, dtype=float)
    pts, wts = grid.quadrature(quad_order)
    flat = pts.reshape(-1, 2)
    w = wts.reshape(-1)
    mag = np.linalg.norm(field.eval(flat), axis=1)
    dist = np.linalg.norm(flat - x0[None, :], axis=1)
    nrm = whitney_norm(field, grid, params, quad_order).value
    expo = (params.d - 1) + params.s - (params.d - 1) / params.p
    consts = []
    for R in radii:
        l1 = float(np.sum(w[dist <= R] * mag[dist <= R]))
        consts.append(l1 / (nrm * R**expo))
    return np.asarray(consts)


def indicator_norm_growth(
    grid: WhitneyGrid, params: NormParams, x0, radii, quad_order: int = 4
):
    """Whitney norm of 1_{B(x0,R)} (bounded data truncated to a ball).

    Returns (values, slope); truncating bounded data to a ball of radius R
    scales the norm like R^(1 - s + (d-1)/p), sharp for constant data, so
    that is the expected slope.
    """
    x0 = np.asarray(x0, dtype=float)
    values = []
    for R in radii:
        ind = CallableField(
            lambda p, R=R: (
                np.linalg.norm(p - x0[None, :], axis=1) <= R
            ).astype(complex)[:, None],
            1,
        )
        values.append(whitney_norm(ind, grid, params, quad_order).value)
    values = np.asarray(values)
    good = values > 0.0
    if good.sum() < 2:
        return values, float("nan")
    slope = float(
        np.polyfit(np.log(np.asarray(radii)[good]), np.log(values[good]), 1)[0]
    )
    return values, slope


# ---------------------------------------------------------------------------
# operator-norm probing
# ---------------------------------------------------------------------------

@dataclass
class C0Probe:
    c0_hat: float
    trials: int
    best_family: str
    lower_bound: bool = True     # probes only ever underestimate


def operator_norm_probe(
    solver,
    space,
    grid: WhitneyGrid,
    params: NormParams,
    trials: int = 32,
    seed: int = 0,
    power_iterations: int = 3,
    quad_order: int = 3,
) -> C0Probe:
    """Randomized lower estimate of sup_H ||grad^m u(H)||_{p,s} / ||H||_{p,s}.

    solver maps a data field (anything with .eval) to an FESolution.
    Probes: complex Gaussian cube fields, single-cube indicators, and a
    few power-type iterations restarted from the best probe (feeding the
    solution gradient back in as data).  Deterministic in the seed.
    """
    rng = np.random.default_rng([seed, 777])
    ncubes = len(grid.corners)
    C = space.C

    def ratio(field):
        h_norm = whitney_norm(field, grid, params, quad_order).value
        if h_norm == 0.0:
            return 0.0, None
        u = solver(field)
        gfield = CallableField(lambda p: u.eval(p, order=space.m), C)
        g_norm = whitney_norm(gfield, grid, params, quad_order).value
        return g_norm / h_norm, u

    best = 0.0
    best_field = None
    best_family = "none"
    for t in range(trials):
        if t % 2 == 0:
            f = random_cube_field(grid, C, rng)
            fam = "gaussian-cube"
        else:
            q = int(rng.integers(0, ncubes))
            direction = rng.standard_normal(C) + 1j * rng.standard_normal(C)
            f = single_cube_field(grid, q, direction)
            fam = "single-cube"
        r, _ = ratio(f)
        if r > best:
            best, best_field, best_family = r, f, fam

    f = best_field
    for _ in range(power_iterations):
        if f is None:
            break
        r, u = ratio(f)
        if u is None:
            break
        if r > best:
            best, best_family = r, "power-iterate"
        f = CallableField(lambda p, u=u: u.eval(p, order=space.m), C)
    return C0Probe(best, trials, best_family)
