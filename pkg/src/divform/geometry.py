"""Polygonal domains, meshes, Whitney grids and boundary quadrature.

Everything downstream (norms, solvers, experiments) works on the three
structures built here:

* :class:`PolygonalDomain` -- a simple polygon with exact edge geometry,
  point containment and distance-to-boundary queries;
* triangle / rectangle meshes that resolve the polygon edges exactly
  (edges are subdivided, never approximated by chords);
* :class:`WhitneyGrid` -- the dyadic interior decomposition carrying the
  weighted averaged norms.  Accepted cubes satisfy
  ``c1 * side <= dist(Q, boundary) <= c2 * side`` with defaults ``c1 = 1``
  and ``c2 = 4 * sqrt(d)``.

Depth convention for Whitney grids: ``max_depth`` counts refinement
generations past the root split, so a depth-``g`` grid has smallest cube
side ``bbox_side / 2**(g+1)``.  On the unit square this covers all but a
boundary strip of relative area ``~ 2**(1-g)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss


class GeometryError(ValueError):
    """Raised for degenerate polygons or meshes that cannot be built."""


# ---------------------------------------------------------------------------
# segment primitives
# ---------------------------------------------------------------------------

def point_segment_distance(points, a, b):
    """Distance from each point to the segment [a, b]."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_intersect(a, b, c, d, eps=1e-14):
    """True if segments [a,b] and [c,d] intersect (endpoints count)."""
    o1 = _orient(a, b, c)
    o2 = _orient(a, b, d)
    o3 = _orient(c, d, a)
    o4 = _orient(c, d, b)
    if ((o1 > eps and o2 < -eps) or (o1 < -eps and o2 > eps)) and (
        (o3 > eps and o4 < -eps) or (o3 < -eps and o4 > eps)
    ):
        return True
    # collinear / touching cases
    for p, (u, v) in ((c, (a, b)), (d, (a, b)), (a, (c, d)), (b, (c, d))):
        if abs(_orient(u, v, p)) <= eps:
            lo = np.minimum(u, v) - eps
            hi = np.maximum(u, v) + eps
            if np.all(p >= lo) and np.all(p <= hi):
                return True
    return False


def segment_segment_distance(a, b, c, d):
    """Euclidean distance between segments [a,b] and [c,d]."""
    if segments_intersect(a, b, c, d):
        return 0.0
    return min(
        point_segment_distance(a[None, :], c, d)[0],
        point_segment_distance(b[None, :], c, d)[0],
        point_segment_distance(c[None, :], a, b)[0],
        point_segment_distance(d[None, :], a, b)[0],
    )


# ---------------------------------------------------------------------------
# polygonal domains
# ---------------------------------------------------------------------------

@dataclass
class PolygonalDomain:
    """Simple polygon given by its vertices (closed implicitly).

    The constructor validates the polygon (no repeated vertices, nonzero
    area, no self-intersection) and normalizes the orientation to
    counterclockwise.  Degenerate input raises :class:`GeometryError` with
    the offending vertex indices.
    """

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("polygon needs at least 3 planar vertices")
        n = len(v)
        scale = max(np.ptp(v[:, 0]), np.ptp(v[:, 1]), 1e-300)
        for i in range(n):
            if np.linalg.norm(v[i] - v[(i + 1) % n]) <= 1e-12 * scale:
                raise GeometryError(f"repeated vertex at index {i}")
        area2 = 0.0
        for i in range(n):
            j = (i + 1) % n
            area2 += v[i, 0] * v[j, 1] - v[j, 0] * v[i, 1]
        if abs(area2) <= 1e-14 * scale * scale:
            raise GeometryError("polygon has (near) zero area")
        if area2 < 0.0:
            v = v[::-1].copy()
        # self intersection: non-adjacent edge pairs must not meet
        for i in range(n):
            a, b = v[i], v[(i + 1) % n]
            for j in range(i + 1, n):
                if j == i or (j + 1) % n == i or (i + 1) % n == j:
                    continue
                c, d = v[j], v[(j + 1) % n]
                if segments_intersect(a, b, c, d):
                    raise GeometryError(
                        f"edges {i} and {j} of the polygon intersect"
                    )
        self.vertices = v

    # -- basic measurements -------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def area(self) -> float:
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def diameter(self) -> float:
        v = self.vertices
        d2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=-1)
        return float(np.sqrt(d2.max()))

    @property
    def perimeter(self) -> float:
        v = self.vertices
        return float(np.sum(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)))

    @property
    def bounding_box(self):
        v = self.vertices
        return v.min(axis=0), v.max(axis=0)

    def edge_arrays(self):
        """Edge start points and edge vectors, each of shape (n_edges, 2)."""
        v = self.vertices
        return v, np.roll(v, -1, axis=0) - v

    def edges(self):
        v = self.vertices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]

    # -- queries ------------------------------------------------------------

    def contains(self, points, boundary_tol=1e-12):
        """Even-odd containment test; boundary points count as inside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        v = self.vertices
        n = len(v)
        inside = np.zeros(len(pts), dtype=bool)
        j = n - 1
        for i in range(n):
            xi, yi = v[i]
            xj, yj = v[j]
            cond = (yi > y) != (yj > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xcross = xi + (y - yi) * (xj - xi) / (yj - yi)
            inside ^= cond & (x < xcross)
            j = i
        if boundary_tol > 0.0:
            inside |= self.distance_to_boundary(pts) <= boundary_tol
        return inside

    def distance_to_boundary(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        best = np.full(len(pts), np.inf)
        for a, b in self.edges():
            np.minimum(best, point_segment_distance(pts, a, b), out=best)
        return best


def distance_to_boundary(domain: PolygonalDomain, points):
    """dist(x, boundary of the domain) for an array of points, 1-Lipschitz."""
    return domain.distance_to_boundary(points)


def unit_square() -> PolygonalDomain:
    return PolygonalDomain(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


def l_shape() -> PolygonalDomain:
    """Unit square with the closed quadrant [1/2,1]^2 removed."""
    return PolygonalDomain(
        np.array(
            [
                [0.0, 0.0],
                [1.0, 0.0],
                [1.0, 0.5],
                [0.5, 0.5],
                [0.5, 1.0],
                [0.0, 1.0],
            ]
        )
    )


NAMED_DOMAINS = {"unit_square": unit_square, "l_shape": l_shape}


def _squares_boundary_distance(domain: PolygonalDomain, corners, side):
    """Distance from each solid square [corner, corner+side]^2 to the boundary.

    Vectorized over squares x polygon edges.  Both the squares and the
    edges are convex, so the minimum is attained either at an edge
    endpoint (point-to-box clamp), at a box corner (point-to-segment), or
    is zero when the segment meets the box (slab test).
    """
    corners = np.atleast_2d(np.asarray(corners, dtype=float))
    n = len(corners)
    A, E = domain.edge_arrays()          # (m, 2) starts, (m, 2) edge vectors
    B = A + E

    def point_to_boxes(pts):             # (k, 2) -> (n, k)
        dx = np.maximum(corners[:, None, 0] - pts[None, :, 0], 0.0)
        dx = np.maximum(dx, pts[None, :, 0] - corners[:, None, 0] - side)
        dy = np.maximum(corners[:, None, 1] - pts[None, :, 1], 0.0)
        dy = np.maximum(dy, pts[None, :, 1] - corners[:, None, 1] - side)
        return np.hypot(dx, dy)

    best = np.minimum(point_to_boxes(A).min(axis=1), point_to_boxes(B).min(axis=1))

    # box corners to every edge
    for dx, dy in ((0.0, 0.0), (side, 0.0), (0.0, side), (side, side)):
        p = corners + (dx, dy)           # (n, 2)
        ap = p[:, None, :] - A[None, :, :]
        denom = np.einsum("mk,mk->m", E, E)
        t = np.clip(np.einsum("nmk,mk->nm", ap, E) / denom[None, :], 0.0, 1.0)
        proj = A[None, :, :] + t[..., None] * E[None, :, :]
        d = np.linalg.norm(p[:, None, :] - proj, axis=2)
        np.minimum(best, d.min(axis=1), out=best)

    # zero out squares whose interior the segment actually meets (slab test)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (corners[:, None, :] - A[None, :, :]) / E[None, :, :]
        t2 = (corners[:, None, :] + side - A[None, :, :]) / E[None, :, :]
    tlo = np.fmin(t1, t2)                # fmin/fmax drop NaNs from 0/0
    thi = np.fmax(t1, t2)
    # axis parallel to the edge: replace empty/NaN slabs correctly
    para = np.abs(E)[None, :, :] < 1e-300
    inside_slab = (A[None, :, :] >= corners[:, None, :] - 1e-300) & (
        A[None, :, :] <= corners[:, None, :] + side + 1e-300
    )
    tlo = np.where(para, np.where(inside_slab, -np.inf, np.inf), tlo)
    thi = np.where(para, np.where(inside_slab, np.inf, -np.inf), thi)
    lo = np.maximum(np.max(tlo, axis=2), 0.0)
    hi = np.minimum(np.min(thi, axis=2), 1.0)
    hit = (lo <= hi).any(axis=1)
    best[hit] = 0.0
    return best


def _square_boundary_distance(domain: PolygonalDomain, corner, side):
    """Distance from one closed square to the domain boundary."""
    return float(_squares_boundary_distance(domain, np.asarray(corner)[None, :], side)[0])


# ---------------------------------------------------------------------------
# Whitney decomposition
# ---------------------------------------------------------------------------

@dataclass
class WhitneyGrid:
    """Axis-parallel dyadic Whitney cubes for a polygonal domain.

    Attributes
    ----------
    corners : (n, 2) lower-left corners
    sides : (n,) cube side lengths
    levels : (n,) dyadic level (side = root_side / 2**level)
    tail_fraction : uncovered area fraction of the domain
    """

    domain: PolygonalDomain
    corners: np.ndarray
    sides: np.ndarray
    levels: np.ndarray
    max_depth: int
    c1: float
    c2: float
    root_corner: np.ndarray = field(default=None)
    root_side: float = field(default=None)

    @property
    def n_cubes(self) -> int:
        return len(self.sides)

    @property
    def centers(self) -> np.ndarray:
        return self.corners + 0.5 * self.sides[:, None]

    @property
    def covered_area(self) -> float:
        return float(np.sum(self.sides**2))

    @property
    def tail_fraction(self) -> float:
        return 1.0 - self.covered_area / self.domain.area

    def distances(self) -> np.ndarray:
        """Exact distance from each cube (as a set) to the boundary."""
        return np.array(
            [
                _square_boundary_distance(self.domain, self.corners[i], self.sides[i])
                for i in range(self.n_cubes)
            ]
        )

    def quadrature(self, order: int = 3):
        """Tensor Gauss points per cube: points (n, order^2, 2), weights (n, order^2).

        Weights of each cube sum to its area, so per-cube averages are
        plain weighted means divided by side**2.
        """
        x, w = leggauss(order)
        x = 0.5 * (x + 1.0)
        w = 0.5 * w
        xx, yy = np.meshgrid(x, x, indexing="ij")
        ww = np.outer(w, w).ravel()
        ref = np.column_stack([xx.ravel(), yy.ravel()])
        pts = self.corners[:, None, :] + self.sides[:, None, None] * ref[None, :, :]
        wts = (self.sides**2)[:, None] * ww[None, :]
        return pts, wts

    def locate(self, points):
        """Index of the cube containing each point (-1 if uncovered).

        Vectorized over points via dense per-level occupancy tables.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(len(pts), -1, dtype=np.int64)
        rel = (pts - self.root_corner[None, :]) / self.root_side
        for lev in np.unique(self.levels):
            nside = 1 << int(lev)
            occ = np.full((nside, nside), -1, dtype=np.int64)
            sel = np.nonzero(self.levels == lev)[0]
            cidx = np.floor(
                (self.corners[sel] - self.root_corner[None, :])
                / (self.root_side / nside)
                + 0.5
            ).astype(np.int64)
            occ[cidx[:, 0], cidx[:, 1]] = sel
            ij = np.floor(rel * nside).astype(np.int64)
            ok = (
                (out < 0)
                & (ij[:, 0] >= 0)
                & (ij[:, 0] < nside)
                & (ij[:, 1] >= 0)
                & (ij[:, 1] < nside)
            )
            hits = np.where(ok, occ[np.clip(ij[:, 0], 0, nside - 1), np.clip(ij[:, 1], 0, nside - 1)], -1)
            out = np.where((out < 0) & (hits >= 0), hits, out)
        return out

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("corner_x,corner_y,side\n")
            for i in range(self.n_cubes):
                fh.write(
                    f"{self.corners[i, 0]:.17g},{self.corners[i, 1]:.17g},{self.sides[i]:.17g}\n"
                )


def whitney_decompose(
    domain: PolygonalDomain,
    max_depth: int,
    c1: float = 1.0,
    c2: float | None = None,
) -> WhitneyGrid:
    """Dyadic Whitney decomposition of the domain interior.

    A candidate cube Q is accepted when it lies inside the domain and
    ``c1 * side(Q) <= dist(Q, boundary) <= c2 * side(Q)``; otherwise it is
    subdivided (up to the depth limit) or dropped.  Increasing ``max_depth``
    never removes or changes an accepted cube.
    """
    if max_depth < 1:
        raise GeometryError("max_depth must be >= 1")
    if c2 is None:
        c2 = 4.0 * math.sqrt(2.0)
    lo, hi = domain.bounding_box
    side = float(max(hi - lo))
    root = np.asarray(lo, dtype=float)

    corners, sides, levels = [], [], []
    max_level = max_depth + 1  # the root split does not count as a generation

    # level-by-level sweep over integer cube coordinates, canonical order
    cand = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=np.int64)
    for level in range(1, max_level + 1):
        if len(cand) == 0:
            break
        s = side / (1 << level)
        cand = cand[np.lexsort((cand[:, 1], cand[:, 0]))]
        cc = root[None, :] + s * cand
        dist = _squares_boundary_distance(domain, cc, s)
        inside = domain.contains(cc, boundary_tol=0.0) & (dist > 0.0)
        accept = inside & (dist >= c1 * s) & (dist <= c2 * s)
        for k in np.nonzero(accept)[0]:
            corners.append(cc[k])
            sides.append(s)
            levels.append(level)
        if level == max_level:
            break
        # subdivide undecided cubes that can still meet the domain interior
        again = ~accept & (inside | (dist == 0.0))
        base = 2 * cand[again]
        cand = np.concatenate(
            [base, base + (1, 0), base + (0, 1), base + (1, 1)]
        ) if len(base) else np.empty((0, 2), dtype=np.int64)

    return WhitneyGrid(
        domain=domain,
        corners=np.array(corners).reshape(-1, 2),
        sides=np.array(sides),
        levels=np.array(levels, dtype=np.int64),
        max_depth=max_depth,
        c1=c1,
        c2=c2,
        root_corner=root,
        root_side=side,
    )


# ---------------------------------------------------------------------------
# triangle meshes (order-m = 1 elements)
# ---------------------------------------------------------------------------

@dataclass
class TriMesh:
    """Conforming triangulation of a polygonal domain."""

    domain: PolygonalDomain
    vertices: np.ndarray      # (nv, 2)
    triangles: np.ndarray     # (nt, 3) int

    def __post_init__(self):
        self._boundary = None
        self._bins = None
        self._cellv = None
        self._Tinv = None

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.triangles)

    @property
    def cell_vertices(self):
        if self._cellv is None:
            self._cellv = self.vertices[self.triangles]   # (nt, 3, 2)
        return self._cellv

    @property
    def areas(self):
        v = self.cell_vertices
        return 0.5 * np.abs(
            (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
            - (v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1])
        )

    @property
    def h(self) -> float:
        v = self.cell_vertices
        e = np.stack(
            [
                np.linalg.norm(v[:, 1] - v[:, 0], axis=1),
                np.linalg.norm(v[:, 2] - v[:, 1], axis=1),
                np.linalg.norm(v[:, 0] - v[:, 2], axis=1),
            ]
        )
        return float(e.max())

    def boundary_edges(self):
        """Edges on the domain boundary: (vertex i, vertex j, owning cell).

        Oriented so the outward normal is the right-hand normal of (i -> j).
        """
        if self._boundary is not None:
            return self._boundary
        count = {}
        for t, tri in enumerate(self.triangles):
            for k in range(3):
                i, j = int(tri[k]), int(tri[(k + 1) % 3])
                count.setdefault((min(i, j), max(i, j)), []).append((t, i, j))
        out = []
        for (_, _), owners in count.items():
            if len(owners) == 1:
                t, i, j = owners[0]
                out.append((i, j, t))
        # deterministic order: by (min vertex coordinate lexicographic)
        out.sort(key=lambda e: (tuple(self.vertices[e[0]]), tuple(self.vertices[e[1]])))
        self._boundary = out
        return out

    def boundary_vertex_ids(self):
        ids = set()
        for i, j, _ in self.boundary_edges():
            ids.add(i)
            ids.add(j)
        return np.array(sorted(ids), dtype=np.int64)

    def quadrature(self, order: int = 2):
        """Per-cell quadrature points/weights exact to the given degree."""
        bary, w = _triangle_rule(order)
        v = self.cell_vertices
        pts = np.einsum("qk,tkx->tqx", bary, v)
        wts = self.areas[:, None] * w[None, :]
        return pts, wts

    def _affine_inverses(self):
        if self._Tinv is None:
            v = self.cell_vertices
            T = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
            self._Tinv = np.linalg.inv(T)
        return self._Tinv

    def barycentric(self, points, cells):
        """Barycentric coordinates of each point in its assigned cell."""
        Tinv = self._affine_inverses()
        rhs = points - self.cell_vertices[cells, 0]
        sol = np.einsum("nij,nj->ni", Tinv[cells], rhs)
        return np.column_stack([1.0 - sol.sum(axis=1), sol])

    def locate(self, points, tol=1e-10):
        """Cell index containing each point (-1 when outside every cell)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self._bins is None:
            nb = max(1, int(math.sqrt(self.n_cells)))
            lo, hi = self.domain.bounding_box
            span = np.maximum(hi - lo, 1e-300)
            bins = {}
            cv = self.cell_vertices
            blo = np.floor((cv.min(axis=1) - lo) / span * nb).astype(int)
            bhi = np.floor((cv.max(axis=1) - lo) / span * nb).astype(int)
            blo = np.clip(blo, 0, nb - 1)
            bhi = np.clip(bhi, 0, nb - 1)
            for c in range(self.n_cells):
                for bi in range(blo[c, 0], bhi[c, 0] + 1):
                    for bj in range(blo[c, 1], bhi[c, 1] + 1):
                        bins.setdefault((bi, bj), []).append(c)
            self._bins = (nb, lo, span, bins)
        nb, lo, span, bins = self._bins
        Tinv = self._affine_inverses()
        v0 = self.cell_vertices[:, 0]
        key = np.clip(np.floor((pts - lo) / span * nb).astype(int), 0, nb - 1)
        out = np.full(len(pts), -1, dtype=np.int64)
        flat = key[:, 0] * nb + key[:, 1]
        order = np.argsort(flat, kind="stable")
        bounds = np.nonzero(np.diff(flat[order]))[0] + 1
        starts = np.concatenate([[0], bounds])
        stops = np.concatenate([bounds, [len(order)]])
        for a, b in zip(starts, stops):
            sel = order[a:b]
            cand = bins.get((int(key[sel[0], 0]), int(key[sel[0], 1])))
            if not cand:
                continue
            ca = np.asarray(cand)
            rel = pts[sel][:, None, :] - v0[ca][None, :, :]
            lam = np.einsum("cij,kcj->kci", Tinv[ca], rel)
            ok = (lam >= -tol).all(axis=2) & (lam.sum(axis=2) <= 1.0 + tol)
            hit = ok.any(axis=1)
            out[sel[hit]] = ca[np.argmax(ok, axis=1)[hit]]
        return out


_TRI_RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    2: (
        np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.array([1 / 3, 1 / 3, 1 / 3]),
    ),
    3: (
        np.array(
            [
                [1 / 3, 1 / 3, 1 / 3],
                [0.6, 0.2, 0.2],
                [0.2, 0.6, 0.2],
                [0.2, 0.2, 0.6],
            ]
        ),
        np.array([-27 / 48, 25 / 48, 25 / 48, 25 / 48]),
    ),
}


def _triangle_rule(order):
    for deg in sorted(_TRI_RULES):
        if deg >= order:
            return _TRI_RULES[deg]
    return _TRI_RULES[max(_TRI_RULES)]


def _ear_clip(vertices):
    """Triangulate a simple CCW polygon by ear clipping."""
    idx = list(range(len(vertices)))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10000:
            raise GeometryError("ear clipping failed to make progress")
        n = len(idx)
        clipped = False
        for k in range(n):
            i0, i1, i2 = idx[(k - 1) % n], idx[k], idx[(k + 1) % n]
            a, b, c = vertices[i0], vertices[i1], vertices[i2]
            if _orient(a, b, c) <= 1e-15:
                continue  # reflex or degenerate corner
            ear = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = vertices[j]
                if (
                    _orient(a, b, p) >= -1e-15
                    and _orient(b, c, p) >= -1e-15
                    and _orient(c, a, p) >= -1e-15
                ):
                    ear = False
                    break
            if ear:
                tris.append((i0, i1, i2))
                del idx[k]
                clipped = True
                break
        if not clipped:
            raise GeometryError("polygon could not be ear-clipped (is it simple?)")
    tris.append(tuple(idx))
    return np.array(tris, dtype=np.int64)


def _refine(vertices, triangles):
    """One round of uniform midpoint (red) refinement."""
    verts = list(map(tuple, vertices))
    index = {v: i for i, v in enumerate(verts)}
    midpoint = {}

    def mid(i, j):
        key = (min(i, j), max(i, j))
        if key not in midpoint:
            p = tuple(0.5 * (np.asarray(verts[i]) + np.asarray(verts[j])))
            if p not in index:
                index[p] = len(verts)
                verts.append(p)
            midpoint[key] = index[p]
        return midpoint[key]

    out = []
    for a, b, c in triangles:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
    return np.array(verts, dtype=float), np.array(out, dtype=np.int64)


def build_mesh(domain: PolygonalDomain, h_target: float) -> TriMesh:
    """Ear-clip the polygon, then uniformly refine until h <= h_target.

    Boundary edges of the result are always subsets of polygon edges, so
    the boundary is resolved exactly at every refinement level.
    """
    if h_target <= 0:
        raise GeometryError("h_target must be positive")
    verts = domain.vertices.copy()
    tris = _ear_clip(verts)
    mesh = TriMesh(domain, verts, tris)
    while mesh.h > h_target:
        verts, tris = _refine(verts, tris)
        mesh = TriMesh(domain, verts, tris)
    return mesh


# ---------------------------------------------------------------------------
# rectangle meshes (order-m = 2 elements)
# ---------------------------------------------------------------------------

@dataclass
class RectMesh:
    """Axis-aligned rectangle mesh on a lattice covering a rectilinear polygon."""

    domain: PolygonalDomain
    origin: np.ndarray        # lattice origin
    pitch: float              # lattice spacing (square cells)
    vertices: np.ndarray      # (nv, 2)
    cells: np.ndarray         # (nc, 4) vertex ids, CCW from lower-left
    cell_ij: np.ndarray       # (nc, 2) lattice coordinates of lower-left corner

    def __post_init__(self):
        self._boundary = None
        self._occ = None

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def h(self) -> float:
        return self.pitch * math.sqrt(2.0)

    @property
    def areas(self):
        return np.full(self.n_cells, self.pitch**2)

    def cell_corner(self, c):
        return self.vertices[self.cells[c, 0]]

    def boundary_edges(self):
        """Cell edges on the domain boundary, as (i, j, cell) with outward normal right of i->j."""
        if self._boundary is not None:
            return self._boundary
        count = {}
        for c, quad in enumerate(self.cells):
            for k in range(4):
                i, j = int(quad[k]), int(quad[(k + 1) % 4])
                count.setdefault((min(i, j), max(i, j)), []).append((c, i, j))
        out = []
        for owners in count.values():
            if len(owners) == 1:
                c, i, j = owners[0]
                out.append((i, j, c))
        out.sort(key=lambda e: (tuple(self.vertices[e[0]]), tuple(self.vertices[e[1]])))
        self._boundary = out
        return out

    def boundary_vertex_ids(self):
        ids = set()
        for i, j, _ in self.boundary_edges():
            ids.add(i)
            ids.add(j)
        return np.array(sorted(ids), dtype=np.int64)

    def quadrature(self, order: int = 4):
        x, w = leggauss(order)
        x = 0.5 * (x + 1.0)
        w = 0.5 * w
        xx, yy = np.meshgrid(x, x, indexing="ij")
        ww = np.outer(w, w).ravel()
        ref = np.column_stack([xx.ravel(), yy.ravel()])
        corners = self.vertices[self.cells[:, 0]]
        pts = corners[:, None, :] + self.pitch * ref[None, :, :]
        wts = np.full((self.n_cells, len(ww)), self.pitch**2) * ww[None, :]
        return pts, wts

    def locate(self, points, tol=1e-10):
        """Cell index containing each point (-1 when outside every cell)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self._occ is None:
            nx = int(self.cell_ij[:, 0].max()) + 1
            ny = int(self.cell_ij[:, 1].max()) + 1
            occ = np.full((nx + 1, ny + 1), -1, dtype=np.int64)
            occ[self.cell_ij[:, 0], self.cell_ij[:, 1]] = np.arange(self.n_cells)
            self._occ = occ
        occ = self._occ
        rel = (pts - self.origin) / self.pitch
        ij0 = np.floor(rel).astype(np.int64)
        out = np.full(len(pts), -1, dtype=np.int64)
        # floor cell first; for points on shared edges try the lower/left neighbors
        for dx, dy in ((0, 0), (-1, 0), (0, -1), (-1, -1)):
            cand_ij = ij0 + (dx, dy)
            valid = (
                (cand_ij[:, 0] >= 0)
                & (cand_ij[:, 1] >= 0)
                & (cand_ij[:, 0] < occ.shape[0])
                & (cand_ij[:, 1] < occ.shape[1])
            )
            cid = np.full(len(pts), -1, dtype=np.int64)
            cid[valid] = occ[cand_ij[valid, 0], cand_ij[valid, 1]]
            inbox = np.all(rel >= cand_ij - tol, axis=1) & np.all(
                rel <= cand_ij + 1 + tol, axis=1
            )
            out = np.where((out < 0) & (cid >= 0) & inbox, cid, out)
        return out


def build_rect_mesh(domain: PolygonalDomain, h_target: float) -> RectMesh:
    """Uniform square-cell mesh of a rectilinear polygon.

    All polygon edges must be axis-parallel and all vertices must land on
    the lattice; the pitch is refined (up to 4 doublings) to make that
    happen, otherwise a GeometryError explains which vertex is off-lattice.
    """
    v = domain.vertices
    e = np.roll(v, -1, axis=0) - v
    if not np.all((np.abs(e[:, 0]) < 1e-12) | (np.abs(e[:, 1]) < 1e-12)):
        raise GeometryError("rectangle meshes need a rectilinear polygon")
    lo, hi = domain.bounding_box
    extent = float(max(hi - lo))
    n = max(1, math.ceil(extent / (h_target / math.sqrt(2.0))))
    for _ in range(5):
        pitch = extent / n
        offs = (v - lo[None, :]) / pitch
        if np.allclose(offs, np.round(offs), atol=1e-9):
            break
        n *= 2
    else:
        raise GeometryError(
            f"polygon vertex {v[np.argmax(np.abs(offs - np.round(offs)).sum(axis=1))]} "
            "does not land on the mesh lattice"
        )

    nx = int(round((hi[0] - lo[0]) / pitch))
    ny = int(round((hi[1] - lo[1]) / pitch))
    vid = {}
    verts = []

    def node(i, j):
        if (i, j) not in vid:
            vid[(i, j)] = len(verts)
            verts.append((lo[0] + i * pitch, lo[1] + j * pitch))
        return vid[(i, j)]

    cells, cij = [], []
    for i in range(nx):
        for j in range(ny):
            center = lo + pitch * (np.array([i, j]) + 0.5)
            if domain.contains(center[None, :], boundary_tol=0.0)[0]:
                cells.append(
                    (node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1))
                )
                cij.append((i, j))
    if not cells:
        raise GeometryError("no cells inside the domain; h_target too coarse")
    return RectMesh(
        domain=domain,
        origin=np.asarray(lo, dtype=float),
        pitch=pitch,
        vertices=np.array(verts, dtype=float),
        cells=np.array(cells, dtype=np.int64),
        cell_ij=np.array(cij, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# boundary quadrature
# ---------------------------------------------------------------------------

@dataclass
class BoundaryQuadrature:
    points: np.ndarray    # (n, 2)
    weights: np.ndarray   # (n,)
    normals: np.ndarray   # (n, 2) outward unit normals
    edge_of: np.ndarray   # (n,) index into mesh.boundary_edges()

    @property
    def total_length(self) -> float:
        return float(self.weights.sum())


def boundary_quadrature(mesh, order: int = 4) -> BoundaryQuadrature:
    """Gauss rule on every boundary edge of a mesh, with outward normals."""
    if not 1 <= order <= 10:
        raise GeometryError("boundary quadrature order must be within 1..10")
    x, w = leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    pts, wts, nrm, eid = [], [], [], []
    for k, (i, j, _) in enumerate(mesh.boundary_edges()):
        a, b = mesh.vertices[i], mesh.vertices[j]
        t = b - a
        length = float(np.linalg.norm(t))
        outward = np.array([t[1], -t[0]]) / length
        pts.append(a[None, :] + x[:, None] * t[None, :])
        wts.append(w * length)
        nrm.append(np.tile(outward, (len(x), 1)))
        eid.append(np.full(len(x), k, dtype=np.int64))
    return BoundaryQuadrature(
        points=np.concatenate(pts),
        weights=np.concatenate(wts),
        normals=np.concatenate(nrm),
        edge_of=np.concatenate(eid),
    )
