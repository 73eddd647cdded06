import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from divform.geometry import (
    GeometryError,
    PolygonalDomain,
    build_mesh,
    build_rect_mesh,
    l_shape,
    segment_segment_distance,
    unit_square,
    whitney_decompose,
)


def test_unit_square_basics():
    dom = unit_square()
    assert dom.area == pytest.approx(1.0)
    assert dom.perimeter == pytest.approx(4.0)
    assert dom.diameter == pytest.approx(np.sqrt(2.0))


def test_l_shape_area():
    dom = l_shape()
    assert dom.area == pytest.approx(0.75)


def test_distance_to_boundary_interior_points():
    dom = unit_square()
    pts = np.array([[0.5, 0.5], [0.25, 0.5], [0.01, 0.99]])
    d = dom.distance_to_boundary(pts)
    assert d == pytest.approx([0.5, 0.25, 0.01])


# -- Whitney grids ----------------------------------------------------------

def test_whitney_cubes_disjoint_and_inside():
    grid = whitney_decompose(unit_square(), 5)
    dom = grid.domain
    # no two cubes overlap: total area equals the covered fraction
    covered = float(np.sum(grid.sides**2))
    assert covered <= dom.area + 1e-12
    assert covered == pytest.approx(dom.area * (1.0 - grid.tail_fraction))
    lo = grid.corners
    hi = grid.corners + grid.sides[:, None]
    assert (lo >= -1e-12).all() and (hi <= 1.0 + 1e-12).all()


def test_whitney_side_comparable_to_distance():
    grid = whitney_decompose(unit_square(), 6)
    centers = grid.corners + 0.5 * grid.sides[:, None]
    d = grid.domain.distance_to_boundary(centers)
    ratio = d / grid.sides
    assert ratio.min() >= 0.5 - 1e-12
    assert ratio.max() <= 4.0 * np.sqrt(2.0) + 1e-12


@pytest.mark.parametrize("depth,expected", [(4, 0.12109375), (5, 0.06152344), (6, 0.03100586)])
def test_whitney_tail_shrinks_geometrically(depth, expected):
    grid = whitney_decompose(unit_square(), depth)
    assert grid.tail_fraction == pytest.approx(expected, rel=1e-5)


def test_whitney_locate_roundtrip():
    grid = whitney_decompose(l_shape(), 5)
    rng = np.random.default_rng(3)
    k = rng.integers(0, len(grid.corners), size=200)
    pts = grid.corners[k] + grid.sides[k, None] * rng.uniform(0.05, 0.95, size=(200, 2))
    assert (grid.locate(pts) == k).all()


def test_whitney_locate_outside_is_negative():
    grid = whitney_decompose(unit_square(), 4)
    idx = grid.locate(np.array([[2.0, 2.0], [-0.3, 0.4]]))
    assert (idx < 0).all()


def test_whitney_quadrature_weights_sum_to_cube_area():
    grid = whitney_decompose(unit_square(), 4)
    _, wts = grid.quadrature(3)
    np.testing.assert_allclose(wts.sum(axis=1), grid.sides**2, rtol=1e-13)


# -- triangle meshes --------------------------------------------------------

def test_build_mesh_covers_domain():
    for dom in (unit_square(), l_shape()):
        mesh = build_mesh(dom, 0.125)
        assert mesh.areas.sum() == pytest.approx(dom.area)
        assert mesh.areas.min() > 0.0


def test_trimesh_boundary_edges_form_closed_loop():
    mesh = build_mesh(unit_square(), 0.25)
    edges = mesh.boundary_edges()
    # each boundary vertex appears exactly once as a start and once as an end
    starts = sorted(e[0] for e in edges)
    ends = sorted(e[1] for e in edges)
    assert starts == sorted(set(starts))
    assert starts == ends


def test_trimesh_locate_and_barycentric():
    mesh = build_mesh(l_shape(), 0.2)
    rng = np.random.default_rng(11)
    t = rng.integers(0, len(mesh.triangles), size=100)
    lam = rng.dirichlet([1.0, 1.0, 1.0], size=100)
    pts = np.einsum("nk,nkd->nd", lam, mesh.vertices[mesh.triangles[t]])
    found = mesh.locate(pts)
    assert (found >= 0).all()
    # the located triangle must actually contain the point
    bl = mesh.barycentric(pts, found)
    assert bl.min() >= -1e-9


def test_trimesh_quadrature_integrates_linears_exactly():
    mesh = build_mesh(unit_square(), 0.3)
    pts, wts = mesh.quadrature(2)
    total = np.sum(wts * (3.0 * pts[..., 0] - pts[..., 1] + 2.0))
    assert total == pytest.approx(3.0 * 0.5 - 0.5 + 2.0, rel=1e-12)


# -- rectangle meshes -------------------------------------------------------

def test_rect_mesh_structure():
    # pitch is chosen so the cell diagonal stays below the target
    mesh = build_rect_mesh(unit_square(), 0.25)
    assert len(mesh.cells) == 36
    pts, wts = mesh.quadrature(3)
    assert wts.sum() == pytest.approx(1.0)
    inside = mesh.locate(np.array([[0.1, 0.1], [0.9, 0.45]]))
    assert (inside >= 0).all()


def test_rect_mesh_rejects_non_rectilinear_domain():
    tri = PolygonalDomain(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]]))
    with pytest.raises(GeometryError):
        build_rect_mesh(tri, 0.25)


# -- segment distance -------------------------------------------------------

@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_segment_distance_symmetric_and_nonnegative(seed):
    rng = np.random.default_rng(seed)
    a, b, c, d = rng.uniform(-1.0, 1.0, size=(4, 2))
    d1 = segment_segment_distance(a, b, c, d)
    d2 = segment_segment_distance(c, d, a, b)
    assert d1 == pytest.approx(d2, abs=1e-12)
    assert d1 >= 0.0
    # never smaller than the endpoint-to-endpoint minimum could allow
    emax = min(np.linalg.norm(a - c), np.linalg.norm(a - d),
               np.linalg.norm(b - c), np.linalg.norm(b - d))
    assert d1 <= emax + 1e-12


def test_segment_distance_crossing_is_zero():
    d = segment_segment_distance(
        np.array([-1.0, 0.0]), np.array([1.0, 0.0]),
        np.array([0.0, -1.0]), np.array([0.0, 1.0]),
    )
    assert d == 0.0
