import numpy as np
import pytest
from hypothesis import given, strategies as st

from nodallab import DomainSpec, Field, GeometryError, build_grid
from nodallab.geometry import THETA_MIN, nodal_components, split_signs

from conftest import rng_field


def test_domain_constructors_validate():
    with pytest.raises(GeometryError):
        DomainSpec.rectangle(-1.0, 1.0)
    with pytest.raises(GeometryError):
        DomainSpec.annulus(0.8, 0.5)
    with pytest.raises(GeometryError):
        DomainSpec.polygon([(0, 0), (1, 0), (1, 1), (0, -1)])  # self-crossing
    with pytest.raises(GeometryError):
        DomainSpec.polygon([(0, 0), (0, 1), (1, 1), (1, 0)])  # clockwise


def test_contains_and_distance_disk():
    disk = DomainSpec.unit_disk()
    pts = np.array([[0.0, 0.0], [0.5, 0.5], [1.0, 0.0], [1.1, 0.0]])
    assert list(disk.contains(pts)) == [True, True, False, False]
    d = disk.boundary_distance(np.array([[0.0, 0.0], [0.6, 0.0]]))
    assert d == pytest.approx([1.0, 0.4])


def test_contains_and_distance_rectangle_annulus():
    rect = DomainSpec.rectangle(2.0, 1.0)
    assert rect.contains(np.array([[0.9, 0.4]]))[0]
    assert not rect.contains(np.array([[1.0, 0.0]]))[0]
    assert rect.boundary_distance(np.array([[0.5, 0.1]]))[0] == pytest.approx(0.4)
    ann = DomainSpec.annulus(0.25, 1.0)
    assert not ann.contains(np.array([[0.1, 0.0]]))[0]
    assert ann.contains(np.array([[0.5, 0.0]]))[0]
    assert ann.boundary_distance(np.array([[0.5, 0.0]]))[0] == pytest.approx(0.25)


def test_polygon_contains_matches_rectangle():
    rect = DomainSpec.rectangle(1.0, 1.0)
    poly = DomainSpec.polygon([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])
    rng = np.random.default_rng(3)
    pts = rng.uniform(-0.7, 0.7, size=(200, 2))
    assert np.array_equal(rect.contains(pts), poly.contains(pts))


def test_boundary_loops_perimeter():
    for dom in (
        DomainSpec.unit_disk(),
        DomainSpec.rectangle(2.0, 1.0),
        DomainSpec.annulus(0.3, 1.0),
        DomainSpec.polygon([(0.0, 0.0), (1.0, 0.0), (0.5, 1.0)]),
    ):
        total = sum(w.sum() for _, _, w in dom.loops(0.01))
        assert total == pytest.approx(dom.perimeter(), rel=1e-12)


def test_boundary_normals_are_unit_outward():
    grid = build_grid(DomainSpec.unit_disk(), 65)
    nrm = np.hypot(grid.boundary_normals[:, 0], grid.boundary_normals[:, 1])
    assert np.allclose(nrm, 1.0)
    # outward on the circle: normal parallel to the point itself
    dots = np.sum(grid.boundary_points * grid.boundary_normals, axis=1)
    assert np.all(dots > 0.99)


def test_grid_structure(disk129):
    g = disk129
    assert g.num_interior == g.mask.sum()
    assert np.all((g.theta > 0.0) & (g.theta <= 1.0))
    assert np.all(g.theta[g.nb >= 0] == 1.0)
    assert np.all(g.theta >= THETA_MIN)
    # neighbour reciprocity: if j is my east neighbour, I am j's west one
    east = g.nb[:, 0]
    own = np.arange(g.num_interior)
    sel = east >= 0
    assert np.array_equal(g.nb[east[sel], 1], own[sel])
    # cut edges reach the wall (clamped fractions may overshoot slightly)
    cut = g.nb < 0
    ends = g.nodes[:, None, :] + g.theta[:, :, None] * np.array(
        [[1, 0], [-1, 0], [0, 1], [0, -1]]
    ) * g.h
    r = np.hypot(ends[..., 0], ends[..., 1])
    assert np.all(r[cut] >= 1.0 - 1e-9)
    assert np.all(r[cut] <= 1.0 + THETA_MIN * g.h)
    assert g.area() == pytest.approx(np.pi, rel=2e-3)


def test_build_grid_rejects_small_n():
    with pytest.raises(GeometryError):
        build_grid(DomainSpec.unit_disk(), 9)


def test_interpolation_reproduces_bilinear(disk129):
    g = disk129
    vals = 2.0 + 0.5 * g.nodes[:, 0] - 0.25 * g.nodes[:, 1]
    rng = np.random.default_rng(7)
    pts = rng.uniform(-0.5, 0.5, size=(50, 2))
    got = g.interpolate(vals, pts)
    want = 2.0 + 0.5 * pts[:, 0] - 0.25 * pts[:, 1]
    assert np.abs(got - want).max() < 1e-12


@given(seed=st.integers(0, 10**6))
def test_split_signs_identities(disk129, seed):
    u = Field(disk129, rng_field(disk129, seed, smooth=False))
    plus, minus = split_signs(u)
    assert np.all(plus.values >= 0.0)
    assert np.all(minus.values <= 0.0)
    assert np.array_equal(plus.values + minus.values, u.values)
    assert np.all(plus.values * minus.values == 0.0)


def test_nodal_components_counts(disk129):
    g = disk129
    x, y = g.nodes[:, 0], g.nodes[:, 1]
    u = Field(g, x)  # odd in x: two components
    comps = nodal_components(u)
    assert len(comps) == 2
    assert {c.sign for c in comps} == {1, -1}
    # four quadrant-sign components
    comps4 = nodal_components(Field(g, x * y))
    assert len(comps4) == 4
    # ordering: largest first
    sizes = [c.size for c in comps4]
    assert sizes == sorted(sizes, reverse=True)
