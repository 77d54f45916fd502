"""Domains, embedded-boundary grids, and sign decompositions.

All computations downstream live on a uniform node-centered lattice covering
the square bounding box of a planar domain.  Interior nodes are lattice points
strictly inside the domain.  The wall is represented per interior node by cut
fractions theta in (0, 1]: the distance, in units of the mesh width h, from
the node to the boundary along each of the four stencil directions (1 when the
stencil neighbour is itself interior).

Boundary quadrature geometry (points, outward unit normals, arc-length
weights) is generated analytically from the domain description and is never
reconstructed from the node mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

# stencil directions, order fixed: east, west, north, south
DIRECTIONS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.int64)

# cut fractions below this are clamped; perturbs the wall by at most
# THETA_MIN * h, which keeps the operator diagonal bounded
THETA_MIN = 1e-2


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class DomainSpec:
    """Analytic description of a bounded planar domain centered at the origin.

    kind is one of "unit_disk", "rectangle", "annulus", "polygon".  Use the
    classmethod constructors; they validate parameters.
    """

    kind: str
    width: float = 0.0
    height: float = 0.0
    r_inner: float = 0.0
    r_outer: float = 0.0
    vertices: tuple = ()

    @classmethod
    def unit_disk(cls) -> "DomainSpec":
        return cls(kind="unit_disk", r_outer=1.0)

    @classmethod
    def rectangle(cls, width: float, height: float) -> "DomainSpec":
        if width <= 0 or height <= 0:
            raise GeometryError(f"degenerate rectangle {width} x {height}")
        return cls(kind="rectangle", width=float(width), height=float(height))

    @classmethod
    def annulus(cls, r_inner: float, r_outer: float) -> "DomainSpec":
        if not 0 < r_inner < r_outer:
            raise GeometryError(f"degenerate annulus radii ({r_inner}, {r_outer})")
        return cls(kind="annulus", r_inner=float(r_inner), r_outer=float(r_outer))

    @classmethod
    def polygon(cls, vertices) -> "DomainSpec":
        verts = tuple((float(x), float(y)) for x, y in vertices)
        if len(verts) < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        v = np.asarray(verts)
        # shoelace: require counterclockwise orientation and nonzero area
        x, y = v[:, 0], v[:, 1]
        area2 = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        if area2 <= 0:
            raise GeometryError("polygon must be counterclockwise with positive area")
        if _polygon_self_intersects(v):
            raise GeometryError("polygon is self-intersecting")
        return cls(kind="polygon", vertices=verts)

    # -- bounding box -----------------------------------------------------

    def half_width(self) -> float:
        """Half side of the centered square bounding box the grid covers."""
        if self.kind == "unit_disk":
            return 1.0
        if self.kind == "rectangle":
            return max(self.width, self.height) / 2.0
        if self.kind == "annulus":
            return self.r_outer
        v = np.asarray(self.vertices)
        return float(np.abs(v).max())

    # -- point queries ----------------------------------------------------

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Strict interior test, vectorized over pts of shape (..., 2)."""
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        if self.kind == "unit_disk":
            return x * x + y * y < 1.0
        if self.kind == "rectangle":
            return (np.abs(x) < self.width / 2.0) & (np.abs(y) < self.height / 2.0)
        if self.kind == "annulus":
            r2 = x * x + y * y
            return (r2 > self.r_inner**2) & (r2 < self.r_outer**2)
        return _polygon_contains(np.asarray(self.vertices), pts)

    def boundary_distance(self, pts: np.ndarray) -> np.ndarray:
        """Distance from interior points to the boundary (analytic)."""
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        if self.kind == "unit_disk":
            return 1.0 - np.hypot(x, y)
        if self.kind == "rectangle":
            return np.minimum(self.width / 2.0 - np.abs(x), self.height / 2.0 - np.abs(y))
        if self.kind == "annulus":
            r = np.hypot(x, y)
            return np.minimum(self.r_outer - r, r - self.r_inner)
        v = np.asarray(self.vertices)
        d = np.full(pts.shape[:-1], np.inf)
        for a, b in zip(v, np.roll(v, -1, axis=0)):
            d = np.minimum(d, _segment_distance(a, b, pts))
        return d

    # -- boundary quadrature ----------------------------------------------

    def loops(self, spacing: float):
        """Closed boundary loops as (points, outward normals, arc weights).

        Each loop is ordered along the boundary; weights sum to the exact
        perimeter for circles and polygons.
        """
        if self.kind == "unit_disk":
            return [_circle_loop(1.0, spacing, outward=True)]
        if self.kind == "annulus":
            return [
                _circle_loop(self.r_outer, spacing, outward=True),
                _circle_loop(self.r_inner, spacing, outward=False),
            ]
        if self.kind == "rectangle":
            w2, h2 = self.width / 2.0, self.height / 2.0
            verts = np.array([[-w2, -h2], [w2, -h2], [w2, h2], [-w2, h2]])
            return [_polyline_loop(verts, spacing)]
        return [_polyline_loop(np.asarray(self.vertices), spacing)]

    def perimeter(self) -> float:
        if self.kind == "unit_disk":
            return 2.0 * np.pi
        if self.kind == "rectangle":
            return 2.0 * (self.width + self.height)
        if self.kind == "annulus":
            return 2.0 * np.pi * (self.r_inner + self.r_outer)
        v = np.asarray(self.vertices)
        return float(np.sum(np.hypot(*(np.roll(v, -1, axis=0) - v).T)))


def _circle_loop(radius, spacing, outward):
    m = max(64, int(np.ceil(2.0 * np.pi * radius / spacing)))
    t = (np.arange(m) + 0.5) * (2.0 * np.pi / m)
    unit = np.stack([np.cos(t), np.sin(t)], axis=1)
    pts = radius * unit
    nrm = unit if outward else -unit
    w = np.full(m, 2.0 * np.pi * radius / m)
    return pts, nrm, w


def _polyline_loop(verts, spacing):
    pts, nrm, w = [], [], []
    for a, b in zip(verts, np.roll(verts, -1, axis=0)):
        edge = b - a
        length = np.hypot(*edge)
        k = max(2, int(np.ceil(length / spacing)))
        s = (np.arange(k) + 0.5) / k
        pts.append(a + s[:, None] * edge)
        # ccw orientation: outward normal is the right-hand rotation of the tangent
        t = edge / length
        nrm.append(np.tile([t[1], -t[0]], (k, 1)))
        w.append(np.full(k, length / k))
    return np.concatenate(pts), np.concatenate(nrm), np.concatenate(w)


def _polygon_contains(verts, pts):
    x, y = pts[..., 0], pts[..., 1]
    inside = np.zeros(x.shape, dtype=bool)
    on_edge = np.zeros(x.shape, dtype=bool)
    for a, b in zip(verts, np.roll(verts, -1, axis=0)):
        on_edge |= _segment_distance(a, b, pts) == 0.0
        cond = (a[1] > y) != (b[1] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
        inside ^= cond & (x < xc)
    return inside & ~on_edge


def _segment_distance(a, b, pts):
    ab = b - a
    ap = pts - a
    t = np.clip((ap @ ab) / (ab @ ab), 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.hypot(*np.moveaxis(pts - proj, -1, 0))


def _polygon_self_intersects(v):
    m = len(v)
    segs = [(v[i], v[(i + 1) % m]) for i in range(m)]
    for i in range(m):
        for j in range(i + 2, m):
            if i == 0 and j == m - 1:
                continue
            if _segments_cross(*segs[i], *segs[j]):
                return True
    return False


def _segments_cross(a, b, c, d):
    def orient(p, q, r):
        return np.sign((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))

    return (
        orient(a, b, c) * orient(a, b, d) < 0
        and orient(c, d, a) * orient(c, d, b) < 0
    )


@dataclass
class Grid:
    """Embedded-boundary lattice for one domain.

    nodes:    (N, 2) coordinates of interior nodes, ordered row-major in (i, j)
    index:    (n, n) lattice -> interior index, -1 outside
    nb:       (N, 4) interior index of each stencil neighbour, -1 if the
              neighbour direction hits the wall first
    theta:    (N, 4) cut fractions in (0, 1]; 1 for regular edges
    boundary_points / boundary_normals / boundary_weights / boundary_loops:
              concatenated analytic quadrature loops; boundary_loops holds the
              loop id of each quadrature point, points ordered along each loop
    """

    domain: DomainSpec
    n: int
    h: float
    xs: np.ndarray
    mask: np.ndarray
    index: np.ndarray
    nodes: np.ndarray
    nb: np.ndarray
    theta: np.ndarray
    boundary_points: np.ndarray
    boundary_normals: np.ndarray
    boundary_weights: np.ndarray
    boundary_loops: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_interior(self) -> int:
        return len(self.nodes)

    def area(self) -> float:
        """Interior area estimate (node count times cell area)."""
        return self.num_interior * self.h**2

    def as_image(self, values: np.ndarray, fill=np.nan) -> np.ndarray:
        img = np.full((self.n, self.n), fill, dtype=float)
        img[self.mask] = values
        return img

    def interpolate(self, values: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """Bilinear interpolation of an interior-node vector at pts.

        Lattice nodes outside the domain contribute the boundary value 0,
        consistent with extending a Dirichlet field by zero.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x0 = self.xs[0]
        fx = (pts[:, 0] - x0) / self.h
        fy = (pts[:, 1] - x0) / self.h
        ix = np.clip(np.floor(fx).astype(np.int64), 0, self.n - 2)
        iy = np.clip(np.floor(fy).astype(np.int64), 0, self.n - 2)
        tx = fx - ix
        ty = fy - iy

        def val(i, j):
            k = self.index[i, j]
            out = np.zeros(len(k))
            good = k >= 0
            out[good] = values[k[good]]
            return out

        v = (
            (1 - tx) * (1 - ty) * val(ix, iy)
            + tx * (1 - ty) * val(ix + 1, iy)
            + (1 - tx) * ty * val(ix, iy + 1)
            + tx * ty * val(ix + 1, iy + 1)
        )
        return v


@dataclass
class Field:
    """Scalar grid function given by its interior-node values, zero on the wall."""

    grid: Grid
    values: np.ndarray

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def build_grid(domain: DomainSpec, n: int) -> Grid:
    """Build the embedded-boundary grid with n nodes per axis.

    Cut fractions are found by bisection on the same strict interior test
    that classifies the nodes, so the two can never disagree.
    """
    if n < 17:
        raise GeometryError(f"grid too coarse: n={n} < 17")
    L = domain.half_width()
    xs = np.linspace(-L, L, n)
    h = xs[1] - xs[0]
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    mask = domain.contains(pts)
    if mask.sum() == 0:
        raise GeometryError("no interior nodes; refine the grid")
    index = -np.ones((n, n), dtype=np.int64)
    index[mask] = np.arange(mask.sum())
    ii, jj = np.nonzero(mask)
    nodes = np.stack([xs[ii], xs[jj]], axis=1)
    N = len(nodes)

    nb = -np.ones((N, 4), dtype=np.int64)
    theta = np.ones((N, 4))
    for d, (di, dj) in enumerate(DIRECTIONS):
        ni, nj = ii + di, jj + dj
        in_lattice = (ni >= 0) & (ni < n) & (nj >= 0) & (nj < n)
        interior = np.zeros(N, dtype=bool)
        interior[in_lattice] = mask[ni[in_lattice], nj[in_lattice]]
        nb[interior, d] = index[ni[interior], nj[interior]]
        cut = ~interior
        if cut.any():
            theta[cut, d] = _cut_fraction(domain, nodes[cut], DIRECTIONS[d], h)

    loops = domain.loops(spacing=h / 2.0)
    bpts = np.concatenate([p for p, _, _ in loops])
    bnrm = np.concatenate([m for _, m, _ in loops])
    bwts = np.concatenate([w for _, _, w in loops])
    bloop = np.concatenate([np.full(len(w), k) for k, (_, _, w) in enumerate(loops)])

    return Grid(
        domain=domain,
        n=n,
        h=h,
        xs=xs,
        mask=mask,
        index=index,
        nodes=nodes,
        nb=nb,
        theta=theta,
        boundary_points=bpts,
        boundary_normals=bnrm,
        boundary_weights=bwts,
        boundary_loops=bloop,
    )


def _cut_fraction(domain, base, direction, h):
    """Fraction of h at which the wall cuts base + t*h*direction, t in (0, 1]."""
    lo = np.zeros(len(base))
    hi = np.ones(len(base))
    step = direction.astype(float) * h
    for _ in range(54):
        mid = 0.5 * (lo + hi)
        inside = domain.contains(base + mid[:, None] * step)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return np.clip(0.5 * (lo + hi), THETA_MIN, 1.0)


def split_signs(u: Field) -> tuple[Field, Field]:
    """Positive and negative parts: u = plus + minus, plus >= 0 >= minus."""
    plus = np.maximum(u.values, 0.0)
    minus = np.minimum(u.values, 0.0)
    return Field(u.grid, plus), Field(u.grid, minus)


@dataclass
class NodalComponent:
    sign: int
    nodes: np.ndarray  # interior indices, sorted

    @property
    def size(self) -> int:
        return len(self.nodes)


def nodal_components(u: Field, threshold: float = 0.0) -> list[NodalComponent]:
    """4-connected components of {u > threshold} and {u < -threshold}.

    Values with |u| <= threshold are treated as zero and belong to no
    component.  Components are ordered by decreasing size, ties broken by
    smallest contained node index.
    """
    if threshold < 0:
        raise GeometryError("threshold must be nonnegative")
    grid = u.grid
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    out = []
    for sign in (1, -1):
        img = grid.as_image(sign * u.values, fill=0.0) > threshold
        labels, count = ndimage.label(img, structure=structure)
        for lab in range(1, count + 1):
            nodes = np.sort(grid.index[labels == lab])
            out.append(NodalComponent(sign=sign, nodes=nodes))
    out.sort(key=lambda c: (-c.size, c.nodes[0]))
    return out
