"""Green's function machinery for the concentration limit.

The Dirichlet Green's function splits as

    G(x, y) = -(1/2 pi) log|x - y| + H(x, y),

with H(., y) the harmonic regular part.  On the unit disk the method of
images gives H in closed form; on other domains H(., y) is produced by one
Poisson solve per source with the boundary data +(1/2 pi) log|b - y|.

Two limit objects built from these kernels are compared against solver
output: the difference field 8 pi e^{1/2} (G(., x+) - G(., x-)), which the
p-weighted solutions approach away from the concentration points, and the
four-component stationarity system

    dG/dx_i(x+, x-) - dH/dx_i(x+, x+) = 0,
    dG/dx_i(x-, x+) - dH/dx_i(x-, x-) = 0,    i = 1, 2,

satisfied by the limit pair.  The dH term at coincident arguments is read
as the first-slot partial derivative by default; the alternate reading as
the full gradient of the diagonal x -> H(x, x), which is twice the partial
by symmetry, sits behind the convention switch and the two are
cross-validated against the PDE sweep downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import elliptic
from .elliptic import ConvergenceError
from .geometry import DomainSpec, Field, Grid
from .nehari import NodalSolution

TWO_PI = 2.0 * np.pi
ANALYTIC_STEP = 1e-5  # central-difference step on closed-form kernels
GREEN_CACHE_LIMIT = 64


def _check_disk_points(x, y):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(2)
    if np.any(np.hypot(x[:, 0], x[:, 1]) > 1.0 + 1e-12):
        raise ValueError("evaluation point outside the closed unit disk")
    if np.hypot(*y) >= 1.0:
        raise ValueError("source point outside the open unit disk")
    return x, y


def green_disk(x, y) -> tuple:
    """(G, H) for the unit disk by the image formula.

    H(x, y) = (1/4 pi) log(|x|^2 |y|^2 - 2 x.y + 1), which handles y = 0
    (H = 0) without a special case.  x may be an array of points; scalar in,
    scalar out.
    """
    scalar = np.asarray(x, dtype=float).ndim == 1
    x, y = _check_disk_points(x, y)
    dx = x - y[None, :]
    r2 = dx[:, 0] ** 2 + dx[:, 1] ** 2
    harg = (x[:, 0] ** 2 + x[:, 1] ** 2) * (y @ y) - 2.0 * (x @ y) + 1.0
    with np.errstate(divide="ignore"):
        H = np.log(harg) / (2.0 * TWO_PI)
        G = -np.log(r2) / (2.0 * TWO_PI) + H
    if scalar:
        return float(G[0]), float(H[0])
    return G, H


def robin_disk(x) -> float:
    """Diagonal regular part H(x, x) = (1/2 pi) log(1 - |x|^2) on the disk."""
    scalar = np.asarray(x, dtype=float).ndim == 1
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r2 = x[:, 0] ** 2 + x[:, 1] ** 2
    if np.any(r2 >= 1.0):
        raise ValueError("point outside the open unit disk")
    out = np.log(1.0 - r2) / TWO_PI
    return float(out[0]) if scalar else out


@dataclass
class GreenField:
    source: np.ndarray
    values: Field  # G(., source) at interior nodes
    H_values: Field  # regular part at interior nodes
    method: str  # "analytic_disk" or "numeric"


def green_field(grid: Grid, y) -> GreenField:
    """G(., y) on the grid: closed form on the unit disk, numeric otherwise."""
    y = np.asarray(y, dtype=float).reshape(2)
    if grid.domain.kind == "unit_disk":
        G, H = green_disk(grid.nodes, y)
        return GreenField(source=y, values=Field(grid, G), H_values=Field(grid, H), method="analytic_disk")
    return green_numeric(grid, y)


def green_numeric(grid: Grid, y) -> GreenField:
    """Numeric Green's function by harmonic extension of the log kernel.

    Solves -Δ H = 0 with H = (1/2 pi) log|b - y| on the wall and assembles
    G = -(1/2 pi) log|x - y| + H.  Sources must keep 2h clearance from the
    wall.  Results are cached on the grid keyed by the source.
    """
    y = np.asarray(y, dtype=float).reshape(2)
    if not grid.domain.contains(y[None, :])[0]:
        raise ValueError("source point outside the domain")
    if grid.domain.boundary_distance(y[None, :])[0] < 2.0 * grid.h:
        raise ValueError("source point within 2h of the wall")
    cache = grid._cache.setdefault("green", {})
    key = (float(y[0]), float(y[1]))
    if key not in cache:

        def data(pts):
            return np.log(np.hypot(pts[:, 0] - y[0], pts[:, 1] - y[1])) / TWO_PI

        H = elliptic.poisson_solve(Field(grid, np.zeros(grid.num_interior)), boundary=data)
        dx = grid.nodes - y[None, :]
        with np.errstate(divide="ignore"):
            log_part = -np.log(dx[:, 0] ** 2 + dx[:, 1] ** 2) / (2.0 * TWO_PI)
        G = Field(grid, log_part + H.values)
        if len(cache) >= GREEN_CACHE_LIMIT:
            cache.pop(next(iter(cache)))
        cache[key] = GreenField(source=y, values=G, H_values=H, method="numeric")
    return cache[key]


def green_difference_field(grid: Grid, x_plus, x_minus) -> Field:
    """Limit field 8 pi e^{1/2} (G(., x+) - G(., x-)) on the grid."""
    x_plus = np.asarray(x_plus, dtype=float).reshape(2)
    x_minus = np.asarray(x_minus, dtype=float).reshape(2)
    if np.allclose(x_plus, x_minus):
        raise ValueError("concentration points must be distinct")
    gp = green_field(grid, x_plus)
    gm = green_field(grid, x_minus)
    scale = 8.0 * np.pi * np.sqrt(np.e)
    return Field(grid, scale * (gp.values.values - gm.values.values))


def compare_pu_to_green(sol: NodalSolution, exclusion: float = 0.2) -> tuple[float, float]:
    """(rel_err_sup, rel_err_l2) of p*u against the limit field.

    Both errors are measured over the interior nodes at least `exclusion`
    away from the solution's own extrema and normalized by the sup of the
    limit field there.
    """
    if exclusion <= 0:
        raise ValueError("exclusion radius must be positive")
    grid = sol.grid
    limit = green_difference_field(grid, sol.x_plus, sol.x_minus)
    dp = np.hypot(*(grid.nodes - sol.x_plus[None, :]).T)
    dm = np.hypot(*(grid.nodes - sol.x_minus[None, :]).T)
    keep = (dp >= exclusion) & (dm >= exclusion)
    if not keep.any():
        raise ValueError("exclusion radius leaves no comparison points")
    diff = sol.p * sol.u.values[keep] - limit.values[keep]
    scale = float(np.abs(limit.values[keep]).max())
    rel_sup = float(np.abs(diff).max() / scale)
    rel_l2 = float(np.sqrt(np.mean(diff**2)) / scale)
    return rel_sup, rel_l2


# -- stationarity system -------------------------------------------------


def _kernel_partials(a, b, i, step, grid):
    """(dG/dx_i(a, b), first-slot dH/dx_i(a, a)) by central differences."""
    e = np.zeros(2)
    e[i] = step
    if grid is None:
        gp, _ = green_disk(a + e, b)
        gm, _ = green_disk(a - e, b)
        _, hp = green_disk(a + e, a)
        _, hm = green_disk(a - e, a)
    else:
        gb = green_field(grid, b).values
        ha = green_field(grid, a).H_values
        gp, gm = grid.interpolate(gb.values, np.stack([a + e, a - e]))
        hp, hm = grid.interpolate(ha.values, np.stack([a + e, a - e]))
    return (gp - gm) / (2.0 * step), (hp - hm) / (2.0 * step)


def stationarity_residual(x_plus, x_minus, grid: Grid | None = None, convention: str = "first_slot") -> np.ndarray:
    """Four components of the concentration stationarity system.

    Order: (x+ equations i=1,2, then x- equations i=1,2).  grid=None means
    analytic disk kernels with step 1e-5; otherwise numeric kernels with
    step 2h.  Under "robin_gradient" the coincident-argument term is doubled
    (gradient of the diagonal map, by symmetry of the regular part).
    """
    if convention not in ("first_slot", "robin_gradient"):
        raise ValueError(f"unknown convention {convention!r}")
    a = np.asarray(x_plus, dtype=float).reshape(2)
    b = np.asarray(x_minus, dtype=float).reshape(2)
    step = ANALYTIC_STEP if grid is None else 2.0 * grid.h
    if np.hypot(*(a - b)) < 10.0 * step:
        raise ValueError("points closer than 10 derivative steps")
    factor = 2.0 if convention == "robin_gradient" else 1.0
    out = np.zeros(4)
    for i in range(2):
        dg, dh = _kernel_partials(a, b, i, step, grid)
        out[i] = dg - factor * dh
        dg, dh = _kernel_partials(b, a, i, step, grid)
        out[2 + i] = dg - factor * dh
    return out


@dataclass
class StationaryPair:
    x_plus: np.ndarray
    x_minus: np.ndarray
    residual: np.ndarray
    convention: str


def solve_stationarity(
    domain: DomainSpec,
    init,
    convention: str = "first_slot",
    grid: Grid | None = None,
    tol: float = 1e-8,
) -> StationaryPair:
    """Root-find the stationarity system from an initial pair of points.

    init is ((x+), (x-)).  Iterates that leave the domain, graze the wall,
    or collapse the pair are pushed back by a penalty residual; the returned
    pair is re-checked against `tol`.
    """
    if domain.kind != "unit_disk" and grid is None:
        raise ValueError("non-disk domains need a grid for numeric kernels")
    z0 = np.concatenate([np.asarray(p, dtype=float).reshape(2) for p in init])
    step = ANALYTIC_STEP if grid is None else 2.0 * grid.h
    margin = max(10.0 * step, 4.0 * (0.0 if grid is None else grid.h))

    def objective(z):
        a, b = z[:2], z[2:]
        pts = np.stack([a, b])
        inside = domain.contains(pts)
        if not inside.all():
            return 1e3 * (1.0 + np.abs(z))
        clearance = domain.boundary_distance(pts).min()
        gap = np.hypot(*(a - b))
        if clearance < margin or gap < 10.0 * step:
            return 1e3 * np.ones(4)
        return stationarity_residual(a, b, grid=grid, convention=convention)

    result = optimize.root(objective, z0, method="hybr", tol=1e-12)
    a, b = result.x[:2], result.x[2:]
    pts = np.stack([a, b])
    ok = domain.contains(pts).all() and np.hypot(*(a - b)) >= 10.0 * step
    res = stationarity_residual(a, b, grid=grid, convention=convention) if ok else np.full(4, np.inf)
    if not ok or np.linalg.norm(res) > tol:
        raise ConvergenceError(
            f"stationarity solve failed from {init}: {result.message}",
            residual=float(np.linalg.norm(res)),
            iterations=int(result.nfev),
        )
    return StationaryPair(x_plus=a, x_minus=b, residual=res, convention=convention)


# -- nodal line vs boundary ----------------------------------------------


@dataclass
class ContactReport:
    contact: bool
    sign_changes: int
    locations: np.ndarray  # (k, 2, 2): pairs of boundary points bracketing a change


def nodal_line_boundary_contact(sol) -> ContactReport:
    """Detect boundary contact of the nodal line from wall derivatives.

    Accepts a converged solution (scaled to p*u internally) or an
    already-scaled Field.  The outward normal derivative is sampled at the
    boundary quadrature points; values under the noise floor 1e-3 * max are
    skipped, and sign changes are counted cyclically along each loop.  An
    interior nodal line leaves the derivative one-signed (no contact); a
    nodal line meeting the wall forces at least two changes.
    """
    if isinstance(sol, NodalSolution):
        w = Field(sol.grid, sol.p * sol.u.values)
    else:
        w = sol
    grid = w.grid
    dn = elliptic.boundary_normal_derivatives(w)
    floor = 1e-3 * np.abs(dn).max()
    total = 0
    locations = []
    for loop in np.unique(grid.boundary_loops):
        sel = grid.boundary_loops == loop
        vals = dn[sel]
        pts = grid.boundary_points[sel]
        strong = np.abs(vals) > floor
        if strong.sum() < 2:
            continue
        sig = np.sign(vals[strong])
        spts = pts[strong]
        flips = sig != np.roll(sig, -1)
        total += int(flips.sum())
        for k in np.nonzero(flips)[0]:
            locations.append([spts[k], spts[(k + 1) % len(spts)]])
    return ContactReport(
        contact=total >= 2,
        sign_changes=total,
        locations=np.asarray(locations) if locations else np.zeros((0, 2, 2)),
    )


def green_flux_balance(grid: Grid, x_plus, x_minus) -> tuple[float, float]:
    """(net flux, relative imbalance) of d_nu(G(., x+) - G(., x-)) on the wall.

    Each kernel carries unit flux, so the imbalance is normalized by the
    mean single-source flux magnitude (about 1).
    """
    gp = green_field(grid, x_plus).values
    gm = green_field(grid, x_minus).values
    fp = elliptic.boundary_flux(gp)
    fm = elliptic.boundary_flux(gm)
    net = fp - fm
    scale = 0.5 * (abs(fp) + abs(fm))
    return float(net), float(abs(net) / scale)
