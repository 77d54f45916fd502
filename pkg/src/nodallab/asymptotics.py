"""Blow-up rescaling and the scalar diagnostics of the large-p limit.

The concentration scale of a nodal solution is eps_p with
eps_p^(-2) = p * sup_plus^(p-1); the negative part has its own scale
eps_tilde_p >= eps_p from sup_minus.  Zooming in at the extremum and
renormalizing,

    z_p(x) = (p / sup_plus) * (u(eps_p x + x_plus) - sup_plus),

the profiles approach the radial Liouville solution
z(x) = -2 log(1 + |x|^2 / 8) of -Δz = e^z, whose total mass is 8π.  The
record assembled here collects the energy, sup-norm, and mass quantities
whose p-weighted limits the ladder experiments probe, all in solution
coordinates (normalized by the dominant amplitude sup_plus, matching the
rescaled integrals by change of variables).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from skimage import measure

from . import nehari, pohozaev
from .geometry import Field
from .nehari import NodalSolution, power_abs

PROFILE_SPACING = 0.25  # rescaled lattice spacing
PROFILE_RADIUS = 4.0  # default comparison ball |x| <= R


def epsilon_p(sol: NodalSolution) -> tuple[float, float]:
    """(eps_p, eps_tilde_p) from the two extremal amplitudes."""
    p = sol.p
    eps = np.exp(-0.5 * (np.log(p) + (p - 1.0) * np.log(sol.sup_plus)))
    eps_t = np.exp(-0.5 * (np.log(p) + (p - 1.0) * np.log(sol.sup_minus)))
    return float(eps), float(eps_t)


def limit_profile(x) -> np.ndarray:
    """Radial Liouville profile z(x) = -2 log(1 + |x|^2/8)."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(np.atleast_2d(x) ** 2, axis=-1)
    out = -2.0 * np.log1p(r2 / 8.0)
    return out if out.size > 1 else float(out[0])


def limit_profile_mass(R: float) -> float:
    """Mass of e^z over |x| <= R by radial quadrature."""
    if R <= 0:
        raise ValueError("R must be positive")

    def integrand(s):
        return s * np.exp(-2.0 * np.log1p(s * s / 8.0))

    # split at the profile scale so the tail of large R is resolved
    pieces = [0.0, min(R, np.sqrt(8.0)), R]
    total = 0.0
    for a, b in zip(pieces, pieces[1:]):
        if b > a:
            val, _ = integrate.quad(integrand, a, b, limit=200)
            total += val
    return float(2.0 * np.pi * total)


@dataclass
class RescaledProfile:
    sign: int
    p: float
    eps: float
    center: np.ndarray
    sample_radius: float
    points: np.ndarray  # rescaled lattice coordinates, shape (M, 2)
    values: np.ndarray  # z_p samples
    fitted_mu: float
    resolved: bool
    truncated: bool


def rescale_profile(sol: NodalSolution, sign: int, R: float = PROFILE_RADIUS) -> RescaledProfile:
    """Sample the rescaled profile on a lattice in B(0, R).

    Both signs rescale with eps_p and normalize by sup_plus; the minus-sign
    profile is p/sup_plus * (-u(eps_p x + x_minus) - sup_plus), whose value
    at 0 determines the fitted Liouville parameter mu = exp(z(0)) in (0, 1].
    R is truncated if the rescaled ball does not fit inside the domain.  An
    unresolved peak (eps_p < 2h) is flagged but still sampled.
    """
    grid = sol.grid
    eps, _ = epsilon_p(sol)
    center = sol.x_plus if sign > 0 else sol.x_minus
    room = float(grid.domain.boundary_distance(center[None, :])[0]) - 2.0 * grid.h
    R_eff = min(R, room / eps)
    truncated = R_eff < R
    if R_eff <= 0:
        raise ValueError("no room around the concentration point")

    m = int(np.floor(R_eff / PROFILE_SPACING))
    axis = np.arange(-m, m + 1) * PROFILE_SPACING
    P, Q = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([P.ravel(), Q.ravel()], axis=1)
    pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= R_eff]
    phys = center[None, :] + eps * pts
    uvals = grid.interpolate(sol.u.values, phys)
    # the origin maps to the extremum node itself; use the nodal value so
    # z_p(0) is exact rather than an interpolation of it
    origin = np.nonzero((pts[:, 0] == 0.0) & (pts[:, 1] == 0.0))[0]
    node = np.argmax(sol.u.values) if sign > 0 else np.argmin(sol.u.values)
    uvals[origin] = sol.u.values[node]

    if sign > 0:
        z = (sol.p / sol.sup_plus) * (uvals - sol.sup_plus)
        mu = 1.0
    else:
        z = (sol.p / sol.sup_plus) * (-uvals - sol.sup_plus)
        mu = float(np.exp(z[origin[0]])) if len(origin) else float("nan")
    return RescaledProfile(
        sign=1 if sign > 0 else -1,
        p=sol.p,
        eps=eps,
        center=np.asarray(center, dtype=float),
        sample_radius=R_eff,
        points=pts,
        values=z,
        fitted_mu=mu,
        resolved=bool(eps >= 2.0 * grid.h),
        truncated=truncated,
    )


def profile_sup_error(profile: RescaledProfile, within: float = PROFILE_RADIUS) -> float:
    """sup |z_p - z| over sample points with |x| <= within."""
    r = np.hypot(profile.points[:, 0], profile.points[:, 1])
    sel = r <= within
    zlim = -2.0 * np.log1p(r[sel] ** 2 / 8.0)
    return float(np.abs(profile.values[sel] - zlim).max())


def zero_level_set(u: Field) -> np.ndarray:
    """Nodal line of u: marching-squares points of the zero level set."""
    grid = u.grid
    img = grid.as_image(u.values, fill=np.nan)
    contours = measure.find_contours(img, 0.0)
    if not contours:
        return np.zeros((0, 2))
    pts = np.concatenate(contours)
    x0, h = grid.xs[0], grid.h
    return np.stack([x0 + pts[:, 0] * h, x0 + pts[:, 1] * h], axis=1)


@dataclass
class DiagnosticsRecord:
    p: float
    pE: float
    pGrad: float
    pGradPlus: float
    pGradMinus: float
    sup_plus: float
    sup_minus: float
    K_p: float
    eps_p: float
    eps_tilde_p: float
    mass_plus: float
    mass_minus: float
    mass_plus_p: float
    mass_minus_p: float
    sep_boundary_plus: float
    sep_boundary_minus: float
    sep_nodal_plus: float
    sep_nodal_minus: float
    morse_whole: int
    morse_plus: int
    pohozaev_rel: float
    resolved: bool
    x_plus: np.ndarray
    x_minus: np.ndarray


def diagnostics(sol: NodalSolution, nodal_line: np.ndarray | None = None) -> DiagnosticsRecord:
    """Assemble the full scalar record for one converged solution."""
    grid = sol.grid
    p = sol.p
    h2 = grid.h**2
    if nodal_line is None:
        nodal_line = zero_level_set(sol.u)
    a_pp, a_mm, a_pm = nehari.part_pairings(sol.u)
    grad = a_pp + a_mm + 2.0 * a_pm
    plus = np.maximum(sol.u.values, 0.0)
    minus = np.minimum(sol.u.values, 0.0)
    sp_, sm = sol.sup_plus, sol.sup_minus
    eps, eps_t = epsilon_p(sol)

    d_bp = float(grid.domain.boundary_distance(sol.x_plus[None, :])[0])
    d_bm = float(grid.domain.boundary_distance(sol.x_minus[None, :])[0])
    if len(nodal_line):
        d_np = float(np.hypot(*(nodal_line - sol.x_plus).T).min())
        d_nm = float(np.hypot(*(nodal_line - sol.x_minus).T).min())
    else:
        d_np = d_nm = float("nan")

    return DiagnosticsRecord(
        p=p,
        pE=p * sol.energy,
        pGrad=p * grad,
        pGradPlus=p * (a_pp + a_pm),
        pGradMinus=p * (a_mm + a_pm),
        sup_plus=sp_,
        sup_minus=sm,
        K_p=p * (sp_ - sm),
        eps_p=eps,
        eps_tilde_p=eps_t,
        mass_plus=p * h2 * power_abs(plus, p + 1.0).sum() / sp_**2,
        mass_minus=p * h2 * power_abs(minus, p + 1.0).sum() / sp_**2,
        mass_plus_p=p * h2 * power_abs(plus, p).sum() / sp_,
        mass_minus_p=p * h2 * power_abs(minus, p).sum() / sp_,
        sep_boundary_plus=d_bp / eps,
        sep_boundary_minus=d_bm / eps,
        sep_nodal_plus=d_np / eps,
        sep_nodal_minus=d_nm / eps,
        morse_whole=nehari.morse_index(sol, "whole_domain"),
        morse_plus=nehari.morse_index(sol, "positive_part"),
        pohozaev_rel=pohozaev.pohozaev_check(sol).rel_residual,
        resolved=bool(grid.h <= eps),
        x_plus=sol.x_plus,
        x_minus=sol.x_minus,
    )


@dataclass
class Extrapolation:
    limit: float
    slope: float
    residual: float
    flagged: bool
    p_used: tuple


def extrapolate(values) -> Extrapolation:
    """Least-squares fit y ~ limit + slope/p over (p, y) pairs.

    Needs at least three distinct p.  The fit residual (rms) is reported and
    the result flagged when it exceeds 5% of the data range, since all the
    limits probed here carry corrections the affine model cannot represent.
    """
    pts = [(float(p), float(y)) for p, y in values]
    ps = np.array([p for p, _ in pts])
    ys = np.array([y for _, y in pts])
    if len(ps) < 3 or len(np.unique(ps)) < len(ps):
        raise ValueError("need at least 3 distinct p values")
    A = np.stack([np.ones_like(ps), 1.0 / ps], axis=1)
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    fit = A @ coef
    rms = float(np.sqrt(np.mean((ys - fit) ** 2)))
    yrange = float(ys.max() - ys.min())
    return Extrapolation(
        limit=float(coef[0]),
        slope=float(coef[1]),
        residual=rms,
        flagged=bool(rms > 0.05 * yrange) if yrange > 0 else False,
        p_used=tuple(ps),
    )
