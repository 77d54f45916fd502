"""Energy functional, nodal Nehari projection, and the sign-changing solver.

Discrete conventions.  The gradient energy of a grid function is the
quadratic form h^2 <u, A u> of the symmetric embedded-boundary Laplacian,
which expands into the usual sum of squared edge differences plus the cut
terms u_i^2/theta.  The gradient energy of a signed part is defined as the
pairing h^2 <u_part, A u> against the full field; in the continuum the two
agree (grad u = grad u_part a.e. on the support) and with this choice

    grad_energy(u) = grad_energy(plus part) + grad_energy(minus part)

holds exactly, and a discrete solution of -Δ_h u = |u|^(p-1) u lies exactly
on the discrete nodal Nehari set.  Powers are evaluated in the log domain so
exponents up to p ~ 200 with |u| <= 3 do not overflow spuriously.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import elliptic
from .elliptic import ConvergenceError
from .geometry import Field, Grid, nodal_components, split_signs


def power_abs(values: np.ndarray, q: float) -> np.ndarray:
    """|values|^q elementwise via exp(q log|.|), with a zero guard."""
    out = np.zeros_like(values, dtype=float)
    nz = values != 0
    out[nz] = np.exp(q * np.log(np.abs(values[nz])))
    if not np.isfinite(out).all():
        raise OverflowError(f"|u|^{q} overflowed; field amplitude too large")
    return out


def nonlinearity(values: np.ndarray, p: float) -> np.ndarray:
    """sign(u) |u|^p elementwise."""
    return np.sign(values) * power_abs(values, p)


def gradient_energy(u: Field) -> float:
    A = elliptic.laplacian(u.grid)
    return float(u.grid.h**2 * (u.values @ (A @ u.values)))


def part_pairings(u: Field) -> tuple[float, float, float]:
    """Quadratic-form pieces (a_pp, a_mm, a_pm) with a_xy = h^2 <u_x, A u_y>.

    The part gradient energies in the convention above are a_pp + a_pm and
    a_mm + a_pm; their sum telescopes to the full gradient energy.
    """
    A = elliptic.laplacian(u.grid)
    h2 = u.grid.h**2
    plus = np.maximum(u.values, 0.0)
    minus = np.minimum(u.values, 0.0)
    Ap = A @ plus
    a_pp = h2 * (plus @ Ap)
    a_pm = h2 * (minus @ Ap)
    a_mm = h2 * (minus @ (A @ minus))
    return float(a_pp), float(a_mm), float(a_pm)


def mass(u: Field, p: float) -> float:
    """h^2 sum |u|^(p+1)."""
    return float(u.grid.h**2 * power_abs(u.values, p + 1.0).sum())


def energy(u: Field, p: float) -> float:
    """E_p(u) = (1/2) grad_energy - mass/(p+1)."""
    return 0.5 * gradient_energy(u) - mass(u, p) / (p + 1.0)


def nehari_alpha(u: Field, p: float) -> float:
    """Scaling alpha with alpha*u on the Nehari set: (grad/mass)^(1/(p-1))."""
    g = gradient_energy(u)
    m = mass(u, p)
    if g <= 0 or m <= 0:
        raise ValueError("nehari_alpha needs a nonzero field")
    return float(np.exp(np.log(g / m) / (p - 1.0)))


def nehari_gap(u: Field, p: float) -> tuple[float, float]:
    """Relative constraint defects of the two parts on the nodal Nehari set."""
    a_pp, a_mm, a_pm = part_pairings(u)
    h2 = u.grid.h**2
    plus = np.maximum(u.values, 0.0)
    minus = np.minimum(u.values, 0.0)
    m_p = h2 * power_abs(plus, p + 1.0).sum()
    m_m = h2 * power_abs(minus, p + 1.0).sum()
    g_p = a_pp + a_pm
    g_m = a_mm + a_pm
    return abs(g_p - m_p) / g_p, abs(g_m - m_m) / g_m


def project_nodal_nehari(u: Field, p: float) -> Field:
    """Scale the two signed parts onto the nodal Nehari set.

    Solves the 2x2 system for (alpha, beta) such that both parts of
    alpha*plus + beta*minus satisfy the constraint in the pairing convention
    above.  The cross pairing a_pm is a small nonnegative coupling from edges
    crossing the nodal line, so a Newton iteration started from the decoupled
    scaling converges in a few steps.  A field already on the set returns
    unchanged with alpha = beta = 1 to machine precision.
    """
    if p <= 1:
        raise ValueError("projection requires p > 1")
    plus = np.maximum(u.values, 0.0)
    minus = np.minimum(u.values, 0.0)
    if not plus.any() or not minus.any():
        raise ValueError("field does not change sign; cannot project")
    a_pp, a_mm, a_pm = part_pairings(u)
    h2 = u.grid.h**2
    m_p = h2 * power_abs(plus, p + 1.0).sum()
    m_m = h2 * power_abs(minus, p + 1.0).sum()
    a = np.exp(np.log((a_pp + a_pm) / m_p) / (p - 1.0))
    b = np.exp(np.log((a_mm + a_pm) / m_m) / (p - 1.0))
    for _ in range(60):
        Fp = a * a * a_pp + a * b * a_pm - a ** (p + 1) * m_p
        Fm = b * b * a_mm + a * b * a_pm - b ** (p + 1) * m_m
        # the roundoff floor of F scales with the evaluated terms, not with
        # the raw pairings, so converge relative to those
        s_p = a * a * a_pp + a * b * a_pm + a ** (p + 1) * m_p
        s_m = b * b * a_mm + a * b * a_pm + b ** (p + 1) * m_m
        if abs(Fp) <= 1e-13 * s_p and abs(Fm) <= 1e-13 * s_m:
            break
        J = np.array(
            [
                [2 * a * a_pp + b * a_pm - (p + 1) * a**p * m_p, a * a_pm],
                [b * a_pm, 2 * b * a_mm + a * a_pm - (p + 1) * b**p * m_m],
            ]
        )
        da, db = np.linalg.solve(J, [-Fp, -Fm])
        if a + da == a and b + db == b:
            break  # step below representable increment; at the fixed point
        a, b = a + da, b + db
    else:
        raise ConvergenceError("nodal Nehari projection did not converge")
    return Field(u.grid, a * plus + b * minus)


def residual(u: Field, p: float) -> float:
    """Grid-scaled PDE residual h * ||A u - sign(u)|u|^p||_2."""
    A = elliptic.laplacian(u.grid)
    r = A @ u.values - nonlinearity(u.values, p)
    return float(u.grid.h * np.linalg.norm(r))


@dataclass
class SolverOptions:
    init: Union[str, "NodalSolution"] = "antisymmetric"
    step: float = 1.0
    tol_solve: float = 1e-8
    tol_nehari: float = 1e-10
    max_iters: int = 300


@dataclass
class NodalSolution:
    grid: Grid
    p: float
    u: Field
    energy: float
    grad_norm: float
    iterations: int
    x_plus: np.ndarray
    x_minus: np.ndarray
    sup_plus: float
    sup_minus: float
    nodal_count: int


def antisymmetric_seed(grid: Grid) -> Field:
    """Sign-changing seed x_1 * dist(x, wall), normalized to unit sup."""
    d = grid.domain.boundary_distance(grid.nodes)
    v = grid.nodes[:, 0] * d
    s = np.abs(v).max()
    if s == 0:
        raise ValueError("degenerate seed")
    return Field(grid, v / s)


def second_eigenfunction_seed(grid: Grid) -> Field:
    """Second Dirichlet eigenfunction; always sign-changing."""
    pairs = elliptic.smallest_eigenpairs(grid, 2, tol=1e-8)
    return pairs[1].vector


def _finalize(grid, p, u, grad_norm, iterations) -> NodalSolution:
    vals = u.values
    comps = nodal_components(u, threshold=0.0)
    if len(comps) < 2 or not (vals > 0).any() or not (vals < 0).any():
        raise ConvergenceError("iteration lost the sign change")
    sup_plus = float(vals.max())
    sup_minus = float(-vals.min())
    # orient so the dominant amplitude is positive, but only on a decisive
    # difference: for antisymmetric solutions the two sups tie to roundoff
    # and the orientation should stay with the seed, not with ulp noise
    if sup_plus < sup_minus * (1.0 - 1e-12):
        vals = -vals
        u = Field(grid, vals)
        sup_plus, sup_minus = sup_minus, sup_plus
        comps = nodal_components(u, threshold=0.0)
    x_plus = grid.nodes[int(np.argmax(vals))].copy()
    x_minus = grid.nodes[int(np.argmin(vals))].copy()
    return NodalSolution(
        grid=grid,
        p=p,
        u=u,
        energy=energy(u, p),
        grad_norm=grad_norm,
        iterations=iterations,
        x_plus=x_plus,
        x_minus=x_minus,
        sup_plus=sup_plus,
        sup_minus=sup_minus,
        nodal_count=len(comps),
    )


def solve_least_energy_nodal(grid: Grid, p: float, opts: SolverOptions | None = None) -> NodalSolution:
    """Minimize E_p over the discrete nodal Nehari set.

    Two phases.  Projected Sobolev-gradient descent (update direction is the
    Poisson preimage of the residual, step halved until the energy does not
    increase, iterate reprojected) contracts toward the least-energy nodal
    state because the projection removes the two unstable scaling directions.
    Once the preconditioned gradient norm is small the loop switches to a
    Newton iteration on the discrete equation, which converges quadratically
    to roundoff level.  Descent alone has a linear rate that degrades for
    large p, so the Newton tail is what makes high ladder points affordable.
    """
    if p <= 1:
        raise ValueError("requires p > 1")
    opts = opts or SolverOptions()
    A = elliptic.laplacian(grid)
    h = grid.h
    h2 = h * h

    if isinstance(opts.init, NodalSolution):
        if opts.init.grid.n != grid.n or opts.init.grid.domain != grid.domain:
            raise ValueError("continuation start must live on the same grid")
        u = Field(grid, opts.init.u.values.copy())
    elif opts.init == "antisymmetric":
        u = antisymmetric_seed(grid)
    elif opts.init == "second_eigenfunction":
        u = second_eigenfunction_seed(grid)
    else:
        raise ValueError(f"unknown init {opts.init!r}")
    u = project_nodal_nehari(u, p)

    switch = 1e-3
    newton_floor = min(1e-3 * opts.tol_solve, 1e-11)
    iterations = 0
    grad_norm = np.inf
    rounds = 0
    while iterations < opts.max_iters:
        # descent phase
        while iterations < opts.max_iters:
            r = A @ u.values - nonlinearity(u.values, p)
            g = elliptic.poisson_solve(Field(grid, r), tol=1e-8)
            grad_norm = float(np.sqrt(h2 * abs(g.values @ r)))
            if grad_norm <= switch:
                break
            E0 = energy(u, p)
            s = opts.step
            for _ in range(40):
                trial = Field(grid, u.values - s * g.values)
                if not (trial.values > 0).any() or not (trial.values < 0).any():
                    s *= 0.5
                    continue
                trial = project_nodal_nehari(trial, p)
                if energy(trial, p) <= E0 * (1 + 1e-14) + 1e-300:
                    u = trial
                    break
                s *= 0.5
            else:
                raise ConvergenceError(
                    "line search failed", residual=residual(u, p), iterations=iterations
                )
            iterations += 1
        # Newton phase
        ok = True
        for _ in range(30):
            r = A @ u.values - nonlinearity(u.values, p)
            res = h * np.linalg.norm(r)
            if res <= newton_floor:
                break
            V = p * power_abs(u.values, p - 1.0)
            J = (A - sp.diags(V)).tocsc()
            try:
                d = spla.splu(J).solve(r)
            except RuntimeError as exc:
                raise ConvergenceError(f"newton factorization failed: {exc}")
            s = 1.0
            for _ in range(12):
                trial = u.values - s * d
                rt = A @ trial - nonlinearity(trial, p)
                if np.linalg.norm(rt) < np.linalg.norm(r):
                    u = Field(grid, trial)
                    break
                s *= 0.5
            else:
                ok = False
                break
            iterations += 1
        r = A @ u.values - nonlinearity(u.values, p)
        res = h * np.linalg.norm(r)
        g = elliptic.poisson_solve(Field(grid, r), tol=1e-8)
        grad_norm = float(np.sqrt(h2 * abs(g.values @ r)))
        if res <= opts.tol_solve and grad_norm <= opts.tol_solve:
            sol = _finalize(grid, p, u, grad_norm, iterations)
            gap_p, gap_m = nehari_gap(sol.u, p)
            if max(gap_p, gap_m) > opts.tol_nehari:
                raise ConvergenceError(
                    f"Nehari constraint defect {max(gap_p, gap_m):.2e} above tolerance"
                )
            return sol
        if ok:
            switch *= 0.1  # descend further before retrying the Newton tail
        rounds += 1
        if rounds > 4:
            break
    raise ConvergenceError(
        "nodal solver did not converge", residual=residual(u, p), iterations=iterations
    )


def morse_index(sol: NodalSolution, region: str = "whole_domain", tol: float | None = None) -> int:
    """Number of eigenvalues below -tol of -Δ_h - p|u|^(p-1) on a region.

    region is "whole_domain", "positive_part" ({u > 0}) or "negative_part".
    The default tolerance 1e-3 * max(1, ||V||_inf) is far below the genuinely
    negative eigenvalues yet above the near-zero mode that grid symmetry
    breaking produces from continuous families (e.g. rotations of the disk).
    Counts within the three lowest eigenvalues.
    """
    V = sol.p * power_abs(sol.u.values, sol.p - 1.0)
    if tol is None:
        tol = 1e-3 * max(1.0, float(V.max()))
    if region == "whole_domain":
        mask = None
    elif region == "positive_part":
        mask = sol.u.values > 0
    elif region == "negative_part":
        mask = sol.u.values < 0
    else:
        raise ValueError(f"unknown region {region!r}")
    pairs = elliptic.smallest_eigenpairs(sol.grid, 3, potential=V, mask=mask, tol=1e-8)
    return int(sum(pair.value < -tol for pair in pairs))


TestFunctionEnergy = namedtuple("TestFunctionEnergy", ["grad_energy", "mass", "resolved"])


def test_function(grid: Grid, center, radius: float, p: float) -> Field:
    """Cutoff concentration bubble used to bound the Nehari energy level.

    The bubble is sqrt(e) * phi * (1 + z((x-a)/eps)/p) with z the radial
    Liouville profile, eps^2 = 1/(p e^((p-1)/2)), and phi a C^2 cutoff equal
    to 1 inside radius/2 and 0 outside radius.
    """
    center = np.asarray(center, dtype=float)
    if grid.domain.boundary_distance(center[None, :])[0] < radius:
        raise ValueError("bubble support reaches the wall")
    eps = float(np.exp(-0.5 * (np.log(p) + (p - 1.0) / 2.0)))
    d = np.hypot(grid.nodes[:, 0] - center[0], grid.nodes[:, 1] - center[1])
    s = np.clip((d - radius / 2.0) / (radius / 2.0), 0.0, 1.0)
    phi = 1.0 - s**3 * (6.0 * s * s - 15.0 * s + 10.0)
    z = -2.0 * np.log1p((d / eps) ** 2 / 8.0)
    return Field(grid, phi * np.sqrt(np.e) * (1.0 + z / p))


def test_function_energy(grid: Grid, center, radius: float, p: float) -> TestFunctionEnergy:
    """Energies of the cutoff bubble: (plain gradient energy, (p+1)-power
    mass), both unweighted by p, plus a flag that goes false when the peak
    scale eps drops under two cells."""
    w = test_function(grid, center, radius, p)
    eps = float(np.exp(-0.5 * (np.log(p) + (p - 1.0) / 2.0)))
    return TestFunctionEnergy(
        grad_energy=gradient_energy(w),
        mass=mass(w, p),
        resolved=bool(eps >= 2.0 * grid.h),
    )
