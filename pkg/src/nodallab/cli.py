"""Experiment orchestration: config, p-ladder runs, reports, CLI.

A run solves the nodal problem along an increasing p-ladder with
continuation (each exponent seeded by the previous solution), assembles
per-p diagnostics, rescaled-profile comparisons, Green's-function limit
errors, boundary-contact and Pohozaev checks, then extrapolates the
p-weighted quantities in 1/p against their predicted limits:

    p * grad energy -> 16 pi e,    each signed part -> 8 pi e,
    p * energy      -> 8 pi e,     sup norms -> e^{1/2},
    p-weighted masses -> 8 pi.

Unresolved ladder points (peak scale eps_p under one cell) are recorded but
left out of the extrapolations by default.  Everything is deterministic for
a fixed config; outputs are byte-stable apart from one timestamp.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import asymptotics, elliptic, greens, nehari, pohozaev
from .elliptic import ConvergenceError
from .geometry import DomainSpec, Field, build_grid
from .nehari import SolverOptions, solve_least_energy_nodal

CSV_HEADER = (
    "p,pE,pGrad,pGradPlus,pGradMinus,sup_plus,sup_minus,K_p,eps_p,eps_tilde_p,"
    "mass_plus,mass_minus,mass_plus_p,mass_minus_p,sep_boundary_plus,sep_boundary_minus,"
    "sep_nodal_plus,sep_nodal_minus,morse_whole,morse_plus,pohozaev_rel,resolved"
)

DEFAULTS = {
    "n": 257,
    "refinement": [],
    "p_ladder": [3.0, 4.0, 6.0, 8.0],
    "seeds": ["antisymmetric"],
    "tol_solve": 1e-8,
    "tol_nehari": 1e-10,
    "profile_radius": 4.0,
    "exclusion": 0.2,
    "output_dir": "out",
    "stationarity_convention": "first_slot",
    "extrapolation_points": 3,
}

EXTRAPOLATION_TARGETS = {
    "pGrad": 16.0 * np.pi * np.e,
    "pGradPlus": 8.0 * np.pi * np.e,
    "pGradMinus": 8.0 * np.pi * np.e,
    "pE": 8.0 * np.pi * np.e,
    "sup_plus": np.sqrt(np.e),
    "sup_minus": np.sqrt(np.e),
    "mass_plus": 8.0 * np.pi,
    "mass_minus": 8.0 * np.pi,
    "mass_plus_p": 8.0 * np.pi,
    "mass_minus_p": 8.0 * np.pi,
}


@dataclass
class ExperimentConfig:
    domain: DomainSpec
    n: int
    p_ladder: tuple
    refinement: tuple = ()
    seeds: tuple = ("antisymmetric",)
    tol_solve: float = 1e-8
    tol_nehari: float = 1e-10
    profile_radius: float = 4.0
    exclusion: float = 0.2
    output_dir: str = "out"
    stationarity_convention: str = "first_slot"
    extrapolation_points: int = 3

    def __post_init__(self):
        ladder = tuple(float(p) for p in self.p_ladder)
        if not ladder:
            raise ValueError("empty p ladder")
        if any(p <= 1.0 for p in ladder):
            raise ValueError("all exponents must exceed 1")
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("p ladder must be strictly increasing")
        object.__setattr__(self, "p_ladder", ladder)
        for n in (self.n, *self.refinement):
            if n % 2 == 0:
                raise ValueError(f"grid size {n} must be odd (node-centered symmetry)")
        if self.stationarity_convention not in ("first_slot", "robin_gradient"):
            raise ValueError(f"unknown stationarity convention {self.stationarity_convention!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        data = dict(DEFAULTS)
        data.update(raw)
        dom = data.pop("domain", {"kind": "unit_disk"})
        domain = parse_domain(dom)
        known = {k: data[k] for k in DEFAULTS}
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(
            domain=domain,
            n=int(known["n"]),
            p_ladder=tuple(known["p_ladder"]),
            refinement=tuple(int(m) for m in known["refinement"]),
            seeds=tuple(known["seeds"]),
            tol_solve=float(known["tol_solve"]),
            tol_nehari=float(known["tol_nehari"]),
            profile_radius=float(known["profile_radius"]),
            exclusion=float(known["exclusion"]),
            output_dir=str(known["output_dir"]),
            stationarity_convention=str(known["stationarity_convention"]),
            extrapolation_points=int(known["extrapolation_points"]),
        )

    def effective(self) -> dict:
        out = {k: getattr(self, k) for k in DEFAULTS}
        out["p_ladder"] = list(self.p_ladder)
        out["refinement"] = list(self.refinement)
        out["seeds"] = list(self.seeds)
        out["domain"] = domain_to_dict(self.domain)
        return out


def parse_domain(raw: dict) -> DomainSpec:
    kind = raw.get("kind", "unit_disk")
    if kind == "unit_disk":
        return DomainSpec.unit_disk()
    if kind == "rectangle":
        return DomainSpec.rectangle(raw["width"], raw["height"])
    if kind == "annulus":
        return DomainSpec.annulus(raw["r_inner"], raw["r_outer"])
    if kind == "polygon":
        return DomainSpec.polygon(raw["vertices"])
    raise ValueError(f"unknown domain kind {kind!r}")


def domain_to_dict(domain: DomainSpec) -> dict:
    out = {"kind": domain.kind}
    if domain.kind == "rectangle":
        out.update(width=domain.width, height=domain.height)
    elif domain.kind == "annulus":
        out.update(r_inner=domain.r_inner, r_outer=domain.r_outer)
    elif domain.kind == "polygon":
        out["vertices"] = [list(v) for v in domain.vertices]
    return out


@dataclass
class Report:
    generated_at: str
    config: dict
    records: list
    failures: list
    extrapolations: dict
    green_errors: list
    contacts: list
    limit_field_contact: dict
    profiles_summary: list
    pohozaev_reports: list
    stationarity: dict
    flux_balance: dict
    # in-memory only, not serialized
    solutions: dict = field(default_factory=dict, repr=False)
    profile_objects: list = field(default_factory=list, repr=False)


def _record_to_row(rec) -> dict:
    row = asdict(rec)
    row["x_plus"] = [float(v) for v in rec.x_plus]
    row["x_minus"] = [float(v) for v in rec.x_minus]
    return row


def run_experiment(config: ExperimentConfig, log=lambda msg: None) -> Report:
    """Execute the ladder and assemble the full report."""
    grid = build_grid(config.domain, config.n)
    log(f"grid: {config.domain.kind}, n={config.n}, interior nodes {grid.num_interior}")

    records, failures, green_errors, contacts = [], [], [], []
    profile_rows, poho_rows, profile_objects = [], [], []
    solutions = {}
    last_good = None
    for p in config.p_ladder:
        opts = SolverOptions(
            init=last_good if last_good is not None else config.seeds[0],
            tol_solve=config.tol_solve,
            tol_nehari=config.tol_nehari,
        )
        try:
            sol = solve_least_energy_nodal(grid, p, opts)
        except (ConvergenceError, OverflowError) as exc:
            log(f"p={p}: solve failed: {exc}")
            failures.append({"p": p, "error": str(exc)})
            continue
        last_good = sol
        solutions[p] = sol
        rec = asymptotics.diagnostics(sol)
        records.append(rec)
        rel_sup, rel_l2 = greens.compare_pu_to_green(sol, exclusion=config.exclusion)
        green_errors.append({"p": p, "rel_err_sup": rel_sup, "rel_err_l2": rel_l2})
        contact = greens.nodal_line_boundary_contact(sol)
        contacts.append({"p": p, "contact": contact.contact, "sign_changes": contact.sign_changes})
        rep = pohozaev.pohozaev_check(sol)
        poho_rows.append({"p": p, "lhs": rep.lhs, "rhs": rep.rhs, "rel_residual": rep.rel_residual})
        for sign in (1, -1):
            prof = asymptotics.rescale_profile(sol, sign, R=config.profile_radius)
            profile_objects.append(prof)
            profile_rows.append(
                {
                    "p": p,
                    "sign": prof.sign,
                    "eps": prof.eps,
                    "fitted_mu": prof.fitted_mu,
                    "sup_error": asymptotics.profile_sup_error(prof),
                    "resolved": prof.resolved,
                    "truncated": prof.truncated,
                }
            )
        log(
            f"p={p}: E={sol.energy:.6f} sup+={sol.sup_plus:.5f} res={sol.grad_norm:.2e} "
            f"resolved={rec.resolved}"
        )

    extrapolations = {}
    resolved = [r for r in records if r.resolved]
    window = resolved[-config.extrapolation_points :]
    if len(window) >= 3:
        for name, target in EXTRAPOLATION_TARGETS.items():
            ext = asymptotics.extrapolate([(r.p, getattr(r, name)) for r in window])
            extrapolations[name] = {
                "limit": ext.limit,
                "slope": ext.slope,
                "residual": ext.residual,
                "flagged": ext.flagged,
                "p_used": list(ext.p_used),
                "target": float(target),
            }

    stationarity = _stationarity_section(config, grid, records)
    limit_contact = {}
    flux = {}
    pair = stationarity.get("selected_pair")
    if pair is None and records:
        pair = (records[-1].x_plus, records[-1].x_minus)
    if pair is not None:
        limit_field = greens.green_difference_field(grid, pair[0], pair[1])
        rep = greens.nodal_line_boundary_contact(limit_field)
        limit_contact = {"contact": rep.contact, "sign_changes": rep.sign_changes}
        net, rel = greens.green_flux_balance(grid, pair[0], pair[1])
        flux = {"net": net, "rel": rel}

    stationarity.pop("selected_pair", None)
    return Report(
        generated_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        config=config.effective(),
        records=records,
        failures=failures,
        extrapolations=extrapolations,
        green_errors=green_errors,
        contacts=contacts,
        limit_field_contact=limit_contact,
        profiles_summary=profile_rows,
        pohozaev_reports=poho_rows,
        stationarity=stationarity,
        flux_balance=flux,
        solutions=solutions,
        profile_objects=profile_objects,
    )


def _stationarity_section(config, grid, records) -> dict:
    """Solve the concentration system under both derivative conventions.

    The convention whose root is closer to the PDE sweep's concentration
    distance is reported as `matching_convention`; the configured one drives
    the limit-field diagnostics.
    """
    out = {"configured_convention": config.stationarity_convention}
    init = (np.array([0.3, 0.0]), np.array([-0.3, 0.0]))
    kw = {} if config.domain.kind == "unit_disk" else {"grid": grid}
    roots = {}
    for conv in ("first_slot", "robin_gradient"):
        try:
            pair = greens.solve_stationarity(config.domain, init, convention=conv, **kw)
        except (ConvergenceError, ValueError) as exc:
            roots[conv] = {"error": str(exc)}
            continue
        roots[conv] = {
            "x_plus": [float(v) for v in pair.x_plus],
            "x_minus": [float(v) for v in pair.x_minus],
            "residual_norm": float(np.linalg.norm(pair.residual)),
        }
        if conv == config.stationarity_convention:
            out["selected_pair"] = (pair.x_plus, pair.x_minus)
    out["roots"] = roots

    resolved = [r for r in records if r.resolved]
    if resolved:
        observed = float(np.mean([np.hypot(*r.x_plus) for r in resolved[-3:]]))
        out["observed_concentration_distance"] = observed
        best, best_gap = None, np.inf
        for conv, root in roots.items():
            if "x_plus" not in root:
                continue
            gap = abs(np.hypot(*root["x_plus"]) - observed)
            if gap < best_gap:
                best, best_gap = conv, gap
        if best is not None:
            out["matching_convention"] = best
            out["matching_gap"] = float(best_gap)
    return out


# -- output emission -----------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj]
    return obj


def emit_outputs(report: Report, out_dir) -> dict:
    """Write diagnostics.csv, profiles/, fields/, report.json, manifest.json.

    Byte-stable for identical reports; the manifest carries size and sha256
    of every emitted file.  Returns the manifest dict.
    """
    out = Path(out_dir)
    try:
        (out / "profiles").mkdir(parents=True, exist_ok=True)
        (out / "fields").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc

    files = {}

    def write(rel: str, text: str):
        path = out / rel
        try:
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        files[rel] = {
            "bytes": len(text.encode()),
            "sha256": hashlib.sha256(text.encode()).hexdigest(),
        }

    cols = CSV_HEADER.split(",")
    lines = [CSV_HEADER]
    rows = {r.p: r for r in report.records}
    failed = {f["p"] for f in report.failures}
    for p in sorted(set(rows) | failed):
        if p in rows:
            rec = rows[p]
            lines.append(",".join(_fmt(getattr(rec, c)) for c in cols))
        else:
            lines.append(",".join([_fmt(p)] + ["nan"] * (len(cols) - 2) + ["failed"]))
    write("diagnostics.csv", "\n".join(lines) + "\n")

    for prof in report.profile_objects:
        sign = "plus" if prof.sign > 0 else "minus"
        zlim = asymptotics.limit_profile(prof.points)
        body = ["x1,x2,z_p,z,z_p_minus_z"]
        for (x1, x2), zp, zl in zip(prof.points, prof.values, np.atleast_1d(zlim)):
            body.append(",".join(_fmt(v) for v in (x1, x2, zp, zl, zp - zl)))
        write(f"profiles/p{_fmt(prof.p)}_{sign}.csv", "\n".join(body) + "\n")

    if report.solutions:
        p_last = max(report.solutions)
        sol = report.solutions[p_last]
        body = ["x,y,value"]
        for (x, y), v in zip(sol.grid.nodes, sol.u.values):
            body.append(",".join(_fmt(t) for t in (x, y, v)))
        write(f"fields/u_p{_fmt(p_last)}.csv", "\n".join(body) + "\n")
        limit = greens.green_difference_field(sol.grid, sol.x_plus, sol.x_minus)
        body = ["x,y,value"]
        for (x, y), v in zip(sol.grid.nodes, limit.values):
            body.append(",".join(_fmt(t) for t in (x, y, v)))
        write("fields/green_difference.csv", "\n".join(body) + "\n")

    payload = {
        "generated_at": report.generated_at,
        "config": report.config,
        "records": [_record_to_row(r) for r in report.records],
        "failures": report.failures,
        "extrapolations": report.extrapolations,
        "green_errors": report.green_errors,
        "contacts": report.contacts,
        "limit_field_contact": report.limit_field_contact,
        "profiles": report.profiles_summary,
        "pohozaev": report.pohozaev_reports,
        "stationarity": report.stationarity,
        "flux_balance": report.flux_balance,
    }
    write("report.json", json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n")
    write("effective_config.json", json.dumps(_jsonable(report.config), sort_keys=True, indent=2) + "\n")

    manifest = {"files": {k: files[k] for k in sorted(files)}}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest


# -- verify subcommand ---------------------------------------------------


def _verify_poisson() -> tuple[bool, str]:
    domain = DomainSpec.rectangle(1.0, 1.0)
    grid = build_grid(domain, 129)
    x, y = grid.nodes[:, 0], grid.nodes[:, 1]
    exact = np.sin(np.pi * (x + 0.5)) * np.sin(np.pi * (y + 0.5))
    f = Field(grid, 2.0 * np.pi**2 * exact)
    u = elliptic.poisson_solve(f)
    err = float(np.abs(u.values - exact).max())
    return err <= 1e-3, f"manufactured Poisson sup error {err:.3e} (tol 1e-3)"


def _verify_eigenvalue() -> tuple[bool, str]:
    grid = build_grid(DomainSpec.unit_disk(), 257)
    lam = elliptic.smallest_eigenpairs(grid, 1)[0].value
    target = 5.783185962946783  # square of the first Bessel J0 zero
    rel = abs(lam - target) / target
    return rel <= 5e-3, f"disk principal eigenvalue rel error {rel:.3e} (tol 5e-3)"


def _verify_liouville() -> tuple[bool, str]:
    worst = 0.0
    for R in (np.sqrt(8.0), 10.0, 1000.0):
        got = asymptotics.limit_profile_mass(R)
        want = 8.0 * np.pi * R**2 / (8.0 + R**2)
        worst = max(worst, abs(got - want) / want)
    return worst <= 1e-3, f"limit profile mass vs closed form, worst rel {worst:.3e} (tol 1e-3)"


def _verify_green_symmetry() -> tuple[bool, str]:
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(64):
        x, y = rng.uniform(-0.6, 0.6, size=(2, 2))
        gx, _ = greens.green_disk(x, y)
        gy, _ = greens.green_disk(y, x)
        worst = max(worst, abs(gx - gy))
    return worst <= 1e-12, f"disk Green symmetry, worst |G(x,y)-G(y,x)| = {worst:.2e} (tol 1e-12)"


def run_verify(out=print) -> int:
    checks = [
        ("poisson", _verify_poisson),
        ("eigenvalue", _verify_eigenvalue),
        ("liouville_mass", _verify_liouville),
        ("green_symmetry", _verify_green_symmetry),
    ]
    failures = 0
    for name, fn in checks:
        ok, msg = fn()
        out(f"[{'PASS' if ok else 'FAIL'}] {name}: {msg}")
        failures += 0 if ok else 1
    return failures


# -- entry point ---------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nodallab",
        description="Nodal Lane-Emden solver laboratory: p-ladder experiments, "
        "concentration diagnostics, and analytic self-checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a ladder experiment from a JSON config")
    p_run.add_argument("config", help="path to the JSON config")
    p_run.add_argument("--output", help="override the config's output directory")

    sub.add_parser("verify", help="run the analytic oracle self-tests")

    p_st = sub.add_parser("stationarity", help="root-find the concentration system")
    p_st.add_argument("domain", choices=["unit_disk", "rectangle", "annulus"])
    p_st.add_argument("--convention", default="first_slot", choices=["first_slot", "robin_gradient"])
    p_st.add_argument("--init", type=float, default=0.3, help="initial concentration distance")
    p_st.add_argument("--n", type=int, default=129, help="grid size for numeric kernels")

    args = parser.parse_args(argv)

    if args.command == "verify":
        failures = run_verify()
        return 1 if failures else 0

    if args.command == "stationarity":
        if args.domain == "unit_disk":
            domain, grid = DomainSpec.unit_disk(), None
        elif args.domain == "rectangle":
            domain = DomainSpec.rectangle(2.0, 1.0)
            grid = build_grid(domain, args.n)
        else:
            domain = DomainSpec.annulus(0.3, 1.0)
            grid = build_grid(domain, args.n)
        init = (np.array([args.init, 0.0]), np.array([-args.init, 0.0]))
        try:
            pair = greens.solve_stationarity(domain, init, convention=args.convention, grid=grid)
        except (ConvergenceError, ValueError) as exc:
            print(f"stationarity solve failed: {exc}", file=sys.stderr)
            return 1
        print(f"x_plus  = ({pair.x_plus[0]:+.8f}, {pair.x_plus[1]:+.8f})")
        print(f"x_minus = ({pair.x_minus[0]:+.8f}, {pair.x_minus[1]:+.8f})")
        print(f"residual norm = {np.linalg.norm(pair.residual):.3e}  convention = {pair.convention}")
        return 0

    try:
        raw = json.loads(Path(args.config).read_text())
        config = ExperimentConfig.from_dict(raw)
    except (OSError, ValueError, KeyError) as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return 1
    if args.output:
        config = ExperimentConfig.from_dict({**raw, "output_dir": args.output})
    try:
        report = run_experiment(config, log=print)
    except (ConvergenceError, ValueError) as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1
    emit_outputs(report, config.output_dir)
    print(f"wrote {config.output_dir}/report.json")
    if report.failures:
        print(f"warning: {len(report.failures)} ladder point(s) failed", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
