"""Command line front end ``kinetic-slip``.

Subcommands::

    kinetic-slip run <config> [--out DIR]       single kinetic, ns or euler run
    kinetic-slip sweep <config> [--out DIR]     scaling sweep (sweep.mode)
    kinetic-slip audit <run-dir>                replay a kinetic run with the entropy audit
    kinetic-slip entropy-audit <run-dir>        same as ``audit``
    kinetic-slip lattice-audit [--config FILE]  moment-defect table (CSV on stdout)
    kinetic-slip collision-audit [--config FILE]
    kinetic-slip wall-audit [--config FILE]

Exit codes: 0 pass, 2 an audited inequality or sweep property does not
hold, 3 solver failure, 4 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import audits
from .collision import BGKModel, CollisionError, CollisionKernel, build_reactions
from .config import ConfigError, dump_config, load_config, parse_config
from .entropy import TOL_SIGN_QUAD, EntropyReport, RelativeEntropyAudit
from .fields import ChannelGeometry, ShearField, ZeroField
from .fluid import (FluidSolverError, SlipParams, leray_energy_check, run_fluid,
                    state_from_streamfunction, zero_state)
from .harness import SweepConfig, SweepConfigError, _substeps, run_sweep
from .kinetic import (AlphaLaw, KineticSolverError, ScalingRegime, choose_dt, hydro_fields,
                      init_well_prepared, moments_velocity, run_kinetic)
from .lattice import LatticeError, build_lattice

EXIT_PASS, EXIT_VIOLATION, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3, 4
RUN_SCHEMA = "kinslip.run/1"
AUDIT_SCHEMA = "kinslip.entropy-audit/1"
SNAPSHOT_COLUMNS = ("t", "i", "j", "x", "y", "rho", "u_x", "u_y", "theta")
TOL_MASS = 1e-12
SOLVER_ERRORS = (KineticSolverError, FluidSolverError, CollisionError, FloatingPointError)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def jsonable(obj):
    """Plain JSON types; NaN and infinities become null so the file stays standard JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path: Path, data: dict):
    path.write_text(json.dumps(jsonable(data), indent=2, sort_keys=True) + "\n")


def write_csv(path_or_stream, rows: list, columns=None):
    columns = list(columns or (rows[0].keys() if rows else []))
    own = isinstance(path_or_stream, (str, Path))
    fh = open(path_or_stream, "w", newline="") if own else path_or_stream
    try:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in columns})
    finally:
        if own:
            fh.close()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    return v


def write_plotdata(directory: Path, name: str, x, y):
    """Two-column whitespace separated file ``directory/name.dat``."""
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / f"{name}.dat", "w") as fh:
        for a, b in zip(x, y):
            if b is None or (isinstance(b, float) and not math.isfinite(b)):
                continue
            fh.write(f"{float(a)!r} {float(b)!r}\n")


# ---------------------------------------------------------------------------
# config to objects
# ---------------------------------------------------------------------------

def lattice_from(cfg: dict):
    return build_lattice(2, cfg["lattice.nodes_per_axis"], cfg["lattice.cutoff"], cfg["lattice.rule"])


def geometry_from(cfg: dict) -> ChannelGeometry:
    return ChannelGeometry(cfg["grid.nx"], cfg["grid.ny"], cfg["grid.Lx"])


def flow_from(cfg: dict):
    kind = cfg["flow.kind"]
    if kind == "zero":
        return ZeroField()
    if kind == "shear":
        return ShearField(cfg["flow.a"], cfg["flow.b"] / math.pi, cfg["grid.Lx"])
    raise ConfigError(f"flow.kind must be shear or zero, got {kind!r}")


def _law(values, key):
    if len(values) != 2:
        raise ConfigError(f"{key} expects two numbers 'c, p'")
    return float(values[0]), float(values[1])


def regime_from(cfg: dict) -> ScalingRegime:
    alpha = cfg["wall.alpha"]
    if isinstance(alpha, float):
        law = AlphaLaw(alpha, 0.0)
    elif alpha == "law":
        law = AlphaLaw(*_law(cfg["regime.alpha_law"], "regime.alpha_law"))
    else:
        raise ConfigError(f"wall.alpha must be a number or 'law', got {alpha!r}")
    return ScalingRegime(cfg["regime.epsilon"], cfg["regime.q"], law)


def model_from(cfg: dict, lattice):
    kind = cfg["collision.kind"]
    tau = cfg["collision.tau"]
    if kind == "bgk":
        return BGKModel(tau), None
    if kind == "quadrature-boltzmann":
        kernel = CollisionKernel(kind, cfg["collision.kernel.C_b"], cfg["collision.kernel.angles"], tau)
        return kernel, build_reactions(kernel, lattice)
    raise ConfigError(f"collision.kind must be bgk or quadrature-boltzmann, got {kind!r}")


def sweep_from(cfg: dict) -> SweepConfig:
    mode = cfg["sweep.mode"]
    if mode == "ns-to-euler":
        c, p = _law(cfg["fluid.lambda_law"], "fluid.lambda_law")
    elif mode == "kinetic-slip-extraction":
        c, p = cfg["sweep.alpha0"], 1.0
    else:
        c, p = _law(cfg["wall.alpha_law"], "wall.alpha_law")
    return SweepConfig(
        mode=mode, values=list(cfg["sweep.values"]), law_c=c, law_p=p, q=cfg["regime.q"],
        tau=cfg["collision.tau"], nu_hold=cfg["sweep.nu_hold"], t_end=cfg["time.t_end"],
        nx=cfg["grid.nx"], ny=cfg["grid.ny"], Lx=cfg["grid.Lx"],
        nodes_per_axis=cfg["lattice.nodes_per_axis"], cutoff=cfg["lattice.cutoff"],
        rule=cfg["lattice.rule"], scheme=cfg["transport.scheme"], cfl=cfg["time.dt_cfl"],
        s_max=cfg["time.s_max"], fluid_cfl=cfg["fluid.cfl"], n_out=cfg["sweep.n_out"],
        flow_a=cfg["flow.a"], flow_b=cfg["flow.b"], flow_kind=cfg["flow.kind"],
        reference_refine=cfg["sweep.reference_refine"], audit_every=cfg["audit.every"],
        slip_exclude=cfg["sweep.slip_exclude"])


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------

def _snapshot_rows(t, rho, U, theta, geom: ChannelGeometry):
    X, Y = geom.centers()
    rows = []
    for i in range(geom.nx):
        for j in range(geom.ny):
            rows.append({"t": t, "i": i, "j": j, "x": X[i, j], "y": Y[i, j], "rho": rho[i, j],
                         "u_x": U[i, j, 0], "u_y": U[i, j, 1], "theta": theta[i, j]})
    return rows


def _kinetic_setup(cfg: dict):
    lat = lattice_from(cfg)
    geom = geometry_from(cfg)
    reg = regime_from(cfg)
    model, table = model_from(cfg, lat)
    flow = flow_from(cfg)
    st = zero_state(geom) if isinstance(flow, ZeroField) else \
        state_from_streamfunction(lambda x, y: flow.streamfunction(x, y), geom)
    F0 = init_well_prepared(st, reg.epsilon, lat, geom)
    dt = choose_dt(reg, geom, lat, cfg["time.t_end"], tau=cfg["collision.tau"],
                   cfl=cfg["time.dt_cfl"], s_max=cfg["time.s_max"])
    return lat, geom, reg, model, table, flow, F0, dt


def run_kinetic_config(cfg: dict, with_audit: bool | None = None):
    """Kinetic run from a parsed config; returns (run, snapshot rows, audit report or None)."""
    lat, geom, reg, model, table, flow, F0, dt = _kinetic_setup(cfg)
    nsteps = int(round(cfg["time.t_end"] / dt))
    every = cfg["run.snapshot_every"] or nsteps
    rows = []

    def hook(t, F):
        rho, _, theta = hydro_fields(F, lat)
        rows.extend(_snapshot_rows(t, rho, moments_velocity(F, reg.epsilon, lat), theta, geom))

    audit = None
    if cfg["audit.enabled"] if with_audit is None else with_audit:
        audit = RelativeEntropyAudit(flow, reg, geom, lat, eta=cfg["audit.eta"],
                                     every=max(1, min(cfg["audit.every"], nsteps)), table=table)
    run = run_kinetic(F0, reg, model, geom, lat, cfg["time.t_end"], dt,
                      scheme=cfg["transport.scheme"], cfl=cfg["time.dt_cfl"],
                      monitors=(audit,) if audit else (), snapshot_every=every,
                      snapshot_hook=hook, table=table)
    return run, rows, (audit.finalize() if audit else None)


def _entropy_outputs(out: Path, R: EntropyReport):
    write_csv(out / "entropy.csv", R.rows(), EntropyReport.COLUMNS)
    for col in EntropyReport.COLUMNS[1:]:
        write_plotdata(out / "plotdata", f"entropy_{col}", R.times, getattr(R, col))
    return R.summary(TOL_SIGN_QUAD)


def _run_kinetic(cfg: dict, out: Path) -> int:
    run, rows, R = run_kinetic_config(cfg)
    write_csv(out / "snapshots.csv", rows, SNAPSHOT_COLUMNS)
    m = np.asarray(run.mass)
    write_csv(out / "timeseries.csv",
              [{"t": t, "mass": x, "mass_drift": (x - m[0]) / m[0]} for t, x in zip(run.times, m)],
              ("t", "mass", "mass_drift"))
    write_plotdata(out / "plotdata", "mass", run.times, m)
    np.save(out / "final.npy", run.final.values)
    summary = _entropy_outputs(out, R) if R else None
    checks = {"mass_conserved": run.mass_drift <= TOL_MASS}
    if summary:
        checks["no_inequality_violation"] = not summary["violated"]
    report = {"schema": RUN_SCHEMA, "mode": "kinetic", "config": cfg, "steps": run.nsteps,
              "dt": run.final.t / run.nsteps, "t_end": run.final.t, "mass_drift": run.mass_drift,
              "entropy_audit": summary, "checks": checks, "passed": all(checks.values())}
    write_json(out / "report.json", report)
    return EXIT_PASS if report["passed"] else EXIT_VIOLATION


def _run_fluid(cfg: dict, out: Path) -> int:
    if cfg["fluid.scheme_order"] != 3:
        raise ConfigError("fluid.scheme_order: only the third-order SSP Runge-Kutta stepper (3) exists")
    mode = cfg["run.mode"]
    geom = geometry_from(cfg)
    params = SlipParams(0.0, 0.0) if mode == "euler" else SlipParams(cfg["fluid.nu"], cfg["fluid.lambda"])
    flow = flow_from(cfg)
    st = zero_state(geom) if isinstance(flow, ZeroField) else \
        state_from_streamfunction(lambda x, y: flow.streamfunction(x, y), geom)
    t_end = cfg["time.t_end"]
    n = _substeps(st, params, geom, t_end, cfg["fluid.cfl"])
    every = cfg["run.snapshot_every"] or n
    hist = run_fluid(st, params, geom, t_end, t_end / n, record_every=every)
    rows = []
    ones = np.ones((geom.nx, geom.ny))
    for t, U in zip(hist.times, hist.U):
        rows.extend(_snapshot_rows(t, ones, U, ones, geom))
    write_csv(out / "snapshots.csv", rows, SNAPSHOT_COLUMNS)
    ler = leray_energy_check(hist)
    ts = [{"t": t, "energy": e, "viscous_integral": v, "wall_integral": w, "slack": s}
          for t, e, v, w, s in zip(hist.times, hist.energy, hist.visc_int, hist.wall_int, ler["slack"])]
    write_csv(out / "timeseries.csv", ts, ("t", "energy", "viscous_integral", "wall_integral", "slack"))
    write_plotdata(out / "plotdata", "energy", hist.times, hist.energy)
    write_plotdata(out / "plotdata", "energy_slack", hist.times, ler["slack"])
    checks = {"energy_inequality": not ler["violated"]}
    report = {"schema": RUN_SCHEMA, "mode": mode, "config": cfg, "steps": n, "dt": t_end / n,
              "t_end": t_end, "max_divergence": hist.max_div, "energy_min_slack": ler["min_slack"],
              "checks": checks, "passed": all(checks.values())}
    write_json(out / "report.json", report)
    return EXIT_PASS if report["passed"] else EXIT_VIOLATION


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(cfg))
    mode = cfg["run.mode"]
    if mode == "kinetic":
        return _run_kinetic(cfg, out)
    if mode in ("ns", "euler"):
        return _run_fluid(cfg, out)
    raise ConfigError(f"run.mode must be kinetic, ns or euler, got {mode!r}")


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    scfg = sweep_from(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(cfg))
    rep = run_sweep(scfg)
    write_json(out / "report.json", rep.to_dict())
    cols = []
    for r in rep.rows:
        cols += [k for k in r if k not in cols]
    write_csv(out / "sweep.csv", rep.rows, cols)
    key = "nu" if scfg.mode == "ns-to-euler" else "eps"
    ok = [r for r in rep.rows if not r.get("failed")]
    for c in cols:
        if c != key and ok and all(isinstance(r.get(c), (int, float)) and not isinstance(r.get(c), bool)
                                   for r in ok):
            write_plotdata(out / "plotdata", c, [r[key] for r in ok], [r[c] for r in ok])
    if rep.failures:
        return EXIT_SOLVER
    return EXIT_PASS if rep.passed else EXIT_VIOLATION


def cmd_audit(args) -> int:
    run_dir = Path(args.run_dir)
    cfg = parse_config((run_dir / "config.txt").read_text()) if (run_dir / "config.txt").is_file() \
        else None
    if cfg is None:
        raise ConfigError(f"{run_dir} has no config.txt; pass a directory written by 'run'")
    if cfg["run.mode"] != "kinetic":
        raise ConfigError("the entropy audit needs a kinetic run directory")
    run, _, R = run_kinetic_config(cfg, with_audit=True)
    stored = run_dir / "final.npy"
    reproduced = bool(stored.is_file() and np.array_equal(np.load(stored), run.final.values))
    summary = _entropy_outputs(run_dir, R)
    summary.update({"schema": AUDIT_SCHEMA, "replay_matches_stored_state": reproduced})
    write_json(run_dir / "entropy_summary.json", summary)
    return EXIT_VIOLATION if summary["violated"] else EXIT_PASS


def _audit_lattice(args):
    cfg = load_config(args.config) if args.config else parse_config("")
    return lattice_from(cfg), cfg


def cmd_lattice_audit(args) -> int:
    lat, _ = _audit_lattice(args)
    rows = audits.lattice_audit(lat)
    write_csv(sys.stdout, rows, audits.LATTICE_COLUMNS)
    return EXIT_PASS if audits.all_passed(rows) else EXIT_VIOLATION


def cmd_collision_audit(args) -> int:
    lat, cfg = _audit_lattice(args)
    kernel = None
    if cfg["collision.kind"] == "quadrature-boltzmann":
        kernel = model_from(cfg, lat)[0]
    rows = audits.collision_audit(lat, count=args.count, seed=args.seed, kernel=kernel)
    rows += audits.entropy_sign_audit(lat, count=args.count, seed=args.seed, kernel=kernel)
    write_csv(sys.stdout, rows, audits.CHECK_COLUMNS)
    return EXIT_PASS if audits.all_passed(rows) else EXIT_VIOLATION


def cmd_wall_audit(args) -> int:
    lat, _ = _audit_lattice(args)
    rows = audits.wall_audit(lat, count=args.count, seed=args.seed)
    write_csv(sys.stdout, rows, audits.CHECK_COLUMNS)
    return EXIT_PASS if audits.all_passed(rows) else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kinetic-slip", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("sweep", cmd_sweep)):
        s = sub.add_parser(name, help=f"{name} from a config file")
        s.add_argument("config")
        s.add_argument("--out", default="out", help="output directory (default: out)")
        s.set_defaults(func=fn)
    for name in ("audit", "entropy-audit"):
        s = sub.add_parser(name, help="replay a kinetic run directory with the relative entropy audit")
        s.add_argument("run_dir")
        s.set_defaults(func=cmd_audit)
    for name, fn in (("lattice-audit", cmd_lattice_audit), ("collision-audit", cmd_collision_audit),
                     ("wall-audit", cmd_wall_audit)):
        s = sub.add_parser(name, help=f"print the {name.split('-')[0]} defect table as CSV")
        s.add_argument("--config", default=None)
        s.add_argument("--count", type=int, default=100, help="number of random states")
        s.add_argument("--seed", type=int, default=0)
        s.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SweepConfigError, LatticeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        # invalid parameter combinations surface as ValueError from the dataclass guards
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
