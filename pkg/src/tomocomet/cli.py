"""Command-line front end: simulate snapshots, estimate, run sweeps.

Artifacts are plain files: the CSNP binary container for snapshots, JSON for
configurations and results, CSV for sweep tables.  Every command that writes
files also writes a manifest recording the package version, the fully
resolved configuration, the master seed and every output path; re-running
``sweep --from-manifest`` (or the identical command line) reproduces the
outputs byte for byte.  Output paths default to the current directory, or to
``$TOMOCOMET_OUT`` when that variable is set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import __version__
from .bench import (METRICS, PRESETS, EstimatorEntry, SweepConfig, run_sweep,
                    write_metric_csv)
from .estimator import EstimatorConfig, estimate
from .geometry import ArrayGeometry, d_max, geometry_from_json, uniform_geometry
from .mle import MlConfig, ml_estimate
from .shapes import FAMILIES, ShapeSpec, shape_from_json
from .sim import Scenario, draw_snapshots
from .stats import (WeightSpec, read_covariance_csv, read_csnp,
                    read_snapshot_csv, write_csnp)

_OUT_ENV = "TOMOCOMET_OUT"
_SMOKE_TRIALS = 200


def _outdir(arg: str | None) -> str:
    out = arg if arg is not None else os.environ.get(_OUT_ENV, ".")
    os.makedirs(out, exist_ok=True)
    return out


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


# ---------------------------------------------------------------------------
# JSON codecs for the config dataclasses

def _geometry_to_json(geom: ArrayGeometry) -> dict:
    return {"positions": list(geom.positions), "z_amb": geom.z_amb}


def _shape_to_json(shape: ShapeSpec) -> dict:
    return {"family": shape.family, "sigma_omega": shape.sigma_omega,
            "orientation": shape.orientation}


def _scenario_to_json(sc: Scenario) -> dict:
    return {"geometry": _geometry_to_json(sc.geom), "shape": _shape_to_json(sc.shape),
            "omega0": sc.omega0, "power": sc.power, "noise_var": sc.noise_var,
            "n_snapshots": sc.n_snapshots}


def _scenario_from_json(obj: dict) -> Scenario:
    geom = geometry_from_json(obj["geometry"])
    shape = shape_from_json(obj["shape"], z_amb=geom.z_amb)
    if "omega0" in obj:
        omega0 = float(obj["omega0"])
    elif "z0" in obj and geom.z_amb is not None:
        omega0 = float(obj["z0"]) / geom.z_amb
    else:
        raise ValueError("scenario JSON needs 'omega0' (or 'z0' with a z_amb)")
    return Scenario(geom, shape, omega0, float(obj.get("power", 1.0)),
                    float(obj.get("noise_var", 0.0)), int(obj.get("n_snapshots", 100)))


def _entry_to_json(entry: EstimatorEntry) -> dict:
    out = {"name": entry.name, "method": entry.method}
    if entry.moment is not None:
        m = entry.moment
        out["moment"] = {"order": m.order, "parity": m.parity,
                         "weight": {"kind": m.weight.kind, "ridge": m.weight.ridge},
                         "search_interval": list(m.search_interval),
                         "grid_points": m.grid_points,
                         "refine_tolerance": m.refine_tolerance, "refine": m.refine}
    if entry.ml is not None:
        c = entry.ml
        out["ml"] = {"assumed_family": c.assumed_family, "orientation": c.orientation,
                     "init": c.init, "search_interval": list(c.search_interval),
                     "omega_grid_points": c.omega_grid_points,
                     "sigma_grid_points": c.sigma_grid_points, "n_starts": c.n_starts,
                     "max_iterations": c.max_iterations,
                     "convergence_tolerance": c.convergence_tolerance}
    return out


def _entry_from_json(obj: dict) -> EstimatorEntry:
    moment = ml = None
    if obj.get("moment") is not None:
        m = obj["moment"]
        w = m.get("weight", {})
        moment = EstimatorConfig(
            order=int(m["order"]), parity=m.get("parity", "all_orders"),
            weight=WeightSpec(w.get("kind", "inverse_sample_covariance"),
                              float(w.get("ridge", 0.0))),
            search_interval=tuple(m.get("search_interval", (-0.5, 0.5))),
            grid_points=m.get("grid_points"),
            refine_tolerance=float(m.get("refine_tolerance", 1e-7)),
            refine=m.get("refine", "golden_section"))
    if obj.get("ml") is not None:
        c = obj["ml"]
        ml = MlConfig(
            assumed_family=c["assumed_family"],
            orientation=int(c.get("orientation", 1)), init=c.get("init", "grid"),
            search_interval=tuple(c.get("search_interval", (-0.5, 0.5))),
            omega_grid_points=c.get("omega_grid_points"),
            sigma_grid_points=int(c.get("sigma_grid_points", 12)),
            n_starts=int(c.get("n_starts", 3)),
            max_iterations=int(c.get("max_iterations", 400)),
            convergence_tolerance=float(c.get("convergence_tolerance", 1e-10)))
    return EstimatorEntry(name=obj["name"], method=obj["method"], moment=moment, ml=ml)


def _sweep_to_json(cfg: SweepConfig) -> dict:
    return {"scenario": _scenario_to_json(cfg.scenario), "axis": cfg.axis,
            "axis_values": list(cfg.axis_values),
            "estimators": [_entry_to_json(e) for e in cfg.estimators],
            "trials": cfg.trials, "master_seed": cfg.master_seed,
            "label": cfg.label}


def _sweep_from_json(obj: dict) -> SweepConfig:
    return SweepConfig(scenario=_scenario_from_json(obj["scenario"]),
                       axis=obj["axis"], axis_values=tuple(obj["axis_values"]),
                       estimators=tuple(_entry_from_json(e) for e in obj["estimators"]),
                       trials=int(obj.get("trials", 5000)),
                       master_seed=int(obj.get("master_seed", 12345)),
                       label=obj.get("label", ""))


def _manifest(command: str, config: dict, seed, outputs: list) -> dict:
    return {"artifact": "tomocomet", "version": __version__, "command": command,
            "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "config": config, "master_seed": seed, "outputs": outputs}


# ---------------------------------------------------------------------------
# shared argument groups

def _add_geometry_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--uniform-M", type=int, metavar="M",
                   help="uniform array with M sensors")
    p.add_argument("--z-amb", type=float, help="height ambiguity in meters")
    p.add_argument("--geometry", metavar="PATH",
                   help="geometry JSON ({'positions': [...]} or {'uniform': ...})")


def _geometry_from_flags(args) -> ArrayGeometry | None:
    if args.geometry is not None:
        with open(args.geometry) as fh:
            return geometry_from_json(json.load(fh))
    if args.uniform_M is not None:
        return uniform_geometry(args.uniform_M, args.z_amb)
    return None


def _order_bound_message(geom: ArrayGeometry, order: int) -> str:
    m = geom.n_sensors
    if geom.is_uniform:
        formula = f"2M-3 = {2 * m - 3}"
    else:
        formula = f"M(M-1)-1 = {m * (m - 1) - 1}"
    return (f"order D={order} exceeds D_max = {formula} "
            f"for this {'uniform' if geom.is_uniform else 'irregular'} M={m} array")


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    if args.config is not None:
        with open(args.config) as fh:
            obj = json.load(fh)
        if "config" in obj and "scenario" in obj.get("config", {}):
            obj = obj["config"]  # accept a previous simulate manifest
        sc = _scenario_from_json(obj["scenario"] if "scenario" in obj else obj)
        seed = int(obj.get("seed", args.seed))
    else:
        geom = _geometry_from_flags(args)
        if geom is None:
            raise ValueError("specify --uniform-M or --geometry (or --config)")
        if args.shape is None:
            raise ValueError("missing required flag --shape")
        if args.sigma_omega is not None:
            sigma = args.sigma_omega
        elif args.sigma_z is not None:
            if geom.z_amb is None:
                raise ValueError("--sigma-z needs --z-amb to convert to omega units")
            sigma = args.sigma_z / geom.z_amb
        else:
            sigma = 0.0
        shape = ShapeSpec(args.shape, sigma, args.orientation)
        if args.omega0 is not None:
            omega0 = args.omega0
        else:
            if geom.z_amb is None:
                raise ValueError("--z0 needs --z-amb; give --omega0 instead")
            omega0 = args.z0 / geom.z_amb
        noise = (args.noise_var if args.noise_var is not None
                 else args.power * 10.0 ** (-args.snr_db / 10.0))
        sc = Scenario(geom, shape, omega0, args.power, noise, args.n)
        seed = args.seed

    out = args.output
    if out is None:
        out = os.path.join(_outdir(None), "snapshots.csnp")
    elif os.path.dirname(out):
        os.makedirs(os.path.dirname(out), exist_ok=True)
    snaps = draw_snapshots(sc, seed)
    write_csnp(out, snaps)
    sidecar = out + ".json"
    doc = _manifest("simulate", {"scenario": _scenario_to_json(sc), "seed": seed},
                    seed, [os.path.basename(out)])
    with open(sidecar, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(f"wrote {out} and {sidecar}")
    print(f"M={sc.geom.n_sensors}  N={sc.n_snapshots}  SNR={sc.snr_db:.1f} dB  "
          f"shape={sc.shape.family}(sigma_omega={sc.shape.sigma_omega:g})")
    return 0


# ---------------------------------------------------------------------------
# estimate

def _load_input(path: str, force_covariance: bool):
    """Returns (snapshots-or-None, covariance-or-None)."""
    if path.endswith(".csnp"):
        return read_csnp(path), None
    with open(path) as fh:
        head = fh.readline()
    if force_covariance or "j" in head:
        return None, read_covariance_csv(path)
    return read_snapshot_csv(path), None


def cmd_estimate(args) -> int:
    geom = _geometry_from_flags(args)
    if geom is None:
        raise ValueError("specify the array with --uniform-M or --geometry")
    snaps, r_bar = _load_input(args.input, args.covariance)
    data = snaps if snaps is not None else r_bar

    if args.method == "moment":
        bound = d_max(geom)
        order = args.order if args.order is not None else bound
        if order > bound:
            print(f"error: {_order_bound_message(geom, order)}", file=sys.stderr)
            return 2
        config = EstimatorConfig(order=order, parity=args.parity,
                                 weight=WeightSpec(args.weight, args.ridge))
        result = estimate(geom, data, config)
    else:
        if args.assume is None:
            raise ValueError("--method ml needs --assume "
                             f"(one of {', '.join(f for f in FAMILIES if f != 'point')})")
        config = MlConfig(assumed_family=args.assume, orientation=args.orientation,
                          init=args.init)
        result = ml_estimate(geom, data, config)

    json.dump(result.to_dict(z_amb=geom.z_amb), sys.stdout, indent=2)
    print()
    return 0


# ---------------------------------------------------------------------------
# sweep

def _resolve_sweeps(args):
    """Returns (name, [SweepConfig, ...], preset_name_or_None)."""
    if args.from_manifest is not None:
        with open(args.from_manifest) as fh:
            doc = json.load(fh)
        cfgs = [_sweep_from_json(s) for s in doc["config"]["sweeps"]]
        return doc["config"].get("name", "sweep"), cfgs, doc["config"].get("preset")
    if args.config is not None:
        with open(args.config) as fh:
            obj = json.load(fh)
        sweeps = obj["sweeps"] if "sweeps" in obj else [obj]
        return obj.get("name", "sweep"), [_sweep_from_json(s) for s in sweeps], None
    if args.preset is None:
        raise ValueError("specify --preset, --config or --from-manifest")
    if args.preset == "smoke":
        cfgs = PRESETS["fig2"](trials=_SMOKE_TRIALS)
    else:
        cfgs = PRESETS[args.preset]()
    return args.preset, cfgs, args.preset


def cmd_sweep(args) -> int:
    name, cfgs, preset = _resolve_sweeps(args)
    if args.trials is not None:
        cfgs = [SweepConfig(scenario=c.scenario, axis=c.axis, axis_values=c.axis_values,
                            estimators=c.estimators, trials=args.trials,
                            master_seed=c.master_seed, label=c.label) for c in cfgs]
    if args.seed is not None:
        cfgs = [SweepConfig(scenario=c.scenario, axis=c.axis, axis_values=c.axis_values,
                            estimators=c.estimators, trials=c.trials,
                            master_seed=args.seed, label=c.label) for c in cfgs]

    outdir = _outdir(args.output)
    results = [run_sweep(c, jobs=args.jobs) for c in cfgs]
    outputs = []
    for metric in METRICS:
        fname = f"{name}_{metric}.csv"
        write_metric_csv(os.path.join(outdir, fname), results, metric)
        outputs.append(fname)

    doc = _manifest("sweep",
                    {"name": name, "preset": preset, "jobs": args.jobs,
                     "sweeps": [_sweep_to_json(c) for c in cfgs]},
                    cfgs[0].master_seed, outputs)
    manifest_path = os.path.join(outdir, f"{name}_manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    for fname in outputs:
        print(f"wrote {os.path.join(outdir, fname)}")
    print(f"wrote {manifest_path}")
    return 0


# ---------------------------------------------------------------------------
# dmax

def cmd_dmax(args) -> int:
    geom = _geometry_from_flags(args)
    if geom is None:
        raise ValueError("specify the array with --uniform-M or --geometry")
    m = geom.n_sensors
    bound = d_max(geom)
    formula = f"2M-3 = {bound}" if geom.is_uniform else f"M(M-1)-1 = {bound}"
    kind = "uniform" if geom.is_uniform else "irregular"
    print(f"M={m} {kind}: D_max = {formula}")
    return 0


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="tomocomet",
        description="Moment-based characterization of spatially spread sources.")
    top.add_argument("--version", action="version", version=f"tomocomet {__version__}")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw snapshots and write a CSNP file")
    _add_geometry_flags(p)
    p.add_argument("--config", metavar="PATH", help="scenario JSON (overrides flags)")
    p.add_argument("--shape", choices=FAMILIES, help="scatterer distribution family")
    p.add_argument("--sigma-z", type=float, help="source spread in meters")
    p.add_argument("--sigma-omega", type=float, help="source spread in omega units")
    p.add_argument("--orientation", type=int, choices=(1, -1), default=1)
    p.add_argument("--z0", type=float, default=30.0, help="mean elevation in meters")
    p.add_argument("--omega0", type=float, help="mean spatial frequency (overrides --z0)")
    p.add_argument("--power", type=float, default=1.0)
    p.add_argument("--snr-db", type=float, default=20.0)
    p.add_argument("--noise-var", type=float, help="noise variance (overrides --snr-db)")
    p.add_argument("--n", type=int, default=100, help="snapshot count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", metavar="PATH")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate source parameters from a file")
    p.add_argument("input", help="CSNP/CSV snapshots or covariance CSV")
    _add_geometry_flags(p)
    p.add_argument("--covariance", action="store_true",
                   help="force covariance-CSV interpretation")
    p.add_argument("--method", choices=("moment", "ml"), default="moment")
    p.add_argument("--order", type=int, help="expansion order D (default: D_max)")
    p.add_argument("--parity", choices=("all_orders", "even_only"), default="all_orders")
    p.add_argument("--weight", choices=("inverse_sample_covariance", "identity"),
                   default="inverse_sample_covariance")
    p.add_argument("--ridge", type=float, default=0.0,
                   help="diagonal loading added before inverting the weight")
    p.add_argument("--assume", choices=tuple(f for f in FAMILIES if f != "point"),
                   help="assumed family for --method ml")
    p.add_argument("--orientation", type=int, choices=(1, -1), default=1)
    p.add_argument("--init", choices=("grid", "from_moment_estimator"), default="grid")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="run a Monte-Carlo sweep and write CSV tables")
    p.add_argument("--preset", choices=(*sorted(PRESETS), "smoke"))
    p.add_argument("--config", metavar="PATH", help="explicit sweep-config JSON")
    p.add_argument("--from-manifest", metavar="PATH",
                   help="re-run a recorded sweep bit-for-bit")
    p.add_argument("--trials", type=int, help="override trial count")
    p.add_argument("--seed", type=int, help="override master seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("-o", "--output", metavar="DIR")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dmax", help="print the order bound for an array")
    _add_geometry_flags(p)
    p.set_defaults(func=cmd_dmax)

    return top


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
