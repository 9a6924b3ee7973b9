"""Monte-Carlo sweep harness for the moment and maximum-likelihood estimators.

One sweep varies a single axis (snapshot count N, moment order D, or source
spread sigma_z) and runs every configured estimator on the *same* snapshot
draw per trial, so estimator comparisons use common random numbers.  Errors
are normalized the way the study reports them: z0 error in units of the
resolution delta_z, sigma_z^2 and P errors relative to their true values.
omega0 errors are taken modulo the ambiguity period before conversion, when
the geometry has one.

Trial t of axis cell a always draws from the stream (master_seed, a, t), so
results are bit-identical for any worker count: parallel chunks are
concatenated in trial order before any statistic is formed.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimator import EstimatorConfig, estimate, estimate_multi
from .mle import MlConfig, ml_estimate
from .shapes import ShapeSpec
from .sim import Scenario, draw_snapshots, trial_seed
from .stats import sample_covariance

AXES = ("N", "D", "sigma_z")
METRICS = ("z0", "sigma_z2", "power")
CSV_HEADER = "estimator,axis_name,axis_value,rmse,bias,std,n_trials,n_invalid"
_DEFAULT_SEED = 12345


def rmse(estimates, truth: float):
    """(rmse, bias, std) of a sample of estimates against a scalar truth.

    std uses the population convention, so rmse^2 = bias^2 + std^2 exactly.
    """
    x = np.asarray(estimates, dtype=float)
    if x.size == 0:
        raise ValueError("rmse of an empty sample")
    err = x - truth
    bias = float(np.mean(err))
    r = float(np.sqrt(np.mean(err**2)))
    std = float(np.std(err))
    return r, bias, std


@dataclass(frozen=True)
class EstimatorEntry:
    """One named estimator in a sweep: method 'moment' or 'ml' plus its config."""

    name: str
    method: str
    moment: EstimatorConfig | None = None
    ml: MlConfig | None = None

    def __post_init__(self):
        if self.method not in ("moment", "ml"):
            raise ValueError(f"method must be 'moment' or 'ml', got {self.method!r}")
        if self.method == "moment" and self.moment is None:
            raise ValueError(f"entry {self.name!r}: moment config missing")
        if self.method == "ml" and self.ml is None:
            raise ValueError(f"entry {self.name!r}: ml config missing")


@dataclass(frozen=True)
class SweepConfig:
    """Scenario template, swept axis, and the estimators to compare."""

    scenario: Scenario
    axis: str
    axis_values: tuple
    estimators: tuple
    trials: int = 5000
    master_seed: int = _DEFAULT_SEED
    keep_errors: bool = False
    label: str = ""

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if len(self.axis_values) == 0:
            raise ValueError("axis_values must be non-empty")
        object.__setattr__(self, "axis_values", tuple(self.axis_values))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not self.estimators:
            raise ValueError("estimators must be non-empty")
        names = [e.name for e in self.estimators]
        if len(set(names)) != len(names):
            raise ValueError(f"estimator names must be unique, got {names}")
        for v in self.axis_values:
            if self.axis == "N" and int(v) < 1:
                raise ValueError(f"N axis value must be >= 1, got {v}")
            if self.axis == "D" and int(v) < 2:
                raise ValueError(f"D axis value must be >= 2, got {v}")
            if self.axis == "sigma_z" and not v > 0:
                raise ValueError(f"sigma_z axis value must be > 0, got {v}")


@dataclass(frozen=True)
class CellStats:
    rmse: float
    bias: float
    std: float


@dataclass
class SweepCell:
    """Aggregated results for one (estimator, axis value) pair."""

    estimator: str
    axis_value: float
    z0: CellStats
    sigma_z2: CellStats
    power: CellStats
    n_trials: int
    n_failed: int
    n_invalid: int
    n_nonconverged: int
    errors: dict | None = None


@dataclass
class SweepResult:
    config: SweepConfig
    cells: list

    def cell(self, estimator: str, axis_value) -> SweepCell:
        for c in self.cells:
            if c.estimator == estimator and np.isclose(c.axis_value, axis_value):
                return c
        raise KeyError(f"no cell for ({estimator!r}, {axis_value})")


def _axis_scenario(config: SweepConfig, value) -> Scenario:
    scen = config.scenario
    if config.axis == "N":
        return dataclasses.replace(scen, n_snapshots=int(value))
    if config.axis == "sigma_z":
        shape = scen.shape
        new_shape = ShapeSpec(shape.family, float(value) / scen.geom.z_amb,
                              shape.orientation)
        return dataclasses.replace(scen, shape=new_shape)
    return scen


def _axis_entries(config: SweepConfig, value):
    """Estimator entries with the D axis applied to moment configs."""
    if config.axis != "D":
        return config.estimators
    out = []
    for e in config.estimators:
        if e.method == "moment":
            out.append(dataclasses.replace(
                e, moment=dataclasses.replace(e.moment, order=int(value))))
        else:
            out.append(e)
    return tuple(out)


def _moment_groups(entries):
    """Indices of moment entries grouped by shared search settings."""
    groups = {}
    for i, e in enumerate(entries):
        if e.method != "moment":
            continue
        c = e.moment
        key = (c.weight, c.search_interval, c.grid_points, c.refine,
               c.refine_tolerance)
        groups.setdefault(key, []).append(i)
    return list(groups.values())


def _wrap_error(d_omega: float, period: float | None) -> float:
    if period is None:
        return d_omega
    return (d_omega + 0.5 * period) % period - 0.5 * period


def _trial_block(config: SweepConfig, axis_idx: int, t_lo: int, t_hi: int):
    """Per-trial error records for trials [t_lo, t_hi) of one axis cell.

    Each record is a list over estimators of either None (hard failure) or
    (z0_err/delta_z, rel sigma_z^2 err, rel P err, invalid, nonconverged).
    """
    value = config.axis_values[axis_idx]
    scen = _axis_scenario(config, value)
    entries = _axis_entries(config, value)
    geom = scen.geom
    period = geom.ambiguity_period
    m = geom.n_sensors
    omega_true = scen.omega0
    mu2_true = scen.shape.sigma_omega**2
    p_true = scen.power
    groups = _moment_groups(entries)

    records = []
    for t in range(t_lo, t_hi):
        seed = trial_seed(config.master_seed, axis_idx, t)
        snaps = draw_snapshots(scen, seed)
        r_bar = sample_covariance(snaps)
        row = [None] * len(entries)
        for idx_list in groups:
            configs = [entries[i].moment for i in idx_list]
            try:
                results = estimate_multi(geom, r_bar, configs)
            except Exception:
                continue
            for i, res in zip(idx_list, results):
                row[i] = res
        for i, e in enumerate(entries):
            if e.method != "ml":
                continue
            try:
                row[i] = ml_estimate(geom, r_bar, e.ml,
                                     n_snapshots=scen.n_snapshots)
            except Exception:
                row[i] = None
        rec = []
        for res in row:
            if res is None:
                rec.append(None)
                continue
            e_z0 = _wrap_error(res.omega0 - omega_true, period) * m
            e_s2 = (res.sigma_omega2 - mu2_true) / mu2_true if mu2_true > 0 else np.nan
            e_p = (res.power - p_true) / p_true
            if not (np.isfinite(e_z0) and np.isfinite(e_s2) and np.isfinite(e_p)):
                rec.append(None)
                continue
            rec.append((float(e_z0), float(e_s2), float(e_p),
                        not res.valid.ok, not res.converged))
        records.append(rec)
    return records


def run_sweep(config: SweepConfig, jobs: int = 1) -> SweepResult:
    """Execute the sweep; deterministic for fixed master_seed at any job count."""
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    n_axis = len(config.axis_values)
    blocks = {}
    if jobs == 1:
        for ai in range(n_axis):
            blocks[ai] = _trial_block(config, ai, 0, config.trials)
    else:
        chunk = max(1, -(-config.trials // (4 * jobs)))
        tasks = []
        for ai in range(n_axis):
            for lo in range(0, config.trials, chunk):
                tasks.append((ai, lo, min(lo + chunk, config.trials)))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_trial_block_star,
                                  [(config,) + t for t in tasks]))
        for (ai, _, _), part in zip(tasks, parts):
            blocks.setdefault(ai, []).extend(part)

    cells = []
    for ai, value in enumerate(config.axis_values):
        entries = _axis_entries(config, value)
        records = blocks[ai]
        for ei, entry in enumerate(entries):
            good = [r[ei] for r in records if r[ei] is not None]
            n_failed = config.trials - len(good)
            if good:
                errs = {m: np.array([g[k] for g in good])
                        for k, m in enumerate(METRICS)}
                stats = {m: CellStats(*rmse(errs[m], 0.0)) for m in METRICS}
                n_invalid = sum(g[3] for g in good)
                n_nonconv = sum(g[4] for g in good)
            else:
                errs = {m: np.array([]) for m in METRICS}
                stats = {m: CellStats(np.nan, np.nan, np.nan) for m in METRICS}
                n_invalid = n_nonconv = 0
            cells.append(SweepCell(
                estimator=entry.name, axis_value=float(value),
                z0=stats["z0"], sigma_z2=stats["sigma_z2"], power=stats["power"],
                n_trials=len(good), n_failed=n_failed, n_invalid=n_invalid,
                n_nonconverged=n_nonconv,
                errors=errs if config.keep_errors else None))
    return SweepResult(config=config, cells=cells)


def _trial_block_star(args):
    return _trial_block(*args)


def write_metric_csv(path, results, metric: str) -> None:
    """One CSV row per (estimator, axis value); accepts one result or several.

    The n_invalid column counts every trial that was not fully clean: hard
    failures, sign-invalid estimates, and non-converged fits.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    if isinstance(results, SweepResult):
        results = [results]
    lines = [CSV_HEADER]
    for res in results:
        label = res.config.label
        for c in res.cells:
            stats = getattr(c, metric)
            name = f"{c.estimator}[{label}]" if label else c.estimator
            bad = c.n_failed + c.n_invalid + c.n_nonconverged
            lines.append(f"{name},{res.config.axis},{c.axis_value:g},"
                         f"{stats.rmse!r},{stats.bias!r},{stats.std!r},"
                         f"{c.n_trials},{bad}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# presets mirroring the three studies

def _paper_scenario(family: str, sigma_z: float = 5.0, n: int = 100) -> Scenario:
    from .geometry import uniform_geometry

    geom = uniform_geometry(7, z_amb=100.0)
    shape = ShapeSpec(family, sigma_z / geom.z_amb)
    # z0 = 30 m, P = 1, SNR = 20 dB
    return Scenario(geom, shape, omega0=30.0 / geom.z_amb, power=1.0,
                    noise_var=1e-2, n_snapshots=n)


def _moment_entry(name: str, order: int, parity: str = "all_orders") -> EstimatorEntry:
    # presets loosen the refinement tolerance: 1e-6 in omega is ~1e-4 m in
    # elevation here, orders of magnitude below any RMSE on these axes
    return EstimatorEntry(name=name, method="moment",
                          moment=EstimatorConfig(order=order, parity=parity,
                                                 refine_tolerance=1e-6))


def _comparison_entries() -> tuple:
    return (
        EstimatorEntry("ml-gaussian", "ml", ml=MlConfig("gaussian")),
        EstimatorEntry("ml-exponential", "ml", ml=MlConfig("exponential")),
        EstimatorEntry("ml-uniform", "ml", ml=MlConfig("uniform")),
        _moment_entry("moment-D11", 11),
        _moment_entry("moment-D11-even", 11, parity="even_only"),
    )


def preset_fig2(trials: int = 5000, master_seed: int = _DEFAULT_SEED,
                keep_errors: bool = False):
    """RMSE vs N for moment orders 2..11, gaussian and exponential truths."""
    entries = tuple(_moment_entry(f"moment-D{d}", d) for d in range(2, 12))
    return [SweepConfig(scenario=_paper_scenario(family), axis="N",
                        axis_values=(100, 1000, 10000), estimators=entries,
                        trials=trials, master_seed=master_seed,
                        keep_errors=keep_errors, label=family)
            for family in ("gaussian", "exponential")]


def preset_fig3(trials: int = 5000, master_seed: int = _DEFAULT_SEED,
                keep_errors: bool = False):
    """Estimator comparison on a uniform truth vs N."""
    return [SweepConfig(scenario=_paper_scenario("uniform"), axis="N",
                        axis_values=(100, 1000, 10000),
                        estimators=_comparison_entries(),
                        trials=trials, master_seed=master_seed,
                        keep_errors=keep_errors)]


def preset_fig4(trials: int = 5000, master_seed: int = _DEFAULT_SEED,
                keep_errors: bool = False):
    """Estimator comparison on a uniform truth vs source spread at N=100."""
    return [SweepConfig(scenario=_paper_scenario("uniform", n=100),
                        axis="sigma_z", axis_values=(1.0, 2.0, 5.0, 10.0, 14.0, 20.0),
                        estimators=_comparison_entries(),
                        trials=trials, master_seed=master_seed,
                        keep_errors=keep_errors)]


PRESETS = {"fig2": preset_fig2, "fig3": preset_fig3, "fig4": preset_fig4}
