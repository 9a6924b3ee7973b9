import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tomocomet.bench import (
    CSV_HEADER,
    EstimatorEntry,
    SweepConfig,
    preset_fig2,
    preset_fig3,
    preset_fig4,
    rmse,
    run_sweep,
    write_metric_csv,
)
from tomocomet.estimator import EstimatorConfig
from tomocomet.geometry import uniform_geometry
from tomocomet.shapes import ShapeSpec
from tomocomet.sim import Scenario

GEOM = uniform_geometry(7, z_amb=100.0)


def _tiny_config(trials=6, keep_errors=False, label=""):
    scen = Scenario(GEOM, ShapeSpec("gaussian", 0.05), 0.3,
                    noise_var=0.01, n_snapshots=100)
    entries = (
        EstimatorEntry("moment-D2", "moment", moment=EstimatorConfig(order=2)),
        EstimatorEntry("moment-D4", "moment", moment=EstimatorConfig(order=4)),
    )
    return SweepConfig(scenario=scen, axis="N", axis_values=(50, 100),
                       estimators=entries, trials=trials,
                       master_seed=777, keep_errors=keep_errors, label=label)


def test_rmse_examples():
    assert rmse([3.0, 3.0, 3.0], 3.0) == (0.0, 0.0, 0.0)
    r, bias, std = rmse([2.0, 4.0], 3.0)
    assert (r, bias, std) == (1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        rmse([], 1.0)


@settings(max_examples=100)
@given(st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=30),
       st.floats(min_value=-10, max_value=10))
def test_rmse_decomposition(xs, truth):
    r, bias, std = rmse(xs, truth)
    assert r**2 == pytest.approx(bias**2 + std**2, rel=1e-9, abs=1e-12)


def test_run_sweep_shapes_and_counters():
    res = run_sweep(_tiny_config())
    assert len(res.cells) == 2 * 2  # estimators x axis values
    for c in res.cells:
        assert c.n_trials == 6
        assert c.n_failed == 0
        assert np.isfinite(c.z0.rmse) and np.isfinite(c.power.rmse)
        # z0 errors are reported in resolution units and wrap to one period
        assert abs(c.z0.bias) <= 3.5


def test_run_sweep_deterministic_across_jobs():
    a = run_sweep(_tiny_config(), jobs=1)
    b = run_sweep(_tiny_config(), jobs=2)
    for ca, cb in zip(a.cells, b.cells):
        assert ca.estimator == cb.estimator
        assert ca.axis_value == cb.axis_value
        assert ca.z0 == cb.z0
        assert ca.sigma_z2 == cb.sigma_z2
        assert ca.power == cb.power


def test_run_sweep_seed_changes_results():
    import dataclasses

    a = run_sweep(_tiny_config())
    c2 = dataclasses.replace(_tiny_config(), master_seed=778)
    b = run_sweep(c2)
    assert a.cells[0].z0.rmse != b.cells[0].z0.rmse


def test_keep_errors_consistent_with_stats():
    res = run_sweep(_tiny_config(keep_errors=True))
    for c in res.cells:
        errs = c.errors["sigma_z2"]
        assert len(errs) == c.n_trials - c.n_failed
        r, bias, std = rmse(np.asarray(errs) + 0.0, 0.0)
        assert r == pytest.approx(c.sigma_z2.rmse, rel=1e-12)
        assert bias == pytest.approx(c.sigma_z2.bias, rel=1e-12, abs=1e-15)


def test_order_axis_sweep():
    scen = Scenario(GEOM, ShapeSpec("gaussian", 0.05), 0.3,
                    noise_var=0.01, n_snapshots=200)
    entry = EstimatorEntry("moment", "moment", moment=EstimatorConfig(order=2))
    cfg = SweepConfig(scenario=scen, axis="D", axis_values=(2, 6),
                      estimators=(entry,), trials=5, master_seed=4)
    res = run_sweep(cfg)
    lo = res.cell("moment", 2).sigma_z2.rmse
    hi = res.cell("moment", 6).sigma_z2.rmse
    assert lo != hi
    with pytest.raises(KeyError):
        res.cell("moment", 4)


def test_write_metric_csv(tmp_path):
    res = run_sweep(_tiny_config())
    path = tmp_path / "out.csv"
    write_metric_csv(path, res, "z0")
    lines = path.read_text().strip().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + 4
    first = lines[1].split(",")
    assert first[0] == "moment-D2"
    assert first[1] == "N"
    assert float(first[3]) == pytest.approx(res.cells[0].z0.rmse)
    with pytest.raises(ValueError):
        write_metric_csv(path, res, "objective")


def test_write_metric_csv_merges_labeled_results(tmp_path):
    ra = run_sweep(_tiny_config(trials=3, label="gaussian"))
    rb = run_sweep(_tiny_config(trials=3, label="exponential"))
    path = tmp_path / "merged.csv"
    write_metric_csv(path, [ra, rb], "power")
    names = [ln.split(",")[0] for ln in path.read_text().strip().splitlines()[1:]]
    assert "moment-D2[gaussian]" in names
    assert "moment-D2[exponential]" in names
    assert len(names) == 8


def test_presets_shape():
    f2 = preset_fig2(trials=10)
    assert len(f2) == 2
    assert {c.label for c in f2} == {"gaussian", "exponential"}
    assert all(c.axis == "N" for c in f2)
    assert len(f2[0].estimators) == 10  # orders 2..11
    f3 = preset_fig3(trials=10)[0]
    assert {e.name for e in f3.estimators} == {
        "ml-gaussian", "ml-exponential", "ml-uniform", "moment-D11", "moment-D11-even"}
    f4 = preset_fig4(trials=10)[0]
    assert f4.axis == "sigma_z"
    assert f4.axis_values == (1.0, 2.0, 5.0, 10.0, 14.0, 20.0)
    assert f4.scenario.n_snapshots == 100
    # both truths in fig2 share the master seed: common random numbers
    assert f2[0].master_seed == f2[1].master_seed


def test_run_sweep_validation():
    with pytest.raises(ValueError):
        run_sweep(_tiny_config(), jobs=0)
