"""Concentrated covariance-matching estimator.

The reference oracle below rebuilds the weighted least-squares normal
equations from first principles with dense Kronecker products — no shared
code with the fast paths under test beyond the selection matrix.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tomocomet.covmodel import (
    SourceParams,
    apply_steering_transform,
    covariance_moment,
    selection_matrix,
    vec,
)
from tomocomet.errors import OrderBoundError
from tomocomet.estimator import (
    ConcentratedCriterion,
    EstimatorConfig,
    concentrated_step,
    estimate,
    estimate_multi,
    normal_equations,
)
from tomocomet.geometry import ArrayGeometry, uniform_geometry, vertical_resolution
from tomocomet.shapes import ShapeSpec
from tomocomet.sim import Scenario, draw_snapshots
from tomocomet.stats import WeightSpec, build_weight, sample_covariance

GEOM = uniform_geometry(7, z_amb=100.0)
IRREGULAR = ArrayGeometry((0.0, 1.0, 2.6, 4.1, 5.0))


def _random_psd(m, seed, noise=0.1):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(m, 2 * m)) + 1j * rng.normal(size=(m, 2 * m))
    r = a @ a.conj().T / (2 * m) + noise * np.eye(m)
    return 0.5 * (r + r.conj().T)


def _oracle_step(geom, r_bar, weight, order, omega):
    """Dense GLS solve of min ||W^(1/2) (R_bar - R(alpha)) W^(1/2)||_F^2."""
    j = selection_matrix(geom, order)
    g = np.stack([apply_steering_transform(geom, omega, j[:, c])
                  for c in range(j.shape[1])], axis=1)
    k = np.kron(weight.T, weight)
    y = (g.conj().T @ (k @ vec(r_bar))).real
    yy = (g.conj().T @ (k @ g)).real
    alpha = np.linalg.solve(yy, y)
    return float(y @ alpha), alpha


@pytest.mark.parametrize("geom", [GEOM, IRREGULAR], ids=["uniform", "irregular"])
@pytest.mark.parametrize("order", [2, 5, 8])
def test_concentrated_step_matches_dense_oracle(geom, order):
    r_bar = _random_psd(geom.n_sensors, seed=order)
    weight = build_weight(WeightSpec(), r_bar)
    for omega in (-0.41, 0.0, 0.137, 0.5):
        crit, linear = concentrated_step(geom, r_bar, weight, order, "all_orders", omega)
        ref_crit, ref_alpha = _oracle_step(geom, r_bar, weight, order, omega)
        assert crit == pytest.approx(ref_crit, rel=1e-9)
        np.testing.assert_allclose(linear.to_vector(), ref_alpha, rtol=1e-8, atol=1e-12)


def test_even_only_step_matches_restricted_oracle():
    r_bar = _random_psd(7, seed=5)
    weight = build_weight(WeightSpec(), r_bar)
    order, omega = 6, 0.21
    j = selection_matrix(GEOM, order)[:, [0, 1, 2, 4, 6]]  # drop odd orders
    g = np.stack([apply_steering_transform(GEOM, omega, j[:, c])
                  for c in range(j.shape[1])], axis=1)
    k = np.kron(weight.T, weight)
    y = (g.conj().T @ (k @ vec(r_bar))).real
    yy = (g.conj().T @ (k @ g)).real
    ref_alpha = np.linalg.solve(yy, y)
    crit, linear = concentrated_step(GEOM, r_bar, weight, order, "even_only", omega)
    assert crit == pytest.approx(float(y @ ref_alpha), rel=1e-9)
    # dropped odd slots come back as zeros in the full-length vector
    full = linear.to_vector()
    np.testing.assert_allclose(full[[0, 1, 2, 4, 6]], ref_alpha, rtol=1e-8)
    assert full[3] == 0.0 and full[5] == 0.0


def test_normal_equations_real_valued():
    r_bar = _random_psd(7, seed=11)
    weight = build_weight(WeightSpec(), r_bar)
    y, yy = normal_equations(GEOM, r_bar, weight, 9, "all_orders", 0.3)
    scale_y = np.max(np.abs(y))
    scale_yy = np.max(np.abs(yy))
    assert np.max(np.abs(y.imag)) < 1e-10 * scale_y
    assert np.max(np.abs(yy.imag)) < 1e-10 * scale_yy


def test_grid_tables_match_scalar_steps():
    """The vectorized grid evaluator and the scalar path agree everywhere."""
    for geom in (GEOM, IRREGULAR):
        r_bar = _random_psd(geom.n_sensors, seed=2)
        weight = build_weight(WeightSpec(), r_bar)
        work = ConcentratedCriterion(geom, r_bar, weight, order=6)
        omegas = np.linspace(-0.5, 0.5, 41)
        crit_grid = work.criterion_grid(omegas)
        for i, w in enumerate(omegas):
            assert crit_grid[i] == pytest.approx(work.step(w)[0], rel=1e-9)


def test_exact_recovery_moment_model():
    """Zero-residual data: the estimator must return the generating parameters."""
    from tomocomet.shapes import central_moments

    base = central_moments(ShapeSpec("gaussian", 0.033), 6)
    base[1] = 1e-6  # mild asymmetry, small enough to keep the model PSD
    # the truncated polynomial dips negative on long lags, so each case
    # needs enough noise to stay a valid covariance
    for order, mu, noise in [
        (3, (2.5e-4, 3e-6), 0.1),
        (6, tuple(base), 0.02),
    ]:
        params = SourceParams(0.173, 1.4, noise, mu)
        r = covariance_moment(GEOM, params)
        assert np.min(np.linalg.eigvalsh(r)) > 0
        res = estimate(GEOM, r, EstimatorConfig(order=order, refine_tolerance=1e-9))
        assert res.omega0 == pytest.approx(0.173, abs=1e-7)
        assert res.power == pytest.approx(1.4, rel=1e-6)
        assert res.noise_var == pytest.approx(noise, rel=1e-5)
        np.testing.assert_allclose(res.mu, mu, rtol=1e-3, atol=1e-11)
        assert res.valid.ok


def test_exact_recovery_at_order_bound():
    """At D = 2M-3 a sign-alternating mirror solution ties the fit half a
    period away, distinguishable only by the sign of its fitted power; the
    search must land in the physical basin."""
    shape = ShapeSpec("gaussian", 3.0 / 100.0)
    for omega0 in (-0.35, -0.02, 0.3):
        r = Scenario(GEOM, shape, omega0, noise_var=0.01).covariance()
        res = estimate(GEOM, r, EstimatorConfig(order=11))
        err = abs(res.omega0 - omega0)
        assert min(err, 1 - err) < 1e-5, f"omega0={omega0}: got {res.omega0}"
        assert res.power > 0
        assert res.power == pytest.approx(1.0, rel=1e-3)
        assert res.mu[0] == pytest.approx(9e-4, rel=1e-2)


def test_order_bound_gating_on_noisy_data():
    shape = ShapeSpec("gaussian", 3.0 / 100.0)
    scen = Scenario(GEOM, shape, 0.3, noise_var=0.01, n_snapshots=500)
    dz = vertical_resolution(GEOM)
    for seed in range(5):
        snaps = draw_snapshots(scen, seed)
        res = estimate(GEOM, snaps, EstimatorConfig(order=11))
        z_err = abs(res.omega0 - 0.3) * 100.0
        assert z_err < dz / 2, f"seed {seed}: z error {z_err:.2f} m"
        assert res.power > 0


def test_even_only_recovery_on_symmetric_source():
    params = SourceParams(-0.22, 0.9, 0.05, (1.2e-3, 0.0, 5e-6))
    r = covariance_moment(GEOM, params)
    res = estimate(GEOM, r, EstimatorConfig(order=4, parity="even_only"))
    assert res.omega0 == pytest.approx(-0.22, abs=1e-6)
    assert res.power == pytest.approx(0.9, rel=1e-6)
    assert res.mu[1] == 0.0  # odd order never fitted


def test_estimate_multi_agrees_with_single_runs():
    scen = Scenario(GEOM, ShapeSpec("gaussian", 0.05), 0.3, noise_var=0.01,
                    n_snapshots=1000)
    snaps = draw_snapshots(scen, 42)
    configs = [EstimatorConfig(order=d) for d in (2, 4, 7, 11)]
    multi = estimate_multi(GEOM, snaps, configs)
    for cfg, joint in zip(configs, multi):
        single = estimate(GEOM, snaps, cfg)
        # agreement is at criterion level; on a flat plateau the maximizer
        # itself can wiggle at scales far below the statistical error
        assert abs(joint.omega0 - single.omega0) < 1e-4
        assert joint.objective == pytest.approx(single.objective, rel=1e-6)
        assert joint.power == pytest.approx(single.power, rel=1e-4)


def test_estimate_multi_rejects_mixed_configs():
    cfgs = [EstimatorConfig(order=2), EstimatorConfig(order=3, grid_points=11)]
    with pytest.raises(ValueError):
        estimate_multi(GEOM, np.eye(7, dtype=complex), cfgs)


def test_pure_noise_criterion_is_flat():
    """White data carry no direction information: the criterion is constant."""
    work = ConcentratedCriterion(GEOM, np.eye(7, dtype=complex), np.eye(7), order=5)
    vals = work.criterion_grid(np.linspace(-0.5, 0.5, 101))
    assert np.max(vals) - np.min(vals) < 1e-10 * np.mean(vals)


def test_shift_equivariance():
    shape = ShapeSpec("exponential", 0.04)
    r1 = Scenario(GEOM, shape, 0.1, noise_var=0.01).covariance()
    shift = 0.17
    d = np.exp(2j * np.pi * shift * GEOM.positions_array())
    r2 = (d[:, None] * r1) * d.conj()[None, :]
    cfg = EstimatorConfig(order=7, refine_tolerance=1e-9)
    res1 = estimate(GEOM, r1, cfg)
    res2 = estimate(GEOM, r2, cfg)
    delta = (res2.omega0 - res1.omega0 - shift) % 1.0
    assert min(delta, 1 - delta) < 1e-6
    # power and moments vary smoothly in omega, so the two searches agree
    # only to the level at which their omega estimates agree
    assert res2.power == pytest.approx(res1.power, rel=1e-5)
    np.testing.assert_allclose(res2.mu, res1.mu, rtol=1e-4, atol=1e-12)


def test_scale_equivariance():
    r = Scenario(GEOM, ShapeSpec("gaussian", 0.05), 0.3, noise_var=0.01).covariance()
    cfg = EstimatorConfig(order=6)
    res1 = estimate(GEOM, r, cfg)
    res2 = estimate(GEOM, 3.5 * r, cfg)
    assert abs(res2.omega0 - res1.omega0) < 1e-9
    assert res2.power == pytest.approx(3.5 * res1.power, rel=1e-9)
    assert res2.noise_var == pytest.approx(3.5 * res1.noise_var, rel=1e-8)
    # odd moments of a symmetric source sit at cancellation level; compare
    # them absolutely against the dispersion scale
    np.testing.assert_allclose(res2.mu, res1.mu, rtol=1e-6, atol=1e-12)


def test_negative_dispersion_is_flagged_not_clipped():
    params = SourceParams(0.05, 1.0, 0.5, (-1e-4,))
    r = covariance_moment(GEOM, params)
    assert np.min(np.linalg.eigvalsh(r)) > 0  # sanity: weight invertible
    res = estimate(GEOM, r, EstimatorConfig(order=2))
    assert res.mu[0] == pytest.approx(-1e-4, rel=1e-2)
    assert not res.valid.dispersion_nonnegative
    assert not res.valid.ok
    assert res.valid.power_positive


def test_order_bound_error_from_estimate():
    with pytest.raises(OrderBoundError) as exc:
        estimate(GEOM, _random_psd(7, 0), EstimatorConfig(order=12))
    assert exc.value.bound == 11


def test_refine_none_returns_grid_point():
    r = Scenario(GEOM, ShapeSpec("gaussian", 0.05), 0.3, noise_var=0.01).covariance()
    cfg = EstimatorConfig(order=4, grid_points=50, refine="none")
    res = estimate(GEOM, r, cfg)
    grid = -0.5 + np.arange(50) / 50
    assert np.min(np.abs(grid - res.omega0)) < 1e-12


def test_search_trace_records_grid():
    r = Scenario(GEOM, ShapeSpec("gaussian", 0.05), 0.3, noise_var=0.01).covariance()
    res = estimate(GEOM, r, EstimatorConfig(order=4, grid_points=35))
    omegas, crit = res.search_trace
    assert len(omegas) == 35 and len(crit) == 35
    assert np.argmax(crit) == np.argmin(np.abs(omegas - 0.3))


def test_config_validation():
    with pytest.raises(ValueError):
        EstimatorConfig(order=1)
    with pytest.raises(ValueError):
        EstimatorConfig(order=4, parity="odd_only")
    with pytest.raises(ValueError):
        EstimatorConfig(order=4, refine="newton")
    with pytest.raises(ValueError):
        EstimatorConfig(order=4, search_interval=(0.5, -0.5))
    with pytest.raises(ValueError):
        EstimatorConfig(order=4, grid_points=2)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_estimate_on_random_covariance_is_well_defined(seed):
    r = _random_psd(7, seed)
    res = estimate(GEOM, r, EstimatorConfig(order=5))
    assert -0.5 <= res.omega0 < 0.5
    assert np.isfinite(res.objective)
    assert np.all(np.isfinite(res.mu))
