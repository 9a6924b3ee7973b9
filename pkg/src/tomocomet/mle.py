"""Stochastic maximum-likelihood baselines under an assumed scatterer family.

Fits theta = (omega0, sigma_omega, P, noise_var) by minimizing the
complex-Gaussian criterion

    L(theta) = ln det R(theta) + tr(R(theta)^{-1} R_bar),

where R(theta) is the exact covariance of the assumed family.  The moment
estimator needs no family; these fits exist to quantify what a wrong
assumption costs (and what the right one buys).

The search is a coarse (omega0, sigma_omega) grid -- with (P, noise_var)
filled in by an unweighted least-squares fit at each node -- followed by
multi-start Nelder-Mead over all four parameters.  sigma_omega is confined
to one resolution cell, [0, 1/M]; outside it the family fits are not
identifiable at small M, and a fit that presses this bound is reported as
non-converged (as is one that exhausts its iteration budget).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lapack
from scipy.optimize import Bounds, minimize

from .covmodel import covariance_exact
from .errors import SingularModelError
from .estimator import (EstimationResult, EstimatorConfig, ValidityFlags,
                        _as_covariance, _INTERVAL_RTOL)
from .geometry import ArrayGeometry
from .shapes import FAMILIES, ShapeSpec, central_moments, charfn
from .stats import SnapshotSet

INIT_MODES = ("grid", "from_moment_estimator")
_PS_FLOOR = 1e-10  # lower bound on normalized power / noise during descent
_PIN_RTOL = 1e-3   # sigma within this fraction of the bound counts as pinned
_LOG_BOUND = 46.0  # |ln P|, |ln noise| cap in the descent (e^46 ~ 1e20)
_SKIP_MARGIN = 3.0  # starts this far above the incumbent are not descended


@dataclass(frozen=True)
class MlConfig:
    """Configuration of a maximum-likelihood fit under one assumed family."""

    assumed_family: str
    orientation: int = 1
    init: str = "grid"
    search_interval: tuple = (-0.5, 0.5)
    omega_grid_points: int | None = None
    sigma_grid_points: int = 12
    n_starts: int = 3
    max_iterations: int = 400
    convergence_tolerance: float = 1e-10

    def __post_init__(self):
        if self.assumed_family not in FAMILIES:
            raise ValueError(f"assumed_family must be one of {FAMILIES}, "
                             f"got {self.assumed_family!r}")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}, got {self.init!r}")
        lo, hi = self.search_interval
        if not lo < hi:
            raise ValueError(f"empty search interval {self.search_interval}")
        object.__setattr__(self, "search_interval", (float(lo), float(hi)))
        if self.omega_grid_points is not None and self.omega_grid_points < 1:
            raise ValueError("omega_grid_points must be >= 1")
        if self.orientation not in (1, -1):
            raise ValueError(f"orientation must be +1 or -1, got {self.orientation}")
        if self.sigma_grid_points < 1:
            raise ValueError("sigma_grid_points must be >= 1")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.convergence_tolerance > 0:
            raise ValueError("convergence_tolerance must be positive")


def negative_log_likelihood(geom: ArrayGeometry, family: str, theta, r_bar,
                            n_snapshots: int | None = None,
                            orientation: int = 1) -> float:
    """L = ln det R(theta) + tr(R(theta)^{-1} R_bar) for the assumed family.

    ``theta`` is (omega0, sigma_omega, P, noise_var).  ``n_snapshots`` is
    accepted for bookkeeping only: the criterion is per snapshot, and scaling
    by N would not move the minimizer.
    """
    omega0, sigma, power, noise = (float(t) for t in theta)
    if not power > 0:
        raise ValueError(f"power must be positive, got {power}")
    if not noise > 0:
        raise ValueError(f"noise_var must be positive, got {noise}")
    if sigma < 0:
        raise ValueError(f"sigma_omega must be >= 0, got {sigma}")
    shape = ShapeSpec(family, sigma, orientation)
    rhat = covariance_exact(geom, omega0, power, noise, shape)
    r_bar = np.asarray(r_bar, dtype=complex)
    try:
        cho = cho_factor(rhat, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise SingularModelError(
            f"model covariance singular at omega0={omega0:.6g}, "
            f"sigma_omega={sigma:.6g}") from None
    diag = np.diag(cho[0]).real
    if not np.all(diag > 0) or not np.all(np.isfinite(diag)):
        raise SingularModelError(
            f"model covariance singular at omega0={omega0:.6g}, "
            f"sigma_omega={sigma:.6g}")
    logdet = 2.0 * float(np.sum(np.log(diag)))
    trace = float(np.trace(cho_solve(cho, r_bar, check_finite=False)).real)
    return logdet + trace


class _LikelihoodWorkspace:
    """Caches the omega-independent pieces of the normalized likelihood."""

    def __init__(self, geom: ArrayGeometry, r_bar_n: np.ndarray,
                 family: str, orientation: int):
        self.m = geom.n_sensors
        self.u = geom.positions_array()
        u = self.u
        self.xi = 2.0 * np.pi * (u[:, None] - u[None, :])
        self.r_bar = r_bar_n
        self.family = family
        self.orientation = orientation
        self.eye = np.eye(self.m)
        try:
            # tr(Rhat^-1 R_bar) = ||L_hat^-1 L_bar||_F^2, one triangular solve
            self.l_bar = np.linalg.cholesky(r_bar_n)
        except np.linalg.LinAlgError:
            self.l_bar = None

    def _form(self, sigma: float) -> np.ndarray:
        return charfn(ShapeSpec(self.family, sigma, self.orientation), self.xi)

    def nll(self, x) -> float:
        """Normalized-likelihood objective; +inf marks infeasible points."""
        omega0, sigma, power, noise = x
        if sigma < 0 or power <= 0 or noise <= 0:
            return np.inf
        a = np.exp(2j * np.pi * omega0 * self.u)
        rhat = (a[:, None] * a.conj()[None, :]) * (power * self._form(sigma))
        rhat.flat[:: self.m + 1] += noise
        low, info = lapack.zpotrf(rhat, lower=1, clean=0, overwrite_a=1)
        if info != 0:
            return np.inf
        diag = low.diagonal().real
        logdet = 2.0 * float(np.sum(np.log(diag)))
        if self.l_bar is not None:
            z, info = lapack.ztrtrs(low, self.l_bar, lower=1)
            if info != 0:
                return np.inf
            trace = float(np.sum(z.real**2 + z.imag**2))
        else:
            trace = float(np.trace(np.linalg.solve(rhat, self.r_bar)).real)
        val = logdet + trace
        return val if np.isfinite(val) else np.inf

    def nll_log(self, x) -> float:
        """Objective over (omega0, sigma, ln P, ln noise)."""
        return self.nll((x[0], x[1], math.exp(x[2]), math.exp(x[3])))

    def grid(self, omegas: np.ndarray, sigmas: np.ndarray):
        """Batched likelihood on an (omega, sigma) grid with LS-fitted (P, s).

        Returns (nll, power, noise), each of shape (len(sigmas), len(omegas)).
        """
        m = self.m
        a = np.exp(2j * np.pi * np.multiply.outer(omegas, self.u))
        ph = a[:, :, None] * a.conj()[:, None, :]
        tr_bar = float(np.trace(self.r_bar).real)
        nll = np.empty((len(sigmas), len(omegas)))
        pow_g = np.empty_like(nll)
        noi_g = np.empty_like(nll)
        for j, sigma in enumerate(sigmas):
            b = self._form(float(sigma))
            c0 = ph * b[None]
            c_bb = float(np.sum(np.abs(b) ** 2))
            r_cb = np.einsum("kij,ij->k", c0.conj(), self.r_bar).real
            det = m * (c_bb - m)
            if det > 1e-12 * m * m:
                p = (m * r_cb - m * tr_bar) / det
                s = (c_bb * tr_bar - m * r_cb) / det
            else:
                # degenerate 2x2 system (B indistinguishable from all-ones)
                p = r_cb / c_bb
                s = np.full_like(r_cb, tr_bar / m)
            p = np.maximum(p, _PS_FLOOR)
            s = np.maximum(s, _PS_FLOOR)
            rhat = p[:, None, None] * c0 + s[:, None, None] * self.eye
            sign, logdet = np.linalg.slogdet(rhat)
            with np.errstate(all="ignore"):
                x = np.linalg.solve(rhat, np.broadcast_to(self.r_bar, rhat.shape))
            trace = np.einsum("kii->k", x).real
            val = np.where(sign.real > 0, logdet + trace, np.inf)
            val = np.where(np.isfinite(val), val, np.inf)
            nll[j] = val
            pow_g[j] = p
            noi_g[j] = s
        return nll, pow_g, noi_g


def _select_starts(nll, omegas, sigmas, pow_g, noi_g, n_starts, periodic, width):
    """Lowest-likelihood grid nodes, deduplicated by omega basin.

    Several sigma nodes over one omega lobe descend to the same optimum, so
    only the best node per lobe is kept; extra starts go to other lobes.
    """
    order = np.argsort(nll, axis=None, kind="stable")
    step_w = width / max(len(omegas), 1)
    starts = []
    for flat in order:
        j, i = np.unravel_index(flat, nll.shape)
        if not np.isfinite(nll[j, i]):
            break
        cand = (float(omegas[i]), float(sigmas[j]),
                float(pow_g[j, i]), float(noi_g[j, i]))
        close = False
        for w0, _, _, _ in starts:
            dw = abs(cand[0] - w0)
            if periodic:
                dw = min(dw, width - dw)
            if dw < 2.0 * step_w:
                close = True
                break
        if not close:
            starts.append(cand)
        if len(starts) == n_starts:
            break
    return starts


def ml_estimate(geom: ArrayGeometry, data, config: MlConfig,
                n_snapshots: int | None = None) -> EstimationResult:
    """Maximum-likelihood fit of (omega0, sigma_omega, P, noise_var).

    ``data`` is a :class:`SnapshotSet` or a sample covariance.  The result's
    mu vector is filled from the assumed family's moments at sigma_hat so
    downstream error metrics treat every estimator uniformly.  ``converged``
    is False when the best start exhausted its iteration budget, when every
    start failed, or when sigma_hat is pinned at the identifiability bound.
    """
    if isinstance(data, SnapshotSet) and n_snapshots is None:
        n_snapshots = data.n_snapshots
    r_bar = _as_covariance(geom, data)
    m = geom.n_sensors
    scale = float(np.trace(r_bar).real) / m
    if not scale > 0:
        raise ValueError("sample covariance has non-positive trace")
    work = _LikelihoodWorkspace(geom, r_bar / scale, config.assumed_family,
                                config.orientation)

    lo, hi = config.search_interval
    width = hi - lo
    period = geom.ambiguity_period
    periodic = period is not None and abs(width - period) <= _INTERVAL_RTOL * period
    sigma_max = 1.0 / m

    trace_info = None
    if config.init == "grid":
        k = (config.omega_grid_points if config.omega_grid_points is not None
             else 6 * m)
        omegas = lo + width * np.arange(k) / k
        sigmas = np.linspace(0.0, sigma_max, config.sigma_grid_points)
        nll_g, pow_g, noi_g = work.grid(omegas, sigmas)
        starts = _select_starts(nll_g, omegas, sigmas, pow_g, noi_g,
                                config.n_starts, periodic, width)
        trace_info = (omegas, nll_g.min(axis=0))
    else:
        mom = _moment_start(geom, r_bar, config)
        starts = [(mom[0], min(mom[1], sigma_max), max(mom[2] / scale, _PS_FLOOR),
                   max(mom[3] / scale, _PS_FLOOR))]
    if not starts:
        starts = [(0.5 * (lo + hi), 0.0, 1.0, 1.0)]

    k_grid = (config.omega_grid_points if config.omega_grid_points is not None
              else 6 * m)
    steps = (0.3 * width / k_grid,
             max(0.3 * sigma_max / max(config.sigma_grid_points - 1, 1), 1e-3),
             0.2, 0.3)
    best = None
    for x0 in starts:
        z0 = np.array([x0[0], x0[1],
                       np.log(max(x0[2], _PS_FLOOR)), np.log(max(x0[3], _PS_FLOOR))])
        if best is not None and work.nll_log(z0) > best[0][0] + _SKIP_MARGIN:
            continue
        if periodic:
            w_lo, w_hi = x0[0] - 0.5 * width, x0[0] + 0.5 * width
        else:
            w_lo, w_hi = lo, hi
        lower = [w_lo, 0.0, -_LOG_BOUND, -_LOG_BOUND]
        upper = [w_hi, sigma_max, _LOG_BOUND, _LOG_BOUND]
        res = minimize(work.nll_log, z0, method="Nelder-Mead",
                       bounds=Bounds(lower, upper),
                       options={"maxiter": config.max_iterations,
                                "fatol": config.convergence_tolerance,
                                "xatol": 1e-7,
                                "initial_simplex": _initial_simplex(z0, steps,
                                                                    lower, upper)})
        fun = float(res.fun) if np.isfinite(res.fun) else np.inf
        key = (fun,) + tuple(float(v) for v in res.x)
        if best is None or key < best[0]:
            best = (key, res)

    res = best[1]
    omega_hat, sigma_hat = float(res.x[0]), float(res.x[1])
    p_hat, s_hat = float(np.exp(res.x[2])), float(np.exp(res.x[3]))
    if periodic:
        omega_hat = lo + (omega_hat - lo) % width
    else:
        omega_hat = min(max(omega_hat, lo), np.nextafter(hi, lo))
    pinned = (sigma_max - sigma_hat) < _PIN_RTOL * sigma_max
    converged = bool(res.success) and not pinned

    shape_hat = ShapeSpec(config.assumed_family, sigma_hat, config.orientation)
    mu = central_moments(shape_hat, 2)
    objective = float(res.fun) + m * np.log(scale)
    flags = ValidityFlags(power_positive=p_hat > 0,
                          dispersion_nonnegative=True,
                          noise_nonnegative=s_hat > 0)
    return EstimationResult(omega0=omega_hat, power=p_hat * scale,
                            noise_var=s_hat * scale, mu=mu,
                            objective=objective, valid=flags,
                            converged=converged, search_trace=trace_info)


def _initial_simplex(x0: np.ndarray, steps, lower, upper) -> np.ndarray:
    """Simplex with per-parameter steps, reflected to stay inside the bounds."""
    sim = np.tile(x0, (len(x0) + 1, 1))
    for i, step in enumerate(steps):
        vertex = x0[i] + step
        if vertex > upper[i]:
            vertex = x0[i] - step
        if vertex < lower[i]:
            vertex = min(x0[i] + 0.25 * (upper[i] - lower[i]), upper[i])
        sim[i + 1, i] = vertex
    return sim


def _moment_start(geom: ArrayGeometry, r_bar: np.ndarray, config: MlConfig):
    """Initial point from a second-order moment fit."""
    from .estimator import estimate

    est = estimate(geom, r_bar, EstimatorConfig(
        order=2, search_interval=config.search_interval))
    sigma = float(np.sqrt(max(est.sigma_omega2, 0.0)))
    power = est.power if est.power > 0 else float(np.trace(r_bar).real) / geom.n_sensors
    noise = est.noise_var if est.noise_var > 0 else power * 1e-2
    return est.omega0, sigma, power, noise
