"""Moment-based covariance-matching estimation of a diffuse source.

The weighted least-squares covariance fit is linear in alpha = (P, noise_var,
nu) once the mean frequency omega0 is fixed, so alpha is concentrated out in
closed form and a single 1-D search over omega0 remains:

    omega0_hat = argmax  y(omega)^T Y(omega)^{-1} y(omega),

      y(omega) = (Psi(omega) J)^H (W^T kron W) vec(R_bar),
      Y(omega) = (Psi(omega) J)^H (W^T kron W) (Psi(omega) J).

Both reduce to M x M contractions (never M^2 x M^2 products): with
V = W (.) conj(a) a^T the entries are y_c = <H_c, (W R_bar W) (.) conj(a) a^T>
and Y_cd = tr(H_c V H_d V), where H_c is the Hermitian matrix behind column c
of the selection matrix.  y and Y are real in exact arithmetic; the solver
projects onto the real part and equilibrates columns before a Cholesky solve.

The search runs on a uniform grid (default 20*M points) to localize the
basin, then refines by golden section; intervals spanning exactly one
ambiguity period of a uniform array are treated as periodic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .covmodel import LinearParams, column_orders, selection_matrix, unvec
from .errors import NormalEquationsError
from .geometry import ArrayGeometry
from .stats import SnapshotSet, WeightSpec, build_weight, sample_covariance

PARITIES = ("all_orders", "even_only")
_INTERVAL_RTOL = 1e-9


@dataclass(frozen=True)
class EstimatorConfig:
    """Configuration of the moment-based estimator."""

    order: int
    parity: str = "all_orders"
    weight: WeightSpec = field(default_factory=WeightSpec)
    search_interval: tuple = (-0.5, 0.5)
    grid_points: int | None = None
    refine_tolerance: float = 1e-7
    refine: str = "golden_section"

    def __post_init__(self):
        if self.order < 2:
            raise ValueError(f"order must be >= 2, got {self.order}")
        if self.parity not in PARITIES:
            raise ValueError(f"parity must be one of {PARITIES}, got {self.parity!r}")
        if self.refine not in ("golden_section", "none"):
            raise ValueError(f"refine must be 'golden_section' or 'none', got {self.refine!r}")
        lo, hi = self.search_interval
        if not lo < hi:
            raise ValueError(f"empty search interval {self.search_interval}")
        object.__setattr__(self, "search_interval", (float(lo), float(hi)))
        if self.grid_points is not None and self.grid_points < 3:
            raise ValueError(f"grid_points must be >= 3, got {self.grid_points}")
        if not self.refine_tolerance > 0:
            raise ValueError("refine_tolerance must be positive")


@dataclass(frozen=True)
class ValidityFlags:
    power_positive: bool
    dispersion_nonnegative: bool
    noise_nonnegative: bool

    @property
    def ok(self) -> bool:
        return self.power_positive and self.dispersion_nonnegative and self.noise_nonnegative


@dataclass
class EstimationResult:
    """Raw parameter estimates (no clipping) plus diagnostics."""

    omega0: float
    power: float
    noise_var: float
    mu: np.ndarray
    objective: float
    valid: ValidityFlags
    converged: bool = True
    search_trace: tuple | None = None

    @property
    def sigma_omega2(self) -> float:
        return float(self.mu[0])

    def to_dict(self, z_amb: float | None = None) -> dict:
        out = {"omega0": self.omega0}
        if z_amb is not None:
            out["z0"] = self.omega0 * z_amb
        out.update({"P": self.power, "sigma_eps2": self.noise_var,
                    "mu": [float(m) for m in self.mu]})
        if z_amb is not None:
            out["sigma_z2"] = self.sigma_omega2 * z_amb**2
        out.update({"objective": self.objective,
                    "valid": {"P": self.valid.power_positive,
                              "mu2": self.valid.dispersion_nonnegative,
                              "sigma_eps2": self.valid.noise_nonnegative},
                    "converged": self.converged})
        return out


class ConcentratedCriterion:
    """Workspace for evaluating the concentrated criterion at many omegas.

    Precomputes everything that does not depend on omega: the Hermitian
    stack behind the selection-matrix columns (equilibrated by Frobenius
    norm), W and W R_bar W.  Kept-column parity is fixed at construction.
    """

    def __init__(self, geom: ArrayGeometry, r_bar: np.ndarray, weight: np.ndarray,
                 order: int, parity: str = "all_orders"):
        if parity not in PARITIES:
            raise ValueError(f"parity must be one of {PARITIES}, got {parity!r}")
        self.geom = geom
        self.order = order
        self.parity = parity
        m = geom.n_sensors
        sel = selection_matrix(geom, order)
        self.kept = np.asarray(column_orders(order, even_only=(parity == "even_only")))
        h = np.stack([unvec(sel[:, c], m) for c in self.kept])
        self.scales = 1.0 / np.sqrt(np.sum(np.abs(h) ** 2, axis=(1, 2)))
        self.h = h * self.scales[:, None, None]
        self.h_flat_conj = self.h.conj().reshape(len(self.kept), m * m)
        self.w = np.asarray(weight, dtype=complex)
        self.g1 = self.w @ np.asarray(r_bar, dtype=complex) @ self.w
        self.positions = geom.positions_array()
        self._sub_cache = {}
        # every table entry depends on omega only through phase differences of
        # sensor pairs; on a uniform lattice those are harmonics of the spacing,
        # so y and Y are trigonometric polynomials of degree <= 2(M-1) and can
        # be fitted exactly from 4M-3 samples, making later evaluations cheap
        self._lattice_step = geom.spacing
        self._harm = None
        self._harm_cache = {}

    def _restriction(self, idx):
        """Cached (h, h_flat_conj, scales) for a kept-column subset."""
        if idx is None:
            return self.h, self.h_flat_conj, self.scales
        key = idx.tobytes()
        hit = self._sub_cache.get(key)
        if hit is None:
            hit = (self.h[idx], self.h_flat_conj[idx], self.scales[idx])
            self._sub_cache[key] = hit
        return hit

    def _harmonics(self):
        """Fourier coefficients of the real tables over one criterion period."""
        if self._harm is None:
            n_h = 2 * (len(self.positions) - 1)
            k = 2 * n_h + 1
            yr, yyr = self._tables_direct(np.arange(k) / (k * self._lattice_step))
            c = self.n_params
            cy = np.fft.rfft(yr, axis=0).T / k
            cyy = np.fft.rfft(yyr, axis=0) / k
            cy[:, 1:] *= 2.0
            cyy[1:] *= 2.0
            stacked = np.concatenate(
                [cy, cyy.transpose(1, 2, 0).reshape(c * c, n_h + 1)])
            self._harm = (np.ascontiguousarray(stacked),
                          2j * np.pi * self._lattice_step * np.arange(n_h + 1))
        return self._harm

    def _harm_restriction(self, idx):
        """Coefficient rows of :meth:`_harmonics` for a kept-column subset."""
        key = None if idx is None else idx.tobytes()
        hit = self._harm_cache.get(key)
        if hit is None:
            coeffs, freqs = self._harmonics()
            c_full = self.n_params
            if idx is None:
                hit = (coeffs, freqs, self.scales, c_full)
            else:
                c = len(idx)
                block = coeffs[c_full:].reshape(c_full, c_full, -1)
                sub = np.concatenate(
                    [coeffs[:c_full][idx],
                     block[np.ix_(idx, idx)].reshape(c * c, -1)])
                hit = (np.ascontiguousarray(sub), freqs, self.scales[idx], c)
            self._harm_cache[key] = hit
        return hit

    @property
    def n_params(self) -> int:
        return len(self.kept)

    def _phase_outer(self, omega):
        a = np.exp(2j * np.pi * np.multiply.outer(np.asarray(omega, float), self.positions))
        return a.conj()[..., :, None] * a[..., None, :]

    def normal_equations(self, omega: float):
        """Complex y(omega), Y(omega) exactly as defined (no scaling, no Re)."""
        ph = self._phase_outer(float(omega))
        y, yy = self._contract(ph, self.h, self.h_flat_conj)
        return (y / self.scales,
                yy / np.multiply.outer(self.scales, self.scales))

    def _contract(self, ph, h, hfc):
        """Scaled complex (y, Y) for a single phase-outer matrix."""
        y = hfc @ (self.g1 * ph).ravel()
        v = self.w * ph
        vhv = (v @ h) @ v
        yy = hfc @ vhv.reshape(len(h), -1).T
        return y, yy

    def criterion(self, omega: float, idx: np.ndarray | None = None) -> float:
        """Concentrated criterion value at one omega (to be maximized).

        ``idx`` restricts the solve to a subset of the kept columns, which is
        how several orders share one workspace built at the largest order.
        """
        return self._solve(omega, idx)[0]

    def grid_tables(self, omegas: np.ndarray):
        """Real (y, Y) tables for every omega on a grid, all kept columns."""
        if self._lattice_step is not None:
            coeffs, freqs = self._harmonics()
            e = np.exp(np.multiply.outer(freqs, np.asarray(omegas, dtype=float)))
            vals = (coeffs @ e).real
            c = self.n_params
            yyr = vals[c:].reshape(c, c, -1).transpose(2, 0, 1)
            return vals[:c].T.copy(), 0.5 * (yyr + yyr.transpose(0, 2, 1))
        return self._tables_direct(omegas)

    def _tables_direct(self, omegas: np.ndarray):
        omegas = np.asarray(omegas, dtype=float)
        ph = self._phase_outer(omegas)
        k, c, m = len(omegas), self.n_params, self.h.shape[-1]
        y = (self.g1 * ph).reshape(k, -1) @ self.h_flat_conj.T
        v = self.w * ph
        # two large matmuls instead of k*c small ones: first fold the column
        # stack into one wide product, then batch the right factor over omegas
        t = v.reshape(k * m, m) @ self.h.transpose(1, 0, 2).reshape(m, c * m)
        vhv = t.reshape(k, m, c, m).transpose(0, 2, 1, 3).reshape(k, c * m, m) @ v
        yy = vhv.reshape(k, c, -1) @ self.h_flat_conj.T
        return y.real, 0.5 * (yy.real + yy.real.transpose(0, 2, 1))

    def solve_tables(self, yr: np.ndarray, yyr: np.ndarray,
                     order: int | None = None):
        """Criterion values and scaled coefficients from stacked tables."""
        try:
            np.linalg.cholesky(yyr)
        except np.linalg.LinAlgError:
            raise NormalEquationsError(self.order if order is None else order) from None
        alpha = np.linalg.solve(yyr, yr[..., None])[..., 0]
        return np.einsum("gc,gc->g", yr, alpha), alpha

    def criterion_grid(self, omegas: np.ndarray,
                       idx: np.ndarray | None = None) -> np.ndarray:
        """Vectorized criterion over a 1-D array of omegas."""
        yr, yyr = self.grid_tables(omegas)
        if idx is not None:
            yr = yr[:, idx]
            yyr = yyr[:, idx][:, :, idx]
        return self.solve_tables(yr, yyr)[0]

    def _solve(self, omega: float, idx: np.ndarray | None = None):
        if self._lattice_step is not None:
            coeffs, freqs, scales, c = self._harm_restriction(idx)
            vals = (coeffs @ np.exp(freqs * float(omega))).real
            yr = vals[:c]
            yyr = vals[c:].reshape(c, c)
        else:
            a = np.exp((2j * np.pi * float(omega)) * self.positions)
            ph = a.conj()[:, None] * a[None, :]
            h, hfc, scales = self._restriction(idx)
            y, yy = self._contract(ph, h, hfc)
            yr = y.real
            yyr = 0.5 * (yy.real + yy.real.T)
        _, alpha, info = lapack.dposv(yyr, yr, lower=1,
                                      overwrite_a=1, overwrite_b=0)
        if info != 0:
            raise NormalEquationsError(self.order)
        return float(yr @ alpha), alpha * scales

    def step(self, omega: float, idx: np.ndarray | None = None,
             out_order: int | None = None):
        """Criterion and linear parameters at one omega.

        The returned nu vector always spans orders 2..D; orders dropped by
        the parity setting are zero.
        """
        crit, alpha = self._solve(omega, idx)
        cols = self.kept if idx is None else self.kept[idx]
        order = self.order if out_order is None else out_order
        full = np.zeros(order + 1)
        full[cols] = alpha
        return crit, LinearParams(full[0], full[1], tuple(full[2:]))


def concentrated_step(geom: ArrayGeometry, r_bar: np.ndarray, weight: np.ndarray,
                      order: int, parity: str, omega: float):
    """One-shot concentrated solve at a fixed omega; see :class:`ConcentratedCriterion`."""
    return ConcentratedCriterion(geom, r_bar, weight, order, parity).step(omega)


def normal_equations(geom: ArrayGeometry, r_bar: np.ndarray, weight: np.ndarray,
                     order: int, parity: str, omega: float):
    """Complex y(omega) and Y(omega) before the real-part projection."""
    return ConcentratedCriterion(geom, r_bar, weight, order, parity).normal_equations(omega)


def _as_covariance(geom: ArrayGeometry, data) -> np.ndarray:
    if isinstance(data, SnapshotSet):
        r_bar = sample_covariance(data)
    else:
        r_bar = np.asarray(data, dtype=complex)
        if r_bar.ndim != 2 or r_bar.shape[0] != r_bar.shape[1]:
            raise ValueError(f"expected a square covariance, got shape {r_bar.shape}")
    if r_bar.shape[0] != geom.n_sensors:
        raise ValueError(f"covariance size {r_bar.shape[0]} does not match "
                         f"M={geom.n_sensors}")
    return r_bar


def _search_grid(geom: ArrayGeometry, config: EstimatorConfig) -> np.ndarray:
    lo, hi = config.search_interval
    k = config.grid_points if config.grid_points is not None else 20 * geom.n_sensors
    return lo + (hi - lo) * np.arange(k) / k


def _run_search(work: ConcentratedCriterion, geom: ArrayGeometry,
                config: EstimatorConfig, idx: np.ndarray | None,
                omegas: np.ndarray, yr: np.ndarray, yyr: np.ndarray) -> EstimationResult:
    if idx is not None:
        yr = yr[:, idx]
        yyr = yyr[:, idx][:, :, idx]
    crit_grid, alpha_grid = work.solve_tables(yr, yyr, order=config.order)
    # Near the order bound the criterion grows an exact mirror maximum half
    # a period away from the source: a sign-alternating interpolant fits the
    # lag data just as well, but always with negative fitted power.  Pick
    # the best grid point among those with positive fitted power, falling
    # back to the raw argmax when no grid point qualifies.
    pool = np.flatnonzero(alpha_grid[:, 0] > 0.0)
    if pool.size:
        best = int(pool[np.argmax(crit_grid[pool])])
    else:
        best = int(np.argmax(crit_grid))
    lo, hi = config.search_interval
    width = hi - lo
    step_w = width / len(omegas)
    period = geom.ambiguity_period
    periodic = period is not None and abs(width - period) <= _INTERVAL_RTOL * period

    if config.refine == "golden_section":
        # bracket the best grid point by its two neighboring cells; a search
        # spanning one full ambiguity period may extend past the interval
        # edges because the criterion is periodic there
        a = omegas[best] - step_w
        b = omegas[best] + step_w
        if not periodic:
            a, b = max(a, lo), min(b, hi)
        omega_hat = _golden_max(lambda t: work.criterion(t, idx), a, b,
                                config.refine_tolerance)
        # At high order the criterion carries relative evaluation noise of
        # roughly kappa(Y)^2 * eps, which stalls a pure comparison search
        # around the 1e-6 scale.  A least-squares parabola over a window wide
        # enough for the curvature to dominate that noise averages it out.
        h = 100.0 * config.refine_tolerance
        ks = np.arange(-2.0, 3.0)
        vals = np.array([work.criterion(omega_hat + h * k, idx) for k in ks])
        coef = np.polynomial.polynomial.polyfit(ks, vals, 2)
        if coef[2] < 0.0:
            vertex = omega_hat + h * float(np.clip(-coef[1] / (2.0 * coef[2]),
                                                   -2.0, 2.0))
            if work.criterion(vertex, idx) >= vals[2]:
                omega_hat = vertex
    else:
        omega_hat = omegas[best]
    if periodic:
        omega_hat = lo + (omega_hat - lo) % width
    else:
        omega_hat = min(max(omega_hat, lo), np.nextafter(hi, lo))

    objective, linear = work.step(omega_hat, idx, out_order=config.order)
    power, noise_var = linear.power, linear.noise_var
    if power != 0.0:
        mu = np.asarray(linear.nu) / power
    else:
        mu = np.full(config.order - 1, np.nan)
    flags = ValidityFlags(power_positive=bool(power > 0),
                          dispersion_nonnegative=bool(mu[0] >= 0),
                          noise_nonnegative=bool(noise_var >= 0))
    return EstimationResult(omega0=float(omega_hat), power=float(power),
                            noise_var=float(noise_var), mu=mu,
                            objective=float(objective), valid=flags,
                            search_trace=(omegas, crit_grid))


def estimate(geom: ArrayGeometry, data, config: EstimatorConfig) -> EstimationResult:
    """Full estimation: sample covariance, grid + golden-section search, back-solve.

    ``data`` is either a :class:`SnapshotSet` or an M x M sample covariance.
    Raw estimates are returned unclipped; validity flags report sign checks.
    """
    r_bar = _as_covariance(geom, data)
    weight = build_weight(config.weight, r_bar)
    work = ConcentratedCriterion(geom, r_bar, weight, config.order, config.parity)
    omegas = _search_grid(geom, config)
    yr, yyr = work.grid_tables(omegas)
    return _run_search(work, geom, config, None, omegas, yr, yyr)


def estimate_multi(geom: ArrayGeometry, data,
                   configs: "list[EstimatorConfig]") -> "list[EstimationResult]":
    """Run several moment orders against one snapshot set, sharing the search.

    The normal-equation tables of a lower order are a principal subblock of
    the tables at the largest requested order, so the sample covariance, the
    weight, and the grid-stage contractions are computed once.  All configs
    must agree on everything except ``order`` and ``parity``.  Results come
    back in config order and agree with :func:`estimate` up to roundoff in
    the criterion; on nearly flat criteria (high order, few snapshots) the
    maximizer itself is then only pinned down to a plateau much wider than
    the refinement tolerance, which is far below the statistical error.
    """
    if not configs:
        return []
    base = configs[0]
    for cfg in configs[1:]:
        if (cfg.weight != base.weight or cfg.search_interval != base.search_interval
                or cfg.grid_points != base.grid_points or cfg.refine != base.refine
                or cfg.refine_tolerance != base.refine_tolerance):
            raise ValueError("estimate_multi needs configs differing only in order/parity")
    r_bar = _as_covariance(geom, data)
    weight = build_weight(base.weight, r_bar)
    master_order = max(cfg.order for cfg in configs)
    master_parity = ("even_only" if all(c.parity == "even_only" for c in configs)
                     else "all_orders")
    work = ConcentratedCriterion(geom, r_bar, weight, master_order, master_parity)
    omegas = _search_grid(geom, base)
    yr, yyr = work.grid_tables(omegas)
    results = []
    for cfg in configs:
        cols = np.asarray(column_orders(cfg.order, even_only=(cfg.parity == "even_only")))
        idx = None if len(cols) == work.n_params else np.searchsorted(work.kept, cols)
        results.append(_run_search(work, geom, cfg, idx, omegas, yr, yyr))
    return results


def _golden_max(fun, a: float, b: float, tol: float) -> float:
    """Golden-section maximization of a unimodal function on [a, b]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    invphi2 = (3.0 - np.sqrt(5.0)) / 2.0
    h = b - a
    if h <= tol:
        return 0.5 * (a + b)
    c = a + invphi2 * h
    d = a + invphi * h
    fc = fun(c)
    fd = fun(d)
    while h > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            h = b - a
            c = a + invphi2 * h
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + invphi * h
            fd = fun(d)
    return 0.5 * (a + b)
