"""Complex circular Gaussian snapshot simulation from exact scenario covariances.

Reproducibility contract: every draw is a pure function of (scenario, seed).
Monte-Carlo harnesses derive per-trial streams with :func:`trial_seed`, which
maps (master_seed, indices...) to a counter-based child ``SeedSequence``
(``spawn_key=indices``), so parallel trials are reproducible and independent
of scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg.lapack import zpstrf

from .covmodel import covariance_exact
from .errors import CovarianceError
from .geometry import ArrayGeometry, height_to_omega
from .shapes import ShapeSpec
from .stats import SnapshotSet

_PIVOT_TOL = 1e-12
_INDEFINITE_RTOL = 1e-10


@dataclass(frozen=True)
class Scenario:
    """Full simulation configuration for one diffuse-source observation."""

    geom: ArrayGeometry
    shape: ShapeSpec
    omega0: float
    power: float = 1.0
    noise_var: float = 0.0
    n_snapshots: int = 100

    def __post_init__(self):
        if not self.power > 0:
            raise ValueError(f"power must be positive, got {self.power}")
        if self.noise_var < 0:
            raise ValueError(f"noise_var must be >= 0, got {self.noise_var}")
        if self.n_snapshots < 1:
            raise ValueError(f"n_snapshots must be >= 1, got {self.n_snapshots}")

    @property
    def snr_db(self) -> float:
        if self.noise_var == 0:
            return np.inf
        return 10.0 * np.log10(self.power / self.noise_var)

    def covariance(self) -> np.ndarray:
        return covariance_exact(self.geom, self.omega0, self.power,
                                self.noise_var, self.shape)

    def with_snapshots(self, n: int) -> "Scenario":
        return replace(self, n_snapshots=n)


def scenario_from_height(geom: ArrayGeometry, shape: ShapeSpec, z0: float,
                         power: float = 1.0, noise_var: float = 0.0,
                         n_snapshots: int = 100) -> Scenario:
    """Build a scenario from a mean elevation in meters (requires geom.z_amb)."""
    if geom.z_amb is None:
        raise ValueError("geometry carries no z_amb; specify omega0 directly")
    return Scenario(geom, shape, height_to_omega(z0, geom.z_amb),
                    power, noise_var, n_snapshots)


def covariance_root(r: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L^H = R.

    Positive definite R uses a plain Cholesky factorization.  Semidefinite R
    falls back to a pivoted (rank-revealing) factorization; the returned
    factor is then lower-triangular up to the pivoting permutation, with the
    rank-deficient columns zeroed.
    """
    r = np.asarray(r, dtype=complex)
    try:
        return np.linalg.cholesky(r)
    except np.linalg.LinAlgError:
        pass
    trace = np.abs(np.trace(r).real)
    min_eig = np.linalg.eigvalsh(r)[0]
    if min_eig < -_INDEFINITE_RTOL * max(trace, 1.0):
        raise CovarianceError(f"matrix is indefinite (min eigenvalue {min_eig:.3g})")
    c, piv, rank, _ = zpstrf(r, lower=1, tol=_PIVOT_TOL * max(trace, 1.0))
    m = r.shape[0]
    factor = np.tril(c)
    factor[:, rank:] = 0.0
    perm = np.zeros((m, m))
    perm[piv - 1, np.arange(m)] = 1.0
    return perm @ factor


def draw_snapshots(scenario: Scenario, seed) -> SnapshotSet:
    """Draw N i.i.d. snapshots y(t) = L w(t) with w standard complex circular."""
    root = covariance_root(scenario.covariance())
    rng = np.random.default_rng(seed)
    n, m = scenario.n_snapshots, scenario.geom.n_sensors
    w = rng.standard_normal((n, 2 * m))
    w = (w[:, :m] + 1j * w[:, m:]) / np.sqrt(2.0)
    meta = {"seed": _seed_repr(seed), "omega0": scenario.omega0,
            "power": scenario.power, "noise_var": scenario.noise_var,
            "shape": scenario.shape.family}
    return SnapshotSet(w @ root.T, meta=meta)


def trial_seed(master_seed: int, *indices: int) -> np.random.SeedSequence:
    """Counter-based child stream: SeedSequence(master_seed, spawn_key=indices)."""
    return np.random.SeedSequence(master_seed, spawn_key=indices)


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    return seed
