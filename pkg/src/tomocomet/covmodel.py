"""Exact and moment-parameterized covariance structures.

The covariance of the snapshot vector is

    R = a(omega0) a(omega0)^H  (.)  P * B  +  noise_var * I,

where (.) is the Hadamard product and B is the form matrix holding the
source distribution's characteristic function sampled at the pairwise
sensor displacements.  Truncating the characteristic function's Taylor
series at order D gives the moment model

    B_hat(mu) = 1 1^T + sum_{d=2}^{D} (j^d / d!) mu_d U^(d),

linear in the central moments mu_d, which is what the matching estimator
fits.  All vec/unvec operations here use column stacking.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import OrderBoundError
from .geometry import ArrayGeometry, d_max, displacement_powers, steering
from .shapes import ShapeSpec, charfn

HERMITIAN_RTOL = 1e-12


@dataclass(frozen=True)
class SourceParams:
    """Full parameter vector: mean frequency, power, noise power, central moments."""

    omega0: float
    power: float
    noise_var: float
    mu: tuple

    def __post_init__(self):
        if not self.power > 0:
            raise ValueError(f"power must be positive, got {self.power}")
        if self.noise_var < 0:
            raise ValueError(f"noise_var must be >= 0, got {self.noise_var}")
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))

    @property
    def order(self) -> int:
        return len(self.mu) + 1

    def to_linear(self) -> "LinearParams":
        return LinearParams(self.power, self.noise_var,
                            tuple(self.power * m for m in self.mu))


@dataclass(frozen=True)
class LinearParams:
    """Linearly entering parameters alpha = (P, noise_var, nu) with nu = P * mu."""

    power: float
    noise_var: float
    nu: tuple

    def __post_init__(self):
        object.__setattr__(self, "nu", tuple(float(v) for v in self.nu))

    def to_vector(self) -> np.ndarray:
        return np.concatenate(([self.power, self.noise_var], self.nu))

    @classmethod
    def from_vector(cls, alpha) -> "LinearParams":
        alpha = np.asarray(alpha, dtype=float)
        return cls(float(alpha[0]), float(alpha[1]), tuple(alpha[2:]))

    def moments(self) -> np.ndarray:
        """Central moments mu = nu / P (requires P != 0)."""
        if self.power == 0:
            raise ZeroDivisionError("moments undefined at P = 0")
        return np.asarray(self.nu) / self.power


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, m: int) -> np.ndarray:
    """Inverse of :func:`vec` for an m x m matrix."""
    return np.asarray(v).reshape((m, m), order="F")


def is_hermitian(x: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    x = np.asarray(x)
    scale = np.max(np.abs(x)) or 1.0
    return bool(np.max(np.abs(x - x.conj().T)) <= rtol * scale)


def form_matrix_exact(geom: ArrayGeometry, shape: ShapeSpec) -> np.ndarray:
    """Form matrix B with entries charfn(2*pi*(u_k - u_l)); unit diagonal."""
    u = geom.positions_array()
    xi = 2.0 * np.pi * (u[:, None] - u[None, :])
    return charfn(shape, xi)


def form_matrix_moment(geom: ArrayGeometry, mu, order: int) -> np.ndarray:
    """Truncated form matrix B_hat(mu) at the given order D (mu = mu_2..mu_D)."""
    mu = np.asarray(mu, dtype=float)
    if order < 2:
        raise ValueError(f"order must be >= 2, got {order}")
    if mu.shape != (order - 1,):
        raise ValueError(f"expected {order - 1} moments for order {order}, got {mu.shape}")
    m = geom.n_sensors
    b = np.ones((m, m), dtype=complex)
    for d in range(2, order + 1):
        b += (1j**d / factorial(d)) * mu[d - 2] * displacement_powers(geom, d)
    return b


def covariance_exact(geom: ArrayGeometry, omega0: float, power: float,
                     noise_var: float, shape: ShapeSpec) -> np.ndarray:
    """Exact covariance a a^H (.) P*B + noise_var*I for the given shape."""
    if not power > 0:
        raise ValueError(f"power must be positive, got {power}")
    if noise_var < 0:
        raise ValueError(f"noise_var must be >= 0, got {noise_var}")
    a = steering(geom, omega0)
    b = form_matrix_exact(geom, shape)
    return np.outer(a, a.conj()) * (power * b) + noise_var * np.eye(geom.n_sensors)


def covariance_moment(geom: ArrayGeometry, params: SourceParams) -> np.ndarray:
    """Moment-model covariance at the given parameter vector."""
    b = form_matrix_moment(geom, params.mu, params.order)
    a = steering(geom, params.omega0)
    return np.outer(a, a.conj()) * (params.power * b) + params.noise_var * np.eye(geom.n_sensors)


def selection_matrix(geom: ArrayGeometry, order: int) -> np.ndarray:
    """Matrix J with vec{P*B_hat(mu) + noise_var*I} = J alpha, alpha = (P, noise_var, nu).

    Columns: vec(1 1^T), vec(I), then (j^d/d!) vec(U^(d)) for d = 2..D.
    Every column is the vec of a Hermitian matrix.
    """
    bound = d_max(geom)
    if not 2 <= order <= bound:
        raise OrderBoundError(order, bound)
    m = geom.n_sensors
    cols = [vec(np.ones((m, m), dtype=complex)), vec(np.eye(m, dtype=complex))]
    for d in range(2, order + 1):
        cols.append((1j**d / factorial(d)) * vec(displacement_powers(geom, d)))
    return np.stack(cols, axis=1)


def column_orders(order: int, even_only: bool = False) -> np.ndarray:
    """Indices of the selection-matrix columns kept at the given parity.

    Column 0 is the all-ones (power) column, column 1 the identity (noise)
    column; column d holds displacement order d.  ``even_only`` drops the
    odd-order columns.
    """
    idx = np.arange(order + 1)
    if not even_only:
        return idx
    keep = [0, 1] + [d for d in range(2, order + 1) if d % 2 == 0]
    return np.asarray(keep)


def apply_steering_transform(geom: ArrayGeometry, omega: float, v) -> np.ndarray:
    """Apply Psi(omega) = diag(a)^H kron diag(a) to a vec'd matrix.

    Equivalent to vec{diag(a) X diag(a)^H} for X = unvec(v): entry (k, l)
    is scaled by a_k * conj(a_l).  Implemented as an O(M^2) elementwise
    product, never as a dense M^2 x M^2 operator.
    """
    v = np.asarray(v)
    m = geom.n_sensors
    if v.shape != (m * m,):
        raise ValueError(f"expected a vec of length {m * m}, got {v.shape}")
    a = steering(geom, omega)
    return vec(np.outer(a, a.conj()) * unvec(v, m))
