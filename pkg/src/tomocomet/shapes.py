"""Ground-truth scatterer distribution families.

Each family is zero-mean with standard deviation exactly ``sigma_omega``:

* ``point``        degenerate at 0 (sigma_omega = 0 behavior),
* ``gaussian``     N(0, sigma^2),
* ``uniform``      on [-a, a] with a = sqrt(3)*sigma,
* ``exponential``  shifted one-sided exponential s*(X - sigma), X ~ Exp(mean sigma),
  with ``orientation`` s = +1 (tail toward larger omega, the default) or -1.

They provide the exact characteristic function, exact central moments, and
seeded sampling; these feed the simulator, the exact covariance builder and
the parametric ML baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FAMILIES = ("point", "gaussian", "uniform", "exponential")


@dataclass(frozen=True)
class ShapeSpec:
    family: str
    sigma_omega: float = 0.0
    orientation: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}, expected one of {FAMILIES}")
        if self.sigma_omega < 0:
            raise ValueError(f"sigma_omega must be >= 0, got {self.sigma_omega}")
        if self.orientation not in (1, -1):
            raise ValueError(f"orientation must be +1 or -1, got {self.orientation}")

    @property
    def is_symmetric(self) -> bool:
        return self.family in ("point", "gaussian", "uniform") or self.sigma_omega == 0.0


def charfn(shape: ShapeSpec, xi):
    """Characteristic function E[exp(j*xi*w)] of the centered distribution.

    Vectorized over ``xi``; returns complex values with the same shape.
    """
    xi = np.asarray(xi, dtype=float)
    s = shape.sigma_omega
    if shape.family == "point" or s == 0.0:
        return np.ones_like(xi, dtype=complex)
    if shape.family == "gaussian":
        return np.exp(-0.5 * (s * xi) ** 2) + 0j
    if shape.family == "uniform":
        a = np.sqrt(3.0) * s
        # np.sinc(x) = sin(pi x)/(pi x), handles xi -> 0 smoothly
        return np.sinc(a * xi / np.pi) + 0j
    # exponential, orientation o: charfn of o*(X - s) with X ~ Exp(mean s)
    o = shape.orientation
    return np.exp(-1j * o * s * xi) / (1.0 - 1j * o * s * xi)


def central_moments(shape: ShapeSpec, order: int) -> np.ndarray:
    """Exact central moments (mu_2, ..., mu_D) as a length D-1 vector."""
    if order < 2:
        raise ValueError(f"order must be >= 2, got {order}")
    s = shape.sigma_omega
    mu = np.zeros(order - 1)
    if shape.family == "point" or s == 0.0:
        return mu
    if shape.family == "gaussian":
        # mu_d = sigma^d (d-1)!! for even d
        for d in range(2, order + 1, 2):
            mu[d - 2] = s**d * _double_factorial(d - 1)
    elif shape.family == "uniform":
        a = np.sqrt(3.0) * s
        for d in range(2, order + 1, 2):
            mu[d - 2] = a**d / (d + 1)
    else:
        # central moments of Exp(mean s) are derangement numbers times s^d;
        # orientation flips the sign of the odd ones
        derange = _derangements(order)
        for d in range(2, order + 1):
            mu[d - 2] = (shape.orientation**d) * derange[d] * s**d
    return mu


def sample(shape: ShapeSpec, n: int, seed) -> np.ndarray:
    """Draw n i.i.d. offsets from the distribution; deterministic given seed."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    s = shape.sigma_omega
    if shape.family == "point" or s == 0.0:
        return np.zeros(n)
    if shape.family == "gaussian":
        return rng.normal(0.0, s, size=n)
    if shape.family == "uniform":
        a = np.sqrt(3.0) * s
        return rng.uniform(-a, a, size=n)
    return shape.orientation * (rng.exponential(s, size=n) - s)


def shape_from_json(obj: dict, z_amb: float | None = None) -> ShapeSpec:
    """Parse ``{"family": ..., "sigma_omega": ...}``; accepts "sigma_z" when z_amb is known."""
    family = obj["family"]
    if "sigma_omega" in obj:
        sigma = float(obj["sigma_omega"])
    elif "sigma_z" in obj:
        if z_amb is None:
            raise ValueError("shape JSON uses sigma_z but no z_amb is available")
        sigma = float(obj["sigma_z"]) / z_amb
    elif family == "point":
        sigma = 0.0
    else:
        raise ValueError("shape JSON needs 'sigma_omega' or 'sigma_z'")
    return ShapeSpec(family, sigma, int(obj.get("orientation", 1)))


def _double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def _derangements(n: int) -> list:
    # !0 = 1, !1 = 0, !k = k*!(k-1) + (-1)^k
    d = [1, 0]
    for k in range(2, n + 1):
        d.append(k * d[-1] + (-1) ** k)
    return d
