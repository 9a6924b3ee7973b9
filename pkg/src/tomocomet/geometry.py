"""Array geometry, steering vectors, displacement-power matrices and unit conversions.

Sensor positions are expressed in wavelengths along the equivalent linear
array, with the first sensor at the origin.  For tomographic stacks the
optional height ambiguity ``z_amb`` (meters) maps the normalized spatial
frequency ``omega`` to elevation ``z = omega * z_amb``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, IdentifiabilityError

_UNIFORM_RTOL = 1e-12


@dataclass(frozen=True)
class ArrayGeometry:
    """Positions of an M-element linear array (wavelength units, u_1 = 0)."""

    positions: tuple
    z_amb: float | None = None
    is_uniform: bool = field(init=False)

    def __post_init__(self):
        pos = tuple(float(u) for u in self.positions)
        if len(pos) < 2:
            raise GeometryError(f"need at least 2 sensors, got {len(pos)}")
        if pos[0] != 0.0:
            raise GeometryError("first sensor position must be 0 (use from_positions to shift)")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise GeometryError("positions must be strictly increasing")
        if self.z_amb is not None and not self.z_amb > 0:
            raise GeometryError(f"z_amb must be positive, got {self.z_amb}")
        gaps = np.diff(pos)
        uniform = bool(np.all(np.abs(gaps - gaps[0]) <= _UNIFORM_RTOL * abs(gaps[0])))
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "is_uniform", uniform)

    @classmethod
    def from_positions(cls, positions, z_amb=None):
        """Build a geometry from raw positions, shifting so the first sensor is at 0."""
        pos = np.asarray(positions, dtype=float)
        if pos.size < 2:
            raise GeometryError(f"need at least 2 sensors, got {pos.size}")
        return cls(tuple(pos - pos[0]), z_amb)

    @property
    def n_sensors(self) -> int:
        return len(self.positions)

    @property
    def spacing(self) -> float | None:
        """Common sensor spacing for uniform arrays, None otherwise."""
        if not self.is_uniform:
            return None
        return self.positions[1] - self.positions[0]

    @property
    def ambiguity_period(self) -> float | None:
        """Period of the steering response in omega (uniform arrays only)."""
        s = self.spacing
        return None if s is None else 1.0 / s

    def positions_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)


def uniform_geometry(n_sensors: int, z_amb: float | None = None) -> ArrayGeometry:
    """Uniform array with unit spacing: positions 0, 1, ..., M-1.

    Unit spacing makes one full ambiguity period in omega equal to 1, so the
    default search interval [-0.5, 0.5) covers exactly one period and
    ``z_amb`` corresponds to one period in elevation.
    """
    if n_sensors < 2:
        raise GeometryError(f"need at least 2 sensors, got {n_sensors}")
    return ArrayGeometry(tuple(float(k) for k in range(n_sensors)), z_amb)


def steering(geom: ArrayGeometry, omega: float) -> np.ndarray:
    """Steering vector a(omega) with entries exp(j*2*pi*u_k*omega)."""
    u = geom.positions_array()
    return np.exp(2j * np.pi * np.multiply.outer(np.asarray(omega, dtype=float), u))


def displacement_powers(geom: ArrayGeometry, d: int) -> np.ndarray:
    """Matrix of pairwise displacement powers (2*pi*(u_k - u_l))**d.

    The 2*pi factor lives here (not in the moments), so the moment vector
    multiplying these matrices consists of the true central moments of the
    spatial-frequency offset.
    """
    if d < 0:
        raise ValueError(f"power must be non-negative, got {d}")
    u = geom.positions_array()
    delta = 2.0 * np.pi * (u[:, None] - u[None, :])
    if d == 0:
        return np.ones_like(delta)
    return delta**d


def d_max(geom: ArrayGeometry) -> int:
    """Largest usable expansion order for this array.

    2M-3 for a uniform array (only 2M-1 distinct covariance entries),
    M(M-1)-1 for a general array.  Estimating any dispersion at all needs
    M >= 3.
    """
    m = geom.n_sensors
    if m < 3:
        raise IdentifiabilityError(f"dispersion not identifiable with M={m} sensors (need M >= 3)")
    return 2 * m - 3 if geom.is_uniform else m * (m - 1) - 1


def omega_to_height(omega, z_amb):
    """Map normalized spatial frequency to elevation in meters (z = omega * z_amb)."""
    if not z_amb > 0:
        raise ValueError(f"z_amb must be positive, got {z_amb}")
    return omega * z_amb


def height_to_omega(z, z_amb):
    """Inverse of :func:`omega_to_height`."""
    if not z_amb > 0:
        raise ValueError(f"z_amb must be positive, got {z_amb}")
    return z / z_amb


def vertical_resolution(geom: ArrayGeometry) -> float:
    """Elevation resolution delta_z = z_amb / M."""
    if geom.z_amb is None:
        raise ValueError("geometry carries no z_amb")
    return geom.z_amb / geom.n_sensors


def geometry_from_json(obj: dict) -> ArrayGeometry:
    """Parse a geometry description.

    Accepts ``{"positions": [...], "z_amb": 100.0}`` or
    ``{"uniform": {"M": 7, "z_amb": 100.0}}``; ``z_amb`` optional in both.
    """
    if "uniform" in obj:
        spec = obj["uniform"]
        return uniform_geometry(int(spec["M"]), spec.get("z_amb"))
    if "positions" in obj:
        return ArrayGeometry.from_positions(obj["positions"], obj.get("z_amb"))
    raise GeometryError("geometry JSON needs a 'positions' or 'uniform' key")
