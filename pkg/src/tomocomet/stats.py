"""Sample covariance formation, weight matrices, and snapshot I/O.

The snapshot container is a little-endian binary format:

    magic   4 bytes  b"CSNP"
    version u32      1
    M       u32      sensors per snapshot
    N       u32      snapshot count
    data    N*M complex values as float64 (re, im) pairs, snapshot-major

CSV import expects 2M columns per row: re_1, im_1, ..., re_M, im_M.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import WeightConditionError

CSNP_MAGIC = b"CSNP"
CSNP_VERSION = 1
_COND_LIMIT = 1e12


@dataclass
class SnapshotSet:
    """N complex observation vectors of length M, rows = snapshots."""

    data: np.ndarray
    meta: dict | None = field(default=None)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValueError(f"expected a non-empty (N, M) array, got shape {data.shape}")
        self.data = data

    @property
    def n_snapshots(self) -> int:
        return self.data.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class WeightSpec:
    """Weighting for the covariance fit: identity or inverse sample covariance."""

    kind: str = "inverse_sample_covariance"
    ridge: float = 0.0

    def __post_init__(self):
        if self.kind not in ("identity", "inverse_sample_covariance"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.ridge < 0:
            raise ValueError(f"ridge must be >= 0, got {self.ridge}")


def sample_covariance(snapshots: SnapshotSet) -> np.ndarray:
    """Average of snapshot outer products, symmetrized to scrub round-off."""
    y = snapshots.data
    r = y.T @ y.conj() / y.shape[0]
    return 0.5 * (r + r.conj().T)


def build_weight(spec: WeightSpec, r_bar: np.ndarray) -> np.ndarray:
    """Weight matrix W from the sample covariance (identity or ridged inverse)."""
    m = r_bar.shape[0]
    if spec.kind == "identity":
        return np.eye(m)
    a = r_bar + spec.ridge * np.eye(m)
    evals = np.linalg.eigvalsh(a)
    if evals[0] <= 0 or evals[-1] / evals[0] > _COND_LIMIT:
        cond = "inf" if evals[0] <= 0 else f"{evals[-1] / evals[0]:.3g}"
        raise WeightConditionError(
            f"sample covariance too ill-conditioned to invert (condition {cond}); "
            f"use N >= M snapshots or a positive ridge")
    w = np.linalg.inv(a)
    return 0.5 * (w + w.conj().T)


def write_csnp(path, snapshots: SnapshotSet) -> None:
    """Write the binary snapshot container."""
    y = np.ascontiguousarray(snapshots.data, dtype=np.complex128)
    n, m = y.shape
    with open(path, "wb") as fh:
        fh.write(CSNP_MAGIC)
        fh.write(struct.pack("<III", CSNP_VERSION, m, n))
        interleaved = np.empty((n, 2 * m), dtype="<f8")
        interleaved[:, 0::2] = y.real
        interleaved[:, 1::2] = y.imag
        fh.write(interleaved.tobytes())


def read_csnp(path) -> SnapshotSet:
    """Read the binary snapshot container."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CSNP_MAGIC:
            raise ValueError(f"not a CSNP file (magic {magic!r})")
        version, m, n = struct.unpack("<III", fh.read(12))
        if version != CSNP_VERSION:
            raise ValueError(f"unsupported CSNP version {version}")
        raw = np.frombuffer(fh.read(16 * n * m), dtype="<f8")
        if raw.size != 2 * n * m:
            raise ValueError("truncated CSNP payload")
        flat = raw.reshape(n, 2 * m)
    return SnapshotSet(flat[:, 0::2] + 1j * flat[:, 1::2])


def read_snapshot_csv(path) -> SnapshotSet:
    """Read snapshots from CSV with columns re_1, im_1, ..., re_M, im_M."""
    raw = np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))
    if raw.shape[1] % 2 != 0:
        raise ValueError(f"snapshot CSV needs an even column count, got {raw.shape[1]}")
    return SnapshotSet(raw[:, 0::2] + 1j * raw[:, 1::2])


def write_covariance_csv(path, r: np.ndarray) -> None:
    """Write a complex matrix as CSV with re+imj cells (row-major)."""
    r = np.asarray(r, dtype=complex)
    with open(path, "w") as fh:
        for row in r:
            fh.write(",".join(f"{float(c.real)!r}{float(c.imag):+}j" for c in row))
            fh.write("\n")


def read_covariance_csv(path) -> np.ndarray:
    """Read a complex matrix written by :func:`write_covariance_csv`."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([complex(cell) for cell in line.split(",")])
    return np.asarray(rows, dtype=complex)
