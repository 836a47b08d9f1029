"""Elevation-azimuth hashing of unstructured frames into a fixed grid.

Angles are degrees everywhere; radians appear only inside trig calls.
The grid has ``beams`` rows (one per laser, elevation fixed by the sensor)
and ``azimuth_bins`` columns; each cell holds at most one return per frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple

import numpy as np

from .errors import BeamOutOfRange, ConfigError, DomainError, OriginPoint
from .pointio import Frame


class CollisionPolicy(str, Enum):
    NEAREST = "nearest"
    STRONGEST = "strongest"
    FIRST = "first"


@dataclass(frozen=True)
class SensorConfig:
    elevation_deg: Tuple[float, ...]
    azimuth_resolution_deg: float = 0.2
    rotation_hz: float = 10.0
    max_range_m: float = 200.0

    def __post_init__(self):
        object.__setattr__(self, "elevation_deg", tuple(float(e) for e in self.elevation_deg))
        if not self.elevation_deg:
            raise ConfigError("elevation table is empty")
        bins = 360.0 / self.azimuth_resolution_deg
        if abs(bins - round(bins)) > 1e-9 or round(bins) < 1:
            raise ConfigError(f"360 / {self.azimuth_resolution_deg} is not a whole number of bins")
        if self.max_range_m <= 0:
            raise ConfigError("max_range_m must be positive")

    @property
    def beams(self) -> int:
        return len(self.elevation_deg)

    @property
    def azimuth_bins(self) -> int:
        return int(round(360.0 / self.azimuth_resolution_deg))

    @property
    def n_cells(self) -> int:
        return self.beams * self.azimuth_bins

    @classmethod
    def uniform(cls, beams: int, low_deg: float, high_deg: float, **kw) -> "SensorConfig":
        return cls(tuple(np.linspace(low_deg, high_deg, beams).tolist()), **kw)

    def to_dict(self) -> dict:
        return {
            "elevation_deg": list(self.elevation_deg),
            "azimuth_resolution_deg": self.azimuth_resolution_deg,
            "rotation_hz": self.rotation_hz,
            "max_range_m": self.max_range_m,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SensorConfig":
        return cls(tuple(d["elevation_deg"]), d["azimuth_resolution_deg"], d["rotation_hz"], d["max_range_m"])


def spherical_to_cartesian(r, omega_deg, alpha_deg):
    """Range, elevation and azimuth to sensor-frame x/y/z.

    Azimuth is measured from +y towards +x. Works on scalars or arrays.
    """
    w = np.radians(omega_deg)
    a = np.radians(alpha_deg)
    horiz = r * np.cos(w)
    return horiz * np.sin(a), horiz * np.cos(a), r * np.sin(w)


def _wrap_azimuth(alpha):
    alpha = np.mod(alpha, 360.0)
    return np.where(alpha <= 0.0, alpha + 360.0, alpha)


def cartesian_to_spherical(x, y, z):
    """Inverse of :func:`spherical_to_cartesian`; azimuth lands in (0, 360]."""
    x, y, z = (np.asarray(v, dtype=np.float64) for v in (x, y, z))
    r = np.sqrt(x * x + y * y + z * z)
    if np.any(r == 0.0):
        raise OriginPoint("the origin has no direction")
    omega = np.degrees(np.arctan2(z, np.hypot(x, y)))
    alpha = _wrap_azimuth(np.degrees(np.arctan2(x, y)))
    if r.ndim == 0:
        return float(r), float(omega), float(alpha)
    return r, omega, alpha


def azimuth_bin(alpha_deg, config: SensorConfig):
    """Grid column of an azimuth: ``mod(floor(alpha / resolution) + 1, bins)``."""
    alpha = np.asarray(alpha_deg, dtype=np.float64)
    if np.any(~((alpha > 0.0) & (alpha <= 360.0))):
        raise DomainError("azimuth must lie in (0, 360]")
    idx = np.mod(np.floor(alpha / config.azimuth_resolution_deg).astype(np.int64) + 1, config.azimuth_bins)
    return int(idx) if idx.ndim == 0 else idx


@dataclass(frozen=True, eq=False)
class FrameTensor:
    """One frame hashed onto the grid.

    ``returned[b, a]`` marks cells holding a return; ``xyz`` and ``intensity``
    are NaN elsewhere. ``point_index`` maps each filled cell back to the
    frame's point order (-1 when empty).
    """
    frame_id: int
    returned: np.ndarray
    xyz: np.ndarray
    intensity: np.ndarray
    point_index: np.ndarray
    dropped: int = 0
    out_of_range: int = 0
    cell_of_point: np.ndarray = field(default=None, repr=False)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.returned.shape

    def flat(self):
        b, a = self.returned.shape
        return self.returned.reshape(-1), self.xyz.reshape(b * a, 3), self.intensity.reshape(-1)

    def cell(self, beam: int, abin: int):
        """The observation at one cell: ``None`` for NoReturn, else (xyz, intensity)."""
        if not self.returned[beam, abin]:
            return None
        return self.xyz[beam, abin].copy(), float(self.intensity[beam, abin])


def point_coordinates(frame: Frame, config: SensorConfig):
    """Cartesian coordinates and hashing azimuth for every return in ``frame``.

    Spherical-form points are converted with the beam's elevation;
    cartesian-form points get their azimuth recomputed from x/y/z.
    Returns (xyz, azimuth) with NaN rows for no-return records.
    """
    n = len(frame)
    if n and (frame.beam_id.max() >= config.beams):
        bad = int(frame.beam_id[frame.beam_id >= config.beams][0])
        raise BeamOutOfRange(f"beam_id {bad} outside [0, {config.beams})")
    xyz = np.array(frame.xyz, dtype=np.float64, copy=True)
    az = np.array(frame.azimuth_deg, dtype=np.float64, copy=True)
    spherical = frame.returned & ~np.isnan(frame.range_m)
    if spherical.any():
        elev = np.asarray(config.elevation_deg)[frame.beam_id[spherical]]
        x, y, z = spherical_to_cartesian(frame.range_m[spherical], elev, frame.azimuth_deg[spherical])
        xyz[spherical] = np.column_stack([x, y, z])
    cart = frame.returned & ~spherical
    if cart.any():
        _, _, alpha = cartesian_to_spherical(xyz[cart, 0], xyz[cart, 1], xyz[cart, 2])
        az[cart] = alpha
    return xyz, az


def point_cells(frame: Frame, config: SensorConfig):
    """Flat cell index per point (``beam * bins + azimuth_bin``) plus coordinates."""
    xyz, az = point_coordinates(frame, config)
    cells = frame.beam_id * config.azimuth_bins + azimuth_bin(az, config) if len(frame) else \
        np.zeros(0, dtype=np.int64)
    return np.asarray(cells, dtype=np.int64), xyz


def _winner_order(keys):
    """Lexsort on ``keys`` (last key primary), sorting on the first two only when that suffices."""
    if len(keys) <= 2 or len(keys[-1]) == 0:
        return np.lexsort(keys)
    cell, second = keys[-1], keys[-2]
    order = np.lexsort((second, cell))
    c, v = cell[order], second[order]
    if not np.any((c[1:] == c[:-1]) & (v[1:] == v[:-1])):
        return order
    return np.lexsort(keys)


def tensorize_frame(frame: Frame, config: SensorConfig,
                    policy: CollisionPolicy = CollisionPolicy.NEAREST) -> FrameTensor:
    policy = CollisionPolicy(policy)
    beams, bins = config.beams, config.azimuth_bins
    cells, xyz = point_cells(frame, config)
    rng = np.sqrt(np.einsum("ij,ij->i", xyz, xyz)) if len(frame) else np.zeros(0)
    in_range = frame.returned & (rng <= config.max_range_m)
    out_of_range = int((frame.returned & ~in_range).sum())
    idx = np.flatnonzero(in_range)

    if policy is CollisionPolicy.FIRST:
        keys = (idx, cells[idx])
    elif policy is CollisionPolicy.NEAREST:
        keys = (-frame.intensity[idx], xyz[idx, 2], xyz[idx, 1], xyz[idx, 0], rng[idx], cells[idx])
    else:
        keys = (rng[idx], xyz[idx, 2], xyz[idx, 1], xyz[idx, 0], -frame.intensity[idx], cells[idx])
    order = idx[_winner_order(keys)]
    sorted_cells = cells[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sorted_cells[1:] != sorted_cells[:-1]
    winners = order[first]

    returned = np.zeros(beams * bins, dtype=bool)
    out_xyz = np.full((beams * bins, 3), np.nan)
    inten = np.full(beams * bins, np.nan)
    pidx = np.full(beams * bins, -1, dtype=np.int64)
    wc = cells[winners]
    returned[wc] = True
    out_xyz[wc] = xyz[winners]
    inten[wc] = frame.intensity[winners]
    pidx[wc] = winners
    for a in (returned, out_xyz, inten, pidx):
        a.setflags(write=False)
    return FrameTensor(
        frame.frame_id, returned.reshape(beams, bins), out_xyz.reshape(beams, bins, 3),
        inten.reshape(beams, bins), pidx.reshape(beams, bins),
        dropped=int(len(idx) - len(winners)), out_of_range=out_of_range, cell_of_point=cells,
    )
