"""Include/exclude polygon filtering in the sensor XY plane."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import shapely
from shapely.geometry import Polygon

from ..errors import InvalidPolygon


@dataclass(frozen=True, eq=False)
class GeofencePolygon:
    vertices: np.ndarray
    include: bool = True

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise InvalidPolygon("a polygon needs at least 3 XY vertices")
        if not np.isfinite(v).all():
            raise InvalidPolygon("polygon vertices must be finite")
        poly = Polygon(v)
        if not poly.is_valid or poly.area <= 0:
            raise InvalidPolygon(f"polygon is not simple: {shapely.is_valid_reason(poly)}")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "_shape", poly)

    def covers(self, xy) -> np.ndarray:
        """Boundary counts as inside."""
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        return shapely.intersects_xy(self._shape, xy[:, 0], xy[:, 1])


def geofence_mask(xy, polygons: Sequence[GeofencePolygon]) -> np.ndarray:
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    inc = [p for p in polygons if p.include]
    exc = [p for p in polygons if not p.include]
    keep = np.zeros(len(xy), dtype=bool) if inc else np.ones(len(xy), dtype=bool)
    for p in inc:
        keep |= p.covers(xy)
    for p in exc:
        keep &= ~p.covers(xy)
    return keep


def geofence_filter(points, polygons: Sequence[GeofencePolygon]) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if not polygons:
        return points
    return points[geofence_mask(points[:, :2], polygons)]


def polygons_from_config(include, exclude):
    return [GeofencePolygon(v, True) for v in include] + [GeofencePolygon(v, False) for v in exclude]
