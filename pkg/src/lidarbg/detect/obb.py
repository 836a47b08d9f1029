"""PCA oriented bounding boxes: yaw from the XY principal axis, height from the z range."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateCluster

COLLINEAR_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class OBB:
    center: np.ndarray
    length: float
    width: float
    height: float
    yaw: float  # radians in [0, pi), direction of the length axis

    def axes(self):
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        return np.array([c, s]), np.array([-s, c])

    def contains(self, points, inflate: float = 1e-6) -> np.ndarray:
        P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        u, v = self.axes()
        d = P[:, :2] - self.center[:2]
        return ((np.abs(d @ u) <= self.length / 2 + inflate)
                & (np.abs(d @ v) <= self.width / 2 + inflate)
                & (np.abs(P[:, 2] - self.center[2]) <= self.height / 2 + inflate))

    def corners_xy(self) -> np.ndarray:
        u, v = self.axes()
        c = self.center[:2]
        hl, hw = self.length / 2, self.width / 2
        return np.array([c + hl * u + hw * v, c - hl * u + hw * v, c - hl * u - hw * v, c + hl * u - hw * v])


def fit_obb(points) -> OBB:
    P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(P) < 3:
        raise DegenerateCluster(f"need at least 3 points, got {len(P)}")
    xy = P[:, :2]
    mu = xy.mean(axis=0)
    evals, evecs = np.linalg.eigh(np.cov((xy - mu).T, bias=True))
    u = evecs[:, 1]
    yaw = float(np.arctan2(u[1], u[0]) % np.pi)
    if np.pi - yaw < 1e-12:
        yaw = 0.0
    c, s = np.cos(yaw), np.sin(yaw)
    u, v = np.array([c, s]), np.array([-s, c])
    a, b = (xy - mu) @ u, (xy - mu) @ v
    length, width = a.max() - a.min(), b.max() - b.min()
    if width < COLLINEAR_TOL or length < COLLINEAR_TOL:
        raise DegenerateCluster("cluster points are collinear in XY")
    if width > length:
        length, width = width, length
        yaw = (yaw + np.pi / 2) % np.pi
        u, v, a, b = v, -u, b, -a
    center_xy = mu + u * (a.max() + a.min()) / 2 + v * (b.max() + b.min()) / 2
    z0, z1 = P[:, 2].min(), P[:, 2].max()
    return OBB(np.array([center_xy[0], center_xy[1], (z0 + z1) / 2]), float(length), float(width),
               float(z1 - z0), float(yaw))


def aabb_area(points) -> float:
    xy = np.asarray(points, dtype=np.float64)[:, :2]
    ext = xy.max(axis=0) - xy.min(axis=0)
    return float(ext[0] * ext[1])
