"""Per-frame detection pipeline.

Stage order: geofence, background classification, LOF, clustering, boxes,
class rules, tracking.  Each foreground point inside the geofence ends up in
exactly one bucket: a cluster id (>= 0), DBSCAN noise (-1) or LOF-removed (-2).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..config import RunConfig
from ..errors import DegenerateCluster
from ..pointio import Frame
from ..tensorize import point_coordinates
from .classify import classify_object
from .dbscan import dbscan
from .geofence import geofence_mask, polygons_from_config
from .lof import lof_mask
from .obb import fit_obb
from .tracking import Detection, Tracker

LOF_REMOVED = -2


@dataclass
class FrameResult:
    frame_id: int
    timestamp: float
    foreground: np.ndarray          # per record, after geofence
    point_index: np.ndarray         # record index of each foreground point
    assignment: np.ndarray          # cluster id, NOISE or LOF_REMOVED per foreground point
    detections: List[Detection]
    degenerate: int = 0
    timings: Dict[str, float] = field(default_factory=dict)


class DetectionPipeline:
    def __init__(self, model, config: Optional[RunConfig] = None, track: bool = False):
        self.model = model
        self.config = config or model.config
        g = self.config.geofence
        self.polygons = polygons_from_config(g.include, g.exclude)
        self.tracker = Tracker(self.config.track, self.config.classes) if track else None
        self._last_t: Optional[float] = None

    def process(self, frame: Frame) -> FrameResult:
        cfg = self.config
        tm = {}
        t0 = time.perf_counter()
        xyz, _ = point_coordinates(frame, self.model.sensor)
        inside = frame.returned.copy()
        if self.polygons:
            inside[frame.returned] = geofence_mask(xyz[frame.returned, :2], self.polygons)
        tm["geofence"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        fg = self.model.foreground_mask(frame) & inside
        tm["background"] = time.perf_counter() - t0

        idx = np.flatnonzero(fg)
        P = xyz[idx]
        t0 = time.perf_counter()
        keep = lof_mask(P, cfg.lof.k, cfg.lof.threshold) if len(P) else np.zeros(0, bool)
        tm["lof"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        assignment = np.full(len(P), LOF_REMOVED, dtype=np.int64)
        c = cfg.cluster
        assignment[keep] = dbscan(P[keep], c.eps, c.min_pts, c.range_scaling, c.reference_range)
        tm["cluster"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        dets, degenerate = [], 0
        n_clusters = assignment.max() + 1 if len(assignment) else 0
        for k in range(n_clusters):
            pts = P[assignment == k]
            try:
                box = fit_obb(pts)
            except DegenerateCluster:
                degenerate += 1
                continue
            dets.append(Detection(pts.mean(axis=0), box, len(pts), classify_object(box, None, cfg.classes)))
        tm["boxes"] = time.perf_counter() - t0

        if self.tracker is not None:
            t0 = time.perf_counter()
            dt = 1.0 / self.model.sensor.rotation_hz if self._last_t is None else frame.timestamp - self._last_t
            self.tracker.step(dets, dt if dt > 0 else 1.0 / self.model.sensor.rotation_hz, frame.frame_id,
                              frame.timestamp)
            self._last_t = frame.timestamp
            tm["track"] = time.perf_counter() - t0
        return FrameResult(frame.frame_id, frame.timestamp, fg, idx, assignment, dets, degenerate, tm)
