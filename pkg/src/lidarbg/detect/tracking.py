"""Track lifecycle with constant-velocity prediction and greedy gated association.

Association and state update are a deliberately small stand-in for a full
multi-hypothesis filter: tracks predict with constant velocity, detections
are assigned greedily by ascending XY distance within the gate, and matched
tracks blend toward the measurement with fixed alpha-beta gains.  The
lifecycle counters follow the confirmation and deletion rules exactly.
"""
from __future__ import annotations

import csv
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, List, Optional, Sequence

import numpy as np

from ..config import ClassRules, TrackConfig
from .classify import ObjectClass, classify_dims
from .obb import OBB


class TrackStatus(str, Enum):
    CANDIDATE = "Candidate"
    CONFIRMED = "Confirmed"
    DELETED = "Deleted"


@dataclass
class Detection:
    centroid: np.ndarray
    obb: OBB
    point_count: int
    cls: ObjectClass = ObjectClass.UNKNOWN

    @property
    def position(self) -> np.ndarray:
        return self.obb.center


TRAJECTORY_COLUMNS = ("track_id", "frame_id", "timestamp", "x", "y", "z", "yaw", "speed", "class", "status")


@dataclass
class Track:
    id: int
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    yaw: float = 0.0
    status: TrackStatus = TrackStatus.CANDIDATE
    hit_history: Deque[bool] = field(default_factory=lambda: deque(maxlen=8))
    consecutive_hits: int = 0
    ever_confirmed: bool = False
    votes: Counter = field(default_factory=Counter)
    trajectory: list = field(default_factory=list)

    @property
    def speed(self) -> float:
        return float(np.hypot(*self.velocity))

    @property
    def cls(self) -> ObjectClass:
        if not self.votes:
            return ObjectClass.UNKNOWN
        return self.votes.most_common(1)[0][0]

    @property
    def misses(self) -> int:
        return sum(1 for h in self.hit_history if not h)

    @property
    def alive(self) -> bool:
        return self.status is not TrackStatus.DELETED


class Tracker:
    def __init__(self, config: TrackConfig = TrackConfig(), rules: ClassRules = ClassRules()):
        self.config, self.rules = config, rules
        self.tracks: List[Track] = []
        self._next_id = 1

    def active(self) -> List[Track]:
        return [t for t in self.tracks if t.alive]

    def _record(self, t: Track, frame_id, timestamp):
        t.trajectory.append((t.id, frame_id, timestamp, *map(float, t.position), float(t.yaw), t.speed,
                             t.cls.value, t.status.value))

    def _push(self, t: Track, hit: bool):
        cfg = self.config
        t.hit_history.append(hit)
        t.consecutive_hits = t.consecutive_hits + 1 if hit else 0
        if t.status is TrackStatus.CANDIDATE and t.consecutive_hits >= cfg.confirm_hits:
            t.status = TrackStatus.CONFIRMED
            t.ever_confirmed = True
        if t.misses >= cfg.delete_misses:
            t.status = TrackStatus.DELETED

    def step(self, detections: Sequence[Detection], dt: float, frame_id: int = 0,
             timestamp: float = 0.0) -> List[Track]:
        if dt <= 0:
            raise ValueError("dt must be positive")
        cfg = self.config
        live = self.active()
        for t in live:
            t.position = t.position.copy()
            t.position[:2] += t.velocity * dt

        pairs = []
        if live and detections:
            tp = np.array([t.position[:2] for t in live])
            dp = np.array([d.position[:2] for d in detections])
            dist = np.linalg.norm(tp[:, None, :] - dp[None, :, :], axis=2)
            ti, di = np.nonzero(dist <= cfg.gate)
            order = np.lexsort((di, ti, dist[ti, di]))
            used_t, used_d = set(), set()
            for k in order:
                a, b = int(ti[k]), int(di[k])
                if a in used_t or b in used_d:
                    continue
                used_t.add(a)
                used_d.add(b)
                pairs.append((a, b))
        matched_t = {a for a, _ in pairs}
        matched_d = {b for _, b in pairs}

        for a, b in pairs:
            t, d = live[a], detections[b]
            r = d.position - t.position
            t.position = t.position + cfg.position_gain * r
            t.velocity = t.velocity + cfg.velocity_gain * r[:2] / dt
            t.yaw = d.obb.yaw
            t.votes[classify_dims(d.obb.length, d.obb.height, t.speed, self.rules)] += 1
            self._push(t, True)
        for a, t in enumerate(live):
            if a not in matched_t:
                self._push(t, False)
        for t in live:
            self._record(t, frame_id, timestamp)

        for b, d in enumerate(detections):
            if b in matched_d:
                continue
            t = Track(self._next_id, np.array(d.position, dtype=np.float64), yaw=d.obb.yaw,
                      hit_history=deque(maxlen=cfg.history))
            self._next_id += 1
            t.votes[d.cls] += 1
            if cfg.count_spawn_hit:
                self._push(t, True)
            self.tracks.append(t)
            self._record(t, frame_id, timestamp)
        return self.tracks


def track_step(tracker: Tracker, detections: Sequence[Detection], dt: float, gate: Optional[float] = None,
               frame_id: int = 0, timestamp: float = 0.0) -> List[Track]:
    if gate is not None and gate != tracker.config.gate:
        from dataclasses import replace
        tracker.config = replace(tracker.config, gate=gate)
    return tracker.step(detections, dt, frame_id, timestamp)


def write_trajectories(tracks: Sequence[Track], path) -> None:
    rows = sorted((r for t in tracks for r in t.trajectory), key=lambda r: (r[1], r[0]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for r in rows:
            w.writerow([r[0], r[1], repr(r[2]), *(repr(v) for v in r[3:8]), r[8], r[9]])


def read_trajectories(path):
    """Rows grouped per track id: ``{id: [(frame_id, t, x, y, z, status), ...]}``."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(int(row["track_id"]), []).append(
                (int(row["frame_id"]), float(row["timestamp"]), float(row["x"]), float(row["y"]),
                 float(row["z"]), row["status"]))
    return out
