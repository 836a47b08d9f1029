"""Deterministic synthetic roadside scenes with ground truth.

Every firing (beam, azimuth step) is ray-cast from the sensor origin against
the ground plane, static boxes and the moving boxes present at that frame;
the nearest hit wins.  Per frame the whole rotation is offset by a uniform
azimuth drift, and each firing gets small elevation/azimuth jitter.  Records
carry the nominal beam id, the actual firing azimuth and the noisy range
(spherical form), so the sensor's elevation table reconstructs slightly
trembling coordinates.  Snow replaces random firings with near-range hits.

Frame ``n`` draws its noise from ``default_rng([seed, n])`` so frames can be
generated independently and in any order.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, EmptyInput
from .pointio import Frame
from .tensorize import SensorConfig

BACKGROUND, FOREGROUND, CLUTTER = 0, 1, 2
LABEL_NAMES = {BACKGROUND: "Background", FOREGROUND: "Foreground", CLUTTER: "Clutter"}
LABEL_CODES = {v: k for k, v in LABEL_NAMES.items()}

# roadside unit: denser beams near the horizon
DEFAULT_ELEVATION = tuple(np.round(np.concatenate([
    np.linspace(-25.0, -6.0, 10), np.linspace(-5.0, 1.0, 16), np.linspace(2.0, 12.0, 6)]), 4).tolist())


def default_sensor(resolution: float = 0.4, max_range: float = 90.0) -> SensorConfig:
    return SensorConfig(DEFAULT_ELEVATION, resolution, 10.0, max_range)


@dataclass(frozen=True)
class StaticBox:
    center: Tuple[float, float, float]
    size: Tuple[float, float, float]        # length (along yaw), width, height
    yaw_deg: float = 0.0
    reflectivity: float = 60.0


@dataclass(frozen=True)
class MovingObject:
    object_id: int
    waypoints: Tuple[Tuple[float, float], ...]
    speed: float                             # m/s along the polyline
    size: Tuple[float, float, float]
    cls: str = "Car"
    start_frame: int = 0
    reflectivity: float = 120.0


@dataclass(frozen=True)
class SceneConfig:
    sensor: SensorConfig = field(default_factory=default_sensor)
    duration_frames: int = 100
    sensor_height: float = 3.0
    ground_reflectivity: float = 20.0
    static_boxes: Tuple[StaticBox, ...] = ()
    objects: Tuple[MovingObject, ...] = ()
    snow_rate: float = 0.0                   # expected clutter hits per frame
    snow_shell: Tuple[float, float] = (2.0, 25.0)
    jitter_sd_deg: float = 0.005
    drift_amplitude_deg: Optional[float] = None  # None: 1.5 x azimuth resolution
    no_return_prob: float = 0.0
    range_noise_m: float = 0.02
    intensity_noise: float = 2.0
    screenline: Tuple[Tuple[float, float], Tuple[float, float]] = ((0.0, 2.0), (0.0, 14.0))
    seed: int = 0

    @property
    def drift(self) -> float:
        if self.drift_amplitude_deg is None:
            return 1.5 * self.sensor.azimuth_resolution_deg
        return self.drift_amplitude_deg

    def validate(self) -> "SceneConfig":
        if self.duration_frames < 0:
            raise ConfigError("duration_frames must be non-negative")
        for name in ("snow_rate", "jitter_sd_deg", "no_return_prob", "range_noise_m", "intensity_noise"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.drift < 0:
            raise ConfigError("drift amplitude must be non-negative")
        if not 0 <= self.no_return_prob <= 1:
            raise ConfigError("no_return_prob must lie in [0, 1]")
        lo, hi = self.snow_shell
        if not 0 < lo < hi:
            raise ConfigError("snow shell needs 0 < inner < outer")
        if self.sensor_height <= 0:
            raise ConfigError("sensor_height must be positive")
        for o in self.objects:
            if len(o.waypoints) < 2 or o.speed < 0 or min(o.size) <= 0:
                raise ConfigError(f"object {o.object_id}: need 2+ waypoints, speed >= 0, positive size")
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ConfigError("object ids must be unique")
        return self


@dataclass(frozen=True)
class TrueBox:
    object_id: int
    cls: str
    center: np.ndarray
    length: float
    width: float
    height: float
    yaw: float
    point_count: int


@dataclass
class GroundTruth:
    labels: List[np.ndarray]                 # per frame, per record label code
    object_ids: List[np.ndarray]             # per frame, per record (-1 when none)
    boxes: List[List[TrueBox]]
    trajectories: Dict[int, List[Tuple[int, float, float, float]]]  # id -> (frame, t, x, y)
    counts: Tuple[int, int]

    def foreground(self, n: int) -> np.ndarray:
        return self.labels[n] == FOREGROUND


# -- geometry -------------------------------------------------------------------

def ray_directions(omega_deg, alpha_deg) -> np.ndarray:
    w, a = np.radians(omega_deg), np.radians(alpha_deg)
    return np.column_stack([np.cos(w) * np.sin(a), np.cos(w) * np.cos(a), np.sin(w)])


def ray_box_distance(D: np.ndarray, center, size, yaw: float) -> np.ndarray:
    """Entry distance of rays from the origin into an oriented box (inf when missed)."""
    c, s = np.cos(yaw), np.sin(yaw)
    cx, cy, cz = center
    o = np.array([-(c * cx + s * cy), -(-s * cx + c * cy), -cz])
    d = np.column_stack([c * D[:, 0] + s * D[:, 1], -s * D[:, 0] + c * D[:, 1], D[:, 2]])
    half = np.asarray(size, dtype=np.float64) / 2.0
    tlo = np.full(len(D), -np.inf)
    thi = np.full(len(D), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(3):
            dk = d[:, k]
            par = dk == 0
            t1 = (-half[k] - o[k]) / dk
            t2 = (half[k] - o[k]) / dk
            lo = np.where(par, np.where(abs(o[k]) <= half[k], -np.inf, np.inf), np.minimum(t1, t2))
            hi = np.where(par, np.where(abs(o[k]) <= half[k], np.inf, -np.inf), np.maximum(t1, t2))
            tlo = np.maximum(tlo, lo)
            thi = np.minimum(thi, hi)
    hit = (thi >= tlo) & (tlo > 0)
    return np.where(hit, tlo, np.inf)


def object_pose(obj: MovingObject, t: float, hz: float):
    """(x, y, heading) at time ``t`` seconds, or None when off its path."""
    s = obj.speed * (t - obj.start_frame / hz)
    P = np.asarray(obj.waypoints, dtype=np.float64)
    seg = np.diff(P, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    if s < 0 or s > cum[-1] or cum[-1] == 0:
        return None
    i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(lens) - 1)
    f = (s - cum[i]) / lens[i] if lens[i] > 0 else 0.0
    x, y = P[i] + f * seg[i]
    return float(x), float(y), float(np.arctan2(seg[i, 1], seg[i, 0]))


# -- generation -------------------------------------------------------------------

def _frame(cfg: SceneConfig, n: int, obj_intensity: Dict[int, float]):
    sensor = cfg.sensor
    rng = np.random.default_rng([cfg.seed, n])
    B, A, res = sensor.beams, sensor.azimuth_bins, sensor.azimuth_resolution_deg
    hz = sensor.rotation_hz
    t = n / hz

    beam = np.tile(np.arange(B), A)
    step = np.repeat(np.arange(A), B)
    drift = rng.uniform(-cfg.drift, cfg.drift)
    alpha = (step + 0.5) * res + drift + rng.normal(0.0, cfg.jitter_sd_deg, len(beam))
    alpha = np.mod(alpha, 360.0)
    alpha = np.where(alpha <= 0.0, alpha + 360.0, alpha)
    omega = np.asarray(sensor.elevation_deg)[beam] + rng.normal(0.0, cfg.jitter_sd_deg, len(beam))
    D = ray_directions(omega, alpha)

    dist = np.full(len(D), np.inf)
    label = np.full(len(D), BACKGROUND)
    oid = np.full(len(D), -1)
    refl = np.full(len(D), np.nan)

    with np.errstate(divide="ignore"):
        tg = np.where(D[:, 2] < 0, -cfg.sensor_height / D[:, 2], np.inf)
    ground = np.isfinite(tg)
    gx, gy = np.where(ground, tg, 0.0) * D[:, 0], np.where(ground, tg, 0.0) * D[:, 1]
    checker = (np.floor(gx / 3.0) + np.floor(gy / 3.0)) % 2
    dist = tg
    refl = np.where(ground, cfg.ground_reflectivity + 8.0 * checker, np.nan)

    for b in cfg.static_boxes:
        tb = ray_box_distance(D, b.center, b.size, np.radians(b.yaw_deg))
        closer = tb < dist
        dist = np.where(closer, tb, dist)
        refl = np.where(closer, b.reflectivity, refl)

    boxes = []
    for o in cfg.objects:
        pose = object_pose(o, t, hz)
        if pose is None:
            continue
        x, y, yaw = pose
        L, W, H = o.size
        center = (x, y, -cfg.sensor_height + H / 2.0)
        if np.hypot(x, y) - np.hypot(L, W) > sensor.max_range_m:
            continue
        tb = ray_box_distance(D, center, o.size, yaw)
        closer = tb < dist
        dist = np.where(closer, tb, dist)
        refl = np.where(closer, obj_intensity[o.object_id], refl)
        label = np.where(closer, FOREGROUND, label)
        oid = np.where(closer, o.object_id, oid)
        boxes.append((o, np.array(center), yaw))

    # a finite hit blocked by nothing else; object hits may still be overwritten by snow below
    rng_m = dist + rng.normal(0.0, cfg.range_noise_m, len(D))
    intensity = refl + rng.normal(0.0, cfg.intensity_noise, len(D))

    if cfg.snow_rate > 0:
        k = min(rng.poisson(cfg.snow_rate), len(D))
        pick = rng.choice(len(D), size=k, replace=False)
        lo, hi = cfg.snow_shell
        r = rng.uniform(lo, hi, k)
        take = r < np.where(np.isfinite(dist[pick]), rng_m[pick], np.inf)
        pick, r = pick[take], r[take]
        rng_m[pick] = r
        dist[pick] = r
        intensity[pick] = rng.uniform(1.0, 15.0, len(pick))
        label[pick] = CLUTTER
        oid[pick] = -1

    returned = np.isfinite(dist) & (rng_m <= sensor.max_range_m)
    if cfg.no_return_prob > 0:
        returned &= ~((label == BACKGROUND) & (rng.random(len(D)) < cfg.no_return_prob))
    rng_m = np.where(returned, np.maximum(rng_m, 0.01), np.nan)
    intensity = np.where(returned, np.clip(np.round(intensity), 0, 255), np.nan)
    label = np.where(returned, label, BACKGROUND)
    oid = np.where(returned, oid, -1)

    frame = Frame(n, round(t, 9), beam, alpha, rng_m, np.full((len(D), 3), np.nan), intensity, returned)
    true_boxes = [TrueBox(o.object_id, o.cls, c, o.size[0], o.size[1], o.size[2], yaw % np.pi,
                          int((oid == o.object_id).sum())) for o, c, yaw in boxes]
    return frame, label, oid, true_boxes


def _object_intensities(cfg: SceneConfig) -> Dict[int, float]:
    rng = np.random.default_rng([cfg.seed, 2 ** 31])
    return {o.object_id: o.reflectivity + float(rng.uniform(-20.0, 20.0)) for o in cfg.objects}


def generate_frame(cfg: SceneConfig, n: int):
    """One frame with its labels, object ids and visible true boxes."""
    return _frame(cfg, n, _object_intensities(cfg))


def true_trajectories(cfg: SceneConfig):
    hz = cfg.sensor.rotation_hz
    out = {}
    for o in cfg.objects:
        rows = []
        for n in range(cfg.duration_frames):
            pose = object_pose(o, n / hz, hz)
            if pose is not None:
                rows.append((n, round(n / hz, 9), pose[0], pose[1]))
        out[o.object_id] = rows
    return out


def generate_scene(cfg: SceneConfig):
    """(frames, GroundTruth) for the whole scene."""
    from .evaluate import track_crossings

    cfg.validate()
    inten = _object_intensities(cfg)
    frames, labels, oids, boxes = [], [], [], []
    for n in range(cfg.duration_frames):
        f, lab, oid, bx = _frame(cfg, n, inten)
        frames.append(f)
        labels.append(lab)
        oids.append(oid)
        boxes.append(bx)
    traj = true_trajectories(cfg)
    inbound = outbound = 0
    for rows in traj.values():
        for _, sign in track_crossings([(t, x, y) for _, t, x, y in rows], cfg.screenline, 0.0):
            inbound += sign > 0
            outbound += sign < 0
    return frames, GroundTruth(labels, oids, boxes, traj, (int(inbound), int(outbound)))


def background_fraction(frames: Sequence[Frame], gt: GroundTruth) -> float:
    """Background-labeled returns over all returns."""
    if not len(frames):
        raise EmptyInput("no frames")
    bg = tot = 0
    for f, lab in zip(frames, gt.labels):
        bg += int((f.returned & (lab == BACKGROUND)).sum())
        tot += f.n_returns
    if tot == 0:
        raise EmptyInput("no returns in the scene")
    return bg / tot


# -- ground-truth sidecars ----------------------------------------------------------

def sidecar_paths(out) -> Dict[str, Path]:
    p = Path(out)
    stem = p.with_suffix("")
    return {"points": Path(f"{stem}.gt.csv"), "boxes": Path(f"{stem}.boxes.csv"),
            "counts": Path(f"{stem}.counts.json")}


def write_ground_truth(frames: Sequence[Frame], gt: GroundTruth, out) -> Dict[str, Path]:
    paths = sidecar_paths(out)
    with open(paths["points"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_id", "point_index", "label", "object_id", "returned"])
        for f, lab, oid in zip(frames, gt.labels, gt.object_ids):
            for i in range(len(f)):
                w.writerow([f.frame_id, i, LABEL_NAMES[int(lab[i])], int(oid[i]), int(f.returned[i])])
    with open(paths["boxes"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_id", "timestamp", "object_id", "class", "cx", "cy", "cz", "length", "width",
                    "height", "yaw", "point_count"])
        for f, bx in zip(frames, gt.boxes):
            for b in bx:
                w.writerow([f.frame_id, repr(f.timestamp), b.object_id, b.cls, *map(repr, map(float, b.center)),
                            repr(b.length), repr(b.width), repr(b.height), repr(float(b.yaw)), b.point_count])
    paths["counts"].write_text(json.dumps({"inbound": gt.counts[0], "outbound": gt.counts[1]}, sort_keys=True))
    return paths


def read_point_labels(path) -> Dict[int, np.ndarray]:
    """frame_id -> per record label codes."""
    rows: Dict[int, list] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader)
        fi, li = head.index("frame_id"), head.index("label")
        for r in reader:
            rows.setdefault(int(r[fi]), []).append(LABEL_CODES[r[li]])
    return {k: np.array(v, dtype=np.int64) for k, v in rows.items()}


def read_boxes(path, min_points: int = 1) -> Dict[int, List[np.ndarray]]:
    """frame_id -> list of box centres with at least ``min_points`` returns."""
    out: Dict[int, list] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            if int(r["point_count"]) >= min_points:
                out.setdefault(int(r["frame_id"]), []).append(
                    np.array([float(r["cx"]), float(r["cy"]), float(r["cz"])]))
    return out


# -- presets ------------------------------------------------------------------------

def _street_furniture() -> Tuple[StaticBox, ...]:
    boxes = [
        StaticBox((0.0, -14.0, 3.0), (60.0, 8.0, 12.0), 0.0, 70.0),      # building row behind the unit
        StaticBox((-45.0, 26.0, 4.0), (30.0, 10.0, 14.0), 0.0, 55.0),    # across the street
        StaticBox((5.0, 26.0, 2.0), (40.0, 10.0, 10.0), 0.0, 65.0),
        StaticBox((50.0, 24.0, 0.0), (20.0, 6.0, 6.0), 15.0, 80.0),
        StaticBox((40.0, -10.0, -2.0), (12.0, 0.4, 2.0), 0.0, 90.0),     # wall
    ]
    for x in (-40.0, -25.0, -10.0, 8.0, 22.0, 36.0):                      # poles along the curb
        boxes.append(StaticBox((x, 2.5, 0.0), (0.3, 0.3, 6.0), 0.0, 140.0))
    for x in (-30.0, 15.0, 45.0):                                         # tree trunks across the street
        boxes.append(StaticBox((x, 17.0, -1.0), (0.6, 0.6, 4.0), 0.0, 35.0))
    return tuple(boxes)


_SIZES = {"Car": (4.5, 1.9, 1.5), "Truck": (8.5, 2.5, 3.2), "LargeFreight": (16.0, 2.6, 4.0),
          "Pedestrian": (0.6, 0.6, 1.75)}


def _vehicle(oid, cls, lane_y, direction, start, speed, x_span=80.0, reflectivity=120.0):
    a, b = (-x_span, lane_y), (x_span, lane_y)
    wp = (a, b) if direction > 0 else (b, a)
    return MovingObject(oid, wp, speed, _SIZES[cls], cls, start, reflectivity)


def inject_vehicle(cfg: SceneConfig, start_frame: int, speed: float = 8.0, lane_y: float = 6.0,
                   direction: int = 1, cls: str = "Car") -> SceneConfig:
    oid = max((o.object_id for o in cfg.objects), default=0) + 1
    return replace(cfg, objects=cfg.objects + (_vehicle(oid, cls, lane_y, direction, start_frame, speed,
                                                        x_span=25.0),))


def preset(name: str, seed: int = 0, duration_frames: Optional[int] = None,
           sensor: Optional[SensorConfig] = None) -> SceneConfig:
    sensor = sensor or default_sensor()
    base = SceneConfig(sensor=sensor, static_boxes=_street_furniture(), seed=seed)
    if name == "clean-static":
        cfg = replace(base, duration_frames=120)
    elif name == "snow-low-volume":
        objs = [_vehicle(1, "Car", 6.0, 1, 15, 9.0), _vehicle(2, "Car", 9.5, -1, 60, 10.0),
                _vehicle(3, "Truck", 6.0, 1, 130, 8.0),
                MovingObject(4, ((-20.0, 3.8), (20.0, 3.8)), 1.4, _SIZES["Pedestrian"], "Pedestrian", 0, 60.0)]
        cfg = replace(base, duration_frames=200, objects=tuple(objs), snow_rate=60.0, no_return_prob=0.002)
    elif name == "urban-peak":
        rng = np.random.default_rng([seed, 7])
        objs, oid = [], 1
        for lane_y, direction in ((6.0, 1), (9.5, -1)):
            start = -60
            while start < 220:
                cls = rng.choice(["Car", "Car", "Car", "Truck", "LargeFreight"])
                objs.append(_vehicle(oid, str(cls), lane_y, direction, int(start), float(rng.uniform(8, 13)),
                                     reflectivity=float(rng.uniform(60, 200))))
                oid += 1
                start += int(rng.integers(30, 55))
        for k in range(4):
            y = 3.8 if k % 2 == 0 else -3.5
            wp = ((-25.0, y), (25.0, y)) if k < 2 else ((25.0, y), (-25.0, y))
            objs.append(MovingObject(oid, wp, float(rng.uniform(1.1, 1.6)), _SIZES["Pedestrian"], "Pedestrian",
                                     int(rng.integers(0, 60)), 60.0))
            oid += 1
        cfg = replace(base, duration_frames=200, objects=tuple(objs))
    else:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    if duration_frames is not None:
        cfg = replace(cfg, duration_frames=int(duration_frames))
    return cfg.validate()


PRESETS = ("clean-static", "snow-low-volume", "urban-peak")
