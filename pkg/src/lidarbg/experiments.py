"""Desk-scale segmentation experiments on the synthetic presets.

Shared by the acceptance suite and the scripts in ``scripts/``.  Every
function trains on the leading frames of a scene, scores the remaining
frames against the simulator labels and returns plain numbers.  Snow
clutter counts as a negative: only object returns are foreground.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

from .baseline import MeanMaxBackground
from .config import RunConfig
from .evaluate import ConfusionCounts, MetricsReport, confusion
from .model import stack_frames, train_from_stack
from .synth import FOREGROUND, default_sensor, generate_scene, inject_vehicle, preset
from .tensorize import point_cells


@dataclass
class SegmentationRun:
    report: MetricsReport
    foreground_fraction: float
    train_s: float
    test_s: float
    baseline: Optional[MetricsReport] = None


def _scene(name: str, seed: int, frames: int, resolution: float, vehicle_at: Optional[int]):
    cfg = preset(name, seed=seed, duration_frames=frames, sensor=default_sensor(resolution=resolution))
    if vehicle_at is not None:
        cfg = inject_vehicle(cfg, vehicle_at)
    return cfg, *generate_scene(cfg)


def segment(name: str, seed: int = 0, train_frames: int = 100, test_frames: int = 100,
            resolution: float = 0.4, vehicle_at: Optional[int] = None, config: RunConfig = RunConfig(),
            baseline: bool = False) -> SegmentationRun:
    """Train on frames ``[0, train_frames)`` and score the next ``test_frames``."""
    cfg, frames, gt = _scene(name, seed, train_frames + test_frames, resolution, vehicle_at)
    sensor = cfg.sensor
    t0 = time.perf_counter()
    stack = stack_frames(frames[:train_frames], sensor, config.collision_policy)
    model = train_from_stack(stack, sensor, config)
    train_s = time.perf_counter() - t0
    mm = MeanMaxBackground.fit(stack.ranges()) if baseline else None

    total, base = ConfusionCounts(), ConfusionCounts()
    n_fg = n_ret = 0
    t0 = time.perf_counter()
    for n in range(train_frames, len(frames)):
        f = frames[n]
        ret = f.returned
        truth = gt.labels[n][ret] == FOREGROUND
        fg = model.foreground_mask(f)[ret]
        total = total + confusion(fg, truth)
        n_fg += int(fg.sum())
        n_ret += int(ret.sum())
        if mm is not None:
            cells, _ = point_cells(f, sensor)
            base = base + confusion(mm.foreground(cells[ret], f.range_m[ret]), truth)
    test_s = time.perf_counter() - t0
    return SegmentationRun(MetricsReport.from_counts(total), n_fg / max(n_ret, 1), train_s, test_s,
                           MetricsReport.from_counts(base) if mm is not None else None)


def clean_vehicle(seed: int = 1, train_frames: int = 80, test_frames: int = 40, **kw) -> SegmentationRun:
    """Clean static scene with one car entering right after training."""
    return segment("clean-static", seed, train_frames, test_frames, vehicle_at=train_frames, **kw)


def snow(seed: int = 0, train_frames: int = 100, test_frames: int = 100, **kw) -> SegmentationRun:
    return segment("snow-low-volume", seed, train_frames, test_frames, baseline=True, **kw)


def urban_compression(seed: int = 0, train_frames: int = 100, test_frames: int = 100, **kw) -> SegmentationRun:
    return segment("urban-peak", seed, train_frames, test_frames, **kw)


__all__ = ["SegmentationRun", "clean_vehicle", "segment", "snow", "urban_compression"]
