"""Background model container: training, per-point subtraction and persistence.

The model file is one binary container::

    8-byte magic | u32 version | u32 header length | JSON header | raw arrays

The header (sorted keys) records the sensor, model type, hyperparameters,
training metadata and the name/dtype/shape of each array that follows in
little-endian C order.  Saving a loaded model reproduces the file byte for
byte.
"""
from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .adaptive import AdaptiveField
from .config import RunConfig
from .dpgmm import background_probability, default_level
from .dpgmm_field import DPGMMField
from .errors import IoError, ModelFileError
from .intensity import IntensityField, fit_intensity_field
from .pointio import Frame
from .tensorize import SensorConfig, point_cells, tensorize_frame

MODEL_MAGIC = b"LBGMODEL"
MODEL_VERSION = 1
_PREFIX = struct.Struct("<8sII")


@dataclass
class TrainingStack:
    """Tensorized training frames, flattened to ``(frames, cells)``."""
    returned: np.ndarray
    xyz: np.ndarray
    intensity: np.ndarray
    frame_ids: np.ndarray
    timestamps: np.ndarray
    dropped: int = 0

    @property
    def n_frames(self) -> int:
        return len(self.frame_ids)

    def ranges(self) -> np.ndarray:
        r = np.sqrt((self.xyz ** 2).sum(axis=2))
        return np.where(self.returned, r, np.nan)


def stack_frames(frames: Iterable[Frame], sensor: SensorConfig, policy: str = "nearest") -> TrainingStack:
    ret, xyz, inten, ids, ts, dropped = [], [], [], [], [], 0
    for frame in frames:
        t = tensorize_frame(frame, sensor, policy)
        r, x, i = t.flat()
        ret.append(r)
        xyz.append(x)
        inten.append(i)
        ids.append(frame.frame_id)
        ts.append(frame.timestamp)
        dropped += t.dropped
    C = sensor.n_cells
    if not ids:
        return TrainingStack(np.zeros((0, C), bool), np.zeros((0, C, 3)), np.zeros((0, C)),
                             np.zeros(0, np.int64), np.zeros(0))
    return TrainingStack(np.stack(ret), np.stack(xyz), np.stack(inten), np.array(ids, dtype=np.int64),
                         np.array(ts, dtype=np.float64), dropped)


def prior_means(stack: TrainingStack, first_n: int) -> np.ndarray:
    """Mean of each cell's first ``first_n`` returns (zero for cells that never returned)."""
    take = stack.returned & (np.cumsum(stack.returned, axis=0) <= first_n)
    cnt = take.sum(axis=0)
    tot = np.where(take[..., None], stack.xyz, 0.0).sum(axis=0)
    return np.divide(tot, cnt[:, None], out=np.zeros_like(tot), where=cnt[:, None] > 0)


def _chunks(n: int, parts: int):
    bounds = np.linspace(0, n, max(1, parts) + 1).astype(int)
    return [np.arange(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


@dataclass
class BackgroundModel:
    sensor: SensorConfig
    kind: str
    field: Union[DPGMMField, AdaptiveField]
    config: RunConfig = field(default_factory=RunConfig)
    intensity: Optional[IntensityField] = None
    metadata: dict = field(default_factory=dict)

    # -- weights -----------------------------------------------------------
    def point_weights(self, cells, intensity) -> np.ndarray:
        rate = self.config.intensity.sampling_rate
        if self.intensity is None or rate == 0:
            return np.ones(len(cells))
        return self.intensity.point_weights(cells, intensity, rate)

    # -- subtraction -------------------------------------------------------
    def foreground_mask(self, frame: Frame) -> np.ndarray:
        """Per-record foreground flags; no-return records are never foreground.

        The adaptive model keeps learning while it labels.
        """
        if self.kind == "adaptive":
            return self._adaptive_mask(frame)
        fg = np.zeros(len(frame), dtype=bool)
        if not frame.returned.any():
            return fg
        cells, xyz = point_cells(frame, self.sensor)
        ret = frame.returned
        logp = self.field.log_px_background(cells[ret], xyz[ret])
        d = self.config.dpgmm
        with np.errstate(over="ignore"):
            px = np.exp(np.minimum(logp, 700.0))
        p = background_probability(px, d.p_b, d.bayes_normalized)
        level = default_level(d.p_b, d.bayes_normalized) if d.level is None else d.level
        fg[ret] = np.asarray(p) < level
        return fg

    def _adaptive_mask(self, frame: Frame) -> np.ndarray:
        t = tensorize_frame(frame, self.sensor, self.config.collision_policy)
        returned, xyz, inten = t.flat()
        weights = np.ones(self.sensor.n_cells)
        if self.config.adaptive.weighted and returned.any():
            rc = np.flatnonzero(returned)
            weights[rc] = self.point_weights(rc, inten[rc])
        bg_cell = self.field.update_and_classify(np.arange(self.sensor.n_cells), xyz, returned, weights)
        fg = np.zeros(len(frame), dtype=bool)
        cells = t.cell_of_point
        winners = t.point_index.reshape(-1)
        win = winners[winners >= 0]
        fg[win] = ~bg_cell[cells[win]]
        others = frame.returned.copy()
        others[win] = False
        if others.any():
            _, pxyz = point_cells(frame, self.sensor)
            oi = np.flatnonzero(others)
            fg[oi] = ~self.field.classify(cells[oi], pxyz[oi])
        return fg


def train(frames: Iterable[Frame], sensor: SensorConfig, config: RunConfig = RunConfig(),
          threads: int = 1) -> BackgroundModel:
    stack = stack_frames(frames, sensor, config.collision_policy)
    return train_from_stack(stack, sensor, config, threads)


def fit_intensity(stack: TrainingStack, config: RunConfig) -> IntensityField:
    ic = config.intensity
    samples = np.where(stack.returned, stack.intensity, np.nan).T
    return fit_intensity_field(samples, ic.K, ic.seed, ic.restarts, ic.max_iter, ic.tol)


def train_from_stack(stack: TrainingStack, sensor: SensorConfig, config: RunConfig = RunConfig(),
                     threads: int = 1) -> BackgroundModel:
    C = sensor.n_cells
    need_intensity = config.intensity.sampling_rate > 0 and (
        config.model_type == "dpgmm" or config.adaptive.weighted)
    intensity = fit_intensity(stack, config) if need_intensity and stack.n_frames else None
    meta = {
        "frame_count": int(stack.n_frames),
        "first_timestamp": float(stack.timestamps[0]) if stack.n_frames else None,
        "last_timestamp": float(stack.timestamps[-1]) if stack.n_frames else None,
        "config_hash": config.digest(),
        "collisions_dropped": int(stack.dropped),
    }
    if config.model_type == "dpgmm":
        d = config.dpgmm
        fld = DPGMMField(C, prior_means(stack, d.prior_mean_returns), d.alpha, d.cap, d.kappa0, d.nu0,
                         d.psi0_scale * np.eye(3))
    else:
        fld = AdaptiveField(C, config.adaptive)
    model = BackgroundModel(sensor, config.model_type, fld, config, intensity, meta)
    chunks = _chunks(C, threads)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for n in range(stack.n_frames):
            ret, xyz, inten = stack.returned[n], stack.xyz[n], stack.intensity[n]
            w = np.ones(C)
            rc = np.flatnonzero(ret)
            w[rc] = model.point_weights(rc, inten[rc])
            if config.model_type == "dpgmm":
                step = lambda idx: fld.update(idx, xyz[idx], w[idx], ret[idx])  # noqa: E731
            else:
                step = lambda idx: fld.update_and_classify(idx, xyz[idx], ret[idx], w[idx])  # noqa: E731
            if pool is None:
                step(np.arange(C))
            else:
                list(pool.map(step, chunks))
    finally:
        if pool is not None:
            pool.shutdown()
    return model


# -- persistence ---------------------------------------------------------------

def _array_entries(model: BackgroundModel):
    arrays = [(f"field.{k}", v) for k, v in model.field.state().items()]
    if model.intensity is not None:
        arrays += [("intensity.weights", model.intensity.weights), ("intensity.means", model.intensity.means),
                   ("intensity.variances", model.intensity.variances)]
    return arrays


def model_bytes(model: BackgroundModel) -> bytes:
    arrays = _array_entries(model)
    header = {
        "model_type": model.kind,
        "sensor": model.sensor.to_dict(),
        "field": model.field.params(),
        "config": model.config.to_dict(),
        "metadata": model.metadata,
        "arrays": [{"name": n, "dtype": np.asarray(a).dtype.newbyteorder("<").str, "shape": list(np.shape(a))}
                   for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    parts = [_PREFIX.pack(MODEL_MAGIC, MODEL_VERSION, len(blob)), blob]
    for (_, a), spec in zip(arrays, header["arrays"]):
        parts.append(np.ascontiguousarray(a, dtype=spec["dtype"]).tobytes())
    return b"".join(parts)


def save_model(model: BackgroundModel, path) -> None:
    try:
        Path(path).write_bytes(model_bytes(model))
    except OSError as e:
        raise IoError(str(e)) from e


def load_model(path) -> BackgroundModel:
    from .config import from_dict

    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IoError(str(e)) from e
    if len(raw) < _PREFIX.size:
        raise ModelFileError("file too short")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise ModelFileError("not a background model file")
    if version != MODEL_VERSION:
        raise ModelFileError(f"model file version {version}, expected {MODEL_VERSION}")
    header = json.loads(raw[_PREFIX.size:_PREFIX.size + hlen])
    offset = _PREFIX.size + hlen
    arrays = {}
    for spec in header["arrays"]:
        dt = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = count * dt.itemsize
        if offset + nbytes > len(raw):
            raise ModelFileError(f"truncated array {spec['name']}")
        arrays[spec["name"]] = np.frombuffer(raw, dt, count, offset).reshape(spec["shape"])
        offset += nbytes
    if offset != len(raw):
        raise ModelFileError("trailing bytes after arrays")
    field_arrays = {k[6:]: v for k, v in arrays.items() if k.startswith("field.")}
    kind = header["model_type"]
    if kind == "dpgmm":
        fld = DPGMMField.from_state(header["field"], field_arrays)
    elif kind == "adaptive":
        fld = AdaptiveField.from_state(header["field"], field_arrays)
    else:
        raise ModelFileError(f"unknown model type {kind!r}")
    intensity = None
    if "intensity.weights" in arrays:
        intensity = IntensityField(arrays["intensity.weights"].copy(), arrays["intensity.means"].copy(),
                                   arrays["intensity.variances"].copy())
    config = from_dict(header["config"])
    return BackgroundModel(SensorConfig.from_dict(header["sensor"]), kind, fld, config, intensity,
                           header["metadata"])


__all__ = ["BackgroundModel", "TrainingStack", "load_model", "model_bytes", "save_model",
           "stack_frames", "train", "train_from_stack"]
