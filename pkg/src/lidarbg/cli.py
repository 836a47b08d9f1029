"""Command-line front end: ``lidarbg <command> ...``.

Commands compose through files: synth writes frames plus ground-truth
sidecars, train writes a model container, subtract/detect/track read frames
and a model, eval compares outputs against sidecars.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config, validate
from .errors import ConfigError, LidarBGError
from .evaluate import (REPORT_COLUMNS, count_movements, format_table, object_metrics, path_count_accuracy,
                       point_metrics, sample_frames, write_report)
from .model import BackgroundModel, load_model, save_model, stack_frames, train_from_stack
from .pointio import read_frames, write_frames
from .tensorize import SensorConfig, tensorize_frame

log = logging.getLogger("lidarbg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_THRESHOLD = 0, 1, 2, 3


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        payload = {"level": record.levelname.lower(), "msg": record.getMessage()}
        payload.update(getattr(record, "fields", {}))
        return json.dumps(payload, sort_keys=True)


def _setup_logging(json_log: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter() if json_log else logging.Formatter("%(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO)
    log.propagate = False


def _event(msg: str, **fields) -> None:
    text = msg + "".join(f" {k}={v:.6g}" if isinstance(v, float) else f" {k}={v}" for k, v in fields.items())
    log.info(text if not _json_mode() else msg, extra={"fields": fields})


def _json_mode() -> bool:
    return any(isinstance(h.formatter, _JsonFormatter) for h in log.handlers)


@contextmanager
def stage(name: str, **fields):
    t0 = time.perf_counter()
    yield
    _event("stage", stage=name, seconds=time.perf_counter() - t0, **fields)


# -- helpers ---------------------------------------------------------------------

def sensor_sidecar(frames_path) -> Path:
    return Path(f"{Path(frames_path).with_suffix('')}.sensor.json")


def _load_sensor(args) -> SensorConfig:
    from .synth import default_sensor

    path = Path(args.sensor) if getattr(args, "sensor", None) else sensor_sidecar(args.input)
    if path.exists():
        try:
            return SensorConfig.from_dict(json.loads(path.read_text()))
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"bad sensor file {path}: {e}") from e
    if getattr(args, "sensor", None):
        raise ConfigError(f"no such sensor file: {path}")
    return default_sensor()


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "model_type", None):
        cfg = cfg.replace(model_type=args.model_type)
    if getattr(args, "sampling_rate", None) is not None:
        cfg = cfg.replace(intensity=replace(cfg.intensity, sampling_rate=args.sampling_rate))
    if getattr(args, "bayes_normalized", False):
        cfg = cfg.replace(dpgmm=replace(cfg.dpgmm, bayes_normalized=True))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(intensity=replace(cfg.intensity, seed=args.seed))
    return validate(cfg)


def _frames(args):
    frames = read_frames(args.input, args.format)
    limit = getattr(args, "frames", None)
    if limit is None:
        return frames
    return (f for i, f in zip(range(limit), frames))


def _threads(args) -> int:
    return args.threads if args.threads else (os.cpu_count() or 1)


# -- commands --------------------------------------------------------------------

def cmd_synth(args) -> int:
    from .synth import default_sensor, generate_scene, inject_vehicle, preset, write_ground_truth

    sensor = default_sensor(resolution=args.resolution) if args.resolution else None
    cfg = preset(args.preset, seed=args.seed or 0, duration_frames=args.frames, sensor=sensor)
    if args.inject_vehicle is not None:
        cfg = inject_vehicle(cfg, args.inject_vehicle)
    with stage("generate", frames=cfg.duration_frames):
        frames, gt = generate_scene(cfg)
    with stage("write"):
        write_frames(frames, args.output, args.format)
        paths = write_ground_truth(frames, gt, args.output)
        sensor_sidecar(args.output).write_text(json.dumps(cfg.sensor.to_dict(), sort_keys=True))
    print(f"wrote {len(frames)} frames to {args.output}")
    for p in paths.values():
        print(f"wrote {p}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    sensor = _load_sensor(args)
    with stage("tensorize"):
        stack = stack_frames(_frames(args), sensor, cfg.collision_policy)
    if stack.n_frames == 0:
        raise LidarBGError("no training frames")
    with stage("train", frames=stack.n_frames, model_type=cfg.model_type):
        model = train_from_stack(stack, sensor, cfg, _threads(args))
    save_model(model, args.output)
    print(f"trained {cfg.model_type} model on {stack.n_frames} frames -> {args.output}")
    return EXIT_OK


def _load(args) -> BackgroundModel:
    model = load_model(args.model)
    if args.config or args.bayes_normalized:
        cfg = _run_config(args)
        if cfg.model_type != model.kind:
            cfg = cfg.replace(model_type=model.kind)
        model.config = cfg
    return model


def cmd_subtract(args) -> int:
    model = _load(args)
    n_in = n_fg = 0
    t0 = time.perf_counter()
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_id", "point_index", "label"])
        for frame in _frames(args):
            fg = model.foreground_mask(frame)
            for i in np.flatnonzero(frame.returned):
                w.writerow([frame.frame_id, int(i), "Foreground" if fg[i] else "Background"])
            n_in += frame.n_returns
            n_fg += int(fg.sum())
    ratio = n_fg / n_in if n_in else 0.0
    _event("stage", stage="subtract", seconds=time.perf_counter() - t0, points=n_in)
    print(f"compression ratio {ratio:.6f} ({n_fg} foreground of {n_in} returns)")
    return EXIT_OK


DETECTION_COLUMNS = ("frame_id", "timestamp", "detection", "class", "cx", "cy", "cz", "length", "width",
                     "height", "yaw", "point_count")


def cmd_detect(args) -> int:
    from .detect import DetectionPipeline

    model = _load(args)
    pipe = DetectionPipeline(model)
    totals: dict = {}
    n = 0
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETECTION_COLUMNS)
        for frame in _frames(args):
            res = pipe.process(frame)
            n += 1
            for k, v in res.timings.items():
                totals[k] = totals.get(k, 0.0) + v
            for j, d in enumerate(res.detections):
                b = d.obb
                w.writerow([frame.frame_id, repr(frame.timestamp), j, d.cls.value, *map(repr, map(float, b.center)),
                            repr(b.length), repr(b.width), repr(b.height), repr(float(b.yaw)), d.point_count])
    for k, v in totals.items():
        _event("stage", stage=k, seconds=v, frames=n)
    print(f"processed {n} frames -> {args.output}")
    return EXIT_OK


def cmd_track(args) -> int:
    from .detect import DetectionPipeline, write_trajectories

    model = _load(args)
    pipe = DetectionPipeline(model, track=True)
    n = 0
    with stage("track"):
        for frame in _frames(args):
            pipe.process(frame)
            n += 1
    tracks = pipe.tracker.tracks
    write_trajectories(tracks, args.output)
    line = model.config.eval.screenline
    if line is not None:
        inbound, outbound = count_movements(tracks, line, model.config.eval.debounce_s)
        print(f"screenline counts inbound={inbound} outbound={outbound}")
    print(f"tracked {n} frames, {sum(t.ever_confirmed for t in tracks)} confirmed tracks -> {args.output}")
    return EXIT_OK


def _read_masks(path):
    out: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for fid, idx, label in reader:
            out.setdefault(int(fid), []).append((int(idx), label == "Foreground"))
    return out


def _read_detections(path):
    out: dict = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.setdefault(int(r["frame_id"]), []).append([float(r["cx"]), float(r["cy"])])
    return out


def _eval_point(args, cfg):
    from .synth import FOREGROUND, read_point_labels

    masks = _read_masks(args.input)
    labels = read_point_labels(args.gt)
    interval = args.interval or cfg.eval.point_interval
    ids = np.array(sorted(masks))
    pred, gt = [], []
    for fid in ids[sample_frames(ids, interval)]:
        if fid not in labels:
            raise LidarBGError(f"frame {fid} missing from ground truth")
        idx, fg = zip(*masks[fid])
        pred.append(np.array(fg))
        gt.append(labels[fid][np.array(idx)] == FOREGROUND)
    rep = point_metrics(np.concatenate(pred) if pred else [], np.concatenate(gt) if gt else [])
    return {"level": "point", **rep.as_dict()}


def _eval_object(args, cfg):
    from .synth import read_boxes

    pred = _read_detections(args.input)
    gt = read_boxes(args.gt, min_points=cfg.cluster.min_pts)
    interval = args.interval or cfg.eval.object_interval
    ids = np.array(sorted(set(pred) | set(gt)))
    tp = fp = fn = 0
    for fid in ids[sample_frames(ids, interval)]:
        g = [b[:2] for b in gt.get(fid, [])]
        a, b, c, _ = object_metrics(pred.get(fid, []), g, cfg.eval.match_radius)
        tp, fp, fn = tp + a, fp + b, fn + c
    from .evaluate import ConfusionCounts, MetricsReport
    acc = tp / (tp + fp + fn) if tp + fp + fn else 0.0
    rep = MetricsReport.from_counts(ConfusionCounts(tp, 0, fp, fn), accuracy=acc)
    return {"level": "object", **rep.as_dict()}


def _eval_path(args, cfg):
    from .detect import read_trajectories
    from .synth import SceneConfig

    line = cfg.eval.screenline or SceneConfig().screenline
    traj = read_trajectories(args.input)
    tracks = [(any(r[5] == "Confirmed" for r in rows), [(r[1], r[2], r[3]) for r in rows])
              for rows in traj.values()]
    inbound, outbound = count_movements(tracks, line, cfg.eval.debounce_s)
    ref = json.loads(Path(args.gt).read_text())
    row = {"level": "path", "inbound": inbound, "outbound": outbound,
           "ref_inbound": ref["inbound"], "ref_outbound": ref["outbound"]}
    for k in ("inbound", "outbound"):
        row[f"{k}_accuracy"] = path_count_accuracy(ref[k], row[k]) if ref[k] else float(row[k] == 0)
    row["accuracy"] = min(row["inbound_accuracy"], row["outbound_accuracy"])
    return row


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    with stage("eval", level=args.level):
        row = {"point": _eval_point, "object": _eval_object, "path": _eval_path}[args.level](args, cfg)
    if args.output:
        write_report([row], args.output)
    print(format_table([row]))
    failed = [name for name, lo in (("f1", cfg.eval.min_f1), ("precision", cfg.eval.min_precision),
                                    ("recall", cfg.eval.min_recall), ("accuracy", cfg.eval.min_accuracy))
              if lo is not None and name in row and row[name] < lo]
    if failed:
        print(f"below threshold: {', '.join(failed)}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def bench(model_type: str = "adaptive", resolution: float = 0.2, frames: int = 60, train_frames: int = 40,
          warmup: int = 5, preset_name: str = "urban-peak", seed: int = 0, config: RunConfig = RunConfig(),
          threads: int = 1) -> dict:
    """Subtraction throughput on a synthetic scene; returns observations, asserts nothing."""
    from .adaptive import AdaptiveField
    from .synth import default_sensor, generate_frame, preset

    sensor = default_sensor(resolution=resolution)
    cfg = preset(preset_name, seed=seed, sensor=sensor, duration_frames=train_frames + warmup + frames)
    out = {"model_type": model_type, "beams": sensor.beams, "azimuth_bins": sensor.azimuth_bins,
           "frames": frames}
    t0 = time.perf_counter()
    data = [generate_frame(cfg, n)[0] for n in range(cfg.duration_frames)]
    out["synth_s"] = time.perf_counter() - t0
    run = config.replace(model_type=model_type)
    t0 = time.perf_counter()
    if model_type == "dpgmm":
        model = train_from_stack(stack_frames(data[:train_frames], sensor, run.collision_policy), sensor, run,
                                 threads)
    else:
        model = BackgroundModel(sensor, "adaptive", AdaptiveField(sensor.n_cells, run.adaptive), run)
        for f in data[:train_frames]:
            model.foreground_mask(f)
    out["train_s"] = time.perf_counter() - t0
    test = data[train_frames:]
    for f in test[:warmup]:
        model.foreground_mask(f)
    test = test[warmup:]
    t0 = time.perf_counter()
    for f in test:
        tensorize_frame(f, sensor, run.collision_policy)
    out["tensorize_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    for f in test:
        model.foreground_mask(f)
    wall = time.perf_counter() - t0
    pts = sum(f.n_returns for f in test)
    out.update(subtract_s=wall, classify_s=max(wall - out["tensorize_s"], 0.0) if model_type == "adaptive"
               else wall, fps=len(test) / wall, points_per_s=pts / wall)
    return out


def cmd_bench(args) -> int:
    cfg = _run_config(args)
    res = bench(args.model_type or "adaptive", args.resolution or 0.2, args.frames or 60, args.train_frames,
                preset_name=args.preset, seed=args.seed or 0, config=cfg, threads=_threads(args))
    for k in ("synth_s", "train_s", "tensorize_s", "classify_s"):
        _event("stage", stage=k[:-2], seconds=res[k])
    print(f"{res['model_type']} {res['beams']}x{res['azimuth_bins']}: {res['fps']:.2f} frames/s, "
          f"{res['points_per_s']:.0f} points/s over {res['frames']} frames")
    if args.output:
        Path(args.output).write_text(json.dumps(res, indent=2, sort_keys=True))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .synth import PRESETS

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, default=0, help="worker threads (default: logical cores)")
    common.add_argument("--format", choices=("csv", "binary"), help="point file format (default: by extension)")
    common.add_argument("--json-log", action="store_true", help="JSON timing lines on stderr")
    common.add_argument("--model-type", choices=("dpgmm", "adaptive"))
    common.add_argument("--sampling-rate", type=int, choices=(0, 2, 4, 8))
    common.add_argument("--bayes-normalized", action="store_true")

    p = argparse.ArgumentParser(prog="lidarbg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic scene")
    s.add_argument("--preset", choices=PRESETS, default="clean-static")
    s.add_argument("--output", required=True)
    s.add_argument("--frames", type=int)
    s.add_argument("--resolution", type=float, help="azimuth resolution in degrees")
    s.add_argument("--inject-vehicle", type=int, metavar="FRAME", help="add one car entering at FRAME")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[common], help="fit a background model")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--sensor", help="sensor JSON (default: <input>.sensor.json, else the synthetic sensor)")
    s.add_argument("--frames", type=int, help="use only the first N frames")
    s.set_defaults(func=cmd_train)

    for name, func, help_ in (("subtract", cmd_subtract, "per-point background/foreground labels"),
                              ("detect", cmd_detect, "detections with boxes and classes"),
                              ("track", cmd_track, "trajectories")):
        s = sub.add_parser(name, parents=[common], help=help_)
        s.add_argument("--input", required=True)
        s.add_argument("--model", required=True)
        s.add_argument("--output", required=True)
        s.add_argument("--frames", type=int)
        s.set_defaults(func=func)

    s = sub.add_parser("eval", parents=[common], help="score outputs against ground truth")
    s.add_argument("--level", choices=("point", "object", "path"), required=True)
    s.add_argument("--input", required=True, help="masks, detections or trajectories CSV")
    s.add_argument("--gt", required=True, help="ground-truth sidecar (.gt.csv, .boxes.csv or .counts.json)")
    s.add_argument("--output", help="report CSV")
    s.add_argument("--interval", type=int, help="evaluate every N-th frame (default from config)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench", parents=[common], help="subtraction throughput on a synthetic scene")
    s.add_argument("--preset", choices=PRESETS, default="urban-peak")
    s.add_argument("--resolution", type=float, default=0.2)
    s.add_argument("--frames", type=int, default=60)
    s.add_argument("--train-frames", type=int, default=40)
    s.add_argument("--output", help="JSON report")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    _setup_logging(args.json_log)
    try:
        return args.func(args)
    except (LidarBGError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["REPORT_COLUMNS", "bench", "build_parser", "main"]
