"""Detect, track and count screenline crossings on a synthetic preset.

Compares tracker counts with the simulator's true crossings and reports
object-level matching on every frame after training.

    python scripts/path_counts.py [--preset urban-peak] [--frames 200] [--train 100]
"""
import argparse

from lidarbg.detect import DetectionPipeline
from lidarbg.evaluate import count_movements, object_metrics, path_count_accuracy, track_crossings
from lidarbg.model import train
from lidarbg.synth import PRESETS, default_sensor, generate_scene, preset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", choices=PRESETS, default="urban-peak")
    ap.add_argument("--frames", type=int, default=200)
    ap.add_argument("--train", type=int, default=100)
    ap.add_argument("--resolution", type=float, default=0.4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = preset(args.preset, seed=args.seed, duration_frames=args.frames,
                 sensor=default_sensor(resolution=args.resolution))
    frames, gt = generate_scene(cfg)
    model = train(frames[:args.train], cfg.sensor)
    pipe = DetectionPipeline(model, track=True)
    tp = fp = fn = 0
    for n in range(args.train, len(frames)):
        res = pipe.process(frames[n])
        truth = [b.center for b in gt.boxes[n] if b.point_count >= model.config.cluster.min_pts]
        a, b, c, _ = object_metrics([d.position for d in res.detections], truth)
        tp, fp, fn = tp + a, fp + b, fn + c
    inbound, outbound = count_movements(pipe.tracker.tracks, cfg.screenline)
    # truth restricted to crossings after training, when the tracker was running
    t0 = frames[args.train].timestamp
    ref_in = ref_out = 0
    for rows in gt.trajectories.values():
        for t, sign in track_crossings([(t, x, y) for _, t, x, y in rows], cfg.screenline, 0.0):
            if t >= t0:
                ref_in += sign > 0
                ref_out += sign < 0
    print(f"objects: tp {tp} fp {fp} fn {fn}  precision {tp / max(tp + fp, 1):.3f} recall {tp / max(tp + fn, 1):.3f}")
    print(f"tracks: {len(pipe.tracker.tracks)} spawned, "
          f"{sum(t.ever_confirmed for t in pipe.tracker.tracks)} confirmed")
    for name, ref, got in (("inbound", ref_in, inbound), ("outbound", ref_out, outbound)):
        acc = f"{100 * path_count_accuracy(ref, got):.2f}%" if ref else "n/a"
        print(f"{name:<9} reference {ref:3d}  measured {got:3d}  accuracy {acc}")


if __name__ == "__main__":
    main()
