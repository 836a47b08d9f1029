"""Subtraction throughput across grid resolutions for both model types.

    python scripts/throughput.py [--frames N] [--resolutions 0.2 0.4 0.8]
"""
import argparse

from lidarbg.cli import bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=40)
    ap.add_argument("--train-frames", type=int, default=40)
    ap.add_argument("--resolutions", type=float, nargs="+", default=[0.2, 0.4, 0.8])
    ap.add_argument("--models", nargs="+", default=["adaptive", "dpgmm"])
    args = ap.parse_args()
    print(f"{'model':<10}{'grid':>10}{'frames/s':>10}{'points/s':>12}{'train s':>9}")
    for model in args.models:
        for res in args.resolutions:
            r = bench(model, resolution=res, frames=args.frames, train_frames=args.train_frames)
            grid = f"{r['beams']}x{r['azimuth_bins']}"
            print(f"{model:<10}{grid:>10}{r['fps']:10.2f}{r['points_per_s']:12.0f}{r['train_s']:9.1f}")


if __name__ == "__main__":
    main()
