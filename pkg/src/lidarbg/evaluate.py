"""Point, object and path level evaluation.

Ratios with a zero denominator are reported as 0.  Path accuracy is
``1 - |measured - reference| / reference``.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyInput, LengthMismatch, ZeroReference


def _ratio(a, b) -> float:
    return float(a) / float(b) if b else 0.0


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, o: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + o.tp, self.tn + o.tn, self.fp + o.fp, self.fn + o.fn)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts

    @classmethod
    def from_counts(cls, c: ConfusionCounts, accuracy: Optional[float] = None) -> "MetricsReport":
        p = _ratio(c.tp, c.tp + c.fp)
        r = _ratio(c.tp, c.tp + c.fn)
        f1 = _ratio(2 * p * r, p + r)
        acc = _ratio(c.tp + c.tn, c.total) if accuracy is None else accuracy
        return cls(acc, p, r, f1, c)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("accuracy", "precision", "recall", "f1")}
        d.update(asdict(self.counts))
        return d


def confusion(pred, gt) -> ConfusionCounts:
    pred, gt = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise LengthMismatch(f"prediction has {pred.size} labels, ground truth {gt.size}")
    return ConfusionCounts(int((pred & gt).sum()), int((~pred & ~gt).sum()), int((pred & ~gt).sum()),
                           int((~pred & gt).sum()))


def point_metrics(pred, gt) -> MetricsReport:
    """Foreground is the positive class."""
    c = confusion(pred, gt)
    if c.total == 0:
        raise EmptyInput("no points to evaluate")
    return MetricsReport.from_counts(c)


def _centers(boxes) -> np.ndarray:
    out = []
    for b in boxes:
        if hasattr(b, "obb"):
            b = b.obb
        if hasattr(b, "center"):
            b = b.center
        out.append(np.asarray(b, dtype=np.float64)[:2])
    return np.array(out).reshape(-1, 2)


def match_objects(pred, gt, match_radius: float = 2.0) -> List[Tuple[int, int]]:
    """Greedy one-to-one matching by ascending BEV centre distance (ties: gt index, then pred index)."""
    if match_radius <= 0:
        raise ValueError("match_radius must be positive")
    P, G = _centers(pred), _centers(gt)
    if not len(P) or not len(G):
        return []
    d = np.linalg.norm(P[:, None, :] - G[None, :, :], axis=2)
    pi, gi = np.nonzero(d <= match_radius)
    pairs, up, ug = [], set(), set()
    for k in np.lexsort((pi, gi, d[pi, gi])):
        a, b = int(pi[k]), int(gi[k])
        if a not in up and b not in ug:
            up.add(a)
            ug.add(b)
            pairs.append((a, b))
    return pairs


def object_metrics(pred, gt, match_radius: float = 2.0):
    """(tp, fp, fn, report); the report's accuracy is tp / (tp + fp + fn) since objects have no negatives."""
    n_pred, n_gt = len(_centers(pred)), len(_centers(gt))
    tp = len(match_objects(pred, gt, match_radius))
    fp, fn = n_pred - tp, n_gt - tp
    c = ConfusionCounts(tp, 0, fp, fn)
    return tp, fp, fn, MetricsReport.from_counts(c, accuracy=_ratio(tp, tp + fp + fn))


def exhaustive_match_count(pred, gt, match_radius: float = 2.0) -> int:
    """Maximum number of one-to-one matches within radius (brute force; small inputs only)."""
    P, G = _centers(pred), _centers(gt)
    if not len(P) or not len(G):
        return 0
    ok = np.linalg.norm(P[:, None, :] - G[None, :, :], axis=2) <= match_radius
    best = 0
    small, large, transpose = (P, G, False) if len(P) <= len(G) else (G, P, True)
    for perm in itertools.permutations(range(len(large)), len(small)):
        n = sum(ok[(j, i) if transpose else (i, j)] for i, j in enumerate(perm))
        best = max(best, n)
    return best


def path_count_accuracy(reference_count: float, measured_count: float) -> float:
    if reference_count == 0:
        raise ZeroReference("reference count must be positive")
    return 1.0 - abs(measured_count - reference_count) / reference_count


def _side(a, b, p) -> float:
    return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])


def _segments_cross(a, b, p, q) -> bool:
    d1, d2 = _side(a, b, p), _side(a, b, q)
    d3, d4 = _side(p, q, a), _side(p, q, b)
    return d1 * d2 <= 0 and d3 * d4 <= 0 and not (d1 == 0 and d2 == 0)


def track_crossings(points: Sequence[Tuple[float, float, float]], screenline, debounce_s: float = 2.0):
    """Signed crossings of one trajectory, as ``[(time, +1 inbound | -1 outbound)]``.

    Inbound runs from the left of the directed line ``a -> b`` to its right.
    A crossing within ``debounce_s`` of the previous counted one is ignored.
    """
    a, b = (np.asarray(v, dtype=np.float64) for v in screenline)
    if np.allclose(a, b):
        raise ValueError("screenline endpoints coincide")
    out, last_side, last_t, prev = [], 0.0, None, None
    for t, x, y in points:
        p = np.array([x, y])
        s = _side(a, b, p)
        if prev is not None and s != 0 and last_side != 0 and np.sign(s) != np.sign(last_side) \
                and _segments_cross(a, b, prev[1], p):
            if last_t is None or t - last_t >= debounce_s:
                out.append((t, 1 if last_side > 0 else -1))
                last_t = t
        if s != 0:
            last_side = s
            prev = (t, p)
        elif prev is None:
            prev = (t, p)
    return out


def count_movements(tracks: Iterable, screenline, debounce_s: float = 2.0) -> Tuple[int, int]:
    """(inbound, outbound) over tracks that reached Confirmed.

    ``tracks`` holds :class:`~lidarbg.detect.Track` objects or
    ``(confirmed, [(t, x, y), ...])`` pairs.
    """
    inbound = outbound = 0
    for tr in tracks:
        if hasattr(tr, "trajectory"):
            confirmed = tr.ever_confirmed
            pts = [(r[2], r[3], r[4]) for r in tr.trajectory]
        else:
            confirmed, pts = tr
        if not confirmed:
            continue
        for _, sign in track_crossings(pts, screenline, debounce_s):
            if sign > 0:
                inbound += 1
            else:
                outbound += 1
    return inbound, outbound


def sample_frames(frame_ids, interval: int) -> np.ndarray:
    """Mask of frames on the evaluation cadence (every ``interval``-th frame id)."""
    return np.asarray(frame_ids) % max(1, int(interval)) == 0


REPORT_COLUMNS = ("level", "accuracy", "precision", "recall", "f1", "tp", "tn", "fp", "fn")


def write_report(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()) if rows else REPORT_COLUMNS)
        w.writeheader()
        w.writerows(rows)


def format_table(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    cols = list(rows[0].keys())
    cells = [[f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(x[i]) for x in cells)) for i, c in enumerate(cols)]
    line = lambda xs: "  ".join(x.rjust(w) for x, w in zip(xs, widths))  # noqa: E731
    return "\n".join([line(cols), line(["-" * w for w in widths])] + [line(x) for x in cells])
