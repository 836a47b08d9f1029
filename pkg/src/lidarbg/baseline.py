"""Mean-Max range background baseline.

Two passes over the training stream per elevation-azimuth cell: first the
maximum return range (the static scene is assumed to be the farthest
surface a beam sees), then the mean of the training ranges lying within
``band`` of that maximum.  A return is foreground when it is closer than
that reference by more than ``tolerance``.  Cells that never returned
during training mark every return as foreground.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MeanMaxBackground:
    reference: np.ndarray
    band: float = 2.0
    tolerance: float = 0.3

    @classmethod
    def fit(cls, ranges: np.ndarray, band: float = 2.0, tolerance: float = 0.3) -> "MeanMaxBackground":
        """``ranges`` is (frames, cells) with NaN for no return."""
        r = np.asarray(ranges, dtype=np.float64)
        seen = ~np.isnan(r).all(axis=0)
        rmax = np.where(seen, np.nanmax(np.where(np.isnan(r), -np.inf, r), axis=0), np.nan)
        near_max = (r >= rmax - band) & ~np.isnan(r)
        cnt = near_max.sum(axis=0)
        ref = np.divide(np.where(near_max, r, 0.0).sum(axis=0), cnt, out=np.full(r.shape[1], np.nan),
                        where=cnt > 0)
        return cls(ref, band, tolerance)

    def foreground(self, cells, ranges) -> np.ndarray:
        ref = self.reference[np.asarray(cells, dtype=np.int64)]
        return np.isnan(ref) | (np.asarray(ranges) < ref - self.tolerance)
