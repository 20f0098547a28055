"""Which edge lengths meet which vertex angles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..analysis import EdgeVertexSample
from .candidates import angle_from_offsets, angle_ok, candidate_offsets, length_from_offset, same_side
from .counts import ClusterEstimate
from .voting import Histogram


@dataclass
class PairMatrix:
    lengths: list[float]
    angles: list[float]
    raw: np.ndarray  # weighted sample counts per (length, angle) cell
    baseline: np.ndarray  # expectation if lengths and angles paired at random
    n_mapped: int  # samples that reached at least one cell

    @property
    def ratio(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.baseline > 0, self.raw / self.baseline, np.nan)


def sample_cells(ev: EdgeVertexSample, length_hist: Histogram, angle_hist: Histogram,
                 v: float, theta_max: float, strict: bool = True) -> set[tuple[int, int]]:
    """Adopted (length, angle) cells reachable through one consistent branch pair."""
    shared_left = ev.shared_side == "left"
    s_other = ev.vertex.s_d_right if shared_left else ev.vertex.s_d_left
    cells = set()
    others = candidate_offsets(s_other, v, theta_max, strict)
    for x in candidate_offsets(ev.whole.s_d, v, theta_max, strict):
        lam = length_from_offset(x, ev.whole.l_d, ev.whole.s_d, v, theta_max)
        i = length_hist.cluster_of(lam)
        if i is None:
            continue
        for y in others:
            if ev.vertex.clear and not same_side(x, y):
                continue
            g = angle_from_offsets(x.x, y.x) if shared_left else angle_from_offsets(y.x, x.x)
            if not angle_ok(g, theta_max):
                continue
            j = angle_hist.cluster_of(g)
            if j is not None:
                cells.add((i, j))
    return cells


def pair_ratio_matrix(samples: Sequence[EdgeVertexSample], length_hist: Histogram, angle_hist: Histogram,
                      length_est: Sequence[ClusterEstimate], angle_est: Sequence[ClusterEstimate],
                      v: float, theta_max: float, strict: bool = True) -> PairMatrix:
    """Observed versus independence-baseline counts of edge/vertex co-detections.

    A sample consistent with several cells adds 1/k to each of its k cells.
    """
    nl, na = len(length_hist.clusters), len(angle_hist.clusters)
    raw = np.zeros((nl, na))
    mapped = 0
    for ev in samples:
        cells = sample_cells(ev, length_hist, angle_hist, v, theta_max, strict)
        if not cells:
            continue
        mapped += 1
        for i, j in cells:
            raw[i, j] += 1.0 / len(cells)
    # expected detections summed over all features of each size
    e_len = np.array([(e.multiplicity or 0.0) * e.expected for e in length_est])
    e_ang = np.array([(e.multiplicity or 0.0) * e.expected for e in angle_est])
    norm = e_len.sum() * e_ang.sum()
    baseline = np.outer(e_len, e_ang) * raw.sum() / norm if norm > 0 else np.zeros_like(raw)
    return PairMatrix([c.center for c in length_hist.clusters], [c.center for c in angle_hist.clusters],
                      raw, baseline, mapped)
