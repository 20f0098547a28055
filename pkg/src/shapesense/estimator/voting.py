"""Histogram voting over candidate estimates."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class Cluster:
    center: float  # mean of member candidates
    count: int
    lo: float  # span of the merged bins
    hi: float

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


@dataclass
class Histogram:
    lo: float
    hi: float
    n_sub: int
    k_sub: float
    threshold: float
    edges: np.ndarray
    counts: np.ndarray
    clusters: list[Cluster] = field(default_factory=list)

    @property
    def n_candidates(self) -> int:
        return int(self.counts.sum())

    def cluster_of(self, x: float) -> Optional[int]:
        for i, c in enumerate(self.clusters):
            if c.contains(x):
                return i
        return None

    def to_rows(self) -> list[tuple[float, float, int]]:
        return [(float(a), float(b), int(c)) for a, b, c in zip(self.edges[:-1], self.edges[1:], self.counts)]


THRESHOLD_RULES = ("background", "occupancy")


def occupancy_threshold(n: int, n_sub: int, k_sub: float) -> float:
    """Half the mean bin occupancy times ``k_sub``, and never below 3."""
    return max(3.0, 0.5 * (n / n_sub) * k_sub)


def background_level(x: np.ndarray, lo: float, hi: float, n_sub: int, refine: int = 4) -> float:
    """Typical count of a bin of width ``(hi - lo) / n_sub`` away from any peak.

    Estimated on a histogram ``refine`` times finer, where peaks cover few
    bins: the mean count is recomputed without bins lying more than three
    Poisson deviations above it until it settles, then scaled back up.
    """
    n_fine = n_sub * refine
    if hi <= lo or n_fine < 2:
        return 0.0
    counts, _ = np.histogram(x, bins=n_fine, range=(lo, hi))
    b = float(counts.mean())
    for _ in range(100):
        kept = counts[counts <= b + 3.0 * np.sqrt(b) + 1.0]
        nb = float(kept.mean()) if kept.size else 0.0
        if nb == b:
            break
        b = nb
    return b * refine


def background_threshold(b: float, n_bins: int = 1, alpha: float = 0.01) -> float:
    """Smallest count that any of ``n_bins`` Poisson(``b``) bins reaches with probability <= ``alpha``.

    Never below 3.
    """
    if b <= 0:
        return 3.0
    k = stats.poisson.isf(alpha / max(n_bins, 1), b)
    return max(3.0, float(k) + 1.0)


def cluster_candidates(values: Sequence[float], k_sub: float = 7.0, threshold: Optional[float] = None,
                       coarsen: float = 1.0, rule: str = "background", min_bins: int = 1,
                       alpha: float = 0.01) -> Histogram:
    """Bin candidates into about ``len(values) / (k_sub * coarsen)`` equal bins and adopt peaks.

    The bin count never drops below ``min_bins``, which keeps neighbouring
    peaks apart when there are few candidates.

    Without an explicit ``threshold`` a bin is adopted when pure background
    would reach its count in some bin with probability at most ``alpha``
    (``rule='background'``), or when it exceeds a fixed multiple of
    the mean occupancy (``rule='occupancy'``). Adjacent adopted bins form one
    cluster whose centre is the mean of all their members.

    Counts are also taken on a second grid shifted by half a bin, so a peak
    that straddles a bin edge of one grid sits inside a bin of the other. A
    candidate is adopted when either of its two bins reaches the threshold;
    the background rule accounts for both grids when setting it.
    """
    if rule not in THRESHOLD_RULES:
        raise ValueError(f"rule must be one of {THRESHOLD_RULES}")
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("need at least one candidate")
    if k_sub <= 0 or coarsen <= 0:
        raise ValueError("k_sub and coarsen must be positive")
    n = x.size
    n_sub = max(1, int(min_bins), int(round(n / (k_sub * coarsen))))
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        n_sub = 1
        edges = np.array([lo, hi])
        counts = np.array([n])
    else:
        edges = np.linspace(lo, hi, n_sub + 1)
        # half-bin cells; primary bin k covers cells 2k, 2k+1 and shifted bin k covers 2k+1, 2k+2
        cell = np.clip(np.floor((x - lo) / (hi - lo) * 2 * n_sub).astype(int), 0, 2 * n_sub - 1)
        per_cell = np.bincount(cell, minlength=2 * n_sub)
        counts = per_cell[0::2] + per_cell[1::2]
    if threshold is not None:
        thr = float(threshold)
    elif rule == "occupancy":
        thr = occupancy_threshold(n, n_sub, k_sub)
    else:
        thr = background_threshold(background_level(x, lo, hi, n_sub), 2 * n_sub, alpha)
    hist = Histogram(lo, hi, n_sub, n / n_sub, thr, edges, counts)
    if n_sub == 1:
        if n >= thr:
            hist.clusters.append(Cluster(float(x.mean()), n, lo, hi))
        return hist
    shifted = per_cell[1:-1:2] + per_cell[2::2]
    adopted = np.repeat(counts >= thr, 2)
    adopted[1:-1] |= np.repeat(shifted >= thr, 2)
    k = 0
    while k < 2 * n_sub:
        if not adopted[k]:
            k += 1
            continue
        j = k
        while j + 1 < 2 * n_sub and adopted[j + 1]:
            j += 1
        members = x[(cell >= k) & (cell <= j)]
        c_lo = lo + (hi - lo) * k / (2 * n_sub)
        c_hi = lo + (hi - lo) * (j + 1) / (2 * n_sub)
        hist.clusters.append(Cluster(float(members.mean()), int(members.size), c_lo, c_hi))
        k = j + 1
    return hist


def write_histogram(hist: Histogram, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count"])
        for a, b, c in hist.to_rows():
            w.writerow([repr(a), repr(b), c])
