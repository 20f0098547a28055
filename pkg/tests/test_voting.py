import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from shapesense.estimator.voting import (background_level, background_threshold, cluster_candidates,
                                         occupancy_threshold, write_histogram)


@given(st.floats(-1e3, 1e3, allow_nan=False), st.integers(1, 500))
def test_identical_candidates_make_one_cluster(x, n):
    h = cluster_candidates([x] * n, threshold=1)
    assert len(h.clusters) == 1
    assert h.clusters[0].center == pytest.approx(x, rel=1e-12, abs=0) and h.clusters[0].count == n


def test_uniform_candidates_give_no_false_peaks():
    n, k_sub = 3000, 30.0
    n_sub = round(n / k_sub)
    thr = 2 * n / n_sub
    # union bound on the largest binomial bin count over both grids
    bound = 2 * n_sub * stats.binom.sf(math.ceil(thr) - 1, n, 1 / n_sub)
    assert bound < 0.01
    rng = np.random.default_rng(0)
    trials = 300
    false = sum(bool(cluster_candidates(rng.uniform(0, 1, n), k_sub, threshold=thr).clusters)
                for _ in range(trials))
    # at most a handful of false peaks is compatible with a rate of 1%
    assert false <= stats.binom.ppf(0.999, trials, 0.01)


def test_default_rule_rarely_fires_on_uniform_noise():
    rng = np.random.default_rng(1)
    trials = 200
    false = sum(bool(cluster_candidates(rng.uniform(0, 1, 2000), min_bins=20).clusters) for _ in range(trials))
    assert false / trials < 0.1


def test_peaks_over_background_are_found():
    rng = np.random.default_rng(2)
    peaks = [0.5236, 1.0472, 1.5708]
    x = np.concatenate([rng.uniform(0, math.pi, 3000)] + [np.full(120, p) + rng.normal(0, 1e-4, 120) for p in peaks])
    h = cluster_candidates(x, min_bins=20)
    centers = sorted(c.center for c in h.clusters)
    assert len(centers) == 3
    assert centers == pytest.approx(peaks, abs=0.02)


def test_neighbouring_bins_merge_into_one_cluster():
    x = np.r_[np.full(50, 1.0), np.full(50, 1.0 + 0.06), np.linspace(0, 10, 200)]
    h = cluster_candidates(x, k_sub=1, threshold=20)
    assert h.n_sub == 300
    (c,) = h.clusters
    assert c.count == 100 + sum(c.contains(v) for v in np.linspace(0, 10, 200))
    assert c.lo <= 1.0 and c.hi >= 1.06


def test_bin_count_floor():
    h = cluster_candidates(np.linspace(0, 1, 50), k_sub=7, min_bins=20)
    assert h.n_sub == 20
    h = cluster_candidates(np.linspace(0, 1, 50), k_sub=7)
    assert h.n_sub == 7
    assert h.k_sub == pytest.approx(50 / 7)


def test_thresholds():
    assert occupancy_threshold(700, 100, 7) == pytest.approx(24.5)
    assert occupancy_threshold(10, 100, 7) == 3.0
    assert background_threshold(0.0) == 3.0
    assert background_threshold(0.01, 40) == 3.0
    for b, n_bins, alpha in [(16.0, 1, 0.01), (16.0, 40, 0.01), (3.5, 40, 0.01), (120.0, 200, 0.05)]:
        thr = background_threshold(b, n_bins, alpha)
        # family-wise chance that pure background reaches thr somewhere, and one count lower
        assert n_bins * stats.poisson.sf(thr - 1, b) <= alpha < n_bins * stats.poisson.sf(thr - 2, b)
    x = np.r_[np.linspace(0, 1, 1000), np.full(500, 0.5)]
    # the spike fills one fine bin and is clipped from the mean
    assert background_level(x, 0, 1, 50) == pytest.approx(20.0, abs=1)


def test_peak_on_a_bin_edge_is_kept_whole():
    # the middle value sits exactly on the edge between bins 9 and 10
    x = np.r_[np.zeros(10), np.full(2, 0.5 - 1e-9), np.full(2, 0.5 + 1e-9), np.ones(10)]
    h = cluster_candidates(x, k_sub=4, min_bins=20, threshold=3)
    assert h.n_sub == 20
    assert h.counts[9] == 2 and h.counts[10] == 2
    assert sorted(c.count for c in h.clusters) == [4, 10, 10]
    assert h.clusters[1].center == pytest.approx(0.5)


def test_histogram_rows_sum_to_total(tmp_path):
    rng = np.random.default_rng(3)
    x = rng.normal(0, 1, 777)
    h = cluster_candidates(x)
    rows = h.to_rows()
    assert sum(r[2] for r in rows) == h.n_candidates == 777
    p = tmp_path / "h.csv"
    write_histogram(h, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "bin_lo,bin_hi,count"
    assert sum(int(l.split(",")[2]) for l in lines[1:]) == 777


@pytest.mark.parametrize("kw", [dict(values=[]), dict(values=[1.0], k_sub=0), dict(values=[1.0], rule="median"),
                                dict(values=[1.0], coarsen=-1)])
def test_bad_arguments(kw):
    values = kw.pop("values")
    with pytest.raises(ValueError):
        cluster_candidates(values, **kw)
