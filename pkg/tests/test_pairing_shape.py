import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shapesense.estimator.candidates import candidate_angles, candidate_lengths
from shapesense.estimator.counts import ClusterEstimate, estimate_counts
from shapesense.estimator.pairing import PairMatrix, pair_ratio_matrix
from shapesense.estimator.shape import (NoConsistentShape, assemble_shape, closure_residual, connection_mask,
                                        reconcile_multiplicities)
from shapesense.estimator.voting import cluster_candidates
from shapesense.geometry import load_fixture
from shapesense.pipeline import RunConfig

from oracles import random_convex_polygon

V, HALF = 0.1, math.pi / 2


def est(center, n_hat, expected=10.0):
    return ClusterEstimate(center, 10, expected, n_hat)


def full_pairs(nl, na, raw=None):
    raw = np.ones((nl, na)) if raw is None else np.asarray(raw, float)
    return PairMatrix(list(range(nl)), list(range(na)), raw, np.ones((nl, na)), int(raw.sum()))


def test_closure_of_exact_polygons():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = random_convex_polygon(rng)
        # edge k leaves vertex k; the angle at vertex k is angles[k - 1]
        angles = np.roll(p.angles, 1)
        assert closure_residual(p.lengths, angles) < 1e-9
    assert closure_residual([1, 1, 1], [math.pi / 2] * 3) > 0.5


def test_one_by_one_matrix_has_unit_ratio(triangle_runs):
    _, _, samples = triangle_runs[0]
    whole = [w for s in samples for w in s.whole]
    vertex = [x for s in samples for x in s.vertex]
    ev = [x for s in samples for x in s.edge_vertex]
    lam = [c.value for w in whole for c in candidate_lengths(w.l_d, w.s_d, V, HALF)]
    gam = [c.value for x in vertex for c in candidate_angles(x.s_d_left, x.s_d_right, V, HALF, clear=x.clear)]
    # one bin spanning everything, adopted outright
    lh = cluster_candidates(lam, k_sub=1e12, threshold=0)
    ah = cluster_candidates(gam, k_sub=1e12, threshold=0)
    assert len(lh.clusters) == len(ah.clusters) == 1
    m = RunConfig().model()
    pm = pair_ratio_matrix(ev, lh, ah, estimate_counts(len(whole), lh, m, "length"),
                           estimate_counts(len(vertex), ah, m, "angle"), V, HALF)
    assert pm.n_mapped > 0
    assert pm.ratio[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_connection_mask_rules():
    raw = np.array([[10.0, 0.0, 0.0]])
    base = np.array([[10.0, 10.0, 2.0]])
    pm = PairMatrix([1.0], [1, 2, 3], raw, base, 10)
    ok = connection_mask(pm, 0.6, alpha=0.0)
    assert ok.tolist() == [[True, False, False]]
    ok = connection_mask(pm, 0.6, alpha=0.05)
    # zero counts are evidence against a link only when enough were expected
    assert ok.tolist() == [[True, False, True]]
    assert math.exp(-0.6 * 2.0) >= 0.05 > math.exp(-0.6 * 10.0)


def test_reconcile_keeps_valid_rounding():
    le = [est(43.3, 1.0), est(25.0, 0.9), est(50.0, 1.1)]
    ae = [est(math.pi / 6, 0.9), est(math.pi / 3, 1.2), est(HALF, 1.0)]
    ml, ma, adj = reconcile_multiplicities(le, ae)
    assert (ml, ma, adj) == ([1, 1, 1], [1, 1, 1], False)


def test_reconcile_restores_a_weak_vertex():
    le = [est(43.3, 1.0), est(25.0, 0.9), est(50.0, 1.1)]
    ae = [est(math.pi / 6, 0.45), est(math.pi / 3, 1.2), est(HALF, 1.0)]
    ml, ma, adj = reconcile_multiplicities(le, ae)
    assert ma == [1, 1, 1] and ml == [1, 1, 1] and adj


def test_reconcile_gives_up_on_impossible_angles():
    with pytest.raises(NoConsistentShape):
        reconcile_multiplicities([est(1.0, 3.0)], [est(0.1, 3.0)])


def test_assembles_triangle_from_exact_clusters():
    tri = load_fixture("triangle")
    le = [est(L, 1.0) for L in tri.lengths]
    ae = [est(g, 1.0) for g in tri.angles]
    # edge j joins vertex j and vertex j+1; angles[j] sits at vertex j+1
    raw = np.zeros((3, 3))
    for j in range(3):
        raw[j, j] = raw[j, (j - 1) % 3] = 5.0
    pm = PairMatrix(list(tri.lengths), list(tri.angles), raw, np.full((3, 3), 10 / 3), 15)
    s = assemble_shape(le, ae, pm, alpha=0.0)
    assert s.closure_residual < 1e-9
    assert not s.ambiguous
    assert sorted(s.lengths) == pytest.approx(sorted(tri.lengths))
    assert sum(s.angles) == pytest.approx(math.pi)


def test_ambiguous_when_all_angles_equal():
    car = load_fixture("car-polygon")
    L = sorted(set(np.round(car.lengths, 3)))
    le = [est(l, float(np.sum(np.isclose(np.round(car.lengths, 3), l)))) for l in L]
    ae = [est(3 * math.pi / 4, 8.0)]
    s = assemble_shape(le, ae, full_pairs(len(L), 1))
    assert s.ambiguous and s.alternatives >= 1
    assert len(s.lengths) == 8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_assembled_angles_sum_like_a_polygon(seed):
    rng = np.random.default_rng(seed)
    p = random_convex_polygon(rng, n_pts=int(rng.integers(3, 8)))
    noisy_l = p.lengths * (1 + rng.normal(0, 0.01, p.n_edges))
    noisy_g = p.angles * (1 + rng.normal(0, 0.01, p.n_edges))
    le = [est(l, float(rng.uniform(0.7, 1.3))) for l in noisy_l]
    ae = [est(g, float(rng.uniform(0.7, 1.3))) for g in noisy_g]
    try:
        s = assemble_shape(le, ae, full_pairs(len(le), len(ae)), max_nodes=20_000)
    except NoConsistentShape:
        return
    n = len(s.angles)
    assert len(s.lengths) == n >= 3
    assert abs(sum(s.angles) - (n - 2) * math.pi) <= 0.15 * (n - 2) * math.pi
    assert s.perimeter == pytest.approx(sum(s.lengths))


def test_refuses_too_few_vertices():
    with pytest.raises(NoConsistentShape) as exc:
        assemble_shape([est(1.0, 1.0)], [est(1.0, 1.0)], full_pairs(1, 1), reconcile=False)
    assert exc.value.diagnostics["n_vertices"] == 1


def test_refuses_when_pairs_forbid_every_cycle():
    tri = load_fixture("triangle")
    le = [est(L, 1.0) for L in tri.lengths]
    ae = [est(g, 1.0) for g in tri.angles]
    pm = PairMatrix(list(tri.lengths), list(tri.angles), np.zeros((3, 3)), np.full((3, 3), 50.0), 0)
    with pytest.raises(NoConsistentShape, match="pair matrix"):
        assemble_shape(le, ae, pm)
