import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from shapesense.estimator.candidates import (EmptyCandidateSet, Regime, candidate_angles, candidate_lengths,
                                             candidate_offsets)
from shapesense.geometry import Region, SectorSensor, sector_distance, validate_polygon, wrap_pi
from shapesense.simulator import FleetConfig, sample_route, sensor_rng, simulate_trace

from oracles import analytic_edge_sample, detected_sequence, line_misses, unit, vertex_transitions

V = 0.1
HALF = math.pi / 2


def values(cands):
    return sorted(c.value for c in cands)


def test_zero_slope_lengths_coincide():
    for strict in (True, False):
        assert values(candidate_lengths(10, 0.0, V, HALF, strict)) == pytest.approx([1.0])


def test_two_branch_lengths():
    got = values(candidate_lengths(100, 0.05, V, HALF, strict=False))
    assert got == pytest.approx([10 * math.sqrt(0.75), 100 * math.sqrt(0.0025 + 0.01)], abs=1e-9)
    assert got == pytest.approx([8.660, 11.180], abs=5e-4)
    # the forward-slope filter keeps a subset
    assert set(values(candidate_lengths(100, 0.05, V, HALF))) <= set(got)


def test_steep_slope_only_clamped_branch():
    assert values(candidate_lengths(10, 0.2, V, HALF, strict=False)) == pytest.approx([10 * math.sqrt(0.05)])
    assert values(candidate_lengths(10, 0.2, V, HALF, strict=False)) == pytest.approx([2.236], abs=5e-4)
    assert all(o.regime is Regime.CLAMPED for o in candidate_offsets(0.2, V, HALF, strict=False))


def test_length_input_validation():
    with pytest.raises(ValueError):
        candidate_lengths(0.0, 0.01, V, HALF)
    with pytest.raises(ValueError):
        candidate_offsets(0.01, 0.0, HALF)


def test_offset_values_for_worked_slope():
    offs = candidate_offsets(0.05, V, HALF, strict=False)
    a, b = math.asin(0.5), math.atan(0.5)
    interior = {round(float(wrap_pi(x)), 9) for x in (a, -a, math.pi - a, math.pi + a)}
    clamped = {round(float(wrap_pi(x)), 9) for x in (b, -b, math.pi - b, math.pi + b)}
    for o in offs:
        pool = interior if o.regime is Regime.INTERIOR else clamped
        assert round(o.x, 9) in pool
    assert any(o.regime is Regime.INTERIOR for o in offs) and any(o.regime is Regime.CLAMPED for o in offs)


def test_zero_slope_offsets():
    for o in candidate_offsets(0.0, V, HALF, strict=False):
        assert min(abs(wrap_pi(o.x)), abs(wrap_pi(o.x - math.pi))) < 1e-12


def test_steep_slope_has_no_interior_branch():
    for th in (0.3, 0.8, HALF):
        assert all(o.regime is Regime.CLAMPED for o in candidate_offsets(0.15, V, th, strict=False))


# one long edge along the x axis with the target above it
LONG = validate_polygon([(-1e5, 0.0), (1e5, 0.0), (0.0, 1e5)])


def measured_slope(x, theta_max, depth=1.0):
    """Slope of r(t) seen from below the long edge at relative direction x, by the geometry module."""
    phi = -x  # the edge direction is 0
    sensor = SectorSensor(1e6, theta_max)
    p0 = np.array([0.0, -depth])
    r0 = sector_distance(p0, phi, sensor, LONG).distance
    r1 = sector_distance(p0 + V * unit(phi), phi, sensor, LONG).distance
    return r1 - r0


@settings(max_examples=300, deadline=None)
@given(st.floats(-0.3, 0.3), st.floats(0.1, HALF))
def test_every_offset_is_realizable(s_d, theta_max):
    for strict in (True, False):
        for o in candidate_offsets(s_d, V, theta_max, strict):
            got = measured_slope(o.x, theta_max)
            assert not math.isnan(got)
            if strict:
                assert got == pytest.approx(s_d, abs=1e-9)
            else:
                assert abs(got) == pytest.approx(abs(s_d), abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(0.1, HALF))
def test_true_offset_is_among_candidates(phi, theta_max):
    x = float(wrap_pi(-phi))
    s = measured_slope(x, theta_max)
    assume(not math.isnan(s))
    assert any(abs(wrap_pi(o.x - x)) < 1e-7 for o in candidate_offsets(s, V, theta_max))


def test_flat_vertex_has_no_angle():
    assert candidate_angles(0.0, 0.0, V, HALF) == []
    assert candidate_angles(0.0, 0.0, V, HALF, strict=False) == []


# -- exactness on random polygons and routes -----------------------------------

def test_lengths_exact_on_random_polygons(exact_cases):
    checked = 0
    for poly, fleet, route, seq in exact_cases:
        th = fleet.sensor.theta_max
        for j in {s for s in seq if isinstance(s, int)}:
            l_d, s_d, _ = analytic_edge_sample(poly.vertices, j, route.phi, V, th)
            c = values(candidate_lengths(l_d, s_d, V, th))
            assert min(abs(np.array(c) - poly.lengths[j])) < 1e-6
            checked += 1
    assert checked > 1500


def test_angles_exact_on_random_polygons(exact_cases):
    checked = 0
    for poly, fleet, route, seq in exact_cases:
        th = fleet.sensor.theta_max
        n = poly.n_edges
        clear = line_misses(poly.vertices, route.phi, route.offset)
        assert clear == ("Z" not in seq)
        for j1, j2 in vertex_transitions(seq, n):
            _, s1, _ = analytic_edge_sample(poly.vertices, j1, route.phi, V, th)
            _, s2, _ = analytic_edge_sample(poly.vertices, j2, route.phi, V, th)
            gamma = poly.angles[j1 if (j2 - j1) % n == 1 else j2]
            c = values(candidate_angles(s1, s2, V, th, clear=clear))
            assert c and min(abs(np.array(c) - gamma)) < 1e-6
            checked += 1
    assert checked > 500


def test_supplementary_pairs_are_not_forced(exact_cases):
    both = total = 0
    for poly, fleet, route, seq in exact_cases:
        th = fleet.sensor.theta_max
        n = poly.n_edges
        clear = line_misses(poly.vertices, route.phi, route.offset)
        for j1, j2 in vertex_transitions(seq, n):
            _, s1, _ = analytic_edge_sample(poly.vertices, j1, route.phi, V, th)
            _, s2, _ = analytic_edge_sample(poly.vertices, j2, route.phi, V, th)
            gamma = poly.angles[j1 if (j2 - j1) % n == 1 else j2]
            c = np.array(values(candidate_angles(s1, s2, V, th, clear=clear)))
            total += 1
            both += bool(np.any(np.abs(c - gamma) < 1e-6) and np.any(np.abs(c - (math.pi - gamma)) < 1e-6))
    assert total > 500
    assert both / total < 0.5


def test_simulated_right_angle_vertex_is_recovered():
    from shapesense.analysis import analyze_trace
    from shapesense.geometry import load_fixture
    tri = load_fixture("triangle")
    right = int(np.argmin(np.abs(tri.angles - HALF)))
    fleet = FleetConfig(n_s=1, v=V, dt=1.0, sensor=SectorSensor(100, HALF), region=Region(radius=100))
    hits = 0
    for i in range(400):
        route = sample_route(fleet.region, fleet.sensor, sensor_rng(8, i), pad=1.0)
        seq = detected_sequence(route, fleet, tri)
        pairs = vertex_transitions(seq, 3)
        if not any(right in ((j1 if (j2 - j1) % 3 == 1 else j2),) for j1, j2 in pairs):
            continue
        res = analyze_trace(simulate_trace(route, fleet, tri), 100)
        sets = [values(candidate_angles(v.s_d_left, v.s_d_right, V, HALF, clear=v.clear)) for v in res.vertex]
        assert any(min(abs(np.array(c) - HALF), default=1) < 1e-6 for c in sets)
        hits += 1
    assert hits > 10


@settings(max_examples=500, deadline=None)
@given(st.floats(-V, 50, exclude_min=True), st.floats(0.01, HALF), st.booleans())
def test_every_reachable_slope_has_a_length(s_d, theta_max, strict):
    # r(t) never falls faster than the vehicle moves; above that the clamped branch reaches any slope.
    # At exactly -v the approach is head-on and the detected point never moves along the edge.
    c = candidate_lengths(10.0, s_d, V, theta_max, strict)
    assert c and all(x.value > 0 for x in c)


def test_slope_falling_faster_than_speed_is_rejected():
    with pytest.raises(EmptyCandidateSet):
        candidate_lengths(10.0, -1.0, V, 1.0)
    assert candidate_lengths(10.0, -1.0, V, 1.0, strict=False)
