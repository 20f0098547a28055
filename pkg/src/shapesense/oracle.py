"""Independent checks of the detection measures and of route sampling.

Each oracle compares a quantity the estimator relies on with a value obtained
by a separate route: numerical quadrature, Monte Carlo line sampling over a
lone edge, or a labelled simulation around a lone vertex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .estimator.measures import DetectionModel, measure_whole_edge, measure_whole_edge_quadrature
from .geometry import Region, SectorSensor, validate_polygon, wrap_pi
from .simulator import FleetConfig, sample_route, sensor_rng, simulate_trace

ORACLES = ("measure1", "measure2", "qd-mc", "route-uniformity")


@dataclass
class OracleResult:
    kind: str
    passed: bool
    lines: list[str] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def report(self) -> str:
        head = f"[{'PASS' if self.passed else 'FAIL'}] {self.kind}"
        return "\n".join([head] + ["  " + s for s in self.lines])


def _z(observed: float, expected: float, n: int) -> tuple[float, float]:
    sigma = math.sqrt(max(expected * (1.0 - expected), 0.0) / n)
    if sigma == 0.0:
        return sigma, 0.0 if observed == expected else math.inf
    return sigma, (observed - expected) / sigma


def oracle_measure1(n: int = 1000, seed: int = 0, tol: float = 1e-6) -> OracleResult:
    """Closed-form whole-edge measure against adaptive quadrature of its integrand."""
    rng = np.random.default_rng(seed)
    worst, arg = 0.0, None
    for _ in range(n):
        lam = 10.0 ** rng.uniform(-1.0, 3.0)
        r = rng.uniform(10.0, 200.0)
        th = rng.uniform(0.01, math.pi / 2)
        a = measure_whole_edge(lam, r, th)
        b = measure_whole_edge_quadrature(lam, r, th)
        err = abs(a - b) / max(abs(b), 1e-300)
        if err > worst:
            worst, arg = err, (lam, r, th)
    res = OracleResult("measure1", worst < tol, stats={"n": n, "max_rel_error": worst, "worst_at": arg})
    res.lines.append(f"{n} random (lambda, r_max, theta_max): max relative error {worst:.3e} (bound {tol:g})")
    return res


def lone_edge_mc(lam: float, n: int, r_max: float = 100.0, theta_max: float = math.pi / 2,
                 radius: float = 100.0, seed: int = 0) -> float:
    """Fraction of routes that see all of a segment of length ``lam`` in one straight piece.

    The segment lies on the x axis centred at the origin, facing +y. Routes
    are drawn like the fleet's: uniform heading, uniform offset across the
    band of lines whose swath meets the disk. A route sees the whole edge
    when the in-sector direction for its heading hits both endpoints from a
    point of the route within range.
    """
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    half = radius + r_max * math.sin(theta_max)
    p = rng.uniform(-half, half, n)
    zeta = wrap_pi(math.pi / 2 - phi)
    ok = np.abs(zeta) < theta_max + math.pi / 2
    ts = np.clip(zeta, -theta_max, theta_max)
    d = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    nrm = np.stack([-np.sin(phi), np.cos(phi)], axis=1)
    u = np.stack([np.cos(phi + ts), np.sin(phi + ts)], axis=1)

    def cross(a, b):
        return a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]

    den = cross(d, u)
    den = np.where(den == 0.0, np.nan, den)
    for ex in (-lam / 2, lam / 2):
        # range from the route point whose sensing ray hits this endpoint
        rr = cross(d, np.array([ex, 0.0]) - p[:, None] * nrm) / den
        ok &= (rr > 0.0) & (rr <= r_max)
    return float(ok.mean())


def oracle_qd_mc(lams=(10.0, 25.0, 50.0, 80.0), n: int = 100_000, r_max: float = 100.0,
                 theta_max: float = math.pi / 2, radius: float = 100.0, seed: int = 0,
                 swath: str = "2pi", n_sigma: float = 3.0) -> OracleResult:
    """Monte Carlo whole-edge detection rate against the model probability."""
    model = DetectionModel(2 * math.pi * radius, r_max, theta_max, 1, swath)
    res = OracleResult("qd-mc", True, stats={"n": n, "swath": swath, "rows": []})
    for i, lam in enumerate(lams):
        f = lone_edge_mc(lam, n, r_max, theta_max, radius, seed=seed + i)
        q = model.q_length(lam)
        sigma, z = _z(f, q, n)
        good = abs(z) <= n_sigma
        res.passed &= good
        res.stats["rows"].append({"lambda": lam, "observed": f, "expected": q, "sigma": sigma, "z": z})
        res.lines.append(f"lambda={lam:g}: observed {f:.5f}, expected {q:.5f} +- {n_sigma:g}*{sigma:.5f} (z={z:+.2f})")
    return res


def lone_vertex(gamma: float, arm: float = 1000.0):
    """Vertex of angle ``gamma`` at the origin with two long arms; arm 0 runs along -x."""
    a = np.array([-arm, 0.0])
    b = arm * np.array([math.cos(math.pi - gamma), math.sin(math.pi - gamma)])
    return validate_polygon([a, [0.0, 0.0], b])


def _switches_arms(points: np.ndarray, detected: np.ndarray) -> bool:
    """Whether the detected point moves from one arm to the other, possibly via the vertex."""
    lab = np.where(np.hypot(points[:, 0], points[:, 1]) < 1e-7, 2,
                   np.where(np.abs(points[:, 1]) < 1e-9, 0, 1))
    lab = np.where(detected, lab, -1)
    keep = np.concatenate([[True], lab[1:] != lab[:-1]])
    seq = "".join("x" if k < 0 else str(k) for k in lab[keep])
    return any(s in seq for s in ("01", "10", "021", "120"))


def vertex_mc(gamma: float, n: int, r_max: float = 100.0, theta_max: float = math.pi / 2,
              radius: float = 100.0, v: float = 1.0, seed: int = 0) -> float:
    """Fraction of simulated routes whose detection passes across a lone vertex."""
    poly = lone_vertex(gamma)
    fleet = FleetConfig(n_s=n, v=v, dt=1.0, sensor=SectorSensor(r_max, theta_max), region=Region(radius=radius))
    hits = 0
    for i in range(n):
        route = sample_route(fleet.region, fleet.sensor, sensor_rng(seed, i), pad=5 * v)
        tr, gt = simulate_trace(route, fleet, poly, sensor_id=i, ground_truth=True)
        det = tr.r > 1e-9
        if det.any() and _switches_arms(gt["point"], det):
            hits += 1
    return hits / n


def oracle_measure2(gammas=(math.pi / 6, math.pi / 2, 3 * math.pi / 4), n: int = 20_000,
                    r_max: float = 100.0, theta_max: float = math.pi / 2, radius: float = 100.0,
                    seed: int = 0, n_sigma: float = 3.0) -> OracleResult:
    """Vertex measure against labelled simulation around a lone vertex."""
    model = DetectionModel(2 * math.pi * radius, r_max, theta_max, 1)
    res = OracleResult("measure2", True, stats={"n": n, "rows": []})
    for i, g in enumerate(gammas):
        f = vertex_mc(g, n, r_max, theta_max, radius, seed=seed + i)
        q = model.q_angle(g)
        sigma, z = _z(f, q, n)
        good = abs(z) <= n_sigma
        res.passed &= good
        res.stats["rows"].append({"gamma": g, "observed": f, "expected": q, "sigma": sigma, "z": z})
        res.lines.append(f"gamma={g:.4f}: observed {f:.5f}, expected {q:.5f} +- {n_sigma:g}*{sigma:.5f} (z={z:+.2f})")
    return res


def oracle_route_uniformity(n: int = 20_000, r_max: float = 100.0, theta_max: float = math.pi / 2,
                            radius: float = 100.0, seed: int = 0, alpha: float = 0.01) -> OracleResult:
    """KS tests that route headings and offsets are uniform on their ranges."""
    sensor, region = SectorSensor(r_max, theta_max), Region(radius=radius)
    routes = [sample_route(region, sensor, sensor_rng(seed, i)) for i in range(n)]
    phi = np.array([r.phi for r in routes])
    off = np.array([r.offset for r in routes])
    half = radius + sensor.lateral_reach
    p_phi = stats.kstest(phi, stats.uniform(0.0, 2 * math.pi).cdf).pvalue
    p_off = stats.kstest(off, stats.uniform(-half, 2 * half).cdf).pvalue
    res = OracleResult("route-uniformity", bool(p_phi > alpha and p_off > alpha),
                       stats={"n": n, "p_heading": float(p_phi), "p_offset": float(p_off)})
    res.lines.append(f"heading KS p-value {p_phi:.4f} (need > {alpha:g})")
    res.lines.append(f"offset KS p-value {p_off:.4f} (need > {alpha:g})")
    return res


_RUNNERS: dict[str, Callable[..., OracleResult]] = {
    "measure1": oracle_measure1,
    "measure2": oracle_measure2,
    "qd-mc": oracle_qd_mc,
    "route-uniformity": oracle_route_uniformity,
}


def run_oracle(kind: str, params: Optional[dict] = None) -> OracleResult:
    if kind not in _RUNNERS:
        raise ValueError(f"unknown oracle {kind!r}; choose from {ORACLES}")
    return _RUNNERS[kind](**(params or {}))
