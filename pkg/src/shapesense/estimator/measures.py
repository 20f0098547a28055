"""Kinematic measures of the route lines that detect an edge or a vertex."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

HALF_PI = 0.5 * math.pi

# Width of the swath band entering the normalizing measure: 2*pi matches
# routes whose offset is uniform over +-(R + r_max sin(theta_max)).
SWATH_FACTORS = {"2pi": 2.0 * math.pi, "pi": math.pi}


def eta(lam: float, r_max: float, theta_max: float) -> float:
    """Largest |phi - xi| at which a clamped sensor can still span an edge of length ``lam``."""
    reach = r_max * abs(math.sin(theta_max))
    if reach >= lam:
        return HALF_PI
    return math.asin(reach / lam)


def measure_whole_edge(lam: float, r_max: float, theta_max: float) -> float:
    """Measure of directed lines from which an edge of length ``lam`` is seen whole."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    th = theta_max
    st, ct = math.sin(th), math.cos(th)
    e = eta(lam, r_max, th)
    hyp = math.hypot(lam, r_max)
    total = 0.0
    if HALF_PI - th < math.atan(r_max / lam):
        total += 2 * (r_max * (r_max / hyp - ct) + lam * (lam / hyp - st))
    if e >= max(HALF_PI - th, th):
        total += 2 * (HALF_PI * r_max * st - lam * (2 - ct - st))
    elif HALF_PI - th <= e < th:
        total += 2 * ((HALF_PI - th + e) * r_max * st - lam * (2 - math.cos(e) - st))
    elif th <= e < HALF_PI - th:
        total += 2 * ((e + th) * r_max * st - lam * (2 - ct - math.cos(e)))
    else:
        total += 4 * (e * r_max * st - lam * (1 - math.cos(e)))
    return total


def _intersect(a: Sequence[tuple[float, float]], b: Sequence[tuple[float, float]]):
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if hi > lo:
                out.append((lo, hi))
    return out


def measure_whole_edge_quadrature(lam: float, r_max: float, theta_max: float) -> float:
    """Direct numerical integration of the strip width over admissible headings.

    Works in ``psi = phi - xi``; the inward normal sits at ``pi/2 - psi``
    relative to the heading.
    """
    th = theta_max
    al = math.atan(r_max / lam)
    e = eta(lam, r_max, th)
    st = math.sin(th)
    interior = _intersect([(HALF_PI - th, HALF_PI + th)], [(-al, al), (math.pi - al, math.pi + al)])
    clamped = _intersect([(-th, HALF_PI - th), (HALF_PI + th, math.pi + th)],
                         [(-e, e), (math.pi - e, math.pi + e)])

    def f_int(psi):
        return max(r_max * abs(math.cos(psi)) - lam * abs(math.sin(psi)), 0.0)

    def f_cl(psi):
        return max(r_max * st - lam * abs(math.sin(psi)), 0.0)

    total = 0.0
    for f, pieces in ((f_int, interior), (f_cl, clamped)):
        for lo, hi in pieces:
            pts = [p for p in (0.0, HALF_PI, math.pi) if lo < p < hi]
            val, _ = integrate.quad(f, lo, hi, points=pts or None, epsabs=1e-12, epsrel=1e-12, limit=200)
            total += val
    return total


# -- vertex measure ----------------------------------------------------------


def _simpson(f: Callable[[float], float], a: float, b: float, tol: float, depth: int = 50) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6 * (fa + 4 * flm + fm)
        right = (b - m) / 6 * (fm + 4 * frm + fb)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15 * tol:
            return left + right + delta / 15
        return (rec(a, m, fa, flm, fm, left, tol / 2, depth - 1)
                + rec(m, b, fm, frm, fb, right, tol / 2, depth - 1))

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return rec(a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), tol, depth)


class _VertexIntegrand:
    """min(w_j, w_{j+1}, h_max) with the first edge at direction 0."""

    def __init__(self, gamma: float, r_max: float, theta_max: float, xi_j: float = 0.0):
        self.r, self.th = r_max, theta_max
        self.xi = (xi_j, xi_j + math.pi - gamma)

    def w(self, k: int, phi: float) -> float:
        rel = self.xi[k] + HALF_PI - phi
        if abs(rel) <= self.th:
            return max(self.r * math.sin(rel), 0.0)
        return self.r * math.sin(self.th)

    def h_max(self, phi: float) -> float:
        x = (self.xi[0] - phi + HALF_PI) % (2 * math.pi) - HALF_PI
        if x < self.th - HALF_PI:
            return self.r * math.cos(x)
        if x < self.th:
            return math.inf
        return 0.0

    def parts(self, phi: float) -> tuple[float, float, float]:
        return self.w(0, phi), self.w(1, phi), self.h_max(phi)

    def __call__(self, phi: float) -> float:
        return min(self.parts(phi))


def vertex_domain(gamma: float, theta_max: float, xi_j: float = 0.0) -> tuple[float, float]:
    """Headings from which both edges at a vertex can be detected around it."""
    xi_next = xi_j + math.pi - gamma
    return max(xi_j, xi_next) - theta_max, min(xi_j, xi_next) + HALF_PI


def measure_vertex(gamma: float, r_max: float, theta_max: float, tol: float = 1e-8,
                   xi_j: float = 0.0) -> float:
    """Measure of directed lines that detect a vertex of interior angle ``gamma``."""
    if not 0.0 < gamma < math.pi:
        raise ValueError("gamma must lie in (0, pi)")
    lo, hi = vertex_domain(gamma, theta_max, xi_j)
    if hi <= lo:
        return 0.0
    f = _VertexIntegrand(gamma, r_max, theta_max, xi_j)
    # regime switches of w_k and h_max
    cuts = {lo, hi}
    for xk in f.xi:
        cuts.update((xk + HALF_PI - theta_max, xk + HALF_PI + theta_max))
    for shift in (-2 * math.pi, 0.0, 2 * math.pi):
        cuts.update((xi_j + HALF_PI - theta_max + shift, xi_j - theta_max + shift))
    cuts = sorted(c for c in cuts if lo <= c <= hi)
    # switches of the minimizing term, located on a grid and refined
    knots = set(cuts)
    for a, b in zip(cuts[:-1], cuts[1:]):
        grid = np.linspace(a, b, 65)[1:-1]
        if len(grid) < 2:
            continue
        which = [int(np.argmin(f.parts(p))) for p in grid]
        for k in range(len(grid) - 1):
            i, j = which[k], which[k + 1]
            if i == j:
                continue
            g = lambda p, i=i, j=j: f.parts(p)[i] - f.parts(p)[j]
            ga, gb = g(grid[k]), g(grid[k + 1])
            if np.isfinite(ga) and np.isfinite(gb) and ga * gb < 0:
                knots.add(optimize.brentq(g, grid[k], grid[k + 1], xtol=1e-14))
            else:
                knots.add(0.5 * (grid[k] + grid[k + 1]))
    knots = sorted(knots)
    pieces = [(a, b) for a, b in zip(knots[:-1], knots[1:]) if b - a > 1e-15]
    per = tol / max(len(pieces), 1)
    return 2.0 * sum(_simpson(f, a, b, per) for a, b in pieces)


# -- detection model ---------------------------------------------------------


@dataclass(frozen=True)
class DetectionModel:
    """Probabilities and expected counts of whole-edge and vertex detections."""

    perimeter: float
    r_max: float
    theta_max: float
    n_s: int
    swath: str = "2pi"

    def __post_init__(self):
        if self.swath not in SWATH_FACTORS:
            raise ValueError(f"swath must be one of {sorted(SWATH_FACTORS)}")

    def line_measure(self) -> float:
        """Measure of all directed routes whose swath meets the region."""
        return 2.0 * (self.perimeter + SWATH_FACTORS[self.swath] * self.r_max * math.sin(self.theta_max))

    def q_length(self, lam: float) -> float:
        return measure_whole_edge(lam, self.r_max, self.theta_max) / self.line_measure()

    def q_angle(self, gamma: float) -> float:
        return measure_vertex(gamma, self.r_max, self.theta_max) / self.line_measure()

    def expected_length(self, lam: float) -> float:
        return self.n_s * self.q_length(lam)

    def expected_angle(self, gamma: float) -> float:
        return self.n_s * self.q_angle(gamma)


def expected_detections(model: DetectionModel, x: float, quantity: str) -> float:
    """E[n_d] for an edge length (``quantity='length'``) or vertex angle (``'angle'``)."""
    if quantity == "length":
        return model.expected_length(x)
    if quantity == "angle":
        return model.expected_angle(x)
    raise ValueError("quantity must be 'length' or 'angle'")
