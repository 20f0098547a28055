"""Chaining estimated edges and vertices into a closed polygon."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import itertools

import numpy as np
from scipy.stats import poisson

from .counts import ClusterEstimate
from .pairing import PairMatrix


class NoConsistentShape(RuntimeError):
    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class ShapeHypothesis:
    vertices: list[int]  # angle-cluster index of each vertex, in boundary order
    edges: list[int]  # length-cluster index of the edge leaving each vertex
    lengths: list[float]
    angles: list[float]
    closure_residual: float
    perimeter: float
    ambiguous: bool
    alternatives: int = 0
    diagnostics: dict = field(default_factory=dict)

    def outline(self) -> np.ndarray:
        return _chain(self.lengths, self.angles)


def _chain(lengths: Sequence[float], angles: Sequence[float]) -> np.ndarray:
    """Corner points when walking the edges and turning by pi - angle at each next vertex."""
    n = len(lengths)
    pts = [np.zeros(2)]
    heading = 0.0
    for k in range(n):
        pts.append(pts[-1] + lengths[k] * np.array([math.cos(heading), math.sin(heading)]))
        heading += math.pi - angles[(k + 1) % n]
    return np.array(pts)


def closure_residual(lengths: Sequence[float], angles: Sequence[float]) -> float:
    return float(np.hypot(*_chain(lengths, angles)[-1]))


def _canonical(vs: Sequence[int], es: Sequence[int]) -> tuple:
    n = len(vs)
    forms = []
    for k in range(n):
        forms.append(tuple((vs[(k + i) % n], es[(k + i) % n]) for i in range(n)))
        # walking the other way: vertex order reversed, edges shift by one
        forms.append(tuple((vs[(k - i) % n], es[(k - i - 1) % n]) for i in range(n)))
    return min(forms)


def _expand(mult: Sequence[int]) -> list[int]:
    out = []
    for i, m in enumerate(mult):
        out.extend([i] * m)
    return out


def _angle_sum_ok(angles: Sequence[float], mult: Sequence[int], slack: float) -> bool:
    n = sum(mult)
    if n < 3:
        return False
    total = sum(m * g for m, g in zip(mult, angles))
    return abs(total - (n - 2) * math.pi) <= slack * (n - 2) * math.pi


def reconcile_multiplicities(length_est: Sequence[ClusterEstimate], angle_est: Sequence[ClusterEstimate],
                             angle_slack: float = 0.15, spread: int = 1,
                             max_combos: int = 500_000) -> tuple[list[int], list[int], bool]:
    """Integer multiplicities for a closed polygon, as close as possible to the estimates.

    Plain rounding is kept whenever it already gives a valid polygon (at least
    three vertices, as many edges as vertices, angle sum within
    ``angle_slack``). Otherwise every adopted cluster is tried at its rounded
    count +- ``spread`` (never below one), and the vector with the smallest
    chi-square distance to the estimates wins. Returns the edge and vertex
    multiplicities and whether they differ from plain rounding.
    """
    g = [e.center for e in angle_est]
    nl = [e.multiplicity for e in length_est]
    na = [e.multiplicity for e in angle_est]
    base_l = [e.rounded for e in length_est]
    base_a = [e.rounded for e in angle_est]
    if sum(base_l) == sum(base_a) and _angle_sum_ok(g, base_a, angle_slack):
        return base_l, base_a, False

    def options(n_hat):
        if n_hat is None:
            return [0]
        r = int(round(n_hat))
        return list(range(max(1, r - spread), max(1, r + spread) + 1))

    def cost(mult, n_hat):
        return sum((m - x) ** 2 / max(x, 0.5) for m, x in zip(mult, n_hat) if x is not None)

    opt_a = [options(x) for x in na]
    opt_l = [options(x) for x in nl]
    if math.prod(len(o) for o in opt_a + opt_l) > max_combos:
        raise NoConsistentShape("too many multiplicity combinations to reconcile",
                                {"length_options": opt_l, "angle_options": opt_a})
    # best edge vector for each total, computed once
    best_l: dict[int, tuple[float, tuple]] = {}
    for ml in itertools.product(*opt_l):
        c = cost(ml, nl)
        t = sum(ml)
        if t not in best_l or c < best_l[t][0]:
            best_l[t] = (c, ml)
    best = None
    for ma in itertools.product(*opt_a):
        t = sum(ma)
        if t not in best_l or not _angle_sum_ok(g, ma, angle_slack):
            continue
        c = cost(ma, na) + best_l[t][0]
        if best is None or c < best[0]:
            best = (c, list(best_l[t][1]), list(ma))
    if best is None:
        raise NoConsistentShape("no integer multiplicities give a closed polygon",
                                {"length_multiplicity": nl, "angle_multiplicity": na})
    return best[1], best[2], True


def connection_mask(pairs: PairMatrix, threshold: float = 0.6, alpha: float = 0.05) -> np.ndarray:
    """Cells where an edge may touch a vertex.

    A cell passes when its ratio exceeds ``threshold``, or when its raw count
    is too small to reject that level: a Poisson count with mean
    ``threshold * baseline`` would fall this low with probability >= ``alpha``.
    """
    ratio = np.nan_to_num(pairs.ratio, nan=0.0)
    ok = ratio > threshold
    if alpha > 0:
        p = poisson.cdf(np.floor(pairs.raw + 1e-9), threshold * pairs.baseline)
        ok |= (pairs.baseline > 0) & (p >= alpha)
    return ok


def assemble_shape(length_est: Sequence[ClusterEstimate], angle_est: Sequence[ClusterEstimate],
                   pairs: PairMatrix, threshold: float = 0.6, alpha: float = 0.05,
                   angle_slack: float = 0.15, tie_tol: float = 0.02, reconcile: bool = True,
                   max_nodes: int = 200_000) -> ShapeHypothesis:
    """Best closing arrangement of the estimated edges and vertices.

    An edge may join two vertices only if both cells pass
    :func:`connection_mask`. Among admissible cycles the one with the smallest
    closure residual wins; it is flagged ambiguous when another distinct
    cycle closes within ``tie_tol`` of the perimeter. With ``reconcile`` the
    multiplicities come from :func:`reconcile_multiplicities`, otherwise from
    plain rounding; either way the choice is recorded in the diagnostics.
    """
    g = [e.center for e in angle_est]
    if reconcile:
        ml, ma, adjusted = reconcile_multiplicities(length_est, angle_est, angle_slack)
    else:
        ml, ma, adjusted = [e.rounded for e in length_est], [e.rounded for e in angle_est], False
    edges, verts = _expand(ml), _expand(ma)
    diag = {"n_edges": len(edges), "n_vertices": len(verts), "length_multiplicity": ml,
            "angle_multiplicity": ma, "multiplicity_adjusted": adjusted}
    n = len(verts)
    if n < 3:
        raise NoConsistentShape("fewer than three vertices estimated", diag)
    diag["angle_sum"] = sum(g[i] for i in verts)
    if not _angle_sum_ok(g, ma, angle_slack):
        raise NoConsistentShape("vertex angles do not sum to those of a polygon", diag)
    if len(edges) != n:
        raise NoConsistentShape("edge and vertex counts differ", diag)

    ok = connection_mask(pairs, threshold, alpha)
    L = [c.center for c in length_est]
    G = [c.center for c in angle_est]

    v_left = {i: verts.count(i) for i in set(verts)}
    e_left = {i: edges.count(i) for i in set(edges)}
    first = min(verts)
    vs, es = [first], []
    v_left[first] -= 1
    found: dict[tuple, float] = {}
    nodes = 0

    def dfs():
        nonlocal nodes
        nodes += 1
        if nodes > max_nodes:
            return
        k = len(es)
        if k == n:
            lens = [L[e] for e in es]
            angs = [G[v] for v in vs]
            key = _canonical(vs, es)
            res = closure_residual(lens, angs)
            if res < found.get(key, math.inf):
                found[key] = res
            return
        a = vs[-1]
        closing = k == n - 1
        for e in sorted(e_left):
            if e_left[e] == 0 or not ok[e, a]:
                continue
            targets = [first] if closing else [b for b in sorted(v_left) if v_left[b] > 0]
            for b in targets:
                if not ok[e, b]:
                    continue
                e_left[e] -= 1
                es.append(e)
                if not closing:
                    v_left[b] -= 1
                    vs.append(b)
                dfs()
                if not closing:
                    vs.pop()
                    v_left[b] += 1
                es.pop()
                e_left[e] += 1

    dfs()
    diag["search_nodes"] = nodes
    diag["arrangements"] = len(found)
    if not found:
        raise NoConsistentShape("no cycle agrees with the pair matrix", diag)
    ranked = sorted(found.items(), key=lambda kv: (kv[1], kv[0]))
    (best, res) = ranked[0]
    perimeter = sum(L[e] for e in edges)
    ties = [r for _, r in ranked[1:] if r <= res + tie_tol * perimeter]
    vs_best = [p[0] for p in best]
    es_best = [p[1] for p in best]
    return ShapeHypothesis(vs_best, es_best, [L[e] for e in es_best], [G[v] for v in vs_best],
                           res, perimeter, bool(ties), len(ties), diag)
