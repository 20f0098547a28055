"""Turn distance traces into slope/duration observables.

A trace is split into blocks of positive readings. Inside a block, runs of
zero second differences are straight pieces (one polygon edge each); the
rest are curves, where the detected point sits on a vertex. Piece boundaries
are located exactly where the data allow it: intersection of adjacent lines,
tangency between a line and the quadratic ``r(t)**2`` of a vertex arc, and
crossings of 0 or ``r_max``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .simulator import DistanceTrace


class Kind(str, Enum):
    LINEAR = "LINEAR"
    CURVE = "CURVE"
    ZERO = "ZERO"
    GAP = "GAP"


class Event(str, Enum):
    SLOPE_CHANGE = "SLOPE_CHANGE"
    FROM_EMPTY = "FROM_EMPTY"
    TO_EMPTY = "TO_EMPTY"
    HIT_RMAX = "HIT_RMAX"
    HIT_ZERO = "HIT_ZERO"
    DROPOUT_BOUNDARY = "DROPOUT_BOUNDARY"


GAP_POLICIES = ("merge", "drop", "split")


class TraceTooShort(ValueError):
    pass


@dataclass(frozen=True)
class SegmenterConfig:
    """Tuning for :func:`segment_trace`.

    ``tol_curve`` bounds |r[k+1] - 2 r[k] + r[k-1]| on a straight piece.
    ``tol_slope`` and ``tol_merge`` decide whether two pieces separated by
    lost reports lie on one line. ``gap_policy``: ``merge`` fuses collinear
    pieces across lost reports, ``drop`` never fuses, ``split`` treats a lost
    report as a slope change.
    """

    tol_curve: float = 1e-10
    tol_slope: float = 1e-3
    tol_merge: float = 1e-6
    min_len: int = 3
    gap_policy: str = "merge"
    zero_tol: float = 1e-12

    def __post_init__(self):
        if self.gap_policy not in GAP_POLICIES:
            raise ValueError(f"gap_policy must be one of {GAP_POLICIES}")
        if self.min_len < 3:
            raise ValueError("min_len must be at least 3")


@dataclass(frozen=True)
class Segment:
    t_s: float
    t_e: float
    kind: Kind
    start_event: Event
    end_event: Event
    slope: float = math.nan
    intercept: float = math.nan
    n: int = 0
    t_first: float = math.nan
    t_last: float = math.nan
    r_first: float = math.nan
    r_last: float = math.nan

    @property
    def duration(self) -> float:
        return self.t_e - self.t_s

    def line(self, t):
        return self.intercept + self.slope * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class WholeEdgeSample:
    l_d: float
    s_d: float
    sensor_id: int
    segment_index: int


@dataclass(frozen=True)
class SlopeSample:
    s_d: float
    sensor_id: int
    segment_index: int


@dataclass(frozen=True)
class VertexSample:
    s_d_left: float
    s_d_right: float
    sensor_id: int
    left_index: int
    right_index: int
    clear: bool = False  # the trace never read zero, so the route line misses the target


@dataclass(frozen=True)
class EdgeVertexSample:
    whole: WholeEdgeSample
    vertex: VertexSample
    sensor_id: int

    @property
    def shared_side(self) -> str:
        return "left" if self.vertex.left_index == self.whole.segment_index else "right"


@dataclass
class Diagnostics:
    short_blocks: int = 0
    merged_gaps: int = 0
    fallback_boundaries: int = 0


# -- fitting helpers ---------------------------------------------------------


def _fit_line(t: np.ndarray, r: np.ndarray) -> tuple[float, float]:
    t0 = t.mean()
    tc = t - t0
    denom = np.dot(tc, tc)
    slope = float(np.dot(tc, r - r.mean()) / denom)
    return slope, float(r.mean() - slope * t0)


def _line_cross(s1, c1, s2, c2, lo, hi) -> Optional[float]:
    ds = s1 - s2
    if abs(ds) < 1e-14:
        return None
    t = (c2 - c1) / ds
    if lo - 1e-9 <= t <= hi + 1e-9:
        return float(min(max(t, lo), hi))
    return None


def _arc_junction(slope, intercept, t_curve, r_curve, lo, hi) -> Optional[float]:
    """Where a straight piece meets a vertex arc whose r(t)**2 is quadratic.

    The junction is a tangency when the detecting direction is inside the
    sector and a plain crossing when it is clamped to a sector bound.
    """
    if len(t_curve) < 3:
        return None
    t0 = t_curve.mean()
    A, B, C = np.polyfit(t_curve - t0, r_curve**2, 2)
    a = intercept + slope * t0
    qa, qb, qc = slope * slope - A, 2.0 * a * slope - B, a * a - C
    if abs(qa) < 1e-15:
        return None
    disc = qb * qb - 4.0 * qa * qc
    scale = max(qb * qb, abs(4.0 * qa * qc), 1e-300)
    if disc <= 1e-9 * scale:
        roots = [-qb / (2.0 * qa)]
    else:
        sq = math.sqrt(disc)
        roots = [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)]
    slack = 1e-6 * max(hi - lo, 1.0)
    inside = [r + t0 for r in roots if lo - slack <= r + t0 <= hi + slack]
    if not inside:
        return None
    mid = 0.5 * (lo + hi)
    t = min(inside, key=lambda x: abs(x - mid))
    return float(min(max(t, lo), hi))


# -- segmentation ------------------------------------------------------------


@dataclass
class _Piece:
    kind: Kind
    lo: int  # sample indices within the block, inclusive
    hi: int
    slope: float = math.nan
    intercept: float = math.nan


def _split_block(t: np.ndarray, r: np.ndarray, cfg: SegmenterConfig) -> list[_Piece]:
    n = len(t)
    if n < 3:
        return [_Piece(Kind.CURVE, 0, n - 1)]
    d2 = r[2:] - 2.0 * r[1:-1] + r[:-2]
    flat = np.abs(d2) <= cfg.tol_curve
    lines = []
    k = 0
    while k < len(flat):
        if flat[k]:
            j = k
            while j + 1 < len(flat) and flat[j + 1]:
                j += 1
            lo, hi = k, j + 2  # interior flags k..j cover samples k..j+2
            if hi - lo + 1 >= cfg.min_len:
                lines.append((lo, hi))
            k = j + 1
        else:
            k += 1
    pieces: list[_Piece] = []
    cursor = 0
    for lo, hi in lines:
        if lo > cursor:
            pieces.append(_Piece(Kind.CURVE, cursor, lo - 1))
        s, c = _fit_line(t[lo:hi + 1], r[lo:hi + 1])
        pieces.append(_Piece(Kind.LINEAR, lo, hi, s, c))
        cursor = hi + 1
    if cursor < n:
        pieces.append(_Piece(Kind.CURVE, cursor, n - 1))
    return pieces


def _local_slope(t, r, at_start: bool) -> float:
    if len(t) < 2:
        return 0.0
    if at_start:
        return (r[1] - r[0]) / (t[1] - t[0])
    return (r[-1] - r[-2]) / (t[-1] - t[-2])


def _block_segments(t, r, before: str, after: str, dt: float, r_max: float,
                    cfg: SegmenterConfig, diag: Diagnostics) -> list[Segment]:
    """Segments of one block of positive readings.

    ``before``/``after`` describe the neighbouring report: ``E`` (no
    detection), ``Z`` (zero), ``G`` (lost report) or ``X`` (trace end).
    """
    pieces = _split_block(t, r, cfg)
    m = len(pieces)
    bounds = [None] * (m + 1)  # bounds[i] = start time of piece i
    for i in range(1, m):
        a, b = pieces[i - 1], pieces[i]
        lo, hi = t[a.hi], t[b.lo]
        tb = None
        if a.kind is Kind.LINEAR and b.kind is Kind.LINEAR:
            tb = _line_cross(a.slope, a.intercept, b.slope, b.intercept, lo, hi)
        elif a.kind is Kind.LINEAR:
            tb = _arc_junction(a.slope, a.intercept, t[b.lo:b.hi + 1], r[b.lo:b.hi + 1], lo, hi)
        elif b.kind is Kind.LINEAR:
            tb = _arc_junction(b.slope, b.intercept, t[a.lo:a.hi + 1], r[a.lo:a.hi + 1], lo, hi)
        if tb is None:
            diag.fallback_boundaries += a.kind is Kind.LINEAR or b.kind is Kind.LINEAR
            tb = 0.5 * (lo + hi)
        bounds[i] = tb

    first, last = pieces[0], pieces[-1]
    s0 = first.slope if first.kind is Kind.LINEAR else _local_slope(t[first.lo:first.hi + 1], r[first.lo:first.hi + 1], True)
    s1 = last.slope if last.kind is Kind.LINEAR else _local_slope(t[last.lo:last.hi + 1], r[last.lo:last.hi + 1], False)
    ev_start, bounds[0] = _outer_event(before, t[0], r[0], s0, first, dt, r_max, start=True)
    ev_end, bounds[m] = _outer_event(after, t[-1], r[-1], s1, last, dt, r_max, start=False)

    segs = []
    for i, p in enumerate(pieces):
        segs.append(Segment(
            t_s=bounds[i], t_e=bounds[i + 1], kind=p.kind,
            start_event=ev_start if i == 0 else Event.SLOPE_CHANGE,
            end_event=ev_end if i == m - 1 else Event.SLOPE_CHANGE,
            slope=p.slope, intercept=p.intercept, n=p.hi - p.lo + 1,
            t_first=float(t[p.lo]), t_last=float(t[p.hi]),
            r_first=float(r[p.lo]), r_last=float(r[p.hi]),
        ))
    return segs


def _outer_event(neighbour, t_edge, r_edge, slope, piece, dt, r_max, start):
    sign = -1.0 if start else 1.0
    mid = t_edge + sign * dt / 2
    if neighbour == "E":
        if r_edge + sign * slope * dt > r_max - 1e-9:
            ev = Event.HIT_RMAX
            if piece.kind is Kind.LINEAR and abs(piece.slope) > 1e-14:
                return ev, float((r_max - piece.intercept) / piece.slope)
            return ev, mid
        return (Event.FROM_EMPTY if start else Event.TO_EMPTY), mid
    if neighbour == "Z":
        if piece.kind is Kind.LINEAR and abs(piece.slope) > 1e-14:
            return Event.HIT_ZERO, float(-piece.intercept / piece.slope)
        return Event.HIT_ZERO, mid
    return Event.DROPOUT_BOUNDARY, mid


def segment_trace(trace: DistanceTrace, r_max: float, cfg: SegmenterConfig = SegmenterConfig(),
                  diagnostics: Optional[Diagnostics] = None) -> list[Segment]:
    """Piecewise classification of one trace (LINEAR / CURVE / ZERO / GAP)."""
    diag = diagnostics if diagnostics is not None else Diagnostics()
    dt = trace.dt
    if len(trace) == 0:
        return []
    idx = np.rint(trace.t / dt).astype(np.int64)
    r = trace.r
    state = np.where(np.isnan(r), "E", np.where(r <= cfg.zero_tol, "Z", "P"))
    hidden = _hidden_zeros(trace.t, r, idx, state)
    # block boundaries: state change, lost reports or a zero between two reports
    cut = (state[1:] != state[:-1]) | (np.diff(idx) > 1)
    cut[list(hidden)] = True
    brk = np.flatnonzero(cut) + 1
    starts = np.concatenate([[0], brk])
    ends = np.concatenate([brk, [len(r)]])

    def neighbour(k_other, k_self):
        if k_other < 0 or k_other >= len(r):
            return "X"
        if min(k_other, k_self) in hidden:
            return "Z"
        if abs(idx[k_other] - idx[k_self]) > 1:
            return "G"
        return state[k_other]

    out: list[Segment] = []
    for a, b in zip(starts, ends):
        if a > 0 and idx[a] - idx[a - 1] > 1:
            t_gap0, t_gap1 = trace.t[a - 1] + dt, trace.t[a] - dt
            out.append(Segment(t_gap0, t_gap1, Kind.GAP, Event.DROPOUT_BOUNDARY, Event.DROPOUT_BOUNDARY,
                               n=int(idx[a] - idx[a - 1] - 1), t_first=t_gap0, t_last=t_gap1))
        if a - 1 in hidden:
            t_in, t_out = hidden[a - 1]
            out.append(Segment(t_in, t_out, Kind.ZERO, Event.HIT_ZERO, Event.HIT_ZERO, n=0,
                               t_first=t_in, t_last=t_out, r_first=0.0, r_last=0.0))
        st = state[a]
        if st == "E":
            continue
        if st == "Z":
            out.append(Segment(trace.t[a], trace.t[b - 1], Kind.ZERO, Event.HIT_ZERO, Event.HIT_ZERO,
                               n=b - a, t_first=trace.t[a], t_last=trace.t[b - 1], r_first=0.0, r_last=0.0))
            continue
        if b - a < cfg.min_len:
            diag.short_blocks += 1
        out.extend(_block_segments(trace.t[a:b], r[a:b], neighbour(a - 1, a), neighbour(b, b - 1),
                                   dt, r_max, cfg, diag))
    return _resolve_gaps(out, trace, cfg, diag)


def _hidden_zeros(t, r, idx, state) -> dict[int, tuple[float, float]]:
    """Report pairs (k, k+1) between which the sensor must have been inside the target.

    Two positive reports count as straddling a zero when the line through
    the two reports before reaches 0 earlier than the line through the two
    after leaves it. A pass close to a vertex instead gives lines meeting
    above zero.
    """
    out: dict[int, tuple[float, float]] = {}
    pos = state == "P"
    contiguous = np.diff(idx) == 1
    for k in range(1, len(r) - 2):
        if not (pos[k - 1] and pos[k] and pos[k + 1] and pos[k + 2]):
            continue
        if not (contiguous[k - 1] and contiguous[k] and contiguous[k + 1]):
            continue
        h = t[k + 1] - t[k]
        s_in = (r[k] - r[k - 1]) / (t[k] - t[k - 1])
        s_out = (r[k + 2] - r[k + 1]) / (t[k + 2] - t[k + 1])
        if not (s_in < 0 < s_out):
            continue
        tau_in = r[k] / -s_in
        tau_out = h - r[k + 1] / s_out
        if 0.0 < tau_in < tau_out < h:
            out[k] = (float(t[k] + tau_in), float(t[k] + tau_out))
    return out


def _resolve_gaps(segs: list[Segment], trace: DistanceTrace, cfg: SegmenterConfig,
                  diag: Diagnostics) -> list[Segment]:
    if cfg.gap_policy == "drop":
        return segs
    out: list[Segment] = []
    i = 0
    while i < len(segs):
        s = segs[i]
        if (s.kind is Kind.GAP and out and i + 1 < len(segs)
                and out[-1].end_event is Event.DROPOUT_BOUNDARY
                and segs[i + 1].start_event is Event.DROPOUT_BOUNDARY
                and out[-1].kind not in (Kind.ZERO, Kind.GAP)
                and segs[i + 1].kind not in (Kind.ZERO, Kind.GAP)):
            a, b = out[-1], segs[i + 1]
            if cfg.gap_policy == "merge" and _collinear(a, b, cfg):
                out[-1] = _fuse(a, b, trace)
                diag.merged_gaps += 1
                i += 2
                continue
            if cfg.gap_policy == "split":
                mid = 0.5 * (a.t_last + b.t_first)
                out[-1] = replace(a, end_event=Event.SLOPE_CHANGE, t_e=mid)
                out.append(replace(b, start_event=Event.SLOPE_CHANGE, t_s=mid))
                i += 2
                continue
        out.append(s)
        i += 1
    return out


def _collinear(a: Segment, b: Segment, cfg: SegmenterConfig) -> bool:
    if a.kind is not Kind.LINEAR or b.kind is not Kind.LINEAR:
        return False
    if abs(a.slope - b.slope) > cfg.tol_slope:
        return False
    return abs(a.line(b.t_first) - b.r_first) <= cfg.tol_merge and abs(b.line(a.t_last) - a.r_last) <= cfg.tol_merge


def _fuse(a: Segment, b: Segment, trace: DistanceTrace) -> Segment:
    m = ((trace.t >= a.t_first) & (trace.t <= a.t_last)) | ((trace.t >= b.t_first) & (trace.t <= b.t_last))
    s, c = _fit_line(trace.t[m], trace.r[m])
    return replace(a, t_e=b.t_e, end_event=b.end_event, slope=s, intercept=c, n=a.n + b.n,
                   t_last=b.t_last, r_last=b.r_last)


# -- sample extraction -------------------------------------------------------

WHOLE_START = (Event.SLOPE_CHANGE, Event.FROM_EMPTY)
WHOLE_END = (Event.SLOPE_CHANGE, Event.TO_EMPTY)


def is_whole(seg: Segment) -> bool:
    return seg.kind is Kind.LINEAR and seg.start_event in WHOLE_START and seg.end_event in WHOLE_END


def extract_whole_edge_samples(segments: Sequence[Segment], sensor_id: int = 0) -> list[WholeEdgeSample]:
    return [WholeEdgeSample(s.duration, s.slope, sensor_id, i)
            for i, s in enumerate(segments) if is_whole(s) and s.duration > 0]


def extract_slope_samples(segments: Sequence[Segment], sensor_id: int = 0) -> list[SlopeSample]:
    """Slopes of straight pieces that do not cover a whole edge."""
    return [SlopeSample(s.slope, sensor_id, i)
            for i, s in enumerate(segments) if s.kind is Kind.LINEAR and not is_whole(s)]


def extract_vertex_samples(segments: Sequence[Segment], sensor_id: int = 0) -> list[VertexSample]:
    """Slope pairs of consecutive straight pieces, optionally joined by one curve."""
    out = []
    clear = not any(s.kind is Kind.ZERO for s in segments)
    for i, a in enumerate(segments):
        if a.kind is not Kind.LINEAR or a.end_event is not Event.SLOPE_CHANGE:
            continue
        j = i + 1
        if j < len(segments) and segments[j].kind is Kind.CURVE and segments[j].end_event is Event.SLOPE_CHANGE:
            j += 1
        if j < len(segments) and segments[j].kind is Kind.LINEAR and segments[j].start_event is Event.SLOPE_CHANGE:
            out.append(VertexSample(a.slope, segments[j].slope, sensor_id, i, j, clear))
    return out


def extract_edge_vertex_samples(segments: Sequence[Segment], sensor_id: int = 0,
                                wholes=None, vertices=None) -> list[EdgeVertexSample]:
    wholes = extract_whole_edge_samples(segments, sensor_id) if wholes is None else wholes
    vertices = extract_vertex_samples(segments, sensor_id) if vertices is None else vertices
    by_index = {w.segment_index: w for w in wholes}
    out = []
    for vs in vertices:
        for idx in (vs.left_index, vs.right_index):
            if idx in by_index:
                out.append(EdgeVertexSample(by_index[idx], vs, sensor_id))
    return out


def perturb_slope(s, eps):
    return np.tan(np.arctan(s) + eps)


def apply_slope_noise(segments: Sequence[Segment], sigma: float, rng: np.random.Generator) -> list[Segment]:
    """Replace each straight piece's slope s by tan(arctan(s) + eps), eps ~ N(0, sigma²)."""
    if sigma == 0:
        return list(segments)
    out = []
    for s in segments:
        if s.kind is Kind.LINEAR:
            s = replace(s, slope=float(perturb_slope(s.slope, rng.normal(0.0, sigma))))
        out.append(s)
    return out


@dataclass
class TraceSamples:
    sensor_id: int
    segments: list[Segment]
    whole: list[WholeEdgeSample]
    slope_only: list[SlopeSample]
    vertex: list[VertexSample]
    edge_vertex: list[EdgeVertexSample]


def analyze_trace(trace: DistanceTrace, r_max: float, cfg: SegmenterConfig = SegmenterConfig(),
                  sigma: float = 0.0, rng: Optional[np.random.Generator] = None,
                  diagnostics: Optional[Diagnostics] = None) -> TraceSamples:
    segs = segment_trace(trace, r_max, cfg, diagnostics)
    if sigma > 0:
        segs = apply_slope_noise(segs, sigma, rng)
    sid = trace.sensor_id
    whole = extract_whole_edge_samples(segs, sid)
    vertex = extract_vertex_samples(segs, sid)
    return TraceSamples(sid, segs, whole, extract_slope_samples(segs, sid), vertex,
                        extract_edge_vertex_samples(segs, sid, whole, vertex))


def _num(x) -> str:
    return repr(float(x))


def write_samples(results: Sequence[TraceSamples], path) -> None:
    """CSV ``sensor_id,kind,l_d,s_d_left,s_d_right,shared,clear``.

    WHOLE and SLOPE rows keep their slope in ``s_d_left``; ``shared`` tells
    which slope of an EDGEVERTEX row belongs to the whole edge and ``clear``
    marks vertex rows from traces that never read zero.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sensor_id", "kind", "l_d", "s_d_left", "s_d_right", "shared", "clear"])
        for res in results:
            for s in res.whole:
                w.writerow([res.sensor_id, "WHOLE", _num(s.l_d), _num(s.s_d), "", "", ""])
            for s in res.slope_only:
                w.writerow([res.sensor_id, "SLOPE", "", _num(s.s_d), "", "", ""])
            for s in res.vertex:
                w.writerow([res.sensor_id, "VERTEX", "", _num(s.s_d_left), _num(s.s_d_right), "", int(s.clear)])
            for s in res.edge_vertex:
                w.writerow([res.sensor_id, "EDGEVERTEX", _num(s.whole.l_d), _num(s.vertex.s_d_left),
                            _num(s.vertex.s_d_right), s.shared_side, int(s.vertex.clear)])


def read_samples(path) -> list[TraceSamples]:
    """Inverse of :func:`write_samples` (segments are not stored)."""
    by_sensor: dict[int, TraceSamples] = {}
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.DictReader(fh)):
            sid = int(row["sensor_id"])
            res = by_sensor.setdefault(sid, TraceSamples(sid, [], [], [], [], []))
            kind = row["kind"]
            # synthetic segment indices keep shared-slope identity within a row
            if kind == "WHOLE":
                res.whole.append(WholeEdgeSample(float(row["l_d"]), float(row["s_d_left"]), sid, -1))
            elif kind == "SLOPE":
                res.slope_only.append(SlopeSample(float(row["s_d_left"]), sid, -1))
            elif kind == "VERTEX":
                res.vertex.append(VertexSample(float(row["s_d_left"]), float(row["s_d_right"]), sid, -1, -1,
                                              row.get("clear") == "1"))
            elif kind == "EDGEVERTEX":
                left = row["shared"] == "left"
                vs = VertexSample(float(row["s_d_left"]), float(row["s_d_right"]), sid,
                                  0 if left else 1, 1 if left else 0, row.get("clear") == "1")
                s_whole = vs.s_d_left if left else vs.s_d_right
                res.edge_vertex.append(EdgeVertexSample(WholeEdgeSample(float(row["l_d"]), s_whole, sid, 0), vs, sid))
            else:
                raise ValueError(f"line {k + 2}: unknown sample kind {kind!r}")
    return [by_sensor[k] for k in sorted(by_sensor)]
