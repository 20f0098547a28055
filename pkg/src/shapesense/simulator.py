"""Random directed routes, discrete-time sensor marching and trace I/O."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import Region, SectorSensor, Target, sector_distance_batch, unit


@dataclass(frozen=True)
class Turn:
    """A single ±π/2 turn at ``position`` (route abscissa)."""

    position: float
    sign: int  # +1 left, -1 right


@dataclass(frozen=True)
class VehicleRoute:
    """Directed line with heading ``phi`` and signed perpendicular ``offset``.

    The vehicle starts at abscissa ``start`` and stops at ``end``; abscissas
    are measured along the heading from the foot of the perpendicular dropped
    from the region centre.
    """

    phi: float
    offset: float
    start: float
    end: float
    center: tuple[float, float] = (0.0, 0.0)
    turn: Optional[Turn] = None

    def point(self, s) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        d = unit(self.phi)
        n = np.array([-d[1], d[0]])
        s = np.asarray(s, dtype=float)
        return c + self.offset * n + s[..., None] * d

    def positions(self, distance: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Positions and headings after travelling ``distance`` from the start."""
        s = self.start + distance
        if self.turn is None or self.turn.position >= self.end:
            return self.point(s), np.full(len(s), self.phi)
        before = s <= self.turn.position
        pos = self.point(np.where(before, s, self.turn.position))
        heading2 = self.phi + self.turn.sign * math.pi / 2
        extra = np.where(before, 0.0, s - self.turn.position)
        pos = pos + extra[:, None] * unit(heading2)
        return pos, np.where(before, self.phi, heading2)


@dataclass(frozen=True)
class FleetConfig:
    n_s: int = 1000
    v: float = 0.1
    dt: float = 1.0
    sensor: SectorSensor = field(default_factory=SectorSensor)
    region: Region = field(default_factory=Region)
    rng_seed: int = 0
    turns: bool = False

    def __post_init__(self):
        if not (self.v > 0 and self.dt > 0):
            raise ValueError("v and dt must be positive")
        if self.n_s < 0:
            raise ValueError("n_s must be non-negative")


@dataclass(frozen=True)
class NoiseConfig:
    sigma: float = 0.0  # slope-angle noise, applied during trace analysis
    eps_l: float = 0.0  # per-report dropout probability

    def __post_init__(self):
        if self.sigma < 0 or not 0.0 <= self.eps_l < 1.0:
            raise ValueError("need sigma >= 0 and 0 <= eps_l < 1")


@dataclass(frozen=True, eq=False)
class DistanceTrace:
    """Reports of one sensor: times ``t`` and readings ``r`` (NaN = no detection).

    Lost reports are simply absent, so consecutive times may differ by a
    multiple of ``dt``.
    """

    sensor_id: int
    v: float
    dt: float
    t: np.ndarray
    r: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def detects(self) -> bool:
        return bool(np.any(~np.isnan(self.r)))

    def equals(self, other: "DistanceTrace") -> bool:
        return (
            self.sensor_id == other.sensor_id
            and self.v == other.v
            and self.dt == other.dt
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.r, other.r, equal_nan=True)
        )


def sample_route(region: Region, sensor: SectorSensor, rng: np.random.Generator,
                 with_turn: bool = False, pad: float = 0.0) -> VehicleRoute:
    """Draw a directed line uniformly from those whose swath meets the region."""
    R = region.radius
    phi = rng.uniform(0.0, 2.0 * math.pi)
    half = R + sensor.lateral_reach
    p = rng.uniform(-half, half)
    reach = R + sensor.r_max
    start = -math.sqrt(max(reach * reach - p * p, 0.0)) - pad
    end = R + pad
    turn = None
    if with_turn:
        chord = math.sqrt(max(R * R - p * p, 0.0))
        where = rng.uniform(-chord, chord)
        sign = 1 if rng.random() < 0.5 else -1
        turn = Turn(where, sign)
        # after the turn keep going until nothing of the region is ahead
        c = np.asarray(region.center, dtype=float)
        tp = VehicleRoute(phi, p, start, end, region.center).point(where)
        d2 = unit(phi + sign * math.pi / 2)
        remaining = R + pad - float(np.dot(tp - c, d2))
        end = where + max(remaining, 0.0)
    return VehicleRoute(phi, p, start, end, tuple(region.center), turn)


def _steps(route: VehicleRoute, v: float, dt: float) -> int:
    return int(math.floor((route.end - route.start) / (v * dt))) + 1


def simulate_trace(route: VehicleRoute, fleet: FleetConfig, target: Target,
                   noise: NoiseConfig = NoiseConfig(), rng: Optional[np.random.Generator] = None,
                   sensor_id: int = 0, ground_truth: bool = False):
    """March one sensor along ``route`` and record its distance readings.

    With ``ground_truth`` the detected points and detecting directions are
    returned as well, for validation only.
    """
    n = _steps(route, fleet.v, fleet.dt)
    k = np.arange(n)
    t = k * fleet.dt
    pos, heading = route.positions(fleet.v * t)
    r, point, theta = sector_distance_batch(pos, heading, fleet.sensor, target)
    keep = np.ones(n, dtype=bool)
    if noise.eps_l > 0:
        if rng is None:
            raise ValueError("dropout requires an rng")
        keep = rng.random(n) >= noise.eps_l
    trace = DistanceTrace(sensor_id, fleet.v, fleet.dt, t[keep], r[keep])
    if ground_truth:
        return trace, {"position": pos[keep], "heading": heading[keep], "point": point[keep],
                       "theta_star": theta[keep]}
    return trace


def sensor_rng(seed: int, sensor_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(sensor_id)]))


def simulate_fleet(fleet: FleetConfig, target: Target, noise: NoiseConfig = NoiseConfig()):
    """One trace per sensor; each sensor draws from its own seeded stream."""
    pad = 5 * fleet.v * fleet.dt
    traces = []
    for i in range(fleet.n_s):
        rng = sensor_rng(fleet.rng_seed, i)
        route = sample_route(fleet.region, fleet.sensor, rng, with_turn=fleet.turns, pad=pad)
        traces.append(simulate_trace(route, fleet, target, noise, rng, sensor_id=i))
    return traces


def fleet_to_dict(fleet: FleetConfig) -> dict:
    d = asdict(fleet)
    d["region"]["center"] = list(d["region"]["center"])
    return d


def fleet_from_dict(d: dict) -> FleetConfig:
    d = dict(d)
    if "sensor" in d:
        d["sensor"] = SectorSensor(**d["sensor"])
    if "region" in d:
        reg = dict(d["region"])
        reg["center"] = tuple(reg.get("center", (0.0, 0.0)))
        d["region"] = Region(**reg)
    return FleetConfig(**d)


def write_traces(traces, path, manifest: Optional[dict] = None) -> None:
    """Write ``sensor_id,t,reading`` rows; empty reading = NO_DETECTION."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sensor_id", "t", "reading"])
        for tr in traces:
            for t, r in zip(tr.t, tr.r):
                w.writerow([tr.sensor_id, repr(float(t)), "" if np.isnan(r) else repr(float(r))])
    if manifest is not None:
        with open(path.with_suffix(".manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)


def read_traces(path, v: Optional[float] = None, dt: Optional[float] = None):
    """Read a trace CSV; speed and time step come from the manifest if not given."""
    path = Path(path)
    man = path.with_suffix(".manifest.json")
    if (v is None or dt is None) and man.exists():
        fleet = json.loads(man.read_text())["fleet"]
        v = fleet["v"] if v is None else v
        dt = fleet["dt"] if dt is None else dt
    if v is None or dt is None:
        raise ValueError("speed and time step unknown: pass them or provide a manifest")
    rows: dict[int, tuple[list, list]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ts, rs = rows.setdefault(int(row["sensor_id"]), ([], []))
            ts.append(float(row["t"]))
            rs.append(float(row["reading"]) if row["reading"] != "" else np.nan)
    return [DistanceTrace(i, v, dt, np.array(ts), np.array(rs)) for i, (ts, rs) in sorted(rows.items())]
