"""Planar primitives and the sector-constrained distance query.

All angles are radians measured counterclockwise from the +x axis. Polygons
are stored counterclockwise; edge ``j`` runs from vertex ``j`` to vertex
``j + 1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
BOUNDARY_TOL = 1e-9
MIN_EDGE = 1e-9


class GeometryError(ValueError):
    """Base class for invalid geometric input."""


class NonConvex(GeometryError):
    pass


class DegenerateEdge(GeometryError):
    pass


class SelfIntersecting(GeometryError):
    pass


class OutOfRange(GeometryError):
    pass


def wrap_2pi(angle):
    """Map an angle (or array of angles) into [0, 2π)."""
    out = np.mod(angle, TWO_PI)
    if np.ndim(out) == 0:
        out = float(out)
        return 0.0 if out >= TWO_PI else out
    out[out >= TWO_PI] = 0.0
    return out


def wrap_pi(angle):
    """Map an angle (or array of angles) into (-π, π]."""
    out = -np.mod(-np.asarray(angle, dtype=float) + math.pi, TWO_PI) + math.pi
    return float(out) if np.ndim(out) == 0 else out


def unit(angle):
    angle = np.asarray(angle, dtype=float)
    return np.stack([np.cos(angle), np.sin(angle)], axis=-1)


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class Region:
    """Disk-shaped monitoring region."""

    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 100.0

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError(f"region radius must be positive, got {self.radius}")

    @property
    def perimeter(self) -> float:
        return TWO_PI * self.radius


@dataclass(frozen=True)
class SectorSensor:
    r_max: float = 100.0
    theta_max: float = math.pi / 2

    def __post_init__(self):
        if not self.r_max > 0:
            raise GeometryError(f"r_max must be positive, got {self.r_max}")
        if not 0.0 < self.theta_max <= math.pi / 2 + 1e-12:
            raise GeometryError(f"theta_max must lie in (0, π/2], got {self.theta_max}")

    @property
    def lateral_reach(self) -> float:
        return self.r_max * math.sin(self.theta_max)


class Target:
    """Convex target interface used by :func:`sector_distance_batch`.

    Subclasses answer three vectorized questions for query points ``p``:
    containment, the nearest boundary point, and the first entry distance of
    a ray.
    """

    def contains(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def nearest(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def ray_entry(self, p: np.ndarray, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def vertex_array(self) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ConvexPolygon(Target):
    """Strictly convex polygon with counterclockwise vertices.

    Use :func:`validate_polygon` to build one from raw points.
    """

    vertices: np.ndarray
    lengths: np.ndarray = field(repr=False)
    directions: np.ndarray = field(repr=False)
    angles: np.ndarray = field(repr=False)

    @property
    def n_edges(self) -> int:
        return len(self.vertices)

    @property
    def perimeter(self) -> float:
        return float(self.lengths.sum())

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        c = _cross(v, w)
        area = c.sum() / 2.0
        cx = ((v[:, 0] + w[:, 0]) * c).sum() / (6.0 * area)
        cy = ((v[:, 1] + w[:, 1]) * c).sum() / (6.0 * area)
        return np.array([cx, cy])

    @property
    def _edge_vectors(self) -> np.ndarray:
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    def vertex_array(self) -> np.ndarray:
        return self.vertices

    def translated(self, offset) -> "ConvexPolygon":
        return validate_polygon(self.vertices + np.asarray(offset, dtype=float))

    def contains(self, p: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
        p = np.atleast_2d(p)
        e = self._edge_vectors
        rel = p[:, None, :] - self.vertices[None, :, :]
        side = _cross(e[None, :, :], rel) / self.lengths[None, :]
        return np.all(side >= -tol, axis=1)

    def nearest(self, p: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p)
        a = self.vertices[None, :, :]
        e = self._edge_vectors[None, :, :]
        s = np.sum((p[:, None, :] - a) * e, axis=2) / (self.lengths**2)[None, :]
        s = np.clip(s, 0.0, 1.0)
        q = a + s[..., None] * e
        d2 = np.sum((q - p[:, None, :]) ** 2, axis=2)
        k = np.argmin(d2, axis=1)
        return q[np.arange(len(p)), k]

    def ray_entry(self, p: np.ndarray, w: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
        """First parameter u ≥ 0 where ``p + u w`` lies in the polygon, or inf.

        The ray is clipped against each edge's inner half-plane.
        """
        p = np.atleast_2d(p)
        w = np.atleast_2d(w)
        e = self._edge_vectors[None, :, :] / self.lengths[None, :, None]
        c0 = _cross(e, p[:, None, :] - self.vertices[None, :, :])
        c1 = _cross(e, np.broadcast_to(w[:, None, :], c0.shape + (2,)))
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = -c0 / c1
        lower = np.where(c1 > 0, bound, -np.inf).max(axis=1)
        upper = np.where(c1 < 0, bound, np.inf).min(axis=1)
        parallel_out = np.any((c1 == 0) & (c0 < -tol), axis=1)
        u_in = np.maximum(lower, 0.0)
        hit = (u_in <= upper + tol) & ~parallel_out
        return np.where(hit, u_in, np.inf)


def validate_polygon(points: Iterable[Sequence[float]]) -> ConvexPolygon:
    """Build a :class:`ConvexPolygon`, reorienting clockwise input."""
    v = np.asarray([tuple(map(float, pt)) for pt in points], dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise GeometryError("a polygon needs at least three 2-D vertices")
    e = np.roll(v, -1, axis=0) - v
    lengths = np.hypot(e[:, 0], e[:, 1])
    if np.any(lengths < MIN_EDGE):
        raise DegenerateEdge("polygon has a zero-length edge or duplicate vertex")
    area2 = _cross(v, np.roll(v, -1, axis=0)).sum()
    if abs(area2) < MIN_EDGE:
        raise DegenerateEdge("polygon has zero area")
    if area2 < 0:
        v = v[::-1].copy()
        e = np.roll(v, -1, axis=0) - v
        lengths = np.hypot(e[:, 0], e[:, 1])
    turns = _cross(e, np.roll(e, -1, axis=0))
    if np.any(turns / (lengths * np.roll(lengths, -1)) <= 1e-12):
        raise NonConvex("polygon is not strictly convex")
    directions = wrap_2pi(np.arctan2(e[:, 1], e[:, 0]))
    # Strictly left turns everywhere can still wind more than once.
    turn_angles = wrap_2pi(np.roll(directions, -1) - directions)
    if abs(turn_angles.sum() - TWO_PI) > 1e-6:
        raise SelfIntersecting("polygon boundary winds more than once")
    angles = math.pi - turn_angles
    return ConvexPolygon(v, lengths, directions, angles)


@dataclass(frozen=True, eq=False)
class RoundedPolygon(Target):
    """Convex polygon core dilated by a disk of radius ``radius``."""

    core: ConvexPolygon
    radius: float

    def vertex_array(self) -> np.ndarray:
        return self.core.vertices

    def contains(self, p: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
        p = np.atleast_2d(p)
        inside = self.core.contains(p)
        q = self.core.nearest(p)
        return inside | (np.hypot(*(p - q).T) <= self.radius + tol)

    def nearest(self, p: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p)
        q = self.core.nearest(p)
        d = p - q
        n = np.hypot(d[:, 0], d[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            return q + d * (self.radius / n)[:, None]

    def ray_entry(self, p: np.ndarray, w: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
        p = np.atleast_2d(p)
        w = np.atleast_2d(w)
        best = self.core.ray_entry(p, w)
        rho = self.radius
        for a, b in zip(self.core.vertices, np.roll(self.core.vertices, -1, axis=0)):
            best = np.minimum(best, _ray_disk(p, w, a, rho))
            # rectangle of the capsule, clipped as a 4-gon
            e = (b - a) / np.hypot(*(b - a))
            n = np.array([e[1], -e[0]]) * rho
            rect = validate_polygon([a - n, b - n, b + n, a + n])
            best = np.minimum(best, rect.ray_entry(p, w))
        return best

    def polygonize(self, n_arc: int = 16) -> ConvexPolygon:
        """Polygon approximation with ``n_arc`` points on each corner arc."""
        pts = []
        core = self.core
        for j, c in enumerate(core.vertices):
            d_in = core.directions[j - 1]
            d_out = core.directions[j]
            a0 = d_in - math.pi / 2
            turn = wrap_2pi(d_out - d_in)
            for k in range(n_arc):
                ang = a0 + turn * k / (n_arc - 1)
                pts.append(c + self.radius * np.array([math.cos(ang), math.sin(ang)]))
        return validate_polygon(pts)


def _ray_disk(p, w, c, rho):
    rel = p - c
    b = np.sum(rel * w, axis=1)
    cc = np.sum(rel * rel, axis=1) - rho * rho
    disc = b * b - cc
    root = np.sqrt(np.maximum(disc, 0.0))
    u1 = -b - root
    u2 = -b + root
    u = np.where(u1 >= 0, u1, np.where(u2 >= 0, 0.0, np.inf))
    return np.where(disc >= 0, u, np.inf)


class Reading(NamedTuple):
    """One sensor reading plus ground-truth instrumentation.

    ``distance`` is NaN for NO_DETECTION and 0 when the sensor is inside the
    target. ``point`` and ``theta_star`` describe the detected boundary point
    and are only meant for validation code, never for the estimator.
    """

    distance: float
    point: np.ndarray
    theta_star: float


def sector_distance_batch(positions, headings, sensor: SectorSensor, target: Target):
    """Vectorized sector distance for N sensor states.

    Returns ``(distance, point, theta_star)`` arrays of shapes (N,), (N, 2),
    (N,). The minimum over the closed sector is the target's nearest point
    when that point is inside the sector, otherwise the nearer entry of the
    two bounding rays.
    """
    p = np.atleast_2d(np.asarray(positions, dtype=float))
    phi = np.broadcast_to(np.asarray(headings, dtype=float), (len(p),))
    th = sensor.theta_max
    inside = target.contains(p)

    q = target.nearest(p)
    rel = q - p
    dist = np.hypot(rel[:, 0], rel[:, 1])
    fwd = rel[:, 0] * np.cos(phi) + rel[:, 1] * np.sin(phi)
    in_wedge = fwd >= dist * math.cos(th) - BOUNDARY_TOL

    w_left = unit(phi + th)
    w_right = unit(phi - th)
    u_left = target.ray_entry(p, w_left)
    u_right = target.ray_entry(p, w_right)
    use_left = u_left <= u_right
    u_edge = np.where(use_left, u_left, u_right)
    q_edge = p + u_edge[:, None] * np.where(use_left[:, None], w_left, w_right)

    r = np.where(in_wedge, dist, u_edge)
    point = np.where(in_wedge[:, None], q, q_edge)
    theta = np.where(in_wedge, np.arctan2(_cross(unit(phi), rel), fwd), np.where(use_left, th, -th))

    r = np.where(inside, 0.0, r)
    point = np.where(inside[:, None], p, point)
    theta = np.where(inside, 0.0, theta)
    out = r > sensor.r_max + BOUNDARY_TOL
    r = np.where(out, np.nan, r)
    point = np.where(out[:, None], np.nan, point)
    theta = np.where(out, np.nan, theta)
    return r, point, theta


def sector_distance(sensor_pos, heading: float, sensor: SectorSensor, target: Target) -> Reading:
    r, pt, th = sector_distance_batch(np.asarray(sensor_pos, dtype=float)[None, :], heading, sensor, target)
    return Reading(float(r[0]), pt[0], float(th[0]))


def detecting_direction(zeta: float, theta_max: float) -> float:
    """Detecting direction for an edge seen at relative normal angle ``zeta``.

    ``zeta`` is the heading-relative direction of the edge's inward normal.
    Inside the sector the perpendicular is used; otherwise the sector bound
    closest to it.
    """
    if not -theta_max - math.pi / 2 < zeta < theta_max + math.pi / 2:
        raise OutOfRange(f"zeta={zeta} is outside the detectable band for theta_max={theta_max}")
    return min(max(zeta, -theta_max), theta_max)


def read_polygon_csv(path) -> ConvexPolygon:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    return validate_polygon([(float(r[0]), float(r[1])) for r in rows])


def write_polygon_csv(polygon: ConvexPolygon, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for x, y in polygon.vertices:
            w.writerow([repr(float(x)), repr(float(y))])


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


FIXTURES = ("triangle", "building", "car-polygon", "car-rounded")


def fixture_path(name: str) -> Path:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    return Path(str(resources.files("shapesense") / "data" / "fixtures" / f"{name}.csv"))


def load_fixture(name: str) -> ConvexPolygon:
    return read_polygon_csv(fixture_path(name))


def rounded_car() -> RoundedPolygon:
    """Exact rounded-corner car body (trapezoid core dilated by a disk)."""
    body = RoundedPolygon(validate_polygon(CAR_CORE), CAR_RADIUS)
    shift = -body.polygonize(16).centroid
    return RoundedPolygon(body.core.translated(shift), CAR_RADIUS)


def load_target(name_or_path: str, exact_rounded: bool = False) -> Target:
    if name_or_path == "car-rounded" and exact_rounded:
        return rounded_car()
    if name_or_path in FIXTURES:
        return load_fixture(name_or_path)
    return read_polygon_csv(name_or_path)


# Fixture definitions, centred on the origin when written.
TRIANGLE = [(0.0, 0.0), (25.0 * math.sqrt(3.0), 0.0), (0.0, 25.0)]
BUILDING = [(0.0, 0.0), (20.0, 0.0), (20.0, 5.0), (5.0, 20.0), (0.0, 20.0)]
CAR_POLYGON = [
    (-1.5, 0.0), (1.5, 0.0), (5.5, 4.0), (6.5, 34.0),
    (2.5, 38.0), (-2.5, 38.0), (-6.5, 34.0), (-5.5, 4.0),
]
CAR_CORE = [(-1.5, 0.0), (1.5, 0.0), (2.5, 30.0), (-2.5, 30.0)]
CAR_RADIUS = 4.0


def build_fixtures(directory) -> None:
    """Regenerate the bundled CSV fixtures."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    shapes = {
        "triangle": validate_polygon(TRIANGLE),
        "building": validate_polygon(BUILDING),
        "car-polygon": validate_polygon(CAR_POLYGON),
    }
    for name, poly in shapes.items():
        write_polygon_csv(poly.translated(-poly.centroid), directory / f"{name}.csv")
    write_polygon_csv(rounded_car().polygonize(16), directory / "car-rounded.csv")
