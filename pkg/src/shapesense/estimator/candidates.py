"""Inverting observed slopes into edge-offset, length and angle candidates.

Notation: ``x = xi - phi`` is the direction of an edge relative to the
sensor heading and ``zeta = x + pi/2`` the direction of its inward normal
relative to the heading. If ``|zeta| <= theta_max`` the sensor looks at the
edge perpendicularly (interior regime), otherwise the detecting direction
sticks to a sector bound (clamped regime) as long as
``|zeta| < theta_max + pi/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from ..geometry import wrap_pi

ZETA_TOL = 1e-12
DUP_TOL = 1e-9


class EmptyCandidateSet(ValueError):
    pass


class Regime(str, Enum):
    INTERIOR = "interior"
    CLAMPED = "clamped"


@dataclass(frozen=True)
class Offset:
    """One inverted value of ``xi - phi``.

    ``variant`` is the sign in ``s cos(theta) +- v`` for clamped branches,
    0 for interior ones.
    """

    x: float
    regime: Regime
    variant: int = 0

    @property
    def zeta(self) -> float:
        return float(wrap_pi(self.x + math.pi / 2))

    @property
    def tag(self) -> str:
        if self.regime is Regime.INTERIOR:
            return "interior"
        return "clamped" + ("+" if self.variant > 0 else "-")


@dataclass(frozen=True)
class CandidateValue:
    value: float
    branch: str
    source: int = -1


def regime_of(x: float, theta_max: float) -> Optional[Regime]:
    """Detection regime for relative edge direction ``x``, None if undetectable."""
    z = abs(float(wrap_pi(x + math.pi / 2)))
    if z <= theta_max + ZETA_TOL:
        return Regime.INTERIOR
    if z < theta_max + math.pi / 2 - ZETA_TOL:
        return Regime.CLAMPED
    return None


def slope_model(x: float, v: float, theta_max: float) -> float:
    """Signed slope of r(t) while an edge at relative direction ``x`` is detected.

    NaN when the edge cannot be the detected one for this heading.
    """
    reg = regime_of(x, theta_max)
    if reg is None:
        return math.nan
    if reg is Regime.INTERIOR:
        return v * math.sin(x)
    theta_star = math.copysign(theta_max, float(wrap_pi(x + math.pi / 2)))
    return v * math.sin(x) / math.sin(theta_star - x)


def candidate_offsets(s_d: float, v: float, theta_max: float, strict: bool = True) -> list[Offset]:
    """All values of ``xi - phi`` compatible with slope ``s_d``.

    Without ``strict`` a branch survives when its normal lies in the band its
    formula assumes, which treats the slope sign as unknown. With ``strict``
    the forward slope of the branch must also reproduce ``s_d``.
    """
    if v <= 0:
        raise ValueError("v must be positive")
    raw: list[Offset] = []
    if abs(s_d) <= v:
        a = math.asin(s_d / v)
        for x in (a, -a, math.pi - a, math.pi + a):
            raw.append(Offset(float(wrap_pi(x)), Regime.INTERIOR))
    st, ct = math.sin(theta_max), math.cos(theta_max)
    for variant in (1, -1):
        den = s_d * ct + variant * v
        b = math.atan(s_d * st / den) if den != 0 else math.copysign(math.pi / 2, s_d)
        # +arctan belongs to a normal beyond +theta, -arctan to one beyond -theta
        for sign in (1, -1):
            for shift in (0.0, math.pi):
                off = Offset(float(wrap_pi(sign * b + shift)), Regime.CLAMPED, variant)
                if sign * off.zeta > theta_max:
                    raw.append(off)
    out: list[Offset] = []
    tol = 1e-9 * max(abs(s_d), v)
    for off in raw:
        if regime_of(off.x, theta_max) is not off.regime:
            continue
        if strict and not abs(slope_model(off.x, v, theta_max) - s_d) <= tol:
            continue
        if any(abs(wrap_pi(off.x - o.x)) < DUP_TOL and o.regime is off.regime for o in out):
            continue
        out.append(off)
    return out


def length_from_offset(off: Offset, l_d: float, s_d: float, v: float, theta_max: float) -> float:
    if off.regime is Regime.INTERIOR:
        return l_d * v * math.sqrt(max(1.0 - (s_d / v) ** 2, 0.0))
    st, ct = math.sin(theta_max), math.cos(theta_max)
    return l_d * math.hypot(s_d * st, s_d * ct + off.variant * v)


def candidate_lengths(l_d: float, s_d: float, v: float, theta_max: float,
                      strict: bool = True, source: int = -1) -> list[CandidateValue]:
    """Edge-length candidates for a whole-edge sample, one per distinct value."""
    if not l_d > 0:
        raise ValueError("l_d must be positive")
    out: list[CandidateValue] = []
    for off in candidate_offsets(s_d, v, theta_max, strict):
        lam = length_from_offset(off, l_d, s_d, v, theta_max)
        if lam > 0 and not any(abs(lam - c.value) < DUP_TOL for c in out):
            out.append(CandidateValue(lam, off.tag, source))
    if not out:
        raise EmptyCandidateSet(f"no feasible branch for l_d={l_d!r}, s_d={s_d!r}")
    return out


def angle_from_offsets(a: float, b: float) -> float:
    """Interior angle between an edge at relative direction ``a`` and the next at ``b``."""
    return float(np.mod(math.pi - b + a, 2 * math.pi))


def angle_ok(gamma: float, theta_max: float) -> bool:
    return 0.0 < gamma < math.pi and gamma >= math.pi / 2 - theta_max - ZETA_TOL


def same_side(a: Offset, b: Offset) -> bool:
    """Both detected points lie on one side of the route."""
    return (a.zeta > 0) == (b.zeta > 0)


def candidate_angles(s_left: float, s_right: float, v: float, theta_max: float,
                     strict: bool = True, source: int = -1, clear: bool = False) -> list[CandidateValue]:
    """Vertex-angle candidates from the slopes on either side of a vertex.

    ``clear`` says the route line misses the target, which then lies wholly
    on one side of it; branch pairs placing the two edges on opposite sides
    are dropped.
    """
    left = candidate_offsets(s_left, v, theta_max, strict)
    right = candidate_offsets(s_right, v, theta_max, strict)
    out: list[CandidateValue] = []
    for a in left:
        for b in right:
            if clear and not same_side(a, b):
                continue
            g = angle_from_offsets(a.x, b.x)
            if angle_ok(g, theta_max) and not any(abs(g - c.value) < DUP_TOL for c in out):
                out.append(CandidateValue(g, f"{a.tag}|{b.tag}", source))
    return out
