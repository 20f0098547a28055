"""Multiplicity of each adopted length or angle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .measures import DetectionModel, expected_detections
from .voting import Histogram


@dataclass(frozen=True)
class ClusterEstimate:
    center: float
    count: int
    expected: float  # E[n_d] for one feature of this size
    multiplicity: Optional[float]  # None when the feature is undetectable

    @property
    def status(self) -> str:
        return "UNDETECTABLE" if self.multiplicity is None else "OK"

    @property
    def rounded(self) -> int:
        return 0 if self.multiplicity is None else int(round(self.multiplicity))


def estimate_counts(n_x: int, hist: Histogram, model: DetectionModel, quantity: str) -> list[ClusterEstimate]:
    """How many edges (or vertices) share each adopted value.

    ``n_x`` is the number of whole-edge samples for lengths, or of vertex
    samples for angles.
    """
    total = sum(c.count for c in hist.clusters)
    if total <= 0 and hist.clusters:
        raise ValueError("adopted clusters have no members")
    out = []
    for c in hist.clusters:
        e = expected_detections(model, c.center, quantity)
        share = n_x * c.count / total
        out.append(ClusterEstimate(c.center, c.count, e, share / e if e > 0 else None))
    return out
