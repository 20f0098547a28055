"""Shape estimation of a hidden convex polygon from distance-only sensor traces."""

__version__ = "0.1.0"
