"""Run configuration and the simulate -> analyze -> estimate pipeline."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import jsonschema
import numpy as np

from .analysis import Diagnostics, SegmenterConfig, TraceSamples, analyze_trace, read_samples, write_samples
from .estimator.candidates import EmptyCandidateSet, candidate_angles, candidate_lengths
from .estimator.counts import ClusterEstimate, estimate_counts
from .estimator.measures import DetectionModel
from .estimator.pairing import PairMatrix, pair_ratio_matrix
from .estimator.shape import NoConsistentShape, ShapeHypothesis, assemble_shape
from .estimator.voting import Histogram, cluster_candidates, write_histogram
from .geometry import FIXTURES, Region, SectorSensor, Target, load_target
from .simulator import FleetConfig, NoiseConfig, simulate_fleet, write_traces

DEFAULTS: dict[str, Any] = {
    "target": "triangle",
    "exact_rounded": False,
    "seed": 0,
    "fleet": {"n_s": 1000, "v": 0.1, "dt": 1.0, "r_max": 100.0, "theta_max": math.pi / 2,
              "region_radius": 100.0, "turns": False},
    "noise": {"sigma": 0.0, "eps_l": 0.0},
    "segmenter": {"tol_curve": 1e-10, "tol_slope": 1e-3, "tol_merge": 1e-6, "min_len": 3,
                  "gap_policy": "merge"},
    "estimator": {"k_sub": 7.0, "threshold": None, "threshold_rule": "background", "coarsen": None, "min_bins": 20,
                  "peak_alpha": 0.01, "strict": True,
                  "connection_threshold": 0.6, "connection_alpha": 0.05, "reconcile": True, "swath": "2pi"},
    "output": {"write_traces": False},
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "target": {"type": "string", "minLength": 1},
        "exact_rounded": {"type": "boolean"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "fleet": {"type": "object", "additionalProperties": False, "properties": {
            "n_s": {"type": "integer", "minimum": 1},
            "v": _pos, "dt": _pos, "r_max": _pos, "region_radius": _pos,
            "theta_max": {"type": "number", "exclusiveMinimum": 0, "maximum": math.pi / 2},
            "turns": {"type": "boolean"}}},
        "noise": {"type": "object", "additionalProperties": False, "properties": {
            "sigma": {"type": "number", "minimum": 0},
            "eps_l": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}}},
        "segmenter": {"type": "object", "additionalProperties": False, "properties": {
            "tol_curve": _pos, "tol_slope": _pos, "tol_merge": _pos,
            "min_len": {"type": "integer", "minimum": 3},
            "gap_policy": {"enum": ["merge", "drop", "split"]}}},
        "estimator": {"type": "object", "additionalProperties": False, "properties": {
            "k_sub": _pos,
            "threshold": {"type": ["number", "null"], "minimum": 0},
            "threshold_rule": {"enum": ["background", "occupancy"]},
            "coarsen": {"type": ["number", "null"], "exclusiveMinimum": 0},
            "min_bins": {"type": "integer", "minimum": 1},
            "peak_alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "strict": {"type": "boolean"},
            "connection_threshold": {"type": "number", "minimum": 0},
            "connection_alpha": {"type": "number", "minimum": 0, "maximum": 1},
            "reconcile": {"type": "boolean"},
            "swath": {"enum": ["2pi", "pi"]}}},
        "output": {"type": "object", "additionalProperties": False, "properties": {
            "write_traces": {"type": "boolean"}}},
    },
}


class ConfigError(ValueError):
    def __init__(self, message: str, path: Sequence[str] = ()):
        super().__init__(message)
        self.path = list(path)


CONFIG_DIR = Path(__file__).parent / "data" / "configs"


def bundled_configs() -> list[str]:
    return sorted(p.stem for p in CONFIG_DIR.glob("*.json"))


def _line_of(text: str, path: Sequence[str]) -> Optional[int]:
    """Line of the last key of ``path`` in the JSON text, searching below its parents."""
    pos = 0
    for key in path:
        if not isinstance(key, str):
            continue
        k = text.find(json.dumps(key), pos)
        if k < 0:
            return None
        pos = k
    return text.count("\n", 0, pos) + 1 if path else None


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    """Everything one pipeline run depends on; defaults follow the triangle scenario."""

    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[Path] = None) -> "RunConfig":
        try:
            jsonschema.validate(d, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config field '{where}': {exc.message}", list(exc.absolute_path)) from None
        cfg = cls(_merge(DEFAULTS, d), Path(base_dir) if base_dir else Path.cwd())
        cfg.resolve_target()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        """Read a JSON config file, or a bundled config by name."""
        path = Path(path)
        if not path.exists() and (CONFIG_DIR / f"{path.name}.json").exists():
            path = CONFIG_DIR / f"{path.name}.json"
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        try:
            return cls.from_dict(d, path.parent)
        except ConfigError as exc:
            line = _line_of(text, exc.path)
            where = f"{path}: line {line}: " if line else f"{path}: "
            raise ConfigError(where + str(exc), exc.path) from None

    def with_overrides(self, **kv) -> "RunConfig":
        """Override by dotted key, e.g. ``fleet.n_s=200``."""
        d = copy.deepcopy(self.data)
        for key, value in kv.items():
            node = d
            parts = key.split(".")
            for p in parts[:-1]:
                node = node[p]
            node[parts[-1]] = value
        return RunConfig.from_dict(d, self.base_dir)

    def resolve_target(self) -> str:
        name = self.data["target"]
        if name in FIXTURES:
            return name
        p = Path(name)
        if not p.is_absolute():
            p = self.base_dir / p
        if not p.exists():
            raise ConfigError(f"config field 'target': no fixture or file named {name!r}", ["target"])
        return str(p)

    def target(self) -> Target:
        return load_target(self.resolve_target(), exact_rounded=self.data["exact_rounded"])

    def fleet(self) -> FleetConfig:
        f = self.data["fleet"]
        return FleetConfig(n_s=f["n_s"], v=f["v"], dt=f["dt"], sensor=SectorSensor(f["r_max"], f["theta_max"]),
                           region=Region(radius=f["region_radius"]), rng_seed=self.data["seed"],
                           turns=f["turns"])

    def noise(self) -> NoiseConfig:
        return NoiseConfig(**self.data["noise"])

    def segmenter(self) -> SegmenterConfig:
        return SegmenterConfig(**self.data["segmenter"])

    @property
    def est(self) -> dict:
        return self.data["estimator"]

    def coarsen(self) -> float:
        c = self.est["coarsen"]
        if c is not None:
            return float(c)
        n = self.data["noise"]
        return 4.0 if (n["sigma"] > 0 or n["eps_l"] > 0) else 1.0

    def model(self) -> DetectionModel:
        f = self.data["fleet"]
        return DetectionModel(2 * math.pi * f["region_radius"], f["r_max"], f["theta_max"], f["n_s"],
                              self.est["swath"])


# -- stages --------------------------------------------------------------------


def analysis_rng(seed: int, sensor_id: int) -> np.random.Generator:
    """Stream for slope noise, independent of the route stream of the same sensor."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(sensor_id), 1]))


def simulate(cfg: RunConfig):
    return simulate_fleet(cfg.fleet(), cfg.target(), cfg.noise())


def analyze(traces, cfg: RunConfig, diagnostics: Optional[Diagnostics] = None) -> list[TraceSamples]:
    seg = cfg.segmenter()
    r_max = cfg.data["fleet"]["r_max"]
    sigma = cfg.data["noise"]["sigma"]
    out = []
    for tr in traces:
        if not tr.detects():
            continue
        rng = analysis_rng(cfg.data["seed"], tr.sensor_id) if sigma > 0 else None
        out.append(analyze_trace(tr, r_max, seg, sigma, rng, diagnostics))
    return out


@dataclass
class Estimate:
    length_hist: Optional[Histogram]
    angle_hist: Optional[Histogram]
    lengths: list[ClusterEstimate]
    angles: list[ClusterEstimate]
    pairs: Optional[PairMatrix]
    shape: Optional[ShapeHypothesis]
    shape_error: Optional[str]
    stats: dict
    shape_diagnostics: dict = field(default_factory=dict)


def estimate(samples: Sequence[TraceSamples], cfg: RunConfig) -> Estimate:
    f = cfg.data["fleet"]
    v, th = f["v"], f["theta_max"]
    strict = cfg.est["strict"]
    whole = [w for s in samples for w in s.whole]
    vertex = [x for s in samples for x in s.vertex]
    edge_vertex = [x for s in samples for x in s.edge_vertex]
    lam, gam = [], []
    empty = 0
    for w in whole:
        try:
            lam.extend(c.value for c in candidate_lengths(w.l_d, w.s_d, v, th, strict))
        except EmptyCandidateSet:
            empty += 1
    for x in vertex:
        gam.extend(c.value for c in candidate_angles(x.s_d_left, x.s_d_right, v, th, strict, clear=x.clear))
    k_sub, thr, coarsen, rule = cfg.est["k_sub"], cfg.est["threshold"], cfg.coarsen(), cfg.est["threshold_rule"]
    nb, pa = cfg.est["min_bins"], cfg.est["peak_alpha"]
    lh = cluster_candidates(lam, k_sub, thr, coarsen, rule, nb, pa) if lam else None
    ah = cluster_candidates(gam, k_sub, thr, coarsen, rule, nb, pa) if gam else None
    model = cfg.model()
    le = estimate_counts(len(whole), lh, model, "length") if lh else []
    ae = estimate_counts(len(vertex), ah, model, "angle") if ah else []
    pairs = shape = err = None
    sdiag: dict = {}
    if lh and ah and lh.clusters and ah.clusters:
        pairs = pair_ratio_matrix(edge_vertex, lh, ah, le, ae, v, th, strict)
        try:
            shape = assemble_shape(le, ae, pairs, cfg.est["connection_threshold"], cfg.est["connection_alpha"],
                                   reconcile=cfg.est["reconcile"])
        except NoConsistentShape as exc:
            err = f"NoConsistentShape: {exc}"
            sdiag = exc.diagnostics
    stats = {
        "n_detecting": len(samples),
        "n_whole": len(whole),
        "n_vertex": len(vertex),
        "n_edge_vertex": len(edge_vertex),
        "n_length_candidates": len(lam),
        "n_angle_candidates": len(gam),
        "empty_candidate_sets": empty,
    }
    if shape is not None:
        sdiag = shape.diagnostics
    return Estimate(lh, ah, le, ae, pairs, shape, err, stats, sdiag)


# -- report --------------------------------------------------------------------

REPORT_SCHEMA_PATH = Path(__file__).parent / "data" / "report.schema.json"


def _hist_json(h: Optional[Histogram]):
    if h is None:
        return None
    return {"lo": h.lo, "hi": h.hi, "n_sub": h.n_sub, "k_sub": h.k_sub, "threshold": h.threshold,
            "total": h.n_candidates}


def _clusters_json(est: Sequence[ClusterEstimate]):
    return [{"center": c.center, "count": c.count, "expected_detections": c.expected,
             "multiplicity": c.multiplicity, "status": c.status} for c in est]


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if np.isfinite(x) else None
    return x


def _finite(a: np.ndarray):
    return [[None if not np.isfinite(x) else float(x) for x in row] for row in a]


def report_dict(est: Estimate, cfg: RunConfig) -> dict:
    pairs = None
    if est.pairs is not None:
        p = est.pairs
        pairs = {"lengths": p.lengths, "angles": p.angles, "raw": _finite(p.raw),
                 "baseline": _finite(p.baseline), "ratio": _finite(p.ratio), "n_mapped": p.n_mapped}
    shape: dict[str, Any] = {"status": "none"}
    if est.shape is not None:
        s = est.shape
        shape = {"status": "ok", "lengths": s.lengths, "angles": s.angles, "length_clusters": s.edges,
                 "angle_clusters": s.vertices, "closure_residual": s.closure_residual,
                 "perimeter": s.perimeter, "ambiguous": s.ambiguous, "tied_alternatives": s.alternatives,
                 "diagnostics": _jsonable(est.shape_diagnostics)}
    elif est.shape_error:
        shape = {"status": "error", "message": est.shape_error, "diagnostics": _jsonable(est.shape_diagnostics)}
    return {
        "config": cfg.data,
        "stats": est.stats,
        "histograms": {"length": _hist_json(est.length_hist), "angle": _hist_json(est.angle_hist)},
        "length_clusters": _clusters_json(est.lengths),
        "angle_clusters": _clusters_json(est.angles),
        "pairs": pairs,
        "shape": shape,
    }


def validate_report(report: dict) -> None:
    jsonschema.validate(report, json.loads(REPORT_SCHEMA_PATH.read_text()))


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_estimate(est: Estimate, cfg: RunConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    report = report_dict(est, cfg)
    validate_report(report)
    dump_json(report, out / "report.json")
    for name, h in (("length", est.length_hist), ("angle", est.angle_hist)):
        if h is not None:
            write_histogram(h, out / f"histogram_{name}.csv")
    return report


def manifest(cfg: RunConfig) -> dict:
    from . import __version__
    return {"version": __version__, "seed": cfg.data["seed"], "config": cfg.data,
            "fleet": {"v": cfg.data["fleet"]["v"], "dt": cfg.data["fleet"]["dt"]}}


def run_pipeline(cfg: RunConfig, out: Optional[Path] = None) -> tuple[Estimate, dict]:
    """Simulate, analyze and estimate; write artifacts when ``out`` is given."""
    traces = simulate(cfg)
    diag = Diagnostics()
    samples = analyze(traces, cfg, diag)
    est = estimate(samples, cfg)
    est.stats["n_traces"] = len(traces)
    est.stats["short_blocks"] = diag.short_blocks
    est.stats["merged_gaps"] = diag.merged_gaps
    report = report_dict(est, cfg)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        dump_json(manifest(cfg), out / "manifest.json")
        if cfg.data["output"]["write_traces"]:
            write_traces(traces, out / "traces.csv", manifest(cfg))
        write_samples(samples, out / "samples.csv")
        report = write_estimate(est, cfg, out)
    return est, report


def estimate_from_files(samples_path, cfg: RunConfig) -> Estimate:
    return estimate(read_samples(samples_path), cfg)
