"""Reproducible ensembles over noise realisations.

Replicate i always uses seed ``split_seed(base_seed, i)`` and replicates are
evaluated in fixed, index-ordered chunks, so results do not depend on how many
worker processes run them.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import EnsembleFailure, StretchlabError

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
QUANTILE_LEVELS = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0)


def _mix64(z):
    """splitmix64 finaliser: a bijection on 64-bit words (works on ints or uint64 arrays)."""
    if isinstance(z, np.ndarray):
        z = z.astype(np.uint64)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def split_seed(base_seed, index):
    """64-bit seed for replicate ``index``; injective in ``index`` for a fixed base.

    ``index`` may be an int or an integer array (returns a uint64 array).
    """
    base = _mix64(int(base_seed) & MASK64)
    if isinstance(index, np.ndarray):
        with np.errstate(over="ignore"):
            z = np.uint64(base) + index.astype(np.uint64) * np.uint64(GOLDEN)
            return _mix64(z)
    return _mix64((base + int(index) * GOLDEN) & MASK64)


@dataclass(frozen=True)
class EnsembleSpec:
    config: dict
    n_replicates: int
    base_seed: int = 0
    parallelism: int = 1
    chunk_size: int = 32

    def __post_init__(self):
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")

    def seeds(self):
        return [split_seed(self.base_seed, i) for i in range(self.n_replicates)]


@dataclass
class EnsembleStats:
    values: np.ndarray
    quantiles: dict
    mean: float
    std_error: float
    seeds: list = dc_field(default_factory=list)
    failures: list = dc_field(default_factory=list)
    config: dict = dc_field(default_factory=dict)

    @classmethod
    def from_values(cls, values, seeds=(), failures=(), config=None):
        v = np.asarray(values, dtype=float)
        ok = np.sort(v[np.isfinite(v)])
        if ok.size == 0:
            raise EnsembleFailure("no replicate produced a finite metric")
        # sorting first makes every statistic independent of replicate order
        q = {lvl: float(np.quantile(ok, lvl)) for lvl in QUANTILE_LEVELS}
        mean = float(np.mean(ok))
        se = float(np.std(ok, ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else 0.0
        return cls(v, q, mean, se, list(seeds), list(failures), dict(config or {}))

    @property
    def median(self) -> float:
        return self.quantiles[0.5]

    def median_ci(self, level=0.95, n_boot=2000, seed=0):
        """Percentile bootstrap interval for the median."""
        ok = np.sort(self.values[np.isfinite(self.values)])
        rng = np.random.default_rng(seed)
        meds = np.median(ok[rng.integers(0, ok.size, (n_boot, ok.size))], axis=1)
        lo = (1.0 - level) / 2.0
        return float(np.quantile(meds, lo)), float(np.quantile(meds, 1.0 - lo))

    def to_record(self):
        return {
            "n_replicates": int(self.values.size),
            "quantiles": {f"{k:g}": v for k, v in self.quantiles.items()},
            "mean": self.mean,
            "std_error": self.std_error,
            "median_ci95": list(self.median_ci()),
            "failures": [{"replicate": i, "seed": int(s), "error": e} for i, s, e in self.failures],
            "config": self.config,
        }


# ---------------------------------------------------------------- metrics

def _field_and_b0(cfg):
    from .fields import preset_initial_field, velocity_field

    field = velocity_field(cfg.get("field", "holder"), cfg.get("alpha", 1.0), cfg.get("gamma", 4.0))
    return field, preset_initial_field(cfg.get("initial_field", "constant_ex"))


def _paths(cfg, seeds):
    from .flow import sample_brownian, stack_paths

    n = int(round(cfg["T"] / cfg["dt"]))
    return stack_paths([sample_brownian(int(s), cfg["dt"], n) for s in seeds])


def metric_stretch_supremum(cfg, seeds):
    from .diagnostics import stretch_supremum
    from .transport import PullbackReconstructor

    field, B0 = _field_and_b0(cfg)
    rec = PullbackReconstructor(B0, field, _paths(cfg, seeds), cfg.get("sigma", 0.0))
    reps = stretch_supremum(rec, cfg["T"], (cfg["r_min"], cfg["r_max"]), cfg["n_r"], cfg["n_theta"])
    return [r.sup_B for r in reps]


def metric_arc_length(cfg, seeds):
    from .diagnostics import evolve_line

    field, _ = _field_and_b0(cfg)
    out = []
    for s in seeds:
        lines = evolve_line(field, cfg.get("sigma", 0.0), int(s), cfg.get("snapshots", (cfg["T"],)),
                            (cfg.get("line_from", (-1.0, 0.0, 0.0)), cfg.get("line_to", (1.0, 0.0, 0.0))),
                            cfg.get("refine_len", 0.02), vertex_budget=cfg.get("vertex_budget", 4000),
                            dt=cfg["dt"])
        out.append(lines[-1].arc_length)
    return out


def metric_weak_residual(cfg, seeds):
    from .diagnostics import GaussianBump, weak_form_residual
    from .flow import sample_brownian

    field, B0 = _field_and_b0(cfg)
    phi = GaussianBump(tuple(cfg.get("phi_center", (0.5, 0.0, 0.0))), cfg.get("phi_width", 0.1))
    n = int(round(cfg["T"] / cfg["dt"]))
    return [weak_form_residual(B0, field, sample_brownian(int(s), cfg["dt"], n), cfg.get("sigma", 0.0),
                               cfg["T"], phi).scaled for s in seeds]


METRICS = {
    "stretch_supremum": metric_stretch_supremum,
    "arc_length": metric_arc_length,
    "weak_residual": metric_weak_residual,
}


def _run_chunk(metric, cfg, start, seeds):
    """Evaluate one chunk; on failure fall back to one replicate at a time."""
    fn = METRICS[metric]
    try:
        return [(start + k, float(v), None) for k, v in enumerate(fn(cfg, seeds))]
    except (StretchlabError, FloatingPointError, ValueError) as exc:
        if len(seeds) == 1:
            return [(start, math.nan, f"{type(exc).__name__}: {exc}")]
    out = []
    for k, s in enumerate(seeds):
        out.extend(_run_chunk(metric, cfg, start + k, [s]))
    return out


def run_ensemble(spec: EnsembleSpec, metric: str, max_fail_fraction=0.1) -> EnsembleStats:
    """Run ``metric`` over all replicates and summarise.

    Chunks have a fixed layout and their results are folded in index order, so
    ``parallelism`` only changes wall time.
    """
    if metric not in METRICS:
        raise KeyError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")
    seeds = spec.seeds()
    chunks = [(i, seeds[i:i + spec.chunk_size]) for i in range(0, len(seeds), spec.chunk_size)]
    cfg = dict(spec.config)
    if spec.parallelism > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=spec.parallelism) as pool:
            parts = list(pool.map(_run_chunk, [metric] * len(chunks), [cfg] * len(chunks),
                                  [c[0] for c in chunks], [c[1] for c in chunks]))
    else:
        parts = [_run_chunk(metric, cfg, i, s) for i, s in chunks]
    rows = sorted(r for part in parts for r in part)
    values = np.array([r[1] for r in rows])
    failures = [(i, seeds[i], err) for i, _, err in rows if err is not None]
    if len(failures) > max_fail_fraction * spec.n_replicates:
        raise EnsembleFailure(f"{len(failures)} of {spec.n_replicates} replicates failed; first: {failures[0][2]}")
    return EnsembleStats.from_values(values, seeds, failures, cfg)


def suppression_ratio(deterministic, ensemble: EnsembleStats) -> float:
    """Deterministic grid supremum over the ensemble median supremum."""
    det = getattr(deterministic, "sup_B", deterministic)
    return float(det) / ensemble.median
