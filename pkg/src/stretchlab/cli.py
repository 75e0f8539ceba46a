"""Command-line driver: ``simulate <config> [--out DIR] [--seed N] [--replicates N] [--dt X]``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import Scenario, from_dict, help_text, parse_scenario, parse_text
from .diagnostics import (
    GaussianBump,
    evolve_line,
    fit_blowup_exponent,
    martingale_check,
    stretch_supremum,
    weak_form_residual,
)
from .errors import ConfigError, InsufficientSpanError, OutOfDomainError, StretchlabError, UnknownPresetError
from .exact import blowup_envelope, exact_B_cartesian
from .fields import preset_initial_field, velocity_field
from .flow import integrate_flow, sample_brownian, zero_path
from .geometry import vector_to_cylindrical
from .montecarlo import EnsembleSpec, metric_stretch_supremum, run_ensemble, split_seed, suppression_ratio
from .output import CSV_COLUMNS, CSV_SCHEMA_VERSION, emit_svg, write_csv, write_json
from .transport import PullbackReconstructor, annulus_grid, reconstruct_grid

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
PRESETS = ("fig1", "fig2", "fig3", "fig4")
N_TRAJECTORY_POINTS = 12


def _path(s: Scenario, seed=None):
    seed = s.seed if seed is None else seed
    return sample_brownian(seed, s.dt, s.n_steps) if s.sigma != 0 else zero_path(s.dt, s.n_steps)


def _field(s):
    return velocity_field(s.field, s.alpha, s.gamma)


def _metric_config(s: Scenario, **kw):
    cfg = s.to_dict()
    cfg.update(kw)
    return cfg


def _trajectories(s):
    x0 = np.zeros((N_TRAJECTORY_POINTS, 3))
    x0[:, 0] = np.arange(1, N_TRAJECTORY_POINTS + 1) / N_TRAJECTORY_POINTS
    stride = max(1, s.n_steps // 1000)
    save = sorted(set(range(0, s.n_steps + 1, stride)) | {s.n_steps})
    fs = integrate_flow(_field(s), x0, _path(s), s.sigma, save=save)
    rows = [(p, t, *fs.trajectory[k, p]) for p in range(len(x0)) for k, t in enumerate(fs.times)]
    radii = np.hypot(fs.trajectory[..., 0], fs.trajectory[..., 1])
    summary = {
        "start_points": x0,
        "radius_drift_max": float(np.abs(radii - radii[0]).max()),
        "final_positions": fs.trajectory[-1],
    }
    geometry = [fs.trajectory[:, p] for p in range(len(x0))]
    return rows, summary, geometry


def _line(s):
    lines = evolve_line(_field(s), s.sigma, s.seed, s.snapshot_times, (s.line_from, s.line_to), s.refine_len,
                        vertex_budget=s.vertex_budget, dt=s.dt, on_budget="stop")
    rows = [(pl.t, i, *v) for pl in lines for i, v in enumerate(pl.vertices)]
    summary = {
        "snapshots": [pl.t for pl in lines],
        "arc_length": [pl.arc_length for pl in lines],
        "n_vertices": len(lines[0].vertices),
        "budget_exhausted": not lines[0].complete,
    }
    return rows, summary, [np.asarray([s.line_from, s.line_to])] + [pl.vertices for pl in lines]


def _blowup_scan(s):
    field, B0 = _field(s), preset_initial_field(s.initial_field)
    rep = stretch_supremum(PullbackReconstructor(B0, field, _path(s), s.sigma), s.T, (s.r_min, s.r_max), s.n_r, s.n_theta)
    pts = annulus_grid(s.r_min, s.r_max, s.n_r, s.n_theta)
    br0 = np.abs(vector_to_cylindrical(pts, B0(pts)).r_comp).reshape(s.n_r, -1).max(axis=1)
    env = blowup_envelope(s.alpha, s.T, rep.radii, br0)
    rows = [(r, b, e, int(k)) for r, b, e, k in zip(rep.radii, rep.profile_B, env, rep.skipped_per_r)]
    summary = {"sup_B": rep.sup_B, "sup_B_theta": rep.sup_B_theta, "argmax": rep.argmax, "n_skipped": rep.n_skipped}
    try:
        slope, r2 = fit_blowup_exponent(rep.radii, rep.profile_B_theta)
        summary.update(slope=slope, r2=r2, predicted_slope=s.alpha - 1.0)
    except (InsufficientSpanError, ValueError) as exc:
        summary.update(slope=None, r2=None, fit_error=str(exc))
    return rows, summary, None


def _reconstruct(s):
    field, B0 = _field(s), preset_initial_field(s.initial_field)
    pts = annulus_grid(s.r_min, s.r_max, s.n_r, s.n_theta, log=False)
    rec = reconstruct_grid(B0, field, _path(s), s.sigma, s.T, pts)
    exact = np.full_like(rec.B, np.nan)
    summary = {"n_points": len(pts), "n_skipped": rec.n_skipped, "det_residual_max": float(np.nanmax(rec.det_residual))}
    if s.field == "holder" and s.sigma == 0 and s.r_max < 1.0:
        try:
            exact = exact_B_cartesian(s.alpha, B0, s.T, pts)
            ok = ~rec.skipped
            err = np.linalg.norm(rec.B[ok] - exact[ok], axis=-1) / np.linalg.norm(exact[ok], axis=-1)
            summary["max_relative_error_vs_exact"] = float(err.max())
        except OutOfDomainError:
            pass
    rows = [(*p, *b, bool(k), *e) for p, b, k, e in zip(pts, rec.B, rec.skipped, exact)]
    return rows, summary, None


def _weakcheck(s):
    field, B0 = _field(s), preset_initial_field(s.initial_field)
    phi = GaussianBump(s.phi_center, s.phi_width)
    seeds = [s.seed] if s.sigma == 0 else [split_seed(s.seed, i) for i in range(s.replicates)]
    res = [weak_form_residual(B0, field, _path(s, sd), s.sigma, s.T, phi) for sd in seeds]
    rows = [(i, sd, r.scaled) for i, (sd, r) in enumerate(zip(seeds, res))]
    summary = {"scaled_residuals": [r.scaled for r in res], "n_nodes": res[0].n_points}
    if s.sigma != 0:
        mc = martingale_check([r.scaled for r in res])
        summary.update(mean=mc.mean, std_error=mc.std_error, within_2se=mc.within(2.0))
    return rows, summary, None


def _ensemble(s):
    spec = EnsembleSpec(_metric_config(s), s.replicates, s.seed)
    stats = run_ensemble(spec, "stretch_supremum")
    rows = [(i, sd, v) for i, (sd, v) in enumerate(zip(stats.seeds, stats.values))]
    summary = {"stats": stats.to_record()}
    summary["stats"].pop("config")
    if s.field == "holder":
        det = metric_stretch_supremum(_metric_config(s, sigma=0.0), [0])[0]
        summary.update(deterministic_sup_B=det, suppression_ratio=suppression_ratio(det, stats))
    return rows, summary, None


EXPERIMENT_RUNNERS = {
    "trajectories": _trajectories,
    "line": _line,
    "blowup_scan": _blowup_scan,
    "reconstruct": _reconstruct,
    "weakcheck": _weakcheck,
    "ensemble": _ensemble,
}


def run(scenario: Scenario, out_dir) -> dict:
    """Run one scenario and write ``<name>.csv``, ``<name>.json`` and possibly ``<name>.svg``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, summary, geometry = EXPERIMENT_RUNNERS[scenario.experiment](scenario)
    cols = CSV_COLUMNS[scenario.experiment]
    files = {"csv": write_csv(out / f"{scenario.name}.csv", cols, rows)}
    if geometry is not None:
        files["svg"] = emit_svg(geometry, out / f"{scenario.name}.svg", {"title": scenario.name})
    record = {
        "name": scenario.name,
        "experiment": scenario.experiment,
        "config": scenario.to_dict(),
        "version": __version__,
        "csv": files["csv"].name,
        "csv_columns": list(cols),
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "results": summary,
    }
    files["json"] = write_json(out / f"{scenario.name}.json", record)
    return {"files": {k: str(v) for k, v in files.items()}, "summary": summary}


def preset_text(name) -> str:
    return resources.files("stretchlab").joinpath("scenarios", f"{name}.cfg").read_text()


def load_scenario(arg) -> list:
    """Resolve a config file, a JSON summary (replay), a preset name or ``fig-suite``."""
    p = Path(arg)
    if p.is_file():
        if p.suffix == ".json":
            return [from_dict(json.loads(p.read_text())["config"], name=p.stem)]
        return [parse_scenario(p)]
    if arg == "fig-suite":
        return [parse_text(preset_text(n), name=n) for n in PRESETS]
    if arg in PRESETS:
        return [parse_text(preset_text(arg), name=arg)]
    raise FileNotFoundError(f"no config file or preset named {arg!r}")


def build_parser():
    p = argparse.ArgumentParser(
        prog="simulate",
        description="Lagrangian simulation of passive vector fields stretched by a rough rotation, with or without transport noise.",
        epilog=help_text() + "\n\npresets: " + ", ".join(PRESETS) + ", fig-suite",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("config", help="config file, JSON summary to replay, preset name, or fig-suite")
    p.add_argument("--out", default=os.environ.get("STRETCHLAB_OUT", "stretchlab_out"),
                   help="output directory (default: $STRETCHLAB_OUT or ./stretchlab_out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--dt", type=float)
    return p


def _fail(out, code, exc):
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    try:
        Path(out).mkdir(parents=True, exist_ok=True)
        write_json(Path(out) / "error.json", record)
    except OSError:
        pass
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenarios = [s.with_overrides(seed=args.seed, replicates=args.replicates, dt=args.dt)
                     for s in load_scenario(args.config)]
    except (ConfigError, UnknownPresetError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        return _fail(args.out, EXIT_CONFIG, exc)
    try:
        for s in scenarios:
            res = run(s, args.out)
            print(json.dumps({"scenario": s.name, "files": res["files"]}))
    except (StretchlabError, FloatingPointError) as exc:
        return _fail(args.out, EXIT_NUMERIC, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
