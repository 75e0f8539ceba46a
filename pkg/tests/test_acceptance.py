"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line with its measured figure and runtime.
Run with ``pytest tests/test_acceptance.py -v -s`` (lines are printed even
without ``-s``).
"""
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from stretchlab import cli
from stretchlab.diagnostics import (
    GaussianBump,
    evolve_line,
    fit_blowup_exponent,
    martingale_check,
    stretch_supremum,
    weak_form_residual,
)
from stretchlab.exact import blowup_envelope, exact_B_cartesian
from stretchlab.fields import HolderRotationField, preset_initial_field
from stretchlab.flow import flow_jacobian, sample_brownian, stack_paths, zero_path
from stretchlab.geometry import det3
from stretchlab.montecarlo import EnsembleSpec, metric_stretch_supremum, run_ensemble, split_seed, suppression_ratio
from stretchlab.transport import PullbackReconstructor, annulus_grid, pullback_at

EX = preset_initial_field("constant_ex")
TESTS = Path(__file__).parent


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail, elapsed, limit):
        ok = bool(ok) and elapsed <= limit
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail} (runtime {elapsed:.1f} s, limit {limit} s)")
        return ok

    return report


def test_criterion_1_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    pts = annulus_grid(0.2, 0.9, 10, 16, log=False)
    errs = {}
    for alpha in (0.2, 0.5, 0.8):
        B = pullback_at(EX, HolderRotationField(alpha), zero_path(1e-4, 10000), 0.0, 1.0, pts)
        ex = exact_B_cartesian(alpha, EX, 1.0, pts)
        errs[alpha] = float((np.linalg.norm(B - ex, axis=-1) / np.linalg.norm(ex, axis=-1)).max())
    el = time.perf_counter() - t0
    detail = "max relative error " + ", ".join(f"alpha={a}: {e:.2e}" for a, e in errs.items()) + " (tol 1e-3)"
    assert verdict(1, max(errs.values()) <= 1e-3, detail, el, 60)


def test_criterion_2_blowup_exponent(verdict):
    t0 = time.perf_counter()
    slopes = {}
    for alpha in (0.2, 0.5):
        rec = PullbackReconstructor(EX, HolderRotationField(alpha), zero_path(1e-4, 10000), 0.0)
        rep = stretch_supremum(rec, 1.0, (1e-3, 1e-1), 9, 16)
        slopes[alpha] = fit_blowup_exponent(rep.radii, rep.profile_B_theta)
    el = time.perf_counter() - t0
    ok = all(abs(s - (a - 1.0)) <= 0.05 for a, (s, _) in slopes.items())
    detail = "fitted slope " + ", ".join(f"alpha={a}: {s:.4f} (want {a - 1:.1f}, r2 {r2:.4f})"
                                         for a, (s, r2) in slopes.items())
    assert verdict(2, ok, detail, el, 120)


def test_criterion_3_noise_suppression(verdict):
    t0 = time.perf_counter()
    cfg = dict(field="holder", alpha=0.2, gamma=4.0, initial_field="constant_ex", sigma=0.1, T=1.0, dt=1e-4,
               r_min=1e-4, r_max=1e-1, n_r=7, n_theta=8)
    det = metric_stretch_supremum(dict(cfg, sigma=0.0), [0])[0]
    stats = run_ensemble(EnsembleSpec(cfg, 256, base_seed=0, chunk_size=32), "stretch_supremum")
    ratio = suppression_ratio(det, stats)
    lo, hi = stats.median_ci()
    el = time.perf_counter() - t0
    env = blowup_envelope(0.2, 1.0, 1e-4, 1.0)
    detail = (f"deterministic grid sup {det:.1f} (envelope {env:.1f}, need >= 1e3); 256-replicate median "
              f"{stats.median:.2f} [95% CI {lo:.2f}, {hi:.2f}], failures {len(stats.failures)}; ratio {ratio:.1f} (need >= 20)")
    assert verdict(3, det >= 1e3 and np.isfinite(stats.median) and ratio >= 20, detail, el, 600)


def _random_points(rng, n):
    r = rng.uniform(0.05, 2.0, n)
    th = rng.uniform(0.0, 2 * np.pi, n)
    return np.stack([r * np.cos(th), r * np.sin(th), rng.uniform(-1.0, 1.0, n)], -1)


def test_criterion_4_measure_preservation(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    x0 = _random_points(rng, 100)[:, None, :]
    seeds = [split_seed(4, i) for i in range(100)]
    field = HolderRotationField(0.5)
    worst = {}
    for sigma in (0.0, 0.1):
        path = stack_paths([sample_brownian(s, 1e-4, 10000) for s in seeds]) if sigma else zero_path(1e-4, 10000)
        for method in ("variational", "finite_difference"):
            J = flow_jacobian(field, x0, path, sigma, method, save="end")[-1]
            worst[(sigma, method)] = float(np.abs(det3(J) - 1.0).max())
    el = time.perf_counter() - t0
    detail = "max |det-1| at alpha=0.5: " + ", ".join(f"sigma={s} {m}: {v:.2e}" for (s, m), v in worst.items())
    assert verdict(4, max(worst.values()) <= 1e-3, detail + " (tol 1e-3)", el, 60)


def test_criterion_5_weak_form(verdict):
    t0 = time.perf_counter()
    field, phi = HolderRotationField(0.5), GaussianBump((0.5, 0.0, 0.0), 0.1)
    det = weak_form_residual(EX, field, zero_path(1e-4, 5000), 0.0, 0.5, phi)
    res = [weak_form_residual(EX, field, sample_brownian(split_seed(5, i), 1e-3, 500), 0.1, 0.5, phi).scaled
           for i in range(64)]
    mc = martingale_check(res)
    el = time.perf_counter() - t0
    detail = (f"sigma=0 scaled residual {det.scaled:.2e} (tol 1e-2); sigma=0.1 mean {mc.mean:.2e}, "
              f"standard error {mc.std_error:.2e} over 64 seeds (need |mean| <= 2 SE)")
    assert verdict(5, det.scaled <= 1e-2 and mc.within(2.0), detail, el, 300)


def test_criterion_6_figures(verdict, tmp_path):
    t0 = time.perf_counter()
    assert cli.main(["fig-suite", "--out", str(tmp_path)]) == 0
    svgs = sorted(p.name for p in tmp_path.glob("*.svg"))
    fig3 = json.loads((tmp_path / "fig3.json").read_text())["results"]
    fig4 = json.loads((tmp_path / "fig4.json").read_text())["results"]
    rigid = evolve_line(HolderRotationField(1.0), 0.0, 0, (0.25, 0.5, 0.75, 1.0), dt=1e-3)
    rigid_dev = max(abs(pl.arc_length - 2.0) for pl in rigid)
    s4 = cli.load_scenario("fig4")[0]
    doubled = evolve_line(HolderRotationField(s4.alpha), s4.sigma, s4.seed, s4.snapshot_times,
                          (s4.line_from, s4.line_to), s4.refine_len / 2, max_turn=0.15,
                          vertex_budget=2 * s4.vertex_budget, dt=s4.dt)
    change = max(abs(b.arc_length / a - 1.0) for a, b in zip(fig4["arc_length"], doubled))
    el = time.perf_counter() - t0
    ok = (svgs == ["fig1.svg", "fig2.svg", "fig3.svg", "fig4.svg"] and rigid_dev <= 1e-6
          and fig3["budget_exhausted"] and not fig4["budget_exhausted"] and change <= 0.05)
    detail = (f"{len(svgs)} SVGs; alpha=1 arc length deviation {rigid_dev:.1e} (tol 1e-6); sigma=0 budget exhausted "
              f"{fig3['budget_exhausted']}; sigma=0.1 complete {not fig4['budget_exhausted']} with final arc length "
              f"{fig4['arc_length'][-1]:.4f}, relative change under doubling {change:.2e} (tol 5e-2)")
    assert verdict(6, ok, detail, el, 180)


INVARIANT_SUITE = [
    "test_geometry.py::test_adjugate_identity_1000_random",
    "test_geometry.py::test_adjugate_is_inverse_times_det",
    "test_geometry.py::test_round_trips_1000_points",
    "test_geometry.py::test_vector_round_trip_property",
    "test_fields.py::test_numerical_divergence_smooth_fields",
    "test_fields.py::test_rough_velocity_divergence_vanishes_at_second_order",
    "test_fields.py::test_jacobian_trace_zero",
    "test_exact.py::test_envelope_scale_covariance",
    "test_flow.py::test_increment_moments",
    "test_flow.py::test_endpoint_variance_across_seeds",
    "test_flow.py::test_single_step_is_standard_normal",
    "test_flow.py::test_round_trip_property",
    "test_flow.py::test_adjoint_reversal_inverts_discrete_map",
    "test_transport.py::test_pushforward_pullback_consistency_100_seeds",
    "test_transport.py::test_divergence_of_reconstruction_box_grid",
    "test_diagnostics.py::test_divergence_solid_rotor",
    "test_montecarlo.py::test_split_seed_injective_on_a_million_indices",
    "test_montecarlo.py::test_split_seed_distinct_indices",
    "test_montecarlo.py::test_stats_invariant_under_reordering",
    "test_montecarlo.py::test_parallel_schedule_does_not_change_results",
    "test_config_cli.py::test_dict_round_trip",
]


def test_criterion_7_invariant_suites(verdict):
    t0 = time.perf_counter()
    ids = [str(TESTS / n) for n in INVARIANT_SUITE]
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *ids],
                          capture_output=True, text=True, cwd=TESTS.parent)
    el = time.perf_counter() - t0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    assert verdict(7, proc.returncode == 0, f"{len(ids)} invariant tests: {summary}", el, 120), proc.stdout[-3000:]
