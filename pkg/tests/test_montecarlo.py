import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stretchlab import montecarlo
from stretchlab.errors import EnsembleFailure, StretchlabError
from stretchlab.montecarlo import (
    METRICS,
    EnsembleSpec,
    EnsembleStats,
    metric_stretch_supremum,
    run_ensemble,
    split_seed,
    suppression_ratio,
)

SMALL = dict(field="holder", alpha=0.5, gamma=4.0, initial_field="constant_ex", sigma=0.1,
             T=0.1, dt=1e-2, r_min=1e-2, r_max=1e-1, n_r=3, n_theta=4)


def test_split_seed_injective_on_a_million_indices():
    idx = np.arange(1_000_000, dtype=np.uint64)
    s = split_seed(12345, idx)
    assert np.unique(s).size == idx.size


def test_split_seed_scalar_matches_vector():
    v = split_seed(7, np.arange(5))
    assert [int(x) for x in v] == [split_seed(7, i) for i in range(5)]
    assert split_seed(7, 0) != split_seed(8, 0)


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_split_seed_distinct_indices(base, i, j):
    if i != j:
        assert split_seed(base, i) != split_seed(base, j)
    assert 0 <= split_seed(base, i) < 2**64


def test_single_replicate_equals_direct_run():
    stats = run_ensemble(EnsembleSpec(SMALL, 1, base_seed=3), "stretch_supremum")
    direct = metric_stretch_supremum(SMALL, [split_seed(3, 0)])[0]
    assert stats.values.tolist() == [direct]
    assert stats.seeds == [split_seed(3, 0)]


def test_parallel_schedule_does_not_change_results():
    a = run_ensemble(EnsembleSpec(SMALL, 6, 1, parallelism=1, chunk_size=2), "stretch_supremum")
    b = run_ensemble(EnsembleSpec(SMALL, 6, 1, parallelism=8, chunk_size=2), "stretch_supremum")
    assert a.to_record() == b.to_record()
    assert np.array_equal(a.values, b.values)


def test_chunking_does_not_change_values():
    a = run_ensemble(EnsembleSpec(SMALL, 5, 2, chunk_size=1), "stretch_supremum")
    b = run_ensemble(EnsembleSpec(SMALL, 5, 2, chunk_size=32), "stretch_supremum")
    assert np.array_equal(a.values, b.values)


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40), st.randoms())
def test_stats_invariant_under_reordering(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    a, b = EnsembleStats.from_values(values), EnsembleStats.from_values(shuffled)
    assert a.quantiles == b.quantiles and a.mean == b.mean and a.std_error == b.std_error


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
def test_quantiles_monotone(values):
    q = list(EnsembleStats.from_values(values).quantiles.values())
    assert all(x <= y for x, y in zip(q, q[1:]))


def test_stats_recomputable_from_values():
    stats = run_ensemble(EnsembleSpec(SMALL, 4, 5), "stretch_supremum")
    again = EnsembleStats.from_values(stats.values)
    assert again.quantiles == stats.quantiles and again.mean == stats.mean


def test_record_carries_config_and_seeds():
    rec = run_ensemble(EnsembleSpec(SMALL, 3, 9), "stretch_supremum").to_record()
    assert rec["config"] == SMALL and rec["n_replicates"] == 3
    lo, hi = rec["median_ci95"]
    assert lo <= rec["quantiles"]["0.5"] <= hi


def _flaky(cfg, seeds):
    out = []
    for s in seeds:
        if s % cfg["every"] == 0:
            raise StretchlabError("synthetic failure")
        out.append(float(s % 1000))
    return out


def test_failures_recorded_and_threshold(monkeypatch):
    monkeypatch.setitem(METRICS, "flaky", _flaky)
    seeds = [split_seed(0, i) for i in range(40)]
    every = next(k for k in range(2, 50) if 0 < sum(s % k == 0 for s in seeds) <= 4)
    stats = run_ensemble(EnsembleSpec({"every": every}, 40, 0, chunk_size=8), "flaky")
    n_fail = sum(s % every == 0 for s in seeds)
    assert len(stats.failures) == n_fail
    assert all(isinstance(f[1], int) and "synthetic" in f[2] for f in stats.failures)
    assert np.isnan(stats.values).sum() == n_fail
    with pytest.raises(EnsembleFailure):
        run_ensemble(EnsembleSpec({"every": 2}, 40, 0), "flaky")


def test_unknown_metric():
    with pytest.raises(KeyError):
        run_ensemble(EnsembleSpec(SMALL, 1), "nope")
    with pytest.raises(ValueError):
        EnsembleSpec(SMALL, 0)


def test_other_metrics_run():
    line = dict(SMALL, alpha=0.2, T=0.25, dt=1e-2, snapshots=(0.25,))
    arc = run_ensemble(EnsembleSpec(line, 2), "arc_length")
    assert np.all(arc.values > 2.0)
    weak = dict(SMALL, T=0.1, dt=1e-2)
    res = run_ensemble(EnsembleSpec(weak, 2), "weak_residual")
    assert np.all(np.isfinite(res.values))


def test_suppression_ratio_degenerate_noise():
    det = dict(SMALL, sigma=0.0)
    stats = run_ensemble(EnsembleSpec(det, 4), "stretch_supremum")
    assert suppression_ratio(metric_stretch_supremum(det, [0])[0], stats) == 1.0


def test_suppression_ratio_rigid_rotation():
    rigid = dict(SMALL, alpha=1.0)
    stats = run_ensemble(EnsembleSpec(rigid, 4), "stretch_supremum")
    det = metric_stretch_supremum(dict(rigid, sigma=0.0), [0])[0]
    # the noisy runs carry the O(dt) determinant error of the Euler-Maruyama step
    assert suppression_ratio(det, stats) == pytest.approx(1.0, abs=rigid["dt"])


def test_suppression_ratio_grows_as_annulus_reaches_axis():
    base = dict(SMALL, alpha=0.2, T=1.0, dt=1e-3, n_r=4, n_theta=8)
    ratios = []
    for r_min in (1e-2, 3e-3, 1e-3):
        cfg = dict(base, r_min=r_min)
        det = metric_stretch_supremum(dict(cfg, sigma=0.0), [0])[0]
        ratios.append(suppression_ratio(det, run_ensemble(EnsembleSpec(cfg, 8), "stretch_supremum")))
    assert ratios[0] <= ratios[1] <= ratios[2]
    assert math.isfinite(ratios[-1])
