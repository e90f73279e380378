import math

import numpy as np
import pytest

from scramble_swap.dicke import DickeParams, clear_cache
from scramble_swap.ensembles import FockWindow, Seed
from scramble_swap.experiments import (ReversalProbe, ScanConfig, ScanResult, ScanRow, batch_means_se,
                                       cell_statistics, default_eps_axis, dimension_bound_check, find_transient,
                                       haar_benchmark, haar_exact, haar_theory, phase_scan, reversal_scan,
                                       sample_state_pairs, time_trace, tolerance_half_width, transient_map)

SMALL = DickeParams(2, 1.0, 2.0, 3.0)


def test_scan_config_validation():
    with pytest.raises(ValueError):
        ScanConfig((), (1.0,))
    with pytest.raises(ValueError):
        ScanConfig((1.0,), (1.0,), (5.0, 1.0, 3))
    with pytest.raises(ValueError):
        ScanConfig((1.0,), (1.0,), fidelity_metric="trace")
    cfg = ScanConfig.stepped(0.4, 3.78, 22.0, 0.15)
    t = cfg.times()
    assert t[0] == 0 and t[-1] == pytest.approx(21.9) and len(t) == 147
    assert np.allclose(np.diff(t), 0.15)
    assert np.any(np.isclose(t, 16.8))


def test_find_transient_examples():
    flat = [(0.15 * i, 0.95, 0.0) for i in range(10)]
    assert find_transient(flat).t_star == 0.0
    low = [(0.15 * i, 0.5, 0.1) for i in range(10)]
    assert find_transient(low).t_star is None
    mixed = [(0, 0.95), (1, 0.91), (2, 0.5), (3, 0.92), (4, 0.93), (5, 0.9), (6, 0.2)]
    r = find_transient(mixed, 0.9, 3)
    assert r.t_star == 3 and r.sustain_count == 3
    with pytest.raises(ValueError):
        find_transient([])
    with pytest.raises(ValueError):
        find_transient([(1, 0.9), (0, 0.9)])


def test_decoupled_scan_has_no_swap_and_no_entanglement():
    base = DickeParams(2, 1.0, 2.0, 3.0, g=0.0)
    cfg = ScanConfig((0.5, 1.0), (1.0, 2.0), (0.0, 30.0, 7), n_states=12, seed=Seed(4))
    res = phase_scan(cfg, base)
    psis, chis = sample_state_pairs(3, 12, Seed(4))
    m = np.arange(3) - 1.0
    assert len(res.rows) == 4
    for row in res.rows:
        # decoupled legs only rotate A and C locally: no swap, output psi(t) (x) chi(-t)
        rot = np.exp(-1j * row.omega_z * np.outer(cfg.times(), m))
        ov = np.abs(np.einsum("sa,ta,sa->ts", chis.conj(), rot, psis)) ** 4
        assert row.s2_mean == pytest.approx(0, abs=1e-12)
        assert row.f_mean == pytest.approx(ov.mean(), abs=1e-10)
        assert row.p_mean == pytest.approx(1, abs=1e-10)


def test_scan_reproducible_and_parallel_safe():
    cfg = ScanConfig((0.8, 1.2), (1.5,), (0.0, 12.0, 5), n_states=6, seed=Seed(5))
    a = phase_scan(cfg, SMALL)
    clear_cache()
    b = phase_scan(cfg, SMALL, jobs=2)
    assert a.rows == b.rows
    assert all(math.isfinite(r.f_mean) and math.isfinite(r.s2_mean) for r in a.rows)
    assert a.metadata["seed"] == 5


def test_trace_starts_at_no_swap_value():
    cfg = ScanConfig.stepped(1.0, 2.0, 3.0, 0.5, n_states=10, seed=Seed(6))
    tr = time_trace(SMALL, cfg)
    psis, chis = sample_state_pairs(3, 10, Seed(6))
    assert tr[0][1] == pytest.approx(np.mean(np.abs(np.sum(psis.conj() * chis, axis=1)) ** 4), abs=1e-12)
    assert tr[0][3] == pytest.approx(1, abs=1e-12)
    assert all(r[2] >= 0 for r in tr)


def test_uhlmann_metric_matches_eq5_for_pure_states():
    psis, chis = sample_state_pairs(3, 4, Seed(7))
    a = cell_statistics(SMALL, [0.0, 2.5], psis, chis, purities=False)
    b = cell_statistics(SMALL, [0.0, 2.5], psis, chis, metric="uhlmann_vs_swapped", purities=False)
    assert np.allclose(a["f"], b["f"], atol=1e-9)


def test_transient_map_with_zero_cap():
    cfg = ScanConfig((0.5, 1.0), (2.0,), (0.0, 3.0, 11), n_states=4)
    rows = transient_map(cfg, SMALL, t_cap=0.0)
    assert [r[2] for r in rows] == [None, None]


def test_reversal_baseline_bit_exact():
    probe = ReversalProbe(SMALL, 3.0, n_states=8, seed=Seed(8))
    rows = reversal_scan(SMALL, 3.0, [(0.0, 0.0), (0.01, 0.0)], probe=probe)
    assert rows[0][2] == probe.f0
    again = reversal_scan(SMALL, 3.0, [(0.0, 0.0), (0.01, 0.0)], n_states=8, seed=Seed(8))
    assert again == rows
    assert default_eps_axis()[0] == pytest.approx(1e-6) and len(default_eps_axis()) == 21


class _FakeProbe:
    """ratio(e) = 1 / (1 + (e/a)^2), which falls to 0.9 at e = a/3."""

    def __init__(self, a_plus, a_minus):
        self.a = (a_plus, a_minus)
        self.f0, self.t, self.calls = 0.8, 1.0, 0

    @property
    def evaluations(self):
        return self.calls

    def __call__(self, fd, fz=0.0):
        self.calls += 1
        e = fd if fd else fz
        a = self.a[0] if e >= 0 else self.a[1]
        return self.f0 / (1 + (e / a) ** 2)


def test_half_width_search():
    probe = _FakeProbe(3e-3, 6e-3)
    hw = tolerance_half_width(probe, "delta", start=1e-4, tol=1e-4, max_evals=12)
    assert hw["plus"] == pytest.approx(1e-3, rel=0.02)
    assert hw["minus"] == pytest.approx(2e-3, rel=0.02)
    assert hw["half_width"] == pytest.approx(1.5e-3, rel=0.02)
    hwz = tolerance_half_width(_FakeProbe(3e-5, 3e-5), "z", start=1e-4, tol=1e-4, max_evals=12)
    assert hwz["plus"] == pytest.approx(1e-5, rel=0.02)
    with pytest.raises(ValueError):
        tolerance_half_width(probe, "x")


def test_batch_means():
    x = np.random.default_rng(0).normal(size=10000)
    assert batch_means_se(x) == pytest.approx(0.01, rel=0.4)


def test_haar_formulas():
    assert haar_theory(2, 64) == pytest.approx((0.9412, 0.2656), abs=1e-4)
    # one-dimensional A: the protocol is trivial
    assert haar_exact(1, 7) == pytest.approx((1.0, 1.0))
    # exact E[p] approaches the leading-order value for large d_B
    assert haar_exact(2, 4096)[0] == pytest.approx(haar_theory(2, 4096)[1], rel=1e-3)


def test_haar_benchmark_examples():
    with pytest.raises(ValueError):
        haar_benchmark(2, [8], 50, Seed(1))
    rows = haar_benchmark(2, [2, 8, 32, 128], 300, Seed(9))
    f = [r["f_mc"] for r in rows]
    assert all(a < b for a, b in zip(f, f[1:]))
    assert rows[0]["f_mc"] <= 0.8
    for r in rows:
        assert abs(r["p_mc"] - r["p_exact"]) <= 3 * r["p_se"] + 1e-3
    wide = haar_benchmark(16, [2], 500, Seed(10))[0]
    assert abs(wide["p_mc"] - 0.5) <= 3 * wide["p_se"]


def test_dimension_bound_examples():
    r = dimension_bound_check(2, 1, 20, 1000, Seed(11))
    assert r["bound"] == pytest.approx(math.sqrt(0.4))
    assert r["min_f"] <= r["bound"] + 0.02
    assert r["ratio_check"] and np.all(r["ratio_exact"] <= r["ratio_bound"] + 1e-12)
    r = dimension_bound_check(2, 2, 10, 10000, Seed(12))
    assert np.all(r["ratio_mc"] <= 0.6 + 3 * r["ratio_se"])
    with pytest.raises(ValueError):
        dimension_bound_check(0, 1, 1, 1, Seed(1))
