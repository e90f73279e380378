"""Reproduction drivers: Dicke scans, traces, transients, reversal maps, Haar benchmarks.

Estimators are flat means over (state, time) pairs. The Renyi estimate
averages purity first and then takes ``-log_{d_A}``. Every driver draws its
state ensemble from ``sample_state_pairs(d_A, n, seed)``, so a single-cell
driver and a scan cell with the same seed see the same states.
"""
from __future__ import annotations

import math
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import __version__
from .dicke import DickeParams, ReversalError, leg_columns, renyi2_ensemble
from .ensembles import Seed, as_generator, haar_isometry, haar_state_vector, haar_states, haar_unitary_matrix
from .protocol import (P_FLOOR, kraus_from_columns, outcome_from_kraus, protocol_operator, pure_swap_stats,
                       swap_operator)

METRICS = ("swap_eq5", "uhlmann_vs_swapped")


@dataclass(frozen=True)
class ScanConfig:
    delta_grid: tuple[float, ...]
    omega_grid: tuple[float, ...]
    time_window: tuple[float, float, int] = (700.0, 850.0, 64)
    n_states: int = 30
    seed: Seed = Seed(1)
    fidelity_metric: str = "swap_eq5"

    def __post_init__(self):
        object.__setattr__(self, "delta_grid", tuple(float(x) for x in self.delta_grid))
        object.__setattr__(self, "omega_grid", tuple(float(x) for x in self.omega_grid))
        if not self.delta_grid or not self.omega_grid:
            raise ValueError("grids must be nonempty")
        t0, t1, n = self.time_window
        if t0 > t1 or int(n) < 1:
            raise ValueError("time window needs t_min <= t_max and at least one sample")
        object.__setattr__(self, "time_window", (float(t0), float(t1), int(n)))
        if self.n_states < 1:
            raise ValueError("n_states must be >= 1")
        if self.fidelity_metric not in METRICS:
            raise ValueError(f"fidelity_metric must be one of {METRICS}")
        if isinstance(self.seed, int):
            object.__setattr__(self, "seed", Seed(self.seed))

    def times(self) -> np.ndarray:
        t0, t1, n = self.time_window
        return np.linspace(t0, t1, n) if n > 1 else np.array([t0])

    @classmethod
    def stepped(cls, delta: float, omega_z: float, t_max: float, dt: float, **kw) -> "ScanConfig":
        """Single-cell config on the grid 0, dt, 2 dt, ... <= t_max."""
        n = int(math.floor(t_max / dt + 1e-9)) + 1
        return cls((delta,), (omega_z,), (0.0, (n - 1) * dt, n), **kw)


@dataclass(frozen=True)
class ScanRow:
    delta: float
    omega_z: float
    f_mean: float
    f_std: float
    s2_mean: float
    p_mean: float
    n_failed: int = 0


@dataclass
class ScanResult:
    rows: list[ScanRow]
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def rank_correlation(self) -> float:
        """Spearman correlation between F and S2 over cells."""
        return float(stats.spearmanr(self.column("f_mean"), self.column("s2_mean")).statistic)


@dataclass(frozen=True)
class TransientResult:
    t_star: float | None
    threshold: float
    sustain_count: int
    trace: tuple[tuple[float, float, float], ...]


def sample_state_pairs(d: int, n: int, seed: Seed | int) -> tuple[np.ndarray, np.ndarray]:
    """Independent Haar ensembles for A (sub-stream 0) and C (sub-stream 1)."""
    seed = seed if isinstance(seed, Seed) else Seed(seed)
    return haar_states(d, n, seed.child(0)), haar_states(d, n, seed.child(1))


def cell_statistics(params: DickeParams, times, psis: np.ndarray, chis: np.ndarray,
                    err: ReversalError = ReversalError(), metric: str = "swap_eq5",
                    purities: bool = True) -> dict:
    """Per (time, state) arrays ``f``, ``p`` and forward-leg spin ``purity``."""
    xf, xr = leg_columns(params, times, err)
    k = kraus_from_columns(xf, xr)
    p, f = pure_swap_stats(k, psis, chis)
    if metric == "uhlmann_vs_swapped":
        f = np.full_like(p, np.nan)
        for ti in range(k.shape[0]):
            for si in range(len(psis)):
                o = outcome_from_kraus(k[ti], psis[si], chis[si], uhlmann=True)
                f[ti, si] = np.nan if o.failed else o.f_uhlmann
    out = {"f": f, "p": p}
    if purities:
        m = np.einsum("taby,sy->tsab", xf, psis)
        rho = np.einsum("tsab,tscb->tsac", m, m.conj())
        out["purity"] = np.sum(np.abs(rho) ** 2, axis=(2, 3))
    return out


def _cell_params(base: DickeParams, delta: float, omega_z: float) -> DickeParams:
    return replace(base, delta=delta, omega_z=omega_z)


def _scan_cell(args) -> ScanRow:
    base, delta, omega, times, psis, chis, metric = args
    par = _cell_params(base, delta, omega)
    st = cell_statistics(par, times, psis, chis, metric=metric)
    f, p = st["f"], st["p"]
    ok = np.isfinite(f)
    nf = int(np.size(f) - ok.sum())
    fm = float(np.mean(f[ok])) if ok.any() else float("nan")
    fs = float(np.std(f[ok])) if ok.any() else float("nan")
    return ScanRow(delta, omega, fm, fs, renyi2_ensemble(st["purity"], par.d_A), float(np.mean(p)), nf)


def _map(fn, items, jobs: int):
    if jobs and jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def phase_scan(cfg: ScanConfig, base: DickeParams, jobs: int = 1,
               progress: Callable[[ScanRow], None] | None = None) -> ScanResult:
    """F, S2 and p per (delta, omega_z) cell, averaged over states and the time window."""
    t_start = _time.time()
    psis, chis = sample_state_pairs(base.d_A, cfg.n_states, cfg.seed)
    times = cfg.times()
    items = [(base, d, w, times, psis, chis, cfg.fidelity_metric) for d in cfg.delta_grid for w in cfg.omega_grid]
    if jobs and jobs > 1:
        rows = _map(_scan_cell, items, jobs)
    else:
        rows = []
        for it in items:
            rows.append(_scan_cell(it))
            if progress:
                progress(rows[-1])
    meta = {"seed": cfg.seed.value, "seed_path": list(cfg.seed.path), "time_window": list(cfg.time_window),
            "n_states": cfg.n_states, "metric": cfg.fidelity_metric, "N": base.N, "alpha": base.alpha,
            "window": "explicit" if base.window else f"excursion(cap={base.window_cap})",
            "code_version": __version__, "wall_time_s": _time.time() - t_start}
    return ScanResult(rows, meta)


def time_trace(base: DickeParams, cfg: ScanConfig, err: ReversalError = ReversalError()) -> list[tuple]:
    """(t, f_mean, f_std, p_mean) at each time of ``cfg`` for the single cell of ``cfg``."""
    par = _cell_params(base, cfg.delta_grid[0], cfg.omega_grid[0])
    psis, chis = sample_state_pairs(par.d_A, cfg.n_states, cfg.seed)
    times = cfg.times()
    st = cell_statistics(par, times, psis, chis, err, cfg.fidelity_metric, purities=False)
    rows = []
    for i, t in enumerate(times):
        f = st["f"][i]
        ok = np.isfinite(f)
        fm = float(np.mean(f[ok])) if ok.any() else float("nan")
        fs = float(np.std(f[ok])) if ok.any() else float("nan")
        rows.append((float(t), fm, fs, float(np.mean(st["p"][i]))))
    return rows


def find_transient(trace: Sequence[Sequence[float]], threshold: float = 0.9, sustain: int = 3) -> TransientResult:
    """Earliest time starting ``sustain`` consecutive samples with f_mean >= threshold."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    ts = [float(r[0]) for r in trace]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise ValueError("trace must be sorted by time")
    above = [r[1] >= threshold for r in trace]
    t_star = None
    for i in range(len(trace) - sustain + 1):
        if all(above[i:i + sustain]):
            t_star = ts[i]
            break
    slim = tuple((float(r[0]), float(r[1]), float(r[2]) if len(r) > 2 else 0.0) for r in trace)
    return TransientResult(t_star, threshold, sustain, slim)


def transient_map(cfg: ScanConfig, base: DickeParams, t_cap: float, threshold: float = 0.9,
                  sustain: int = 3, jobs: int = 1) -> list[tuple[float, float, float | None]]:
    """t_star per cell, searching the time grid of ``cfg`` up to ``t_cap``."""
    times = cfg.times()
    times = times[times <= t_cap + 1e-12]
    if times.size < sustain:
        return [(d, w, None) for d in cfg.delta_grid for w in cfg.omega_grid]
    rows = []
    for d in cfg.delta_grid:
        for w in cfg.omega_grid:
            one = replace(cfg, delta_grid=(d,), omega_grid=(w,),
                          time_window=(float(times[0]), float(times[-1]), int(times.size)))
            tr = find_transient(time_trace(base, one), threshold, sustain)
            rows.append((d, w, tr.t_star))
    return rows


class ReversalProbe:
    """State-averaged fidelity at a fixed time as a function of the reversal error.

    The forward leg and ensemble are computed once; each new error costs one
    eigendecomposition of the backward-leg Hamiltonian.
    """

    def __init__(self, base: DickeParams, t: float, n_states: int = 30, seed: Seed | int = 1):
        self.base = base.with_window()
        self.t = float(t)
        self.psis, self.chis = sample_state_pairs(self.base.d_A, n_states, seed)
        self._values: dict[tuple[float, float], float] = {}
        self.f0 = self(0.0, 0.0)

    @property
    def evaluations(self) -> int:
        return len(self._values)

    def __call__(self, frac_delta: float, frac_z: float = 0.0) -> float:
        key = (float(frac_delta), float(frac_z))
        if key not in self._values:
            err = ReversalError.from_fractions(self.base, *key)
            st = cell_statistics(self.base, [self.t], self.psis, self.chis, err, purities=False)
            f = st["f"]
            self._values[key] = float(np.mean(f[np.isfinite(f)]))
        return self._values[key]


def reversal_scan(base: DickeParams, t: float, eps_grid: Sequence[tuple[float, float]], n_states: int = 30,
                  seed: Seed | int = 1, probe: ReversalProbe | None = None) -> list[tuple[float, float, float]]:
    """Rows (eps_delta/delta, eps_z/omega_z, F) with the same ensemble and time as the baseline."""
    probe = probe or ReversalProbe(base, t, n_states, seed)
    return [(float(a), float(b), probe(a, b)) for a, b in eps_grid]


def default_eps_axis(n: int = 21, lo: float = 1e-6, hi: float = 1e-1) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def _crossing(ratio_fn, sign: float, start: float, level: float, tol: float, max_evals: int,
              rtol: float = 0.02) -> float:
    """Magnitude e > 0 where ratio_fn(sign * e) falls through ``level``.

    For small errors ``1 - ratio`` grows like e^2, so steps use that model
    until the crossing is bracketed, then secant steps in u = e^2.
    """
    vals: dict[float, float] = {}

    def bracket():
        below = [x for x, v in vals.items() if v <= 0]
        if not below:
            return None
        hi = min(below)
        above = [x for x, v in vals.items() if v > 0 and x < hi]
        return (max(above), hi) if above else None

    def interp(lo, hi):
        g0, g1 = vals[lo], vals[hi]
        u = lo * lo - g0 * (hi * hi - lo * lo) / (g1 - g0)
        return math.sqrt(min(max(u, lo * lo), hi * hi))

    e = start
    for _ in range(max_evals):
        ge = vals[e] = ratio_fn(sign * e) - level
        if abs(ge) < tol:
            return e
        br = bracket()
        if br:
            lo, hi = br
            if hi / lo < 1 + rtol:
                return interp(lo, hi)
            nxt = interp(lo, hi)
        else:
            drop = 1.0 - (ge + level)
            factor = math.sqrt((1 - level) / drop) if drop > 0 else 10.0
            nxt = e * min(max(factor, 0.1), 10.0)
        if nxt in vals:
            break
        e = nxt
    br = bracket()
    return interp(*br) if br else float("nan")


def tolerance_half_width(probe: ReversalProbe, axis: str = "delta", level: float = 0.9,
                         start: float = 1e-4, tol: float = 0.004, max_evals: int = 8) -> dict:
    """Half-width of the ``F >= level * F(0)`` region along one error axis.

    The crossing is located separately for negative and positive errors; the
    half-width is their mean.
    """
    if axis not in ("delta", "z"):
        raise ValueError("axis must be 'delta' or 'z'")

    def ratio(e):
        val = probe(e, 0.0) if axis == "delta" else probe(0.0, e)
        return val / probe.f0

    plus = _crossing(ratio, +1.0, start, level, tol, max_evals)
    minus = _crossing(ratio, -1.0, plus if math.isfinite(plus) else start, level, tol, max_evals)
    return {"axis": axis, "t": probe.t, "f0": probe.f0, "plus": plus, "minus": minus,
            "half_width": 0.5 * (plus + minus), "evaluations": probe.evaluations}


def batch_means_se(x: np.ndarray, batches: int = 10) -> float:
    """Standard error of the mean from ``batches`` contiguous batch means."""
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if x.size < batches:
        return float(np.std(x, ddof=1) / math.sqrt(max(x.size, 1))) if x.size > 1 else float("nan")
    m = np.array([b.mean() for b in np.array_split(x, batches)])
    return float(np.std(m, ddof=1) / math.sqrt(batches))


def haar_theory(d_A: int, d_B: int) -> tuple[float, float]:
    """(f, p) predicted for Haar scramblers."""
    return 1.0 / (1.0 + d_A ** 2 / d_B), 1.0 / d_B + 1.0 / d_A ** 2


def haar_exact(d_A: int, d_B: int) -> tuple[float, float]:
    """Exact Haar averages (E[p], E[p f_swap]) from the order-2 Weingarten sum.

    Unlike :func:`haar_theory` these carry no large-dimension approximation,
    so ``E[p f] / E[p]`` is the probability-weighted mean fidelity.
    """
    D = d_A * d_B
    p = (d_B ** 2 + d_A ** 2 * d_B) / (D * D - 1) - (d_A * d_B ** 2 + d_A * d_B) / (D * (D * D - 1))
    pf = d_B * (d_B + 1) / (D * (D + 1))
    return p, pf


def haar_draws(d_A: int, d_B: int, n_draws: int, seed: Seed | int) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw (f_swap, p) for Haar U and Haar pure inputs.

    Only the d_A columns U|a>|phi> enter the protocol; by unitary invariance
    they are a Haar isometry and are sampled as such.
    """
    rng = as_generator(seed)
    f = np.empty(n_draws)
    p = np.empty(n_draws)
    for k in range(n_draws):
        x = haar_isometry(d_A * d_B, d_A, rng).reshape(d_A, d_B, d_A)
        psi = haar_state_vector(d_A, rng)[None, :]
        chi = haar_state_vector(d_A, rng)[None, :]
        pk, fk = pure_swap_stats(kraus_from_columns(x), psi, chi)
        p[k], f[k] = pk[0], fk[0]
    return f, p


def haar_benchmark(d_A: int, d_B_list: Sequence[int], n_draws: int, seed: Seed | int) -> list[dict]:
    """Monte-Carlo f and p against the Haar predictions, one row per d_B."""
    if n_draws < 100:
        raise ValueError("n_draws must be >= 100")
    seed = seed if isinstance(seed, Seed) else Seed(seed)
    rows = []
    for i, d_b in enumerate(d_B_list):
        f, p = haar_draws(d_A, int(d_b), n_draws, seed.child(int(d_A), i))
        ft, pt = haar_theory(d_A, int(d_b))
        ok = np.isfinite(f)
        rows.append({"d_B": int(d_b), "f_mc": float(f[ok].mean()), "f_se": batch_means_se(f),
                     "f_theory": ft, "p_mc": float(p.mean()), "p_se": batch_means_se(p), "p_theory": pt,
                     "p_exact": haar_exact(d_A, int(d_b))[0],
                     "n_failed": int((~ok).sum())})
    return rows


def dimension_bound_check(d: int, m: int, n_unitary_pairs: int, n_states_per_pair: int,
                          seed: Seed | int) -> dict:
    """Compare sampled F(Psi) = |<Psi|S K|Psi>| / sqrt(<Psi|K^dag K|Psi>) with sqrt((m+1)/(d^2+1)).

    K = <phi| W_CB U_AB |phi> for independent Haar U, W and Haar phi. Also
    returns, per pair, the Monte-Carlo ratio E|<S K>|^2 / E<K^dag K> with its
    standard error and the exact Haar-state value of that ratio.
    """
    if d < 1 or m < 1:
        raise ValueError("d and m must be >= 1")
    seed = seed if isinstance(seed, Seed) else Seed(seed)
    rng = seed.generator()
    bound2 = (m + 1) / (d * d + 1)
    s = swap_operator(d)
    min_f = math.inf
    ratios, ses, exact = [], [], []
    n_valid = 0
    for _ in range(n_unitary_pairs):
        u = haar_unitary_matrix(d * m, rng)
        w = haar_unitary_matrix(d * m, rng)
        phi = haar_state_vector(m, rng)
        k = protocol_operator(u, phi, w)
        mm = s @ k
        kk = k.conj().T @ k
        psi = haar_states(d * d, n_states_per_pair, rng)
        num = np.abs(np.einsum("si,ij,sj->s", psi.conj(), mm, psi)) ** 2
        den = np.einsum("si,ij,sj->s", psi.conj(), kk, psi).real
        ok = den > P_FLOOR
        if ok.any():
            n_valid += 1
            min_f = min(min_f, float(np.min(np.sqrt(num[ok] / den[ok]))))
        r = num.mean() / den.mean()
        # delta-method standard error of a ratio of means
        cov = np.cov(np.vstack([num, den]))
        var = (cov[0, 0] - 2 * r * cov[0, 1] + r * r * cov[1, 1]) / (den.mean() ** 2 * len(num))
        ratios.append(float(r))
        ses.append(float(math.sqrt(max(var, 0.0))))
        tk = np.trace(kk).real
        exact.append(float((tk + abs(np.trace(mm)) ** 2) / ((d * d + 1) * tk)))
    ratios, ses, exact = np.array(ratios), np.array(ses), np.array(exact)
    return {"d": d, "m": m, "min_f": min_f if n_valid else float("nan"), "bound": math.sqrt(bound2),
            "ratio_bound": bound2, "ratio_mc": ratios, "ratio_se": ses, "ratio_exact": exact,
            "ratio_check": bool(np.all(ratios <= bound2 + 3 * ses)), "n_valid_pairs": n_valid}


def config_dict(obj) -> dict:
    d = asdict(obj)
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}
