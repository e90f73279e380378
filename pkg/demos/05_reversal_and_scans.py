"""Parameter scans and sensitivity to an imperfect reversal.

Uses a small boson amplitude so everything runs in well under a minute.
First a coarse (delta, omega_z) scan relates the swap fidelity to the
spin-boson entanglement; then the backward leg is detuned slightly to see
how the fidelity degrades, early versus late.
"""
# %%
import numpy as np

from scramble_swap.dicke import DickeParams
from scramble_swap.ensembles import Seed
from scramble_swap.experiments import ReversalProbe, ScanConfig, phase_scan, tolerance_half_width

base = DickeParams(N=4, delta=0.5, omega_z=2.0, alpha=6.0, window_cap=250)

# %% Coarse scan: mean F, second Renyi entropy S2 of the spins and mean p per cell
cfg = ScanConfig(delta_grid=(0.2, 0.5, 1.0), omega_grid=(1.0, 2.5, 4.0),
                 time_window=(100.0, 150.0, 8), n_states=20, seed=Seed(1))
res = phase_scan(cfg, base)
for r in res.rows:
    print(f"delta={r.delta:.2f} omega_z={r.omega_z:.2f}  F={r.f_mean:.3f}  S2={r.s2_mean:.3f}  p={r.p_mean:.4f}")
print(f"rank correlation between F and S2: {res.rank_correlation():.2f}")

# %% Fidelity under a mismatched backward leg
probe = ReversalProbe(base, t=20.0, n_states=20, seed=Seed(2))
for frac in (0.0, 1e-3, 1e-2, 3e-2):
    print(f"eps_delta/delta = {frac:7.0e}  F/F0 = {probe(frac) / probe.f0:.3f}")

# %% Tolerance shrinks the longer the protocol runs
for t in (20.0, 200.0):
    hw = tolerance_half_width(ReversalProbe(base, t=t, n_states=20, seed=Seed(2)), "delta", 0.9)
    print(f"t = {t:5.0f}: 90% tolerance half-width in eps_delta/delta = {hw['half_width']:.2e}")
