"""Projecting the boson onto its vacuum with auxiliary spins.

The boson couples to N_M spins through H = g_M S^z n. Preparing the spins
in a reference state and post-selecting on it filters the Fock
amplitudes. Two spin preparations are compared.
"""
# %%
import math

import numpy as np

from scramble_swap.measproj import (MeasConfig, apply_projection, brute_force_projection, crossover_epsilon,
                                    required_measurement_spins)

n_max = 6
sinc = required_measurement_spins(None, n_max, "sinc")
cos = required_measurement_spins(1e-4, n_max, "cosine")
print(f"sinc preparation: N_M = {sinc.N_M}, cosine preparation for leakage 1e-4: N_M = {cos.N_M}")

# %% Filter a random boson state supported on 0..n_max
rng = np.random.default_rng(0)
v = rng.normal(size=n_max + 1) + 1j * rng.normal(size=n_max + 1)
v /= np.linalg.norm(v)
for cfg in (sinc, cos):
    _, p_eta, p0 = apply_projection(v, cfg)
    print(f"{cfg.variant:6s}: success probability {p_eta:.4f}, vacuum fraction {p0:.6f}")

# %% The closed-form weights agree with an explicit sum over spin configurations
small = MeasConfig("cosine", 10, math.pi / (n_max + 1), n_max)
for cfg in (sinc, small):
    a, b = apply_projection(v, cfg)[0], brute_force_projection(v, cfg, literal=cfg.variant == "cosine")[0]
    print(f"{cfg.variant:6s} N_M={cfg.N_M}: max amplitude difference {np.max(np.abs(a - b)):.1e}")

# %% Which preparation needs fewer spins
for eps in (1e-1, math.exp(-math.pi), 1e-4):
    c = required_measurement_spins(eps, n_max, "cosine").N_M
    print(f"leakage {eps:.3g}: cosine needs {c} spins, sinc needs {sinc.N_M}")
print(f"cosine can only win above leakage {crossover_epsilon(n_max):.3f}")
