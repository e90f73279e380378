"""Reproducible Haar sampling and second-moment checks.

Every random object is drawn from a named seed stream, so a run can be
replayed exactly. Sampled moments are compared with the Weingarten
formulas.
"""
# %%
import numpy as np

from scramble_swap.ensembles import (FockWindow, Seed, coherent_state, haar_unitary_matrix, sample_moments,
                                     suggest_half_width, weingarten2)

seed = Seed(7)
u = haar_unitary_matrix(4, seed.child(0))
print("unitarity error:", np.max(np.abs(u.conj().T @ u - np.eye(4))))
print("replayed exactly:", np.array_equal(u, haar_unitary_matrix(4, seed.child(0))))

# %% Second moments, sampled versus exact
patterns = [([(0, 0)], [(0, 0)]),
            ([(0, 0), (0, 0)], [(0, 0), (0, 0)]),
            ([(0, 0), (1, 1)], [(0, 1), (1, 0)])]
for d in (2, 3):
    means, ses = sample_moments(patterns, d, 20000, seed.child(d))
    for (a, b), m, se in zip(patterns, means, ses):
        print(f"d={d} {a} {b}: sampled {m.real:+.4f} +- {se:.4f}, exact {weingarten2(a, b, d):+.4f}")

# %% A coherent state truncated to a Fock window, with the discarded weight reported
alpha = 5.0
hw = suggest_half_width(alpha, 1e-8)
state, tail = coherent_state(alpha, FockWindow.centered(alpha, hw))
print(f"half-width {hw} keeps {state.space.total_dim} levels, discarded Poisson mass {tail:.2e}")
