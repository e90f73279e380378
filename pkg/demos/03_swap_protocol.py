"""The scrambling swap protocol on small systems.

A Haar scrambler acts on A and a bath B, a second copy reverses it on C and
B, and B is projected back onto its initial state. When the projection
succeeds, the states of A and C come out exchanged with high fidelity.
"""
# %%
import numpy as np

from scramble_swap.ensembles import Seed, haar_state_vector, haar_unitary_matrix
from scramble_swap.experiments import haar_benchmark, haar_exact, haar_theory
from scramble_swap.protocol import isometry_diagnostics, run_protocol
from scramble_swap.qcore import CompositeSpace, QOperator, QState

rng = Seed(3).generator()
d_a, d_b = 2, 64
U = QOperator(CompositeSpace.of(("A", d_a), ("B", d_b)), haar_unitary_matrix(d_a * d_b, rng), "unitary")
phi = QState(CompositeSpace.of(("B", d_b)), haar_state_vector(d_b, rng))
psi = QState(CompositeSpace.of(("A", d_a)), haar_state_vector(d_a, rng))
chi = QState(CompositeSpace.of(("C", d_a)), haar_state_vector(d_a, rng))
out = run_protocol(U, phi, psi, chi)
print(f"single draw: p = {out.p:.4f}, swap fidelity = {out.f_swap:.4f}")

# %% Averages over scramblers, against the large-bath law and the exact Haar means
for row in haar_benchmark(d_a, [8, 32, 128], 500, Seed(4)):
    p_ex, pf_ex = haar_exact(d_a, row["d_B"])
    f_th, p_th = haar_theory(d_a, row["d_B"])
    print(f"d_B={row['d_B']:4d}  f {row['f_mc']:.3f} (law {f_th:.3f})   "
          f"p {row['p_mc']:.4f} (law {p_th:.4f}, exact {p_ex:.4f})")
# the law is a large-bath approximation, so small baths sit visibly off it

# %% How close the scrambler is to an isometric encoder
for db in (8, 64):
    diag = isometry_diagnostics(haar_unitary_matrix(d_a * db, rng), haar_state_vector(db, rng), np.eye(d_a) / d_a)
    print(f"d_B={db:3d}  p_lambda = {diag.p_lambda:.4f}, relative residual = {diag.epsilon_tilde:.3f}")
