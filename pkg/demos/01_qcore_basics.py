"""Labelled tensor-product states and operators.

Builds a two-qubit Bell pair, traces out one half, evolves under a
Hamiltonian and checks purity along the way.
"""
# %%
import numpy as np

from scramble_swap.qcore import (CompositeSpace, QOperator, QState, evolve, partial_trace, partial_transpose,
                                 purity, tensor_product)

AB = CompositeSpace.of(("A", 2), ("B", 2))
bell = QState(AB, np.array([1, 0, 0, 1]) / np.sqrt(2))
rho = bell.density()
print("global purity:", purity(rho))

# %% Reduced state of A is maximally mixed
rho_a = partial_trace(rho, ["A"])
print("rho_A =\n", rho_a.matrix.real)
print("purity of A:", purity(rho_a))

# %% Partial transpose exposes the entanglement through a negative eigenvalue
print("spectrum of rho^T_B:", np.round(np.linalg.eigvalsh(partial_transpose(rho, "B").matrix), 6))

# %% Product states and time evolution
up = QState(CompositeSpace.of(("A", 2)), np.array([1, 0]))
zero = QState(CompositeSpace.of(("B", 2)), np.array([1, 0]))
prod = tensor_product([up, zero])
sx = np.array([[0, 1], [1, 0]])
H = QOperator(AB, np.kron(sx, sx), "hermitian")
for t in (0.0, np.pi / 8, np.pi / 4):
    out = evolve(H, t, prod)
    print(f"t = {t:.3f}  purity of A = {purity(partial_trace(out.density(), ['A'])):.4f}")
