"""Postselected SWAP circuit, fidelity measures, and encoder/decoder diagnostics.

Conventions
-----------
A unitary ``U`` acts on ``A (x) B`` with A declared first. The backward leg
applies the same matrix on ``C (x) B`` (C is identified with A index by
index). Everything reduces to the columns

    X[a1, b, a] = (U |a>|phi>)[a1, b]

from which the protocol operator on ``A (x) C`` follows as

    K[(a1, c1), (a, c)] = sum_b conj(Xr[c, b, c1]) * Xf[a1, b, a],

with ``Xr = Xf`` when the backward leg is the exact inverse.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qcore import (TOL_NORM, TOL_PSD, CompositeSpace, QCoreError, QOperator, QState,
                    embed, partial_trace, swap_operator, tensor_product)

P_FLOOR = 1e-12


@dataclass(frozen=True)
class ProtocolOutcome:
    """Postselected result. ``rho_out_AC`` is None when postselection failed."""

    rho_out_AC: QOperator | None
    p: float
    f_swap: float
    f_uhlmann: float | None = None

    @property
    def failed(self) -> bool:
        return self.rho_out_AC is None


@dataclass(frozen=True)
class IsometryDiagnostics:
    p_lambda: float
    epsilon_residual: float
    epsilon_tilde: float
    cross_purity: float
    purity_B: float


@dataclass(frozen=True)
class TeleportDiagnostics:
    rho_tilde_A: QOperator
    mu: float
    purity_A: float


# ---------------------------------------------------------------- helpers

def _vec(x) -> np.ndarray:
    return x.amplitudes if isinstance(x, QState) else np.asarray(x, dtype=complex).reshape(-1)


def _mat(x) -> np.ndarray:
    return x.matrix if isinstance(x, QOperator) else np.asarray(x)


def _dims(U, phi) -> tuple[int, int]:
    n = _mat(U).shape[0]
    d_b = _vec(phi).size
    if n % d_b:
        raise QCoreError(f"unitary dimension {n} is not divisible by d_B = {d_b}")
    if isinstance(U, QOperator) and U.space.dims[-1] != d_b and len(U.space.dims) == 2:
        raise QCoreError("the second factor of U must match the dimension of phi")
    return n // d_b, d_b


def encoded_columns(U, phi) -> np.ndarray:
    """X[a1, b, a] = (U |a>|phi>)[a1, b]."""
    d_a, d_b = _dims(U, phi)
    y = _mat(U).reshape(d_a * d_b, d_a, d_b) @ _vec(phi)
    return y.reshape(d_a, d_b, d_a)


def kraus_from_columns(xf: np.ndarray, xr: np.ndarray | None = None) -> np.ndarray:
    """Protocol operator on A (x) C from forward and reverse columns.

    Leading axes beyond the last three are broadcast (e.g. a time axis).
    """
    xr = xf if xr is None else xr
    d_a = xf.shape[-1]
    k = np.einsum("...cbx,...aby->...axyc", xr.conj(), xf)
    return k.reshape(k.shape[:-4] + (d_a * d_a, d_a * d_a))


def protocol_operator(U, phi, W=None) -> np.ndarray:
    """K = <phi|_B W_CB U_AB |phi>_B; ``W`` defaults to U^dagger on C (x) B."""
    xf = encoded_columns(U, phi)
    if W is None:
        return kraus_from_columns(xf)
    d_a, d_b = xf.shape[0], xf.shape[1]
    w = _mat(W).reshape(d_a, d_b, d_a, d_b)
    # K[a1, c1, a, c] = sum_{b, b'} conj(phi_b') W[c1, b', c, b] X[a1, b, a]
    wphi = np.einsum("x,cxdb->cdb", _vec(phi).conj(), w)
    k = np.einsum("cdb,aby->acyd", wphi, xf)
    return k.reshape(d_a * d_a, d_a * d_a)


def swap_vector(v: np.ndarray, d: int) -> np.ndarray:
    """Exchange the two factors of vectors on C^d (x) C^d (last axis)."""
    shp = v.shape
    return np.swapaxes(v.reshape(shp[:-1] + (d, d)), -1, -2).reshape(shp)


def pure_swap_stats(k: np.ndarray, psis: np.ndarray, chis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Success probability and SWAP fidelity for pure product inputs.

    ``k`` has shape (..., D, D) with D = d_A^2; ``psis`` and ``chis`` are
    (S, d_A). Returns arrays of shape (..., S). Failed postselections
    (p < P_FLOOR) get fidelity NaN.
    """
    d_a = psis.shape[1]
    inp = np.einsum("sa,sc->sac", psis, chis).reshape(len(psis), d_a * d_a)
    tgt = swap_vector(inp, d_a)
    out = np.einsum("...ij,sj->...si", k, inp)
    p = np.sum(np.abs(out) ** 2, axis=-1)
    ov = np.abs(np.einsum("si,...si->...s", tgt.conj(), out)) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(p >= P_FLOOR, ov / np.where(p > 0, p, 1.0), np.nan)
    return p, f


# ---------------------------------------------------------------- fidelities

def _swap_density(rho: np.ndarray, d: int) -> np.ndarray:
    s = swap_operator(d)
    return s @ rho @ s


def swap_fidelity(rho_out: QOperator, rho_in: QOperator) -> float:
    """Normalized overlap between ``rho_out`` and the factor-swapped ``rho_in``."""
    if rho_out.space != rho_in.space:
        raise QCoreError("swap_fidelity needs both operators on the same space")
    dims = rho_in.space.dims
    if len(dims) != 2 or dims[0] != dims[1]:
        raise QCoreError("swap_fidelity needs two factors of equal dimension")
    a, b = _mat(rho_out), _swap_density(_mat(rho_in), dims[0])
    num = np.real(np.vdot(b.conj().T, a))
    den = math.sqrt(np.real(np.vdot(a.conj().T, a)) * np.real(np.vdot(b.conj().T, b)))
    if den == 0:
        raise QCoreError("zero purity in swap_fidelity")
    return float(num / den)


_ROUNDOFF = 64 * np.finfo(float).eps


def _clean_spectrum(e: np.ndarray) -> np.ndarray:
    # eigenvalues at round-off level would contribute ~1e-8 after the square root
    if e[0] < -TOL_PSD:
        raise QCoreError(f"negative eigenvalue {e[0]:.3e}")
    cut = _ROUNDOFF * max(float(e[-1]), 0.0)
    return np.where(e > cut, e, 0.0)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    e, v = np.linalg.eigh((m + m.conj().T) / 2)
    return (v * np.sqrt(_clean_spectrum(e))) @ v.conj().T


def uhlmann_fidelity(rho, sigma) -> float:
    """(Tr sqrt(sqrt(sigma) rho sqrt(sigma)))^2, clamped to [0, 1]."""
    r, s = _mat(rho), _mat(sigma)
    rs = _psd_sqrt(s)
    m = rs @ r @ rs
    _psd_sqrt(r)  # validates rho
    e = _clean_spectrum(np.linalg.eigvalsh((m + m.conj().T) / 2))
    f = float(np.sum(np.sqrt(e)) ** 2)
    return min(max(f, 0.0), 1.0)


# ---------------------------------------------------------------- protocol

def _as_density(x, label: str, d: int) -> tuple[np.ndarray, np.ndarray | None]:
    """(density matrix, state vector or None)."""
    if isinstance(x, QState):
        v = x.amplitudes
        return np.outer(v, v.conj()), v
    m = _mat(x)
    if m.ndim == 1:
        return np.outer(m, m.conj()), m
    if m.shape != (d, d):
        raise QCoreError(f"{label} has shape {m.shape}, expected ({d}, {d})")
    return m, None


def outcome_from_kraus(k: np.ndarray, rho_A, rho_C, p_floor: float = P_FLOOR,
                       uhlmann: bool = False) -> ProtocolOutcome:
    """Apply the protocol operator ``k`` on A (x) C to the inputs and score the result."""
    d_a = int(round(math.sqrt(k.shape[0])))
    ra, va = _as_density(rho_A, "rho_A", d_a)
    rc, vc = _as_density(rho_C, "rho_C", d_a)
    space = CompositeSpace.of(("A", d_a), ("C", d_a))
    rho_in = np.kron(ra, rc)
    if va is not None and vc is not None:
        out = k @ np.kron(va, vc)
        p = float(np.vdot(out, out).real)
        out_m = np.outer(out, out.conj())
    else:
        out_m = k @ rho_in @ k.conj().T
        p = float(np.trace(out_m).real)
    if p < p_floor:
        return ProtocolOutcome(None, p, float("nan"))
    rho_out = QOperator(space, (out_m + out_m.conj().T) / (2 * p), "density")
    rin = QOperator(space, rho_in, "density")
    f = swap_fidelity(rho_out, rin)
    fu = uhlmann_fidelity(rho_out, _swap_density(rho_in, d_a)) if uhlmann else None
    return ProtocolOutcome(rho_out, p, f, fu)


def run_protocol(U, phi_B, rho_A, rho_C, p_floor: float = P_FLOOR, uhlmann: bool = False) -> ProtocolOutcome:
    """Forward scramble on A B, backward on C B, project B on phi.

    Pure inputs (``QState``) take the state-vector path; otherwise the
    density path is used.
    """
    _dims(U, phi_B)
    return outcome_from_kraus(protocol_operator(U, phi_B), rho_A, rho_C, p_floor, uhlmann)


def run_protocol_reference(U: QOperator, phi_B: QState, rho_A: QOperator, rho_C: QOperator):
    """Literal three-system evaluation, used as a cross-check.

    Builds rho_A (x) |phi><phi| (x) rho_C on A B C, applies U on A B and
    U^dagger on C B, and projects B. Returns (unnormalized rho_out_AC, p).
    """
    d_a, d_b = _dims(U, phi_B)
    space = CompositeSpace.of(("A", d_a), ("B", d_b), ("C", d_a))
    u_ab = QOperator(CompositeSpace.of(("A", d_a), ("B", d_b)), _mat(U), "unitary")
    u_cb = QOperator(CompositeSpace.of(("C", d_a), ("B", d_b)), _mat(U).conj().T, "unitary")
    ua, uc = embed(u_ab, space).matrix, embed(u_cb, space).matrix
    phi = phi_B.amplitudes
    full = tensor_product([rho_A, phi_B.density(), rho_C]).matrix
    full = uc @ ua @ full @ ua.conj().T @ uc.conj().T
    proj = np.kron(np.kron(np.eye(d_a), phi.conj()[None, :]), np.eye(d_a))
    out = proj @ full @ proj.conj().T
    return out, float(np.trace(out).real)


# ---------------------------------------------------------------- maps

def encoder_map(U, phi_B, O_A) -> QOperator:
    """Tr_A(U [O_A (x) |phi><phi|] U^dagger), an operator on B."""
    x = encoded_columns(U, phi_B)
    o = _mat(O_A)
    m = np.einsum("kbx,xy,kcy->bc", x, o, x.conj())
    return QOperator(CompositeSpace.of(("B", x.shape[1])), m)


def reverse_decoder_map(U, phi_B, gamma_A, O_A) -> QOperator:
    """Tr_A(U [O_A (x) |phi><phi|] U^dagger gamma_A^dagger), an operator on B."""
    x = encoded_columns(U, phi_B)
    o, g = _mat(O_A), _mat(gamma_A)
    # (gamma^dagger)[k', k] = conj(gamma[k, k'])
    m = np.einsum("kbx,xy,jcy,kj->bc", x, o, x.conj(), g.conj())
    return QOperator(CompositeSpace.of(("B", x.shape[1])), m)


def decoder_map(U, phi_B, gamma_C, O_B) -> QOperator:
    """<phi|_B U^dagger (gamma_C (x) O_B) U |phi>_B, an operator on C."""
    x = encoded_columns(U, phi_B)
    d_a, d_b = x.shape[0], x.shape[1]
    y = x.reshape(d_a * d_b, d_a)
    m = y.conj().T @ np.kron(_mat(gamma_C), _mat(O_B)) @ y
    return QOperator(CompositeSpace.of(("C", d_a)), m)


def a_to_c_recovery(U, phi_B, rho_A, gamma_C, p_floor: float = P_FLOOR) -> tuple[QOperator, float, float]:
    """Decoder applied to the encoded state: (rho_C_out, p, F_AC).

    ``rho_C_out`` is left unnormalized; its trace is the success probability.
    """
    ra = _as_density(rho_A, "rho_A", _dims(U, phi_B)[0])[0]
    out = decoder_map(U, phi_B, gamma_C, encoder_map(U, phi_B, ra)).matrix
    out = (out + out.conj().T) / 2
    p = float(np.trace(out).real)
    if p < p_floor:
        raise QCoreError(f"postselection failed: p = {p:.3e}")
    num = float(np.real(np.vdot(ra.conj().T, out)))
    den = math.sqrt(float(np.real(np.vdot(out, out))) * float(np.real(np.vdot(ra, ra))))
    rho = QOperator(CompositeSpace.of(("C", ra.shape[0])), out, "density", subnormalized=True)
    return rho, p, num / den


def hermitian_basis(d: int) -> np.ndarray:
    """Normalized identity plus generalized Gell-Mann matrices, orthonormal under Tr(A B^dagger)."""
    out = [np.eye(d, dtype=complex) / math.sqrt(d)]
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), complex)
            s[j, k] = s[k, j] = 1 / math.sqrt(2)
            a = np.zeros((d, d), complex)
            a[j, k], a[k, j] = -1j / math.sqrt(2), 1j / math.sqrt(2)
            out += [s, a]
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1
        diag[l] = -l
        out.append(np.diag(diag / math.sqrt(l * (l + 1))).astype(complex))
    return np.array(out)


def isometry_diagnostics(U, phi_B, gamma, psi=None) -> IsometryDiagnostics:
    """Isometric-encoding residual over a Hermitian operator basis.

    ``epsilon_residual`` is the largest deviation over all basis pairs;
    ``psi`` (default |0>) is the pure state used for the cross purity.
    """
    x = encoded_columns(U, phi_B)
    d_a = x.shape[0]
    g = _mat(gamma)
    basis = hermitian_basis(d_a)
    me = np.einsum("kbx,nxy,kcy->nbc", x, basis, x.conj())
    md = np.einsum("kbx,nxy,jcy,kj->nbc", x, basis, x.conj(), g.conj())
    gram = np.einsum("ibc,jbc->ij", me, md.conj())
    eye = np.eye(d_a)
    p_lambda = float(np.real(np.trace(decoder_map(U, phi_B, g, encoder_map(U, phi_B, eye).matrix).matrix))) / d_a
    eps = float(np.max(np.abs(gram - p_lambda * np.eye(len(basis)))))
    v = np.eye(d_a)[0] if psi is None else _vec(psi)
    pm = np.outer(v, v.conj())
    e_psi = encoder_map(U, phi_B, pm).matrix
    d_psi = reverse_decoder_map(U, phi_B, g, pm).matrix
    cross = d_a * np.vdot(d_psi, e_psi)
    if abs(cross.imag) > 1e-9:
        raise QCoreError(f"cross purity has imaginary part {cross.imag:.3e}")
    pur_b = float(np.real(np.vdot(e_psi.conj().T, e_psi)))
    eps_t = eps / p_lambda if p_lambda > 0 else float("inf")
    return IsometryDiagnostics(p_lambda, eps, eps_t, float(cross.real), pur_b)


def orthogonal_leakage(U, phi_B, gamma, psi) -> float:
    """Tr_B[M^e(Psi) M^d(I - Psi)^dagger], the term separating p from P~_B / d_A.

    Exactly ``p = cross_purity / d_A + orthogonal_leakage``; the leakage is
    the output weight outside |psi> and vanishes under exact orthogonal encoding.
    """
    v = _vec(psi)
    pm = np.outer(v, v.conj())
    e_psi = encoder_map(U, phi_B, pm).matrix
    d_bar = reverse_decoder_map(U, phi_B, gamma, np.eye(v.size) - pm).matrix
    val = np.vdot(d_bar, e_psi)
    return float(val.real)


# ---------------------------------------------------------------- C -> A direction

def scrambled_reduced_state(U, phi_B, psi) -> np.ndarray:
    """Tr_B(U |psi phi><psi phi| U^dagger) on A."""
    x = encoded_columns(U, phi_B)
    m = x @ _vec(psi)
    return m @ m.conj().T


def teleported_state(ensemble: Sequence[tuple[complex, object]], U, phi_B, rho_C) -> QOperator:
    """sum_k |q_k|^2 rt_k rho_{C->A} rt_k with rt_k the scrambled reduced state.

    The result is unnormalized; its trace is the mean postselection probability.
    The derivation assumes the psi_k come from a purification (orthonormal).
    """
    w = np.array([abs(q) ** 2 for q, _ in ensemble])
    if abs(w.sum() - 1) > 1e-9:
        raise QCoreError(f"ensemble weights sum to {w.sum()}, not 1")
    rc = _mat(rho_C) if not isinstance(rho_C, QState) else rho_C.density().matrix
    out = sum(wk * (rt @ rc @ rt) for wk, rt in
              ((wk, scrambled_reduced_state(U, phi_B, psi)) for wk, (_, psi) in zip(w, ensemble)))
    out = (out + out.conj().T) / 2
    return QOperator(CompositeSpace.of(("A", rc.shape[0])), out, "density", subnormalized=True)


def teleport_diagnostics(U, phi_B, psi) -> TeleportDiagnostics:
    rt = scrambled_reduced_state(U, phi_B, psi)
    rt = (rt + rt.conj().T) / 2
    pur = float(np.real(np.vdot(rt, rt)))
    rho = QOperator(CompositeSpace.of(("A", rt.shape[0])), rt, "density")
    return TeleportDiagnostics(rho, pur / rt.shape[0], pur)


def teleport_purity_check(rho_tilde, epsilon_tilde: float) -> bool:
    """Necessary purity condition Tr(rt^2) <= 1 / (d_A (1 - eps~)) for C -> A transfer."""
    if epsilon_tilde >= 1:
        raise ValueError("epsilon_tilde must be < 1")
    m = _mat(rho_tilde)
    if abs(np.trace(m).real - 1) > TOL_NORM:
        raise QCoreError("rho_tilde must be normalized")
    d = m.shape[0]
    return bool(np.real(np.vdot(m, m)) <= 1.0 / (d * (1.0 - epsilon_tilde)))
