"""Dicke model on the collective spin-N/2 manifold coupled to one boson mode.

    H = omega_z S^z + delta n_rel - (2 g / sqrt(N)) S^x (b + b^dagger)

The boson lives in a Fock window n_min..n_max with ``b|n> = sqrt(n)|n-1>``
(absolute n) and ``n_rel = n - n_min``; the dropped constant only adds a
global phase. Basis order is spin-major: index ``j * d_B + (n - n_min)`` with
``j = m + N/2``.

H conserves the parity ``(-1)^(j + n)``, so each Hamiltonian is diagonalized
as two independent real symmetric blocks and the eigensystem is reused for
every time and initial state.
"""
from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .ensembles import (DEFAULT_TAIL_BUDGET, FockWindow, coherent_amplitudes, coherent_state, poisson_tail,
                        suggest_half_width, TailBudgetError)
from .protocol import ProtocolOutcome, kraus_from_columns, outcome_from_kraus
from .qcore import CompositeSpace, QOperator, QState

EXCURSION_SIGMAS = 4.0


@dataclass(frozen=True)
class DickeParams:
    """Dicke parameters in units of g. ``window=None`` selects :func:`excursion_window`."""

    N: int
    delta: float
    omega_z: float
    alpha: float
    g: float = 1.0
    window: FockWindow | None = None
    window_cap: int | None = None
    tail_budget: float | None = DEFAULT_TAIL_BUDGET

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")

    @property
    def d_A(self) -> int:
        return self.N + 1

    def resolved_window(self) -> FockWindow:
        if self.window is not None:
            w = self.window
        else:
            w = excursion_window(self.N, self.alpha, self.delta, self.g, cap=self.window_cap,
                                 tail_budget=self.tail_budget)
        if w.tail_mass is None:
            w = replace(w, tail_mass=poisson_tail(self.alpha, w))
        return w

    def with_window(self) -> "DickeParams":
        """Copy with the window resolved and frozen."""
        return replace(self, window=self.resolved_window())

    def shifted(self, err: "ReversalError") -> "DickeParams":
        return replace(self, delta=self.delta + err.eps_delta, omega_z=self.omega_z + err.eps_z)


@dataclass(frozen=True)
class ReversalError:
    """Absolute parameter mismatches of the backward leg."""

    eps_delta: float = 0.0
    eps_z: float = 0.0

    @classmethod
    def from_fractions(cls, params: DickeParams, frac_delta: float = 0.0, frac_z: float = 0.0) -> "ReversalError":
        return cls(frac_delta * params.delta, frac_z * params.omega_z)

    def fractions(self, params: DickeParams) -> tuple[float, float]:
        return self.eps_delta / params.delta, self.eps_z / params.omega_z

    @property
    def is_zero(self) -> bool:
        return self.eps_delta == 0 and self.eps_z == 0


def excursion_window(N: int, alpha: float, delta: float, g: float = 1.0, k: float = EXCURSION_SIGMAS,
                     cap: int | None = None, tail_budget: float | None = DEFAULT_TAIL_BUDGET) -> FockWindow:
    """Window wide enough for the coupling-driven drift of the boson amplitude.

    The spin force displaces the mode by up to ``beta = g sqrt(N)/|delta|``, so
    the amplitude ranges over ``|alpha| +- 2 beta``; a ``k``-sigma Poisson
    margin is added at both ends. For ``g = 0`` this reduces to a ``k``-sigma
    window around ``|alpha|^2``. The half-width is raised to meet
    ``tail_budget`` and then clipped to ``cap`` when given.
    """
    a = abs(alpha)
    mu = int(math.floor(a * a))
    if g == 0:
        beta = 0.0
    elif delta == 0:
        if cap is None:
            raise ValueError("delta = 0 gives an unbounded excursion; pass an explicit window or cap")
        beta = math.inf
    else:
        beta = abs(g) * math.sqrt(N) / abs(delta)
    if math.isinf(beta):
        half = cap
    else:
        hi = a + 2 * beta
        lo = max(0.0, a - 2 * beta)
        half = math.ceil(max(hi * hi + k * hi - mu, mu - (lo * lo - k * lo), 1))
        if tail_budget is not None and a > 0:
            half = max(half, suggest_half_width(alpha, tail_budget))
        if cap is not None:
            half = min(half, cap)
    return FockWindow.centered(alpha, half)


def collective_spin_ops(N: int) -> tuple[QOperator, QOperator, QOperator]:
    """(S^x, S^y, S^z) for spin N/2 in the S^z basis, m ascending from -N/2."""
    if N < 1:
        raise ValueError("N must be >= 1")
    s = N / 2
    m = np.arange(N + 1) - s
    up = np.sqrt(s * (s + 1) - m[:-1] * (m[:-1] + 1))
    sp_ = np.diag(up, -1).astype(complex)  # S^+ |m> -> |m+1>, higher index
    sx = (sp_ + sp_.conj().T) / 2
    sy = (sp_ - sp_.conj().T) / 2j
    sz = np.diag(m).astype(complex)
    space = CompositeSpace.of(("S", N + 1))
    return tuple(QOperator(space, x, "hermitian") for x in (sx, sy, sz))


def _sparse_hamiltonian(params: DickeParams, window: FockWindow) -> sp.csr_matrix:
    N = params.N
    s = N / 2
    m = np.arange(N + 1) - s
    up = np.sqrt(s * (s + 1) - m[:-1] * (m[:-1] + 1))
    sx = sp.diags([up / 2, up / 2], [-1, 1], format="csr")
    sz = sp.diags(m, format="csr")
    n = window.occupations.astype(float)
    ann = sp.diags(np.sqrt(n[1:]), 1, format="csr")
    x = ann + ann.T
    nrel = sp.diags(n - window.n_min, format="csr")
    eye_a = sp.identity(N + 1, format="csr")
    eye_b = sp.identity(window.dim, format="csr")
    h = (params.omega_z * sp.kron(sz, eye_b) + params.delta * sp.kron(eye_a, nrel)
         - (2 * params.g / math.sqrt(N)) * sp.kron(sx, x))
    return h.tocsr()


def parity_labels(N: int, window: FockWindow) -> np.ndarray:
    """(j + n) mod 2 for every basis index."""
    j = np.arange(N + 1)
    return ((j[:, None] + window.occupations[None, :]) % 2).ravel()


def build_dicke_hamiltonian(params: DickeParams) -> QOperator:
    """Dense Hamiltonian on spin (x) boson. Meant for small windows."""
    w = params.resolved_window()
    coherent_state(params.alpha, w, params.tail_budget)
    h = _sparse_hamiltonian(params, w).toarray()
    space = CompositeSpace.of(("A", params.N + 1), ("B", w.dim))
    return QOperator(space, h, "hermitian")


def parity_operator(params: DickeParams) -> QOperator:
    w = params.resolved_window()
    lab = parity_labels(params.N, w)
    space = CompositeSpace.of(("A", params.N + 1), ("B", w.dim))
    return QOperator(space, np.diag(1.0 - 2.0 * lab), "hermitian")


@dataclass(eq=False)
class DickeSystem:
    """Eigensystem of one Dicke Hamiltonian, stored per parity block."""

    params: DickeParams
    window: FockWindow
    blocks: list = field(repr=False)

    @property
    def d_A(self) -> int:
        return self.params.N + 1

    @property
    def d_B(self) -> int:
        return self.window.dim

    @classmethod
    def build(cls, params: DickeParams) -> "DickeSystem":
        w = params.resolved_window()
        h = _sparse_hamiltonian(params, w)
        lab = parity_labels(params.N, w)
        blocks = []
        for s in (0, 1):
            idx = np.flatnonzero(lab == s)
            if idx.size == 0:
                continue
            hb = h[idx][:, idx].toarray()
            e, v = sla.eigh(hb, overwrite_a=True, check_finite=False, driver="evd")
            blocks.append((idx, e, v))
        return cls(params, w, blocks)

    def propagate(self, vecs: np.ndarray, times, max_chunk_bytes: float = 1.5e8) -> np.ndarray:
        """exp(-iHt) applied to the columns of ``vecs``; returns (n_t, dim, k)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        vecs = np.asarray(vecs, dtype=complex)
        dim, k = vecs.shape
        out = np.empty((times.size, dim, k), dtype=complex)
        for idx, e, v in self.blocks:
            sub = vecs[idx]
            if not np.any(sub):
                out[:, idx, :] = 0
                continue
            # strided .real/.imag views would bypass BLAS
            w = v.T @ np.ascontiguousarray(sub.real) + 1j * (v.T @ np.ascontiguousarray(sub.imag))
            per_t = len(idx) * k * 16 * 3
            step = max(1, int(max_chunk_bytes // per_t))
            for t0 in range(0, times.size, step):
                ts = times[t0:t0 + step]
                c = np.exp(-1j * e[:, None] * ts[None, :])[:, None, :] * w[:, :, None]
                c = c.reshape(len(idx), -1)
                r = (v @ np.ascontiguousarray(c.real) + 1j * (v @ np.ascontiguousarray(c.imag)))
                r = r.reshape(len(idx), k, ts.size)
                out[t0:t0 + ts.size, idx, :] = r.transpose(2, 0, 1)
        return out

    def reference_state(self) -> np.ndarray:
        """Normalized truncated coherent state on the window."""
        st, _ = coherent_state(self.params.alpha, self.window, self.params.tail_budget)
        return st.amplitudes

    def encoded_columns(self, times, phi: np.ndarray | None = None) -> np.ndarray:
        """X[t, a1, b, a] = (exp(-iHt) |a>|phi>)[a1, b]."""
        phi = self.reference_state() if phi is None else phi
        d_a, d_b = self.d_A, self.d_B
        vecs = np.zeros((d_a * d_b, d_a), dtype=complex)
        for a in range(d_a):
            vecs[a * d_b:(a + 1) * d_b, a] = phi
        x = self.propagate(vecs, times)
        return x.reshape(-1, d_a, d_b, d_a)


# Eigensystems dominate runtime and memory (~0.5 GB at full scale), so only
# the most recent few are kept. Entries are written once and then shared.
_CACHE: "OrderedDict[tuple, DickeSystem]" = OrderedDict()
_CACHE_LOCK = threading.Lock()
CACHE_SIZE = 2


def _key(params: DickeParams, w: FockWindow) -> tuple:
    return (params.N, float(params.g), float(params.delta), float(params.omega_z), w.n_min, w.n_max)


def dicke_system(params: DickeParams) -> DickeSystem:
    """Cached :class:`DickeSystem` for ``params``."""
    w = params.resolved_window()
    key = _key(params, w)
    with _CACHE_LOCK:
        if key in _CACHE:
            _CACHE.move_to_end(key)
            return _CACHE[key]
    system = DickeSystem.build(replace(params, window=w))
    with _CACHE_LOCK:
        _CACHE[key] = system
        while len(_CACHE) > CACHE_SIZE:
            _CACHE.popitem(last=False)
    return system


def clear_cache() -> None:
    with _CACHE_LOCK:
        _CACHE.clear()


def renyi2_entropy(rho_A, d_A: int | None = None) -> float:
    """-log_{d_A} Tr(rho^2) for a normalized density operator."""
    m = rho_A.matrix if isinstance(rho_A, QOperator) else np.asarray(rho_A)
    d = d_A or m.shape[0]
    pur = float(np.real(np.vdot(m.conj().T, m)))
    if not 0 < pur <= 1 + 1e-9:
        raise ValueError(f"purity {pur} outside (0, 1]")
    return -math.log(min(pur, 1.0)) / math.log(d)


def renyi2_ensemble(purities, d_A: int) -> float:
    """-log_{d_A} of the mean purity (average first, then log)."""
    p = float(np.mean(purities))
    if not 0 < p <= 1 + 1e-9:
        raise ValueError(f"mean purity {p} outside (0, 1]")
    return -math.log(min(p, 1.0)) / math.log(d_A)


def leg_columns(params: DickeParams, times, err: ReversalError = ReversalError()) -> tuple[np.ndarray, np.ndarray]:
    """Forward and reverse encoded columns on a shared window.

    With ``err`` zero the reverse columns are the forward array itself.
    """
    base = params.with_window()
    fwd = dicke_system(base)
    phi = fwd.reference_state()
    xf = fwd.encoded_columns(times, phi)
    if err.is_zero:
        return xf, xf
    rev = dicke_system(base.shifted(err))
    return xf, rev.encoded_columns(times, phi)


def dicke_protocol_run(params: DickeParams, rho_A, rho_C, t: float,
                       err: ReversalError = ReversalError(), uhlmann: bool = False) -> ProtocolOutcome:
    """Forward leg H(delta, omega_z) for time t, backward leg exp(+i H_rev t), project B.

    ``t`` is the duration of one leg; the protocol takes 2t in total.
    """
    xf, xr = leg_columns(params, [t], err)
    k = kraus_from_columns(xf[0], xr[0])
    return outcome_from_kraus(k, rho_A, rho_C, uhlmann=uhlmann)


def coherent_reference(params: DickeParams) -> tuple[QState, float]:
    w = params.resolved_window()
    return coherent_state(params.alpha, w, params.tail_budget)


__all__ = [
    "DickeParams", "ReversalError", "DickeSystem", "excursion_window", "collective_spin_ops",
    "build_dicke_hamiltonian", "parity_operator", "parity_labels", "dicke_system", "clear_cache",
    "renyi2_entropy", "renyi2_ensemble", "leg_columns", "dicke_protocol_run", "coherent_reference",
    "TailBudgetError", "coherent_amplitudes",
]
