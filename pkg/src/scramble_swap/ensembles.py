"""Random states and unitaries, truncated coherent states, Haar moment oracle.

Randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence``. A task's stream is ``SeedSequence(value, spawn_key=path)``,
so sub-streams for (cell, sample, ...) indices never overlap and do not
depend on scheduling order. Gaussian variates use numpy's ziggurat sampler.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .qcore import CompositeSpace, QOperator, QState

DEFAULT_TAIL_BUDGET = 1e-6
DEFAULT_WINDOW_SIGMAS = 4.0


@dataclass(frozen=True)
class Seed:
    """64-bit seed plus a spawn path identifying a sub-stream."""

    value: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.value) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "value", int(self.value))
        object.__setattr__(self, "path", tuple(int(k) for k in self.path))

    def child(self, *keys: int) -> "Seed":
        return Seed(self.value, self.path + tuple(keys))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.value, spawn_key=self.path)))


RandomSource = Seed | int | np.random.Generator


def as_generator(src: RandomSource) -> np.random.Generator:
    if isinstance(src, np.random.Generator):
        return src
    if isinstance(src, Seed):
        return src.generator()
    return Seed(int(src)).generator()


def _gaussian_columns(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    # Drawn column by column so the first k columns of an n x n draw equal an n x k draw.
    g = rng.standard_normal((k, n, 2))
    return (g[..., 0] + 1j * g[..., 1]).T / math.sqrt(2.0)


def _qr_haar(z: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def haar_unitary_matrix(d: int, src: RandomSource) -> np.ndarray:
    """Raw d x d CUE matrix (QR of a complex Ginibre matrix with phase fix)."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return _qr_haar(_gaussian_columns(as_generator(src), d, d))


def haar_isometry(n: int, k: int, src: RandomSource) -> np.ndarray:
    """First ``k`` columns of a Haar unitary on C^n, without forming the rest.

    Same random stream as :func:`haar_unitary_matrix`, so for equal seeds the
    result matches ``haar_unitary_matrix(n, seed)[:, :k]`` up to rounding.
    """
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    return _qr_haar(_gaussian_columns(as_generator(src), n, k))


def haar_unitary(d: int, src: RandomSource, space: CompositeSpace | None = None) -> QOperator:
    space = space or CompositeSpace.of(("U", d))
    if space.total_dim != d:
        raise ValueError("space dimension does not match d")
    return QOperator(space, haar_unitary_matrix(d, src), "unitary")


def haar_state_vector(d: int, src: RandomSource) -> np.ndarray:
    """Uniform unit vector: normalized real Gaussian in R^{2d}, paired as x_k + i x_{k+d}."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    x = as_generator(src).standard_normal(2 * d)
    x /= np.linalg.norm(x)
    return x[:d] + 1j * x[d:]


def haar_states(d: int, count: int, src: RandomSource) -> np.ndarray:
    """``count`` independent Haar vectors as rows, drawn sequentially from one stream."""
    rng = as_generator(src)
    return np.array([haar_state_vector(d, rng) for _ in range(count)]).reshape(count, d)


def haar_state(d: int, src: RandomSource, space: CompositeSpace | None = None) -> QState:
    space = space or CompositeSpace.of(("S", d))
    return QState(space, haar_state_vector(d, src))


class TailBudgetError(ValueError):
    """The Fock window discards more coherent-state weight than allowed."""


@dataclass(frozen=True)
class FockWindow:
    """Occupancies n_min..n_max kept for the boson mode."""

    n_min: int
    n_max: int
    tail_mass: float | None = None

    def __post_init__(self):
        if self.n_min < 0 or self.n_max <= self.n_min:
            raise ValueError(f"invalid window [{self.n_min}, {self.n_max}]")

    @property
    def dim(self) -> int:
        return self.n_max - self.n_min + 1

    @property
    def occupations(self) -> np.ndarray:
        return np.arange(self.n_min, self.n_max + 1)

    @classmethod
    def centered(cls, alpha: complex, half_width: int) -> "FockWindow":
        mu = int(math.floor(abs(alpha) ** 2))
        return cls(max(0, mu - int(half_width)), mu + int(half_width))

    @classmethod
    def sigmas(cls, alpha: complex, k: float = DEFAULT_WINDOW_SIGMAS) -> "FockWindow":
        """Half-width ceil(k |alpha|) around floor(|alpha|^2), at least 1."""
        return cls.centered(alpha, max(1, math.ceil(k * abs(alpha))))


def poisson_tail(alpha: complex, window: FockWindow) -> float:
    """Poisson weight of occupancies outside the window."""
    mu = abs(alpha) ** 2
    if mu == 0:
        return 0.0 if window.n_min == 0 else 1.0
    below = stats.poisson.cdf(window.n_min - 1, mu) if window.n_min > 0 else 0.0
    return float(below + stats.poisson.sf(window.n_max, mu))


def coherent_amplitudes(alpha: complex, window: FockWindow) -> np.ndarray:
    """Untruncated coherent-state amplitudes on the window (not renormalized)."""
    n = window.occupations
    r = abs(alpha)
    if r == 0:
        return (n == 0).astype(complex)
    logmag = n * math.log(r) - 0.5 * r * r - 0.5 * gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def coherent_state(alpha: complex, window: FockWindow, tail_budget: float | None = DEFAULT_TAIL_BUDGET,
                   label: str = "B") -> tuple[QState, float]:
    """Coherent state projected into ``window`` and renormalized.

    Returns the state and the exact discarded Poisson mass. Raises
    :class:`TailBudgetError` when that mass exceeds ``tail_budget``
    (``None`` disables the check).
    """
    tail = poisson_tail(alpha, window)
    if tail_budget is not None and tail > tail_budget:
        raise TailBudgetError(
            f"window [{window.n_min}, {window.n_max}] discards {tail:.3e} > budget {tail_budget:.1e}; "
            f"try a wider window, e.g. half-width {suggest_half_width(alpha, tail_budget)}")
    amp = coherent_amplitudes(alpha, window)
    nrm = np.linalg.norm(amp)
    if nrm == 0:
        raise TailBudgetError("window carries no coherent-state weight")
    return QState(CompositeSpace.of((label, window.dim)), amp / nrm), tail


def suggest_half_width(alpha: complex, tail_budget: float) -> int:
    """Smallest centered half-width meeting the tail budget."""
    hw = 1
    while poisson_tail(alpha, FockWindow.centered(alpha, hw)) > tail_budget:
        hw = math.ceil(hw * 1.25) + 1
    lo = max(1, int(hw / 1.25) - 1)
    while lo < hw and poisson_tail(alpha, FockWindow.centered(alpha, lo)) > tail_budget:
        lo += 1
    return lo


def _delta(a, b) -> int:
    return int(a == b)


def weingarten2(u: Sequence[tuple[int, int]], udag: Sequence[tuple[int, int]], d: int) -> float:
    """Haar average of a product of U and U^dagger entries, up to second order.

    ``u`` lists index pairs (i, j) of factors U_{ij}; ``udag`` lists pairs
    (j', i') of factors U^dagger_{j'i'}, paired with ``u`` in order.
    """
    u, udag = list(u), list(udag)
    if len(u) > 2 or len(udag) > 2:
        raise ValueError("only moments up to second order are supported")
    if len(u) != len(udag):
        return 0.0
    if not u:
        return 1.0
    if len(u) == 1:
        (i1, j1), (jp1, ip1) = u[0], udag[0]
        return _delta(i1, ip1) * _delta(j1, jp1) / d
    (i1, j1), (i2, j2) = u
    (jp1, ip1), (jp2, ip2) = udag
    if d == 1:
        return 1.0
    same_i = _delta(i1, ip1) * _delta(i2, ip2)
    swap_i = _delta(i1, ip2) * _delta(i2, ip1)
    same_j = _delta(j1, jp1) * _delta(j2, jp2)
    swap_j = _delta(j1, jp2) * _delta(j2, jp1)
    return (same_i * same_j + swap_i * swap_j - (same_i * swap_j + swap_i * same_j) / d) / (d * d - 1)


Pattern = tuple[Sequence[tuple[int, int]], Sequence[tuple[int, int]]]


def sample_moments(patterns: Sequence[Pattern], d: int, draws: int,
                   src: RandomSource) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo means and standard errors of several :func:`weingarten2` moments.

    All patterns share the same ``draws`` Haar unitaries.
    """
    rng = as_generator(src)
    mats = np.array([haar_unitary_matrix(d, rng) for _ in range(draws)])
    means = np.empty(len(patterns), dtype=complex)
    ses = np.empty(len(patterns))
    for k, (u, udag) in enumerate(patterns):
        v = np.ones(draws, dtype=complex)
        for i, j in u:
            v = v * mats[:, i, j]
        for j, i in udag:
            v = v * mats[:, i, j].conj()
        means[k] = v.mean()
        ses[k] = math.sqrt((np.var(v.real, ddof=1) + np.var(v.imag, ddof=1)) / draws)
    return means, ses
