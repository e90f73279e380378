"""Boson vacuum projection through an auxiliary measurement-spin ensemble.

The boson couples to ``N_M`` spins via ``H = g_M S_M^z n``. Preparing the
spins in a reference state, evolving for ``t_M`` and projecting back onto it
multiplies each Fock amplitude by a weight ``w(n)``:

* ``cosine``: x-polarized product state, ``w(n) = cos^{N_M}(gt n / 2)``
* ``sinc``: uniform superposition of the ``N_M + 1`` symmetric S^z levels,
  ``w(n) = sin(gt n (N_M+1)/2) / ((N_M+1) sin(gt n / 2))``

with ``gt = g_M t_M``. Both are real; ``w(0) = 1``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

P_FLOOR = 1e-12
VARIANTS = ("cosine", "sinc")
_ALIAS_TOL = 1e-9


@dataclass(frozen=True)
class MeasConfig:
    """Validated measurement-spin configuration."""

    variant: str
    N_M: int
    gt: float
    n_max: int
    epsilon: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.N_M < 1 or self.n_max < 1:
            raise ValueError("N_M and n_max must be >= 1")
        if self.variant == "cosine":
            if not 0 < self.gt <= math.pi / (self.n_max + 1) * (1 + 1e-12):
                raise ValueError(f"cosine variant needs 0 < gt <= pi/(n_max+1), got {self.gt}")
        else:
            if abs(self.gt * (self.N_M + 1) - 2 * math.pi) > 1e-12:
                raise ValueError("sinc variant needs gt (N_M + 1) = 2 pi")
            if not self.gt * self.n_max < 2 * math.pi:
                raise ValueError("sinc variant needs gt n_max < 2 pi")


def amplitude_weight(variant: str, n, n_spins: int, gt: float) -> np.ndarray:
    """Real amplitude factor w(n) for raw parameters (no config validation)."""
    n = np.asarray(n, dtype=float)
    half = gt * n / 2
    if variant == "cosine":
        return np.cos(half) ** n_spins
    if variant != "sinc":
        raise ValueError(f"unknown variant {variant!r}")
    den = (n_spins + 1) * np.sin(half)
    alias = (n > 0) & (np.abs(np.sin(half)) < _ALIAS_TOL)
    if np.any(alias):
        raise ValueError(f"sinc weight undefined: gt*n is a multiple of 2 pi at n = {n[alias].astype(int).tolist()}")
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(n == 0, 1.0, np.sin(half * (n_spins + 1)) / np.where(n == 0, 1.0, den))
    return w


def projection_weight(variant: str, n, cfg: MeasConfig):
    """Probability weight w(n)^2 in [0, 1]."""
    if variant != cfg.variant:
        raise ValueError("variant does not match the configuration")
    w = amplitude_weight(variant, n, cfg.N_M, cfg.gt) ** 2
    return float(w) if np.ndim(w) == 0 else w


def cosine_spin_lower_bound(epsilon: float, n_max: int) -> float:
    """Small-angle lower bound (n_max + 1)/pi * log(1/eps) on the cosine spin count."""
    return (n_max + 1) / math.pi * math.log(1 / epsilon)


def crossover_epsilon(n_max: int) -> float:
    """Leakage below which the cosine lower bound exceeds the sinc count n_max."""
    return math.exp(-math.pi * n_max / (n_max + 1))


def required_measurement_spins(epsilon: float | None, n_max: int, variant: str) -> MeasConfig:
    """Smallest configuration meeting the variant's constraints.

    cosine: gt = pi/(n_max+1), N_M = ceil(log eps / log cos^2(gt/2)).
    sinc: N_M = n_max, gt = 2 pi/(n_max+1) (exact zeros; ``epsilon`` unused).
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if variant == "sinc":
        if epsilon is not None and not 0 < epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        return MeasConfig("sinc", n_max, 2 * math.pi / (n_max + 1), n_max, epsilon)
    if variant != "cosine":
        raise ValueError(f"unknown variant {variant!r}")
    if epsilon is None or not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    gt = math.pi / (n_max + 1)
    n_spins = max(1, math.ceil(math.log(epsilon) / math.log(math.cos(gt / 2) ** 2) - 1e-12))
    while math.cos(gt / 2) ** (2 * n_spins) > epsilon:
        n_spins += 1
    return MeasConfig("cosine", n_spins, gt, n_max, epsilon)


def _finish(varphi: np.ndarray, out: np.ndarray):
    p_eta = float(np.sum(np.abs(out) ** 2))
    if p_eta < P_FLOOR:
        raise ValueError(f"projection success probability {p_eta:.3e} below floor")
    p0 = float(abs(out[0]) ** 2 / p_eta)
    return out, p_eta, p0


def apply_projection(varphi, cfg: MeasConfig):
    """Weighted amplitudes, success probability P_eta and vacuum fraction P_0."""
    v = np.asarray(varphi, dtype=complex).reshape(-1)
    if abs(np.linalg.norm(v) - 1) > 1e-10:
        raise ValueError("varphi must be normalized")
    out = v * amplitude_weight(cfg.variant, np.arange(v.size), cfg.N_M, cfg.gt)
    return _finish(v, out)


MAX_BRUTE_SPINS = 20
MAX_BRUTE_NMAX = 50
MAX_LITERAL_SPINS = 10


def _phases(gt: float, n: np.ndarray, sz: np.ndarray) -> np.ndarray:
    # <s| exp(-i gt n S^z) |s> for each (n, S^z eigenvalue)
    return np.exp(-1j * gt * np.outer(n, sz))


def brute_force_projection(varphi, cfg: MeasConfig, literal: bool = False):
    """Evaluate <ref| exp(-i gt S^z n) |varphi>|ref> by summing over spin configurations.

    cosine: binomially weighted S^z sectors of the x-polarized product state,
    or with ``literal=True`` the full 2^N_M product-basis sum (N_M <= 10).
    sinc: the N_M + 1 uniform S^z levels.
    """
    v = np.asarray(varphi, dtype=complex).reshape(-1)
    n_spins = cfg.N_M
    if n_spins > MAX_BRUTE_SPINS or v.size - 1 > MAX_BRUTE_NMAX:
        raise ValueError(f"brute force limited to N_M <= {MAX_BRUTE_SPINS}, n_max <= {MAX_BRUTE_NMAX}")
    n = np.arange(v.size)
    if cfg.variant == "sinc":
        sz = np.arange(n_spins + 1) - n_spins / 2
        amp = _phases(cfg.gt, n, sz).sum(axis=1) / (n_spins + 1)
    elif literal:
        if n_spins > MAX_LITERAL_SPINS:
            raise ValueError(f"literal sum limited to N_M <= {MAX_LITERAL_SPINS}")
        amp = np.zeros(v.size, dtype=complex)
        for bits in itertools.product((0, 1), repeat=n_spins):
            sz = sum(2 * s - 1 for s in bits) / 2
            amp += np.exp(-1j * cfg.gt * n * sz)
        amp /= 2 ** n_spins
    else:
        k = np.arange(n_spins + 1)
        w = comb(n_spins, k, exact=False) / 2.0 ** n_spins
        amp = _phases(cfg.gt, n, k - n_spins / 2) @ w
    return _finish(v, v * amp)
