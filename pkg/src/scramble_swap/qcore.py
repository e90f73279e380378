"""Tensor-product linear algebra over labeled finite-dimensional factors.

Index layout is row-major with the first declared factor varying slowest,
so ``np.kron(x_A, x_B)`` is the amplitude vector of ``|x_A>|x_B>`` on the
space ``[A, B]``.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TOL_NORM = 1e-10
TOL_HERM = 1e-10
TOL_UNITARY = 1e-9
TOL_PSD = 1e-9

KINDS = ("general", "hermitian", "unitary", "density")


class QCoreError(ValueError):
    """Raised on malformed spaces, states or operators."""


@dataclass(frozen=True)
class CompositeSpace:
    """Ordered list of labeled tensor factors."""

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        facs = tuple((str(lab), int(d)) for lab, d in self.factors)
        if not facs:
            raise QCoreError("a space needs at least one factor")
        labels = [lab for lab, _ in facs]
        if len(set(labels)) != len(labels):
            raise QCoreError(f"duplicate factor labels: {labels}")
        if any(d < 1 for _, d in facs):
            raise QCoreError(f"factor dimensions must be >= 1: {facs}")
        object.__setattr__(self, "factors", facs)

    @classmethod
    def of(cls, *pairs: tuple[str, int]) -> "CompositeSpace":
        return cls(tuple(pairs))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.factors)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise QCoreError(f"unknown factor label {label!r}") from None

    def dim(self, label: str) -> int:
        return self.dims[self.index(label)]

    def subspace(self, labels: Iterable[str]) -> "CompositeSpace":
        """Factors named in ``labels``, kept in this space's order."""
        want = set(labels)
        for lab in want:
            self.index(lab)
        return CompositeSpace(tuple(f for f in self.factors if f[0] in want))

    def relabel(self, mapping: dict[str, str]) -> "CompositeSpace":
        return CompositeSpace(tuple((mapping.get(lab, lab), d) for lab, d in self.factors))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QState:
    """Pure state vector. ``subnormalized`` marks postselected branches."""

    space: CompositeSpace
    amplitudes: np.ndarray
    subnormalized: bool = False

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amp.size != self.space.total_dim:
            raise QCoreError(f"state length {amp.size} != space dim {self.space.total_dim}")
        nrm = np.linalg.norm(amp)
        if self.subnormalized:
            if nrm > 1 + TOL_NORM:
                raise QCoreError(f"subnormalized state has norm {nrm} > 1")
        elif abs(nrm - 1) > TOL_NORM:
            raise QCoreError(f"state norm {nrm} differs from 1 (flag subnormalized if intended)")
        object.__setattr__(self, "amplitudes", _frozen(amp))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def density(self) -> "QOperator":
        v = self.amplitudes
        return QOperator(self.space, np.outer(v, v.conj()), "density", subnormalized=self.subnormalized)

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per factor."""
        return self.amplitudes.reshape(self.space.dims)


@dataclass(frozen=True, eq=False)
class QOperator:
    """Dense operator on a composite space with a declared kind."""

    space: CompositeSpace
    matrix: np.ndarray
    kind: str = "general"
    subnormalized: bool = False
    _eig: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise QCoreError(f"unknown operator kind {self.kind!r}")
        m = np.asarray(self.matrix)
        if not np.iscomplexobj(m) and not np.issubdtype(m.dtype, np.floating):
            m = m.astype(float)
        n = self.space.total_dim
        if m.shape != (n, n):
            raise QCoreError(f"matrix shape {m.shape} != ({n}, {n})")
        object.__setattr__(self, "matrix", _frozen(m))
        _check_kind(m, self.kind, self.subnormalized)

    @property
    def H(self) -> "QOperator":
        kind = "general" if self.kind == "general" else self.kind
        return QOperator(self.space, self.matrix.conj().T, kind, self.subnormalized)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def __matmul__(self, other):
        if isinstance(other, QState):
            _same_space(self.space, other.space)
            return self.matrix @ other.amplitudes
        _same_space(self.space, other.space)
        return QOperator(self.space, self.matrix @ other.matrix)

    def tensor(self) -> np.ndarray:
        """Matrix reshaped to (out factors..., in factors...)."""
        return self.matrix.reshape(self.space.dims * 2)

    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        """Cached Hermitian eigendecomposition (write-once, thread-safe)."""
        if self.kind not in ("hermitian", "density"):
            raise QCoreError("eigensystem requires a Hermitian operator")
        with self._lock:
            if "eh" not in self._eig:
                e, v = np.linalg.eigh(self.matrix)
                e.setflags(write=False)
                v.setflags(write=False)
                self._eig["eh"] = (e, v)
        return self._eig["eh"]


def _check_kind(m: np.ndarray, kind: str, subnormalized: bool) -> None:
    if kind == "general":
        return
    if kind == "unitary":
        err = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
        if err > TOL_UNITARY:
            raise QCoreError(f"not unitary: max|U^dag U - I| = {err:.3e}")
        return
    herr = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if herr > TOL_HERM:
        raise QCoreError(f"not Hermitian: max|M - M^dag| = {herr:.3e}")
    if kind == "density":
        ev = np.linalg.eigvalsh(m)
        if ev.size and ev[0] < -TOL_PSD:
            raise QCoreError(f"density has negative eigenvalue {ev[0]:.3e}")
        tr = float(np.trace(m).real)
        if tr <= 0 or tr > 1 + TOL_NORM:
            raise QCoreError(f"density trace {tr} outside (0, 1]")
        if not subnormalized and abs(tr - 1) > TOL_NORM:
            raise QCoreError(f"density trace {tr} != 1 (flag subnormalized if intended)")


def _same_space(a: CompositeSpace, b: CompositeSpace) -> None:
    if a != b:
        raise QCoreError(f"space mismatch: {a.factors} vs {b.factors}")


def tensor_product(parts: Sequence[QState | QOperator]):
    """Kronecker product in declared order; factor lists are concatenated."""
    if not parts:
        raise QCoreError("tensor_product needs at least one part")
    if all(isinstance(p, QState) for p in parts):
        amp = parts[0].amplitudes
        for p in parts[1:]:
            amp = np.kron(amp, p.amplitudes)
        sub = any(p.subnormalized for p in parts)
        return QState(CompositeSpace(sum((p.space.factors for p in parts), ())), amp, sub)
    if all(isinstance(p, QOperator) for p in parts):
        m = parts[0].matrix
        for p in parts[1:]:
            m = np.kron(m, p.matrix)
        kinds = {p.kind for p in parts}
        kind = kinds.pop() if len(kinds) == 1 else "general"
        sub = any(p.subnormalized for p in parts)
        return QOperator(CompositeSpace(sum((p.space.factors for p in parts), ())), m, kind, sub)
    raise QCoreError("cannot mix states and operators in tensor_product")


def permute_operator(op: QOperator, order: Sequence[str]) -> QOperator:
    """Reorder the factors of ``op`` to ``order`` (a permutation of its labels)."""
    sp = op.space
    if sorted(order) != sorted(sp.labels):
        raise QCoreError(f"{order} is not a permutation of {sp.labels}")
    perm = [sp.index(lab) for lab in order]
    k = len(perm)
    t = op.tensor().transpose(perm + [p + k for p in perm])
    new = CompositeSpace(tuple(sp.factors[p] for p in perm))
    return QOperator(new, t.reshape(new.total_dim, new.total_dim), op.kind, op.subnormalized)


def embed(op: QOperator, target: CompositeSpace) -> QOperator:
    """Extend ``op`` by the identity on the rest of ``target``."""
    for lab, d in op.space.factors:
        if target.dim(lab) != d:
            raise QCoreError(f"dimension mismatch for {lab!r}: {d} vs {target.dim(lab)}")
    rest = [f for f in target.factors if f[0] not in op.space.labels]
    m = op.matrix
    if rest:
        m = np.kron(m, np.eye(int(np.prod([d for _, d in rest]))))
    full = QOperator(CompositeSpace(op.space.factors + tuple(rest)), m, op.kind, op.subnormalized)
    return permute_operator(full, target.labels)


def partial_trace(rho: QOperator, keep: Iterable[str]) -> QOperator:
    """Trace out every factor not listed in ``keep``."""
    keep = set(keep)
    if not keep:
        raise QCoreError("keep must name at least one factor")
    sp = rho.space
    sub = sp.subspace(keep)
    k = len(sp.dims)
    t = rho.tensor()
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows = list(letters[:k])
    cols = list(letters[k:2 * k])
    for i, lab in enumerate(sp.labels):
        if lab not in keep:
            cols[i] = rows[i]
    out = [rows[i] for i, lab in enumerate(sp.labels) if lab in keep]
    out += [cols[i] for i, lab in enumerate(sp.labels) if lab in keep]
    red = np.einsum("".join(rows) + "".join(cols) + "->" + "".join(out), t)
    red = red.reshape(sub.total_dim, sub.total_dim)
    kind = rho.kind if rho.kind in ("density", "hermitian") else "general"
    return QOperator(sub, red, kind, rho.subnormalized)


def partial_transpose(op: QOperator, subsystem: str) -> QOperator:
    """Transpose only the indices of ``subsystem``."""
    sp = op.space
    i = sp.index(subsystem)
    k = len(sp.dims)
    axes = list(range(2 * k))
    axes[i], axes[i + k] = axes[i + k], axes[i]
    m = op.tensor().transpose(axes).reshape(sp.total_dim, sp.total_dim)
    kind = "hermitian" if op.kind in ("hermitian", "density") else "general"
    try:
        return QOperator(sp, m, kind)
    except QCoreError:
        return QOperator(sp, m, "general")


def evolve(H: QOperator, t: float, psi: QState) -> QState:
    """``exp(-iHt)|psi>`` via the operator's cached eigendecomposition."""
    if H.kind != "hermitian":
        raise QCoreError("evolve requires kind='hermitian'")
    _same_space(H.space, psi.space)
    e, v = H.eigensystem()
    amp = v @ (np.exp(-1j * e * t) * (v.conj().T @ psi.amplitudes))
    return QState(psi.space, amp, psi.subnormalized)


def purity(rho: QOperator) -> float:
    """Tr(rho^2) of a normalized density operator."""
    if rho.kind != "density":
        raise QCoreError("purity requires a density operator")
    if rho.subnormalized and abs(rho.trace().real - 1) > TOL_NORM:
        raise QCoreError("normalize the density operator before taking its purity")
    m = rho.matrix
    return float(np.real(np.vdot(m.conj().T, m)))


def normalize(rho: QOperator) -> tuple[QOperator, float]:
    """Return (rho / Tr rho, Tr rho)."""
    tr = float(rho.trace().real)
    if tr <= 0:
        raise QCoreError("cannot normalize an operator with non-positive trace")
    return QOperator(rho.space, rho.matrix / tr, rho.kind), tr


def swap_operator(dim: int) -> np.ndarray:
    """Matrix exchanging two factors of equal dimension."""
    s = np.zeros((dim * dim, dim * dim))
    for i in range(dim):
        for j in range(dim):
            s[j * dim + i, i * dim + j] = 1.0
    return s


def dump_matrix(op: QOperator, path: str | Path) -> None:
    """Write ``op`` as text: a header line, then one ``re,im`` pair per entry, column-major."""
    labels = ",".join(f"{lab}:{d}" for lab, d in op.space.factors)
    n = op.space.total_dim
    flat = np.asarray(op.matrix, dtype=complex).reshape(-1, order="F")
    lines = [f"# shape={n}x{n} factors={labels} kind={op.kind} order=column-major"]
    lines += [f"{z.real:.17g},{z.imag:.17g}" for z in flat]
    Path(path).write_text("\n".join(lines) + "\n")


def load_matrix(path: str | Path) -> QOperator:
    text = Path(path).read_text().splitlines()
    head = dict(tok.split("=", 1) for tok in text[0].lstrip("# ").split())
    facs = tuple((lab, int(d)) for lab, d in (f.split(":") for f in head["factors"].split(",")))
    n = int(head["shape"].split("x")[0])
    vals = np.array([complex(float(a), float(b)) for a, b in (ln.split(",") for ln in text[1:n * n + 1])])
    return QOperator(CompositeSpace(facs), vals.reshape((n, n), order="F"), head["kind"])
