"""Labelled multipartite states, isometries and channels.

Matrices are dense and indexed row-major over the tensor basis, the first
label being the most significant factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import DimMismatch, DuplicateLabel, InvariantViolation, UnknownLabel

TOL_HERM = 1e-10
TOL_PSD = 1e-10
TOL_TRACE = 1e-10
TOL_ISO = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SystemDims:
    """Ordered (label, dim) pairs."""

    items: tuple[tuple[str, int], ...]

    def __init__(self, items: Iterable[tuple[str, int]] | "SystemDims"):
        if isinstance(items, SystemDims):
            items = items.items
        items = tuple((str(lab), int(d)) for lab, d in items)
        labels = [lab for lab, _ in items]
        if len(set(labels)) != len(labels):
            raise DuplicateLabel(f"duplicate labels in {labels}")
        for lab, d in items:
            if d < 1:
                raise InvariantViolation(f"dimension of {lab!r} must be >= 1, got {d}")
        object.__setattr__(self, "items", items)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.items)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.items)

    @property
    def total(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.items else 1

    def dim(self, label: str) -> int:
        for lab, d in self.items:
            if lab == label:
                return d
        raise UnknownLabel(f"unknown label {label!r}; have {self.labels}")

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownLabel(f"unknown label {label!r}; have {self.labels}") from None

    def sub(self, labels: Sequence[str]) -> "SystemDims":
        return SystemDims([(lab, self.dim(lab)) for lab in labels])

    def __add__(self, other: "SystemDims") -> "SystemDims":
        clash = set(self.labels) & set(other.labels)
        if clash:
            raise DuplicateLabel(f"labels {sorted(clash)} appear on both sides")
        return SystemDims(self.items + other.items)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def to_list(self) -> list:
        return [[lab, d] for lab, d in self.items]


def as_dims(d) -> SystemDims:
    if isinstance(d, SystemDims):
        return d
    if isinstance(d, int):
        return SystemDims([("A", d)])
    return SystemDims(d)


class MultipartiteState:
    """Density matrix on labelled subsystems.

    Instances are immutable; every operation returns a new state.
    """

    __slots__ = ("dims", "matrix")

    def __init__(self, dims, matrix, check: bool = True):
        dims = as_dims(dims)
        matrix = _frozen(matrix)
        if matrix.shape != (dims.total, dims.total):
            raise DimMismatch(f"matrix shape {matrix.shape} does not match dims {dims.items}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "matrix", matrix)
        if check:
            self.validate()

    def __setattr__(self, name, value):
        raise AttributeError("MultipartiteState is immutable")

    def validate(self, tol: float = TOL_HERM) -> None:
        m = self.matrix
        herm = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if herm > tol:
            raise InvariantViolation(f"matrix is not Hermitian (max |M - M^dag| = {herm:.3e})")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TOL_TRACE:
            raise InvariantViolation(f"trace is {tr!r}, expected 1")
        lam_min = np.linalg.eigvalsh((m + m.conj().T) / 2)[0]
        if lam_min < -TOL_PSD:
            raise InvariantViolation(f"matrix is not PSD (min eigenvalue {lam_min:.3e})")

    @property
    def labels(self) -> tuple[str, ...]:
        return self.dims.labels

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh((self.matrix + self.matrix.conj().T) / 2)

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def relabel(self, mapping: dict[str, str]) -> "MultipartiteState":
        new = SystemDims([(mapping.get(lab, lab), d) for lab, d in self.dims])
        return MultipartiteState(new, self.matrix, check=False)

    def __repr__(self):
        return f"MultipartiteState({self.dims.items})"


def pure_state(dims, vec) -> MultipartiteState:
    vec = np.asarray(vec, dtype=complex).ravel()
    vec = vec / np.linalg.norm(vec)
    return MultipartiteState(dims, np.outer(vec, vec.conj()))


def maximally_mixed(dims) -> MultipartiteState:
    dims = as_dims(dims)
    return MultipartiteState(dims, np.eye(dims.total) / dims.total)


def bell_state(a: str = "A", r: str = "R") -> MultipartiteState:
    return pure_state([(a, 2), (r, 2)], [1, 0, 0, 1])


@dataclass(frozen=True)
class IsometryMap:
    in_dims: SystemDims
    out_dims: SystemDims
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "in_dims", as_dims(self.in_dims))
        object.__setattr__(self, "out_dims", as_dims(self.out_dims))
        m = _frozen(self.matrix)
        object.__setattr__(self, "matrix", m)
        if m.shape != (self.out_dims.total, self.in_dims.total):
            raise DimMismatch(
                f"isometry shape {m.shape} != ({self.out_dims.total}, {self.in_dims.total})"
            )
        err = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[1]))) if m.size else 0.0
        if err > TOL_ISO * max(1, m.shape[1]):
            raise InvariantViolation(f"U^dag U deviates from identity by {err:.3e}")

    def adjoint_channel(self) -> "QuantumChannel":
        """The map X -> U^dag X U completed to a trace-preserving channel."""
        u = self.matrix
        proj = np.eye(u.shape[0]) - u @ u.conj().T
        w, v = np.linalg.eigh((proj + proj.conj().T) / 2)
        kraus = [u.conj().T]
        for k in np.nonzero(w > 0.5)[0]:
            junk = np.zeros((u.shape[1], u.shape[0]), dtype=complex)
            junk[0] = v[:, k].conj()
            kraus.append(junk)
        return QuantumChannel(self.out_dims, self.in_dims, kraus)

    def as_channel(self) -> "QuantumChannel":
        return QuantumChannel(self.in_dims, self.out_dims, [self.matrix])


class QuantumChannel:
    """CPTP map given by Kraus operators."""

    __slots__ = ("in_dims", "out_dims", "kraus")

    def __init__(self, in_dims, out_dims, kraus, check: bool = True):
        in_dims, out_dims = as_dims(in_dims), as_dims(out_dims)
        kraus = tuple(_frozen(k) for k in kraus)
        if not kraus:
            raise InvariantViolation("a channel needs at least one Kraus operator")
        for k in kraus:
            if k.shape != (out_dims.total, in_dims.total):
                raise DimMismatch(f"Kraus shape {k.shape} != ({out_dims.total}, {in_dims.total})")
        object.__setattr__(self, "in_dims", in_dims)
        object.__setattr__(self, "out_dims", out_dims)
        object.__setattr__(self, "kraus", kraus)
        if check:
            s = sum(k.conj().T @ k for k in kraus)
            err = np.max(np.abs(s - np.eye(in_dims.total)))
            if err > TOL_ISO * max(1, in_dims.total):
                raise InvariantViolation(f"sum K^dag K deviates from identity by {err:.3e}")

    def __setattr__(self, name, value):
        raise AttributeError("QuantumChannel is immutable")

    def stinespring(self, env_label: str = "E") -> IsometryMap:
        """Isometric extension V = sum_k K_k (x) |k>, environment last."""
        nk = len(self.kraus)
        v = np.zeros((self.out_dims.total * nk, self.in_dims.total), dtype=complex)
        for k, op in enumerate(self.kraus):
            v[k::nk] = op
        return IsometryMap(self.in_dims, self.out_dims + SystemDims([(env_label, nk)]), v)

    @staticmethod
    def identity(dims) -> "QuantumChannel":
        dims = as_dims(dims)
        return QuantumChannel(dims, dims, [np.eye(dims.total)])

    @staticmethod
    def depolarizing(dims) -> "QuantumChannel":
        """Completely depolarising channel X -> Tr[X] 1/d."""
        dims = as_dims(dims)
        d = dims.total
        kraus = []
        for i in range(d):
            for j in range(d):
                k = np.zeros((d, d))
                k[i, j] = 1 / np.sqrt(d)
                kraus.append(k)
        return QuantumChannel(dims, dims, kraus)

    def __repr__(self):
        return f"QuantumChannel({self.in_dims.items} -> {self.out_dims.items}, {len(self.kraus)} Kraus)"


# ---------------------------------------------------------------------------
# tensor bookkeeping


def _permute_matrix(matrix: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    k = len(dims)
    if list(perm) == list(range(k)):
        return matrix
    t = matrix.reshape(tuple(dims) * 2)
    t = t.transpose(list(perm) + [p + k for p in perm])
    d = int(np.prod(dims, dtype=np.int64))
    return t.reshape(d, d)


def permute(s: MultipartiteState, order: Sequence[str]) -> MultipartiteState:
    """Reorder subsystems of ``s`` to the label order ``order``."""
    if sorted(order) != sorted(s.labels):
        raise UnknownLabel(f"order {list(order)} is not a permutation of {s.labels}")
    perm = [s.dims.index(lab) for lab in order]
    m = _permute_matrix(s.matrix, s.dims.dims, perm)
    return MultipartiteState(s.dims.sub(order), m, check=False)


def tensor(a, b):
    """Kronecker product of two states or two isometries, labels concatenated."""
    if isinstance(a, MultipartiteState) and isinstance(b, MultipartiteState):
        return MultipartiteState(a.dims + b.dims, np.kron(a.matrix, b.matrix), check=False)
    if isinstance(a, IsometryMap) and isinstance(b, IsometryMap):
        return IsometryMap(a.in_dims + b.in_dims, a.out_dims + b.out_dims, np.kron(a.matrix, b.matrix))
    raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")


def tensor_power(s: MultipartiteState, n: int, suffix: str = "{label}{i}") -> MultipartiteState:
    """n copies of ``s``, copy i relabelled by ``suffix`` (label order: copy-major)."""
    out = None
    for i in range(1, n + 1):
        c = s.relabel({lab: suffix.format(label=lab, i=i) for lab in s.labels})
        out = c if out is None else tensor(out, c)
    return out


def partial_trace(s: MultipartiteState, keep: Iterable[str]) -> MultipartiteState:
    """Reduced state on ``keep``, in the original label order."""
    keep = set(keep)
    for lab in keep:
        s.dims.index(lab)
    if keep == set(s.labels):
        return s
    kept = [lab for lab in s.labels if lab in keep]
    traced = [lab for lab in s.labels if lab not in keep]
    perm = [s.dims.index(lab) for lab in kept + traced]
    dk = s.dims.sub(kept).total if kept else 1
    dt = s.dims.sub(traced).total
    m = _permute_matrix(s.matrix, s.dims.dims, perm).reshape(dk, dt, dk, dt)
    red = np.einsum("aibi->ab", m)
    return MultipartiteState(s.dims.sub(kept), red, check=False)


def purify(s: MultipartiteState, new_label: str) -> MultipartiteState:
    """Pure state on ``s.labels + [new_label]`` whose marginal is ``s``.

    The purifying register has dimension equal to the rank of ``s``.
    """
    if new_label in s.labels:
        raise DuplicateLabel(f"label {new_label!r} already present")
    w, v = np.linalg.eigh((s.matrix + s.matrix.conj().T) / 2)
    keep = w > TOL_PSD
    w, v = w[keep], v[:, keep]
    r = max(1, int(keep.sum()))
    if keep.sum() == 0:
        raise InvariantViolation("cannot purify the zero operator")
    vec = (v * np.sqrt(w)).reshape(-1)  # sum_k sqrt(w_k) |v_k> (x) |k>
    vec = vec / np.linalg.norm(vec)
    dims = s.dims + SystemDims([(new_label, r)])
    return MultipartiteState(dims, np.outer(vec, vec.conj()), check=False)


def apply(m, s: MultipartiteState, on: Sequence[str] | None = None) -> MultipartiteState:
    """Apply an isometry or channel to the subsystems ``on`` of ``s``.

    Output subsystems are placed where the first input subsystem was.
    """
    if isinstance(m, IsometryMap):
        kraus, in_dims, out_dims = [m.matrix], m.in_dims, m.out_dims
    elif isinstance(m, QuantumChannel):
        kraus, in_dims, out_dims = m.kraus, m.in_dims, m.out_dims
    else:
        raise TypeError(f"cannot apply {type(m).__name__}")
    on = list(in_dims.labels if on is None else on)
    for lab in on:
        s.dims.index(lab)
    if [s.dims.dim(lab) for lab in on] != list(in_dims.dims):
        raise DimMismatch(f"subsystems {on} of {s.dims.items} do not match map input {in_dims.items}")
    rest = [lab for lab in s.labels if lab not in on]
    clash = set(out_dims.labels) & set(rest)
    if clash:
        raise DuplicateLabel(f"output labels {sorted(clash)} collide with untouched subsystems")
    st = permute(s, on + rest)
    dr = s.dims.sub(rest).total if rest else 1
    din = in_dims.total
    x = st.matrix.reshape(din, dr, din, dr)
    out = np.zeros((out_dims.total, dr, out_dims.total, dr), dtype=complex)
    for k in kraus:
        out += np.einsum("ai,ixjy,bj->axby", k, x, k.conj(), optimize=True)
    dout = out_dims.total * dr
    new_dims = out_dims + s.dims.sub(rest) if rest else out_dims
    res = MultipartiteState(new_dims, out.reshape(dout, dout), check=False)
    pos = s.labels.index(on[0])
    before = [lab for lab in s.labels[:pos] if lab not in on]
    order = before + list(out_dims.labels) + [lab for lab in rest if lab not in before]
    return permute(res, order)


def compose(*channels: QuantumChannel) -> QuantumChannel:
    """Channel applying ``channels[0]`` first, then ``channels[1]``, ..."""
    out = channels[0]
    for ch in channels[1:]:
        if ch.in_dims.total != out.out_dims.total:
            raise DimMismatch("channel dimensions do not chain")
        kraus = [b @ a for b in ch.kraus for a in out.kraus]
        out = QuantumChannel(out.in_dims, ch.out_dims, kraus, check=False)
    return out


def is_pure(s: MultipartiteState, tol: float = 1e-9) -> bool:
    return abs(s.purity() - 1.0) < tol
