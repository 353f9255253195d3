"""States stored as a factor Y with rho = Y Y^dag.

Reduced-state spectra come from singular values of a reshaped factor, so the
cost is set by the smaller side of the cut instead of the full dimension.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import DimMismatch, DuplicateLabel, UnknownLabel
from .measures import entropy_of_spectrum
from .states import MultipartiteState, SystemDims


class FactoredState:
    """Labelled tensor ``Y[d_1, ..., d_k, r]`` representing ``Y Y^dag``."""

    def __init__(self, labels: Sequence[str], tensor: np.ndarray):
        labels = list(labels)
        if len(set(labels)) != len(labels):
            raise DuplicateLabel(f"duplicate labels {labels}")
        if tensor.ndim != len(labels) + 1:
            raise DimMismatch("tensor needs one axis per label plus a rank axis")
        self.labels = labels
        self.tensor = tensor

    @classmethod
    def from_state(cls, s: MultipartiteState, tol: float = 1e-13) -> "FactoredState":
        w, v = np.linalg.eigh((s.matrix + s.matrix.conj().T) / 2)
        keep = w > tol
        y = v[:, keep] * np.sqrt(w[keep])
        if y.shape[1] == 0:
            y = np.zeros((s.dims.total, 1), dtype=complex)
        return cls(s.labels, y.reshape(tuple(s.dims.dims) + (y.shape[1],)))

    @property
    def dims(self) -> dict[str, int]:
        return dict(zip(self.labels, self.tensor.shape[:-1]))

    @property
    def rank_dim(self) -> int:
        return self.tensor.shape[-1]

    def _axes(self, labels) -> list[int]:
        try:
            return [self.labels.index(lab) for lab in labels]
        except ValueError:
            raise UnknownLabel(f"unknown label in {list(labels)}; have {self.labels}") from None

    def matrix_cut(self, labels: Sequence[str]) -> np.ndarray:
        """Factor reshaped to (dim(labels), everything else)."""
        ax = self._axes(labels)
        rest = [i for i in range(self.tensor.ndim) if i not in ax]
        t = self.tensor.transpose(ax + rest)
        d = int(np.prod([self.tensor.shape[i] for i in ax], dtype=np.int64))
        return t.reshape(d, -1)

    def spectrum(self, labels: Sequence[str]) -> np.ndarray:
        labels = list(labels)
        if not labels:
            return np.array([np.vdot(self.tensor, self.tensor).real])
        m = self.matrix_cut(labels)
        # eigenvalues of the smaller Gram matrix are the reduced spectrum
        gram = m @ m.conj().T if m.shape[0] <= m.shape[1] else m.conj().T @ m
        return np.clip(np.linalg.eigvalsh((gram + gram.conj().T) / 2), 0.0, None)

    def entropy(self, labels: Sequence[str]) -> float:
        if not list(labels):
            return 0.0
        return entropy_of_spectrum(self.spectrum(labels))

    def trace(self) -> float:
        return float(np.vdot(self.tensor, self.tensor).real)

    def apply_isometry(
        self, matrix: np.ndarray, on: Sequence[str], out: Sequence[tuple[str, int]]
    ) -> "FactoredState":
        """Apply ``matrix`` (out_total x in_total) to ``on``; outputs go first in place of ``on[0]``."""
        on = list(on)
        ax = self._axes(on)
        rest = [i for i in range(self.tensor.ndim) if i not in ax]
        rest_labels = [self.labels[i] for i in rest[:-1]]
        out_labels = [lab for lab, _ in out]
        if set(out_labels) & set(rest_labels):
            raise DuplicateLabel("output labels collide with untouched subsystems")
        din = int(np.prod([self.tensor.shape[i] for i in ax], dtype=np.int64))
        if matrix.shape[1] != din:
            raise DimMismatch(f"map input dim {matrix.shape[1]} != {din}")
        t = self.tensor.transpose(ax + rest)
        rest_shape = t.shape[len(ax):]
        y = matrix @ t.reshape(din, -1)
        y = y.reshape(tuple(d for _, d in out) + rest_shape)
        labels = out_labels + rest_labels
        pos = self.labels.index(on[0])
        before = [lab for lab in self.labels[:pos] if lab not in on]
        order = before + out_labels + [lab for lab in rest_labels if lab not in before]
        res = FactoredState(labels, y)
        return res.permute(order)

    def permute(self, order: Sequence[str]) -> "FactoredState":
        ax = self._axes(order)
        if len(ax) != len(self.labels):
            raise UnknownLabel("order must list every label")
        return FactoredState(list(order), self.tensor.transpose(ax + [self.tensor.ndim - 1]))

    def to_state(self, check: bool = False) -> MultipartiteState:
        d = int(np.prod(self.tensor.shape[:-1], dtype=np.int64))
        y = self.tensor.reshape(d, -1)
        dims = SystemDims(list(zip(self.labels, self.tensor.shape[:-1])))
        return MultipartiteState(dims, y @ y.conj().T, check=check)

    def kron(self, other: "FactoredState") -> "FactoredState":
        a, b = self.tensor, other.tensor
        na, nb = a.ndim - 1, b.ndim - 1
        t = np.tensordot(a, b, axes=0)  # axes: a..., ra, b..., rb
        perm = list(range(na)) + list(range(na + 1, na + 1 + nb)) + [na, na + 1 + nb]
        t = t.transpose(perm)
        t = t.reshape(t.shape[: na + nb] + (a.shape[-1] * b.shape[-1],))
        return FactoredState(self.labels + other.labels, t)
