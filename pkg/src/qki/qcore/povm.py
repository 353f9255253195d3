"""POVMs, in particular informationally complete ones."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvariantViolation
from .states import SystemDims, as_dims


@dataclass(frozen=True)
class Povm:
    dims: SystemDims
    elements: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", as_dims(self.dims))
        els = tuple(np.array(e, dtype=complex) for e in self.elements)
        d = self.dims.total
        total = np.zeros((d, d), dtype=complex)
        for e in els:
            if e.shape != (d, d):
                raise InvariantViolation(f"POVM element of shape {e.shape}, expected {(d, d)}")
            if np.max(np.abs(e - e.conj().T)) > 1e-10 or np.linalg.eigvalsh(e)[0] < -1e-10:
                raise InvariantViolation("POVM element is not PSD")
            e.setflags(write=False)
            total += e
        err = np.max(np.abs(total - np.eye(d)))
        if err > 1e-10:
            raise InvariantViolation(f"POVM elements sum to identity only up to {err:.3e}")
        object.__setattr__(self, "elements", els)

    def __len__(self):
        return len(self.elements)

    def gram_rank(self, tol: float = 1e-9) -> int:
        """Dimension of the real span of the elements (d^2 iff informationally complete)."""
        vecs = np.array([e.ravel() for e in self.elements])
        g = (vecs.conj() @ vecs.T).real
        w = np.linalg.eigvalsh(g)
        return int(np.sum(w > tol * max(1.0, w[-1])))


def make_ic_povm(dim: int, unitary: np.ndarray | None = None, label: str = "R") -> Povm:
    """d^2-outcome informationally complete POVM.

    Frame: |r>, (|r>+|r'>)/sqrt2 and (|r>+i|r'>)/sqrt2 for r < r', rotated by
    ``unitary`` if given, then symmetrised as S^{-1/2} E_y S^{-1/2}.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    basis = np.eye(dim, dtype=complex)
    vecs = [basis[r] for r in range(dim)]
    for r in range(dim):
        for s in range(r + 1, dim):
            vecs.append((basis[r] + basis[s]) / np.sqrt(2))
            vecs.append((basis[r] + 1j * basis[s]) / np.sqrt(2))
    if unitary is not None:
        vecs = [unitary @ v for v in vecs]
    frame = [np.outer(v, v.conj()) for v in vecs]
    s = sum(frame)
    w, v = np.linalg.eigh(s)
    s_inv_half = (v / np.sqrt(w)) @ v.conj().T
    els = [s_inv_half @ e @ s_inv_half for e in frame]
    els = [(e + e.conj().T) / 2 for e in els]
    # absorb the residual rounding into the first element so the sum is exact
    els[0] = els[0] + (np.eye(dim) - sum(els))
    return Povm(SystemDims([(label, dim)]), tuple(els))


def random_ic_povm(dim: int, seed: int, label: str = "R") -> Povm:
    from .rand import random_unitary

    return make_ic_povm(dim, random_unitary(dim, seed), label=label)


def projective_povm(dim: int, label: str = "R") -> Povm:
    els = []
    for r in range(dim):
        e = np.zeros((dim, dim), dtype=complex)
        e[r, r] = 1
        els.append(e)
    return Povm(SystemDims([(label, dim)]), tuple(els))
