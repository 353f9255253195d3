"""Seeded random states, unitaries and isometries."""

from __future__ import annotations

import os

import numpy as np

from ..errors import BadRank, DimMismatch
from .states import IsometryMap, MultipartiteState, as_dims


def default_seed() -> int:
    return int(os.environ.get("QKI_SEED", "0"))


def rng(seed: int | None = None) -> np.random.Generator:
    return np.random.default_rng(default_seed() if seed is None else seed)


def _ginibre(gen: np.random.Generator, shape) -> np.ndarray:
    return (gen.standard_normal(shape) + 1j * gen.standard_normal(shape)) / np.sqrt(2)


def haar_isometry(gen: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    if cols > rows:
        raise DimMismatch(f"no isometry from dimension {cols} into {rows}")
    q, r = np.linalg.qr(_ginibre(gen, (rows, cols)))
    ph = np.diag(r).copy()
    ph[ph == 0] = 1
    return q * (ph / np.abs(ph))


def random_unitary(dim: int, seed: int | None = None) -> np.ndarray:
    return haar_isometry(rng(seed), dim, dim)


def random_density(gen: np.random.Generator, dim: int, rank: int | None = None) -> np.ndarray:
    """Partial trace of a Haar-random pure state on C^dim (x) C^rank."""
    rank = dim if rank is None else rank
    if not 1 <= rank <= dim:
        raise BadRank(f"rank {rank} outside [1, {dim}]")
    g = _ginibre(gen, (dim, rank))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


def random_state(dims, rank: int | None = None, seed: int | None = None) -> MultipartiteState:
    dims = as_dims(dims)
    rank = dims.total if rank is None else rank
    if not 1 <= rank <= dims.total:
        raise BadRank(f"rank {rank} outside [1, {dims.total}]")
    return MultipartiteState(dims, random_density(rng(seed), dims.total, rank))


def random_isometry(in_dims, out_dims, seed: int | None = None) -> IsometryMap:
    in_dims, out_dims = as_dims(in_dims), as_dims(out_dims)
    if out_dims.total < in_dims.total:
        raise DimMismatch(f"output dimension {out_dims.total} < input dimension {in_dims.total}")
    return IsometryMap(in_dims, out_dims, haar_isometry(rng(seed), out_dims.total, in_dims.total))
