"""Sources with a prescribed block structure, and the clean classical-quantum source."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import DimMismatch, IrreducibilityFailure
from ..qcore.povm import make_ic_povm
from ..qcore.rand import haar_isometry, random_density, rng
from ..qcore.states import MultipartiteState
from .algebra import generate_algebra, measure_reference
from .decomposition import KIDecomposition, build_decomposition

MAX_RESAMPLES = 16


def _q_algebra_dim(rho_qr: np.ndarray, d: int, dim_r: int) -> int:
    """Dimension of the algebra generated by Q-states steered from R."""
    s = MultipartiteState([("Q", d), ("R", dim_r)], rho_qr, check=False)
    alg = generate_algebra(measure_reference(s, make_ic_povm(dim_r), "Q", "R"))
    # a rank-deficient Q marginal cannot carry the full algebra on Q
    return alg.size if alg.dim == d else -1


def synth_ki_state(
    blocks: Sequence[tuple[float, int, int]],
    dim_r: int,
    seed: int,
    *,
    dim_a: int | None = None,
    qr_rank: int | None = None,
    omegas: Sequence[np.ndarray] | None = None,
    rho_qrs: Sequence[np.ndarray] | None = None,
) -> tuple[MultipartiteState, KIDecomposition]:
    """Random source on A (x) R with blocks (p_j, d_j, m_j), plus its exact decomposition.

    omega_j is full rank; rho_j^{QR} has rank ``qr_rank`` (default d_j*dim_r,
    capped) and is resampled until the steered Q-states generate all of
    M_{d_j}.  The direct sum of the blocks is embedded into A by a random
    isometry (|A| defaults to sum_j d_j m_j).
    """
    ps = np.array([b[0] for b in blocks], dtype=float)
    if abs(ps.sum() - 1) > 1e-10 or np.any(ps <= 0):
        raise ValueError("block probabilities must be positive and sum to 1")
    gen = rng(seed)
    total = sum(d * m for _, d, m in blocks)
    dim_a = total if dim_a is None else dim_a
    if dim_a < total:
        raise DimMismatch(f"|A| = {dim_a} cannot hold blocks of total dimension {total}")

    parts = []
    for j, (p, d, m) in enumerate(blocks):
        omega = random_density(gen, m) if omegas is None else np.asarray(omegas[j], dtype=complex)
        if rho_qrs is not None:
            rho_qr = np.asarray(rho_qrs[j], dtype=complex)
        else:
            rank = min(d * dim_r, qr_rank or d * dim_r)
            for _ in range(MAX_RESAMPLES):
                rho_qr = random_density(gen, d * dim_r, rank)
                if d == 1 or _q_algebra_dim(rho_qr, d, dim_r) == d * d:
                    break
            else:
                raise IrreducibilityFailure(
                    f"block {j}: no irreducible Q-family after {MAX_RESAMPLES} samples (|R| = {dim_r})"
                )
        parts.append((p, d, m, omega, rho_qr))

    iso = haar_isometry(gen, dim_a, total)
    dr = dim_r
    rho = np.zeros((dim_a * dr, dim_a * dr), dtype=complex)
    maps, dims = [], []
    offset = 0
    for p, d, m, omega, rho_qr in parts:
        cols = iso[:, offset : offset + d * m]  # N-major local basis inside A
        local = cols.conj().T
        full = np.kron(cols, np.eye(dr))
        rho += p * full @ np.kron(omega, rho_qr) @ full.conj().T
        maps.append(local)
        dims.append((d, m))
        offset += d * m
    rho = (rho + rho.conj().T) / 2
    state = MultipartiteState([("A", dim_a), ("R", dr)], rho)
    truth = build_decomposition(state, maps, dims, seed=seed)
    return state, truth


def build_clean_source(ki: KIDecomposition) -> MultipartiteState:
    """sum_j p_j |j><j|^C (x) |psi_j><psi_j|^{QRR'} (x) |j><j|^{C'} with psi_j purifying rho_j^{QR}."""
    dc, _, dq = ki.dims_cnq
    dr = ki.dim_r
    vecs = []
    for j in range(ki.n_blocks):
        w, v = np.linalg.eigh(ki.padded_rho_qr(j))
        keep = w > 1e-12
        vecs.append((w[keep], v[:, keep]))
    dp = max(1, max(len(w) for w, _ in vecs))
    dim = dc * dq * dr * dp * dc
    m = np.zeros((dim, dim), dtype=complex)
    for j, (w, v) in enumerate(vecs):
        psi = np.zeros((dq * dr, dp), dtype=complex)
        psi[:, : len(w)] = v * np.sqrt(w)
        psi = psi.reshape(-1)
        cj = np.zeros(dc)
        cj[j] = 1
        vec = np.kron(np.kron(cj, psi), cj)
        m += ki.blocks[j].p * np.outer(vec, vec.conj())
    dims = [("C", dc), ("Q", dq), ("R", dr), ("R'", dp), ("C'", dc)]
    return MultipartiteState(dims, (m + m.conj().T) / 2)
