"""Conditional-state ensembles, the *-algebra they generate, and its block structure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateCenterSplit, DimMismatch, SingularAverage, VerificationFailed
from ..qcore.povm import Povm
from ..qcore.states import MultipartiteState, permute

SUPPORT_TOL = 1e-10  # eigenvalues of the average state above this define its support
SPAN_TOL = 1e-9  # relative residual above which a candidate enlarges the span
CENTER_GAP = 1e-8  # eigenvalue separation that distinguishes central blocks
MAX_SPLIT_RETRIES = 8
# two incommensurate times so that distinct eigenvalue ratios get distinct phases
MODULAR_TIMES = (1.0, 0.5 * np.sqrt(2.0))


@dataclass(frozen=True)
class Ensemble:
    """Weights q(y) and normalized states rho_y on a common space."""

    weights: np.ndarray
    states: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not len(w) or abs(w.sum() - 1) > 1e-10 or np.any(w < 0):
            raise ValueError("ensemble weights must be nonnegative and sum to 1")
        if len(self.states) != len(w):
            raise DimMismatch("one state per weight required")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "states", tuple(np.asarray(s, dtype=complex) for s in self.states))

    @property
    def dim(self) -> int:
        return self.states[0].shape[0]

    def average(self) -> np.ndarray:
        return sum(q * s for q, s in zip(self.weights, self.states))


def measure_reference(rho_AR: MultipartiteState, povm: Povm, a: str = "A", r: str = "R") -> Ensemble:
    """Ensemble of states on ``a`` steered by measuring ``r`` with ``povm``."""
    if povm.dims.total != rho_AR.dims.dim(r):
        raise DimMismatch(f"POVM acts on dimension {povm.dims.total}, {r} has {rho_AR.dims.dim(r)}")
    s = permute(rho_AR, [a, r])
    da, dr = s.dims.dims
    t = s.matrix.reshape(da, dr, da, dr)
    weights, states = [], []
    for m in povm.elements:
        # Tr_R[rho (1 (x) M)] = sum_{r r'} rho[a r, b r'] M[r', r]
        x = np.einsum("arbs,sr->ab", t, m)
        q = np.trace(x).real
        if q < 1e-12:
            continue
        weights.append(q)
        states.append((x + x.conj().T) / (2 * q))
    w = np.array(weights)
    return Ensemble(w / w.sum(), tuple(states))


@dataclass(frozen=True)
class MatrixAlgebra:
    """Span of an orthonormal (Hilbert-Schmidt) basis of ``dim x dim`` matrices.

    ``generators`` is a small set whose commutant equals the commutant of the
    whole algebra; ``decompose_algebra`` uses it to find the center cheaply.
    When the algebra was produced by ``generate_algebra`` the matrices act on
    the support of the average state, described by ``support`` (columns are
    an orthonormal basis inside the original space) and ``average`` (the
    average state's eigenvalues in that basis).
    """

    dim: int
    basis: np.ndarray
    closed_under: frozenset = frozenset()
    generators: np.ndarray | None = None
    support: np.ndarray | None = None
    average: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.basis.shape[0]

    def contains(self, x: np.ndarray, tol: float = SPAN_TOL) -> bool:
        return _residual(self.basis.reshape(self.size, -1), x.ravel()) <= tol * max(1.0, np.linalg.norm(x))


def _residual(rows: np.ndarray, v: np.ndarray) -> float:
    if rows.shape[0] == 0:
        return float(np.linalg.norm(v))
    r = v - rows.T @ (rows.conj() @ v)
    return float(np.linalg.norm(r))


class _Span:
    """Incrementally grown orthonormal basis of vectorized matrices."""

    def __init__(self, dim: int):
        self.dim = dim
        self.rows = np.zeros((0, dim * dim), dtype=complex)

    def add(self, x: np.ndarray, tol: float = SPAN_TOL) -> bool:
        v = x.ravel().astype(complex)
        nv = np.linalg.norm(v)
        if nv == 0:
            return False
        v = v / nv
        for _ in range(2):  # twice is enough for Gram-Schmidt stability
            v = v - self.rows.T @ (self.rows.conj() @ v)
        nr = np.linalg.norm(v)
        if nr <= tol:
            return False
        self.rows = np.vstack([self.rows, v / nr])
        return True

    def matrices(self) -> np.ndarray:
        return self.rows.reshape(-1, self.dim, self.dim)


def generate_algebra(ensemble: Ensemble, tol: float = SPAN_TOL) -> MatrixAlgebra:
    """Smallest *-algebra containing the whitened ensemble and stable under rho_bar . rho_bar^-1.

    Works in the eigenbasis of rho_bar restricted to its support.  A subspace
    is invariant under X -> rho_bar X rho_bar^-1 exactly when it is invariant
    under the unitary conjugation X -> rho_bar^{it} X rho_bar^{-it} for a
    generic t, so the closure uses the latter (entrywise phases
    (lambda_a / lambda_b)^{it}); the ratio itself can exceed 1e9 and would
    amplify rounding noise into spurious directions.
    """
    avg = ensemble.average()
    lam, vec = np.linalg.eigh((avg + avg.conj().T) / 2)
    keep = lam > SUPPORT_TOL
    if not keep.any():
        raise SingularAverage("average state has empty support")
    lam, vec = lam[keep][::-1], vec[:, keep][:, ::-1]
    d = lam.size
    inv_half = 1 / np.sqrt(lam)
    log_ratio = np.log(lam)[:, None] - np.log(lam)[None, :]
    phases = [np.exp(1j * t * log_ratio) for t in MODULAR_TIMES]

    span = _Span(d)
    span.add(np.eye(d), tol)
    gens = []
    for rho in ensemble.states:
        t = inv_half[:, None] * (vec.conj().T @ rho @ vec) * inv_half[None, :]
        t = (t + t.conj().T) / 2
        gens.append(t)
        span.add(t, tol)

    done = 0
    while True:
        # new elements since the last pass still need products with everything
        start = done
        cur = span.matrices()
        done = cur.shape[0]
        grew = False
        for i in range(cur.shape[0]):
            x = cur[i]
            if i >= start:
                grew |= span.add(x.conj().T, tol)
                for ph in phases:
                    grew |= span.add(ph * x, tol)
            for k in range(cur.shape[0]):
                if i < start and k < start:
                    continue
                grew |= span.add(x @ cur[k], tol)
        if not grew:
            break

    gens.append(np.diag(lam).astype(complex))
    return MatrixAlgebra(
        dim=d,
        basis=span.matrices(),
        closed_under=frozenset({"product", "adjoint", "modular"}),
        generators=np.array(gens),
        support=vec,
        average=lam,
    )


# ---------------------------------------------------------------------------
# block structure


@dataclass(frozen=True)
class AlgebraBlock:
    """One central block: ``projector_basis`` (dim x rank) spans it, and
    ``factor`` (rank x rank) maps it onto Q (x) N with Q most significant."""

    projector_basis: np.ndarray
    factor: np.ndarray
    q_dim: int
    n_dim: int


@dataclass(frozen=True)
class BlockStructure:
    blocks: tuple
    center_dim: int
    retries: int = 0


def _herm_parts(mats: np.ndarray) -> list[np.ndarray]:
    out = []
    for x in mats:
        out.append((x + x.conj().T) / 2)
        out.append((x - x.conj().T) / 2j)
    return out


def _cluster(values: np.ndarray, gap: float) -> list[np.ndarray]:
    """Group sorted eigenvalue indices whose neighbours are closer than ``gap``."""
    groups, cur = [], [0]
    for i in range(1, len(values)):
        if values[i] - values[i - 1] > gap:
            groups.append(np.array(cur))
            cur = []
        cur.append(i)
    groups.append(np.array(cur))
    return groups


def _generic_hermitian(parts: list[np.ndarray], gen: np.random.Generator) -> np.ndarray:
    coeffs = gen.standard_normal(len(parts))
    h = sum(c * p for c, p in zip(coeffs, parts))
    h = (h + h.conj().T) / 2
    nrm = np.linalg.norm(h, 2)
    return h / nrm if nrm > 0 else h


def _null_space(m: np.ndarray, tol: float) -> np.ndarray:
    if m.shape[0] == 0:
        return np.eye(m.shape[1], dtype=complex)
    _, s, vh = np.linalg.svd(m, full_matrices=True)
    scale = max(1.0, s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol * scale))
    return vh[rank:].conj().T


def _center(alg: MatrixAlgebra, tol: float) -> np.ndarray:
    """Basis (k x d x d) of the elements of ``alg`` commuting with its generators."""
    basis = alg.basis
    gens = alg.generators if alg.generators is not None else alg.basis
    k = basis.shape[0]
    cols = []
    for i in range(k):
        b = basis[i]
        cols.append(np.concatenate([(b @ g - g @ b).ravel() for g in gens]))
    lin = np.array(cols).T
    null = _null_space(lin, tol)
    return np.einsum("ik,ixy->kxy", null, basis)


def _split_block(sub: np.ndarray, gen: np.random.Generator, gap: float):
    """Factor a block-restricted algebra ``sub`` (k x r x r) as M_d (x) 1_m.

    Returns (d, m, factor) with factor X factor^dag = x (x) 1_m for X in sub.
    """
    r = sub.shape[1]
    flat = sub.reshape(sub.shape[0], -1)
    sv = np.linalg.svd(flat, compute_uv=False)
    alg_dim = int(np.sum(sv > SPAN_TOL * max(1.0, sv[0])))
    d = int(round(np.sqrt(alg_dim)))
    if d * d != alg_dim or r % d:
        raise VerificationFailed(
            f"block of rank {r} carries an algebra of dimension {alg_dim}, not a full matrix algebra"
        )
    m = r // d
    if d == 1:
        return 1, m, np.eye(r, dtype=complex)

    parts = _herm_parts(sub)
    for _ in range(MAX_SPLIT_RETRIES):
        h = _generic_hermitian(parts, gen)
        w, v = np.linalg.eigh(h)
        groups = _cluster(w, gap)
        if len(groups) == d and all(len(g) == m for g in groups):
            break
    else:
        raise DegenerateCenterSplit(f"could not split a block into {d} eigenspaces of size {m}")
    spaces = [v[:, g] for g in groups]
    first = spaces[0]
    aligned = [first]
    for ek in spaces[1:]:
        # P_k X P_1 for the basis element with the largest such component
        cands = [ek.conj().T @ x @ first for x in sub]
        norms = [np.linalg.norm(c) for c in cands]
        c = cands[int(np.argmax(norms))]
        unit = c / (np.linalg.norm(c) / np.sqrt(m))
        aligned.append(ek @ unit)
    # rows ordered (k, i): Q index major, N index minor
    factor = np.vstack([f.conj().T for f in aligned])
    return d, m, factor


def decompose_algebra(alg: MatrixAlgebra, seed: int = 0, gap: float = CENTER_GAP) -> BlockStructure:
    """Wedderburn blocks of a *-algebra with each block factored as M_d (x) 1_m."""
    gen = np.random.default_rng(seed)
    center = _center(alg, SPAN_TOL)
    cdim = center.shape[0]
    parts = _herm_parts(center)
    retries = 0
    while True:
        h = _generic_hermitian(parts, gen)
        w, v = np.linalg.eigh(h)
        groups = _cluster(w, gap)
        if len(groups) == cdim:
            break
        retries += 1
        if retries > MAX_SPLIT_RETRIES:
            raise DegenerateCenterSplit(
                f"generic central element gave {len(groups)} eigenvalue clusters for a center of dimension {cdim}"
            )
    blocks = []
    for g in groups:
        vb = v[:, g]
        sub = np.einsum("xa,kxy,yb->kab", vb.conj(), alg.basis, vb)
        d, m, factor = _split_block(sub, gen, gap)
        blocks.append(AlgebraBlock(projector_basis=vb, factor=factor, q_dim=d, n_dim=m))
    out = BlockStructure(blocks=tuple(blocks), center_dim=cdim, retries=retries)
    _check_block_form(alg, out)
    return out


def _check_block_form(alg: MatrixAlgebra, bs: BlockStructure, tol: float = 1e-8) -> None:
    for b in bs.blocks:
        w = b.factor @ b.projector_basis.conj().T
        d, m = b.q_dim, b.n_dim
        for x in alg.basis:
            y = w @ x @ w.conj().T
            t = y.reshape(d, m, d, m)
            q = np.einsum("aibi->ab", t) / m
            err = np.max(np.abs(y - np.kron(q, np.eye(m)))) if y.size else 0.0
            if err > tol * max(1.0, np.abs(x).max()):
                raise VerificationFailed(f"block factorization off by {err:.2e}")
