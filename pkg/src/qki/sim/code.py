"""Typical subspaces, Schumacher codes and their exact fidelity on product sources.

A Schumacher code on n copies of a system X keeps the span of the K most
probable product eigenvectors e_s = e_{s_1} (x) ... (x) e_{s_n} of omega_X and
sends everything else to the most probable one, e_f:

    Lambda(Y) = Pi Y Pi + sum_{x not kept} |e_f><e_x| Y |e_x><e_f|.

``code_fidelity`` evaluates F(omega^{(x)n}, (Lambda (x) id_R) omega^{(x)n})
without forming matrices on (X R)^n: in the eigenbasis V of omega^{(x)n} the
output only involves Kronecker sums of small per-copy matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from ..errors import DimTooLarge
from ..qcore.states import IsometryMap, MultipartiteState, QuantumChannel, SystemDims

ENUM_CAP = 2**14  # largest number of multi-indices enumerated explicitly
RANK_CAP = 4096  # largest product of per-copy ranks in the fidelity evaluator
CHANNEL_CAP = 2**12  # largest |X|^n for which code channels are materialized
EIG_KEEP = 1e-14


def retained_count(n: int, rate: float, total: int, rounding: str = "ceil") -> int:
    """2^{n rate} rounded up (or down) and capped at ``total``; the 1e-9 guards exact powers of two.

    ``floor`` keeps the code rate log2(K)/n at or below ``rate``.
    """
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    if rounding not in ("ceil", "floor"):
        raise ValueError(f"rounding must be 'ceil' or 'floor', got {rounding!r}")
    x = n * rate
    if x >= math.log2(total):
        return total
    k = math.ceil(2.0**x - 1e-9) if rounding == "ceil" else math.floor(2.0**x + 1e-9)
    return max(1, min(total, k))


def _check_enum(dims: Sequence[int]) -> int:
    total = int(np.prod(dims, dtype=np.int64))
    if total > ENUM_CAP:
        raise DimTooLarge(f"{total} multi-indices exceed the enumeration cap {ENUM_CAP}", dim=total)
    return total


def all_indices(dims: Sequence[int]) -> np.ndarray:
    """All multi-indices in lexicographic order, shape (prod(dims), n)."""
    _check_enum(dims)
    grids = np.meshgrid(*[np.arange(d) for d in dims], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1) if dims else np.zeros((1, 0), dtype=int)


def _log_probs(spectra: Sequence[np.ndarray], idx: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logs = [np.log2(np.clip(np.asarray(mu, dtype=float), 0.0, None)) for mu in spectra]
    out = np.zeros(idx.shape[0])
    for t, lg in enumerate(logs):
        out = out + lg[idx[:, t]]
    return out


def top_indices(spectra: Sequence[np.ndarray], k: int) -> np.ndarray:
    """The k most probable multi-indices of a product distribution.

    Probabilities are compared after rounding log2 to 10 decimals, so exactly
    degenerate products tie; ties are broken lexicographically.
    """
    idx = all_indices([len(mu) for mu in spectra])
    lp = _log_probs(spectra, idx)
    key = np.where(np.isfinite(lp), -np.round(lp, 10), np.inf)
    order = np.lexsort(tuple(idx[:, t] for t in range(idx.shape[1] - 1, -1, -1)) + (key,))
    return idx[order[:k]]


def product_mass(spectra: Sequence[np.ndarray], idx: np.ndarray) -> float:
    if idx.shape[0] == 0:
        return 0.0
    p = np.ones(idx.shape[0])
    for t, mu in enumerate(spectra):
        p = p * np.asarray(mu)[idx[:, t]]
    return float(p.sum())


def sorted_eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs in descending order; equal eigenvalues keep the solver's order."""
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    w, v = w[::-1], v[:, ::-1]
    order = np.argsort(-np.round(w, 12), kind="stable")
    return np.clip(w[order], 0.0, None), v[:, order]


# ---------------------------------------------------------------------------
# typical projector


@dataclass(frozen=True)
class TypicalSubspace:
    """Entropy-typical subspace of rho^{(x)n}: |-(1/n) log2 p_s - S(rho)| <= delta."""

    n: int
    spectrum: np.ndarray
    basis: np.ndarray
    indices: np.ndarray
    mass: float
    entropy: float

    @property
    def rank(self) -> int:
        return self.indices.shape[0]

    @cached_property
    def projector(self) -> np.ndarray:
        d = self.basis.shape[0]
        if d**self.n > CHANNEL_CAP:
            raise DimTooLarge(f"dense projector of dimension {d ** self.n}", dim=d**self.n)
        vecs = product_vectors([self.basis] * self.n, self.indices)
        return vecs @ vecs.conj().T


def typical_projector(rho: MultipartiteState | np.ndarray, n: int, delta: float) -> TypicalSubspace:
    m = rho.matrix if isinstance(rho, MultipartiteState) else np.asarray(rho)
    d = m.shape[0]
    if delta <= 0:
        raise ValueError("delta must be positive")
    if n * math.log2(max(d, 1)) > 14 + 1e-12:
        raise DimTooLarge(f"n log2 d = {n * math.log2(d):.3g} exceeds 14", dim=d**n)
    mu, vec = sorted_eigh(m)
    pos = mu[mu > 0]
    s = float(-np.sum(pos * np.log2(pos)))
    idx = all_indices([d] * n)
    lp = _log_probs([mu] * n, idx)
    with np.errstate(invalid="ignore"):
        keep = np.isfinite(lp) & (np.abs(-lp / n - s) <= delta + 1e-12)
    kept = idx[keep]
    return TypicalSubspace(n=n, spectrum=mu, basis=vec, indices=kept, mass=product_mass([mu] * n, kept), entropy=s)


def product_vectors(bases: Sequence[np.ndarray], idx: np.ndarray) -> np.ndarray:
    """Columns e_{s_1} (x) ... (x) e_{s_n} for each multi-index row of ``idx``."""
    k = idx.shape[0]
    cols = np.ones((1, k), dtype=complex)
    for t, b in enumerate(bases):
        cols = np.einsum("ak,bk->abk", cols, b[:, idx[:, t]]).reshape(cols.shape[0] * b.shape[0], k)
    return cols


# ---------------------------------------------------------------------------
# code instances


@dataclass(frozen=True)
class CodeInstance:
    """Block code of length n on copies of a system X (labels ``copy_dims``).

    ``bases[t]`` is the per-copy eigenbasis (columns) used for copy t;
    ``retained`` lists the kept multi-indices (first row is the fallback
    target).  For entanglement-assisted runs the classical part is ledgered,
    and ``encoder``/``decoder`` describe only unassisted codes.
    """

    n: int
    copy_dims: tuple
    bases: tuple
    spectra: tuple
    retained: np.ndarray
    log_M: float
    log_K: float = 0.0
    mode: str = "unassisted"
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        dx = SystemDims(self.copy_dims).total
        if self.log_M > self.n * math.log2(dx) + 1e-9:
            raise ValueError("|M| may not exceed |X|^n")
        if self.log_M < 0 or self.log_K < 0:
            raise ValueError("log_M and log_K must be nonnegative")

    @property
    def dim_x(self) -> int:
        return SystemDims(self.copy_dims).total

    @property
    def dim_m(self) -> int:
        return self.retained.shape[0]

    @property
    def fallback(self) -> tuple:
        return tuple(int(i) for i in self.retained[0])

    def copy_labels(self) -> list[tuple[str, int]]:
        out = []
        for t in range(1, self.n + 1):
            out += [(f"{lab}{t}", d) for lab, d in self.copy_dims]
        return out

    def complement(self) -> np.ndarray:
        idx = all_indices([self.dim_x] * self.n)
        keep = {tuple(r) for r in self.retained.tolist()}
        mask = np.array([tuple(r) not in keep for r in idx.tolist()], dtype=bool)
        return idx[mask]

    def _check_cap(self):
        total = self.dim_x**self.n
        if total > CHANNEL_CAP:
            raise DimTooLarge(f"code channel on dimension {total} exceeds {CHANNEL_CAP}", dim=total)

    @cached_property
    def code_basis(self) -> np.ndarray:
        """Isometry M -> X^n whose columns are the kept product eigenvectors."""
        self._check_cap()
        return product_vectors(self.bases, self.retained)

    @cached_property
    def encoder(self) -> QuantumChannel:
        """Kraus {B^dag} and |0_M><e_x| for every discarded e_x."""
        b = self.code_basis
        comp = product_vectors(self.bases, self.complement())
        kraus = [b.conj().T]
        for c in comp.T:
            k = np.zeros((self.dim_m, b.shape[0]), dtype=complex)
            k[0] = c.conj()
            kraus.append(k)
        return QuantumChannel(self.copy_labels(), [("M", self.dim_m)], kraus)

    @cached_property
    def decoder(self) -> IsometryMap:
        return IsometryMap([("M", self.dim_m)], self.copy_labels(), self.code_basis)

    @property
    def mass(self) -> float:
        return product_mass(self.spectra, self.retained)


def schumacher_code(
    rho: MultipartiteState,
    n: int,
    rate_q: float,
    basis: tuple[np.ndarray, np.ndarray] | None = None,
    rounding: str = "ceil",
) -> CodeInstance:
    """Keep the top ceil(2^{n rate_q}) product eigenvectors of rho^{(x)n} (floor if asked).

    ``basis`` = (eigenvalues, eigenvectors) overrides the eigendecomposition,
    e.g. to keep eigenvectors aligned with a classical register.
    """
    d = rho.dims.total
    if n * math.log2(max(d, 1)) > 14 + 1e-12:
        raise DimTooLarge(f"n log2 |X| = {n * math.log2(d):.3g} exceeds 14", dim=d**n)
    mu, vec = sorted_eigh(rho.matrix) if basis is None else basis
    k = retained_count(n, rate_q, d**n, rounding)
    retained = top_indices([mu] * n, k)
    return CodeInstance(
        n=n,
        copy_dims=rho.dims.items,
        bases=tuple([vec] * n),
        spectra=tuple([mu] * n),
        retained=retained,
        log_M=math.log2(k),
    )


# ---------------------------------------------------------------------------
# exact fidelity of a code on a product source


@dataclass(frozen=True)
class CopyData:
    """Per-copy quantities for omega_t on X (x) R in the code basis e_k of X."""

    lam: np.ndarray  # nonzero eigenvalues of omega_t
    g: np.ndarray  # g[k] = <w_ik | w_i'k>, shape (dx, r, r)
    b: np.ndarray  # b[k] = <e_k| omega_t |e_k>, operators on R, shape (dx, dr, dr)
    w: np.ndarray  # w[i, k, :] = (<e_k| (x) 1) |v_i>


def copy_data(omega_xr: np.ndarray, dx: int, dr: int, basis: np.ndarray) -> CopyData:
    lam, v = np.linalg.eigh((omega_xr + omega_xr.conj().T) / 2)
    keep = lam > EIG_KEEP
    lam, v = lam[keep], v[:, keep]
    v3 = v.reshape(dx, dr, -1)
    w = np.einsum("xk,xri->ikr", basis.conj(), v3)
    g = np.einsum("ikr,jkr->kij", w.conj(), w)
    b = np.einsum("ikr,i,iks->krs", w, lam, w.conj())
    return CopyData(lam=lam, g=g, b=b, w=w)


def kron_sum(mats: Sequence[np.ndarray], idx: np.ndarray) -> np.ndarray:
    """sum over rows s of idx of mats[0][s_0] (x) mats[1][s_1] (x) ..., grouped by prefix."""
    if not mats:
        return np.full((1, 1), float(idx.shape[0]), dtype=complex)
    head = mats[0]
    out = None
    if idx.shape[0] == 0:
        size = int(np.prod([m.shape[1] for m in mats]))
        return np.zeros((size, size), dtype=complex)
    for a in np.unique(idx[:, 0]):
        sub = idx[idx[:, 0] == a][:, 1:]
        term = np.kron(head[a], kron_sum(mats[1:], sub))
        out = term if out is None else out + term
    return out


def _kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def code_fidelity(
    copies: Sequence[CopyData],
    retained: np.ndarray,
    extra_r: np.ndarray | None = None,
) -> float:
    """F(omega^{(x)n}, zeta) for zeta = (Lambda (x) id) omega^{(x)n} + |e_f><e_f| (x) extra_r.

    The first row of ``retained`` is the fallback index f.  With
    omega^{(x)n} = V Lam V^dag the fidelity is the trace norm of
    sqrt(Lam) V^dag L for any factor zeta = L L^dag; its columns come from
    the kept part (V^dag Pi V sqrt(Lam)) and from the fallback part
    (Y L_R with Y = V^dag (|e_f> (x) 1)).
    """
    ranks = [len(c.lam) for c in copies]
    rn = int(np.prod(ranks))
    drs = [c.b.shape[1] for c in copies]
    drn = int(np.prod(drs))
    if rn > RANK_CAP or drn > RANK_CAP:
        raise DimTooLarge(f"product rank {rn} / reference dimension {drn} exceed {RANK_CAP}", dim=max(rn, drn))
    dxs = [c.g.shape[0] for c in copies]
    total = int(np.prod(dxs))
    sl = _kron_all([np.sqrt(c.lam)[None, :] for c in copies]).ravel()

    g = kron_sum([c.g for c in copies], retained)
    blocks = [sl[:, None] * g * sl[None, :]]

    n_kept = retained.shape[0]
    t = None
    if n_kept < total:
        idx = all_indices(dxs)
        kept = {tuple(r) for r in retained.tolist()}
        mask = np.array([tuple(r) not in kept for r in idx.tolist()], dtype=bool)
        comp = idx[mask]
        if comp.shape[0] <= n_kept:
            t = kron_sum([c.b for c in copies], comp)
        else:
            t = _kron_all([c.b.sum(axis=0) for c in copies]) - kron_sum([c.b for c in copies], retained)
    if extra_r is not None:
        t = extra_r if t is None else t + extra_r
    if t is not None:
        tau, u = np.linalg.eigh((t + t.conj().T) / 2)
        pos = tau > 0
        if pos.any():
            lt = u[:, pos] * np.sqrt(tau[pos])
            f = retained[0]
            y = _kron_all([c.w[:, f[i], :].conj() for i, c in enumerate(copies)])
            blocks.append(sl[:, None] * (y @ lt))
    k = np.hstack(blocks)
    sv = np.linalg.svd(k, compute_uv=False)
    return float(min(1.0, max(0.0, sv.sum())))
