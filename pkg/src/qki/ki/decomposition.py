"""Block decomposition of a source into classical, redundant and quantum parts.

Each block j carries a probability p_j, a state omega_j on the redundant
factor N_j and a state rho_j on Q_j (x) R.  The padded form embeds every block
into C (x) N (x) Q with |C| = #blocks, |N| = max m_j, |Q| = max d_j, each
block occupying the leading basis vectors of N and Q.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvariantViolation, VerificationFailed
from ..qcore.io import InputError, decode_matrix, encode_matrix
from ..qcore.measures import entropic, entropy_bits, fidelity, trace_distance
from ..qcore.povm import Povm, make_ic_povm
from ..qcore.rand import default_seed
from ..qcore.states import MultipartiteState, QuantumChannel, SystemDims, partial_trace, permute
from .algebra import SUPPORT_TOL, decompose_algebra, generate_algebra, measure_reference

FIDELITY_TOL = 1e-9
PRODUCT_TOL = 1e-8
CMI_DENSE_CAP = 2048  # above this, conditional mutual information is evaluated blockwise


def _herm(m):
    return (m + m.conj().T) / 2


@dataclass(frozen=True)
class KIBlock:
    """One block of the decomposition.

    ``local_map`` (m*d x |A|) sends A onto N_j (x) Q_j, N most significant;
    it is a co-isometry, and the maps of all blocks together form U_KI.
    """

    p: float
    q_dim: int
    n_dim: int
    omega: np.ndarray
    rho_qr: np.ndarray
    local_map: np.ndarray

    def omega_state(self, label: str = "N") -> MultipartiteState:
        return MultipartiteState([(label, self.n_dim)], self.omega)

    def rho_qr_state(self, dim_r: int, q: str = "Q", r: str = "R") -> MultipartiteState:
        return MultipartiteState([(q, self.q_dim), (r, dim_r)], self.rho_qr)

    def rho_q(self, dim_r: int) -> np.ndarray:
        t = self.rho_qr.reshape(self.q_dim, dim_r, self.q_dim, dim_r)
        return np.einsum("arbr->ab", t)


@dataclass(frozen=True)
class KIDecomposition:
    blocks: tuple
    dim_a: int
    dim_r: int
    u_ki: np.ndarray
    support: np.ndarray
    labels: tuple = ("A", "R")
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    verification: dict = field(default_factory=dict)

    # -- padded geometry -------------------------------------------------

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def dims_cnq(self) -> tuple[int, int, int]:
        return (
            len(self.blocks),
            max(b.n_dim for b in self.blocks),
            max(b.q_dim for b in self.blocks),
        )

    @property
    def support_projector(self) -> np.ndarray:
        return self.support @ self.support.conj().T

    def padded_dims(self, c="C", n="N", q="Q") -> SystemDims:
        dc, dn, dq = self.dims_cnq
        return SystemDims([(c, dc), (n, dn), (q, dq)])

    def embed_n(self, j: int) -> np.ndarray:
        return np.eye(self.dims_cnq[1])[:, : self.blocks[j].n_dim]

    def embed_q(self, j: int) -> np.ndarray:
        return np.eye(self.dims_cnq[2])[:, : self.blocks[j].q_dim]

    def padded_omega(self, j: int) -> np.ndarray:
        e = self.embed_n(j)
        return e @ self.blocks[j].omega @ e.conj().T

    def padded_rho_qr(self, j: int) -> np.ndarray:
        e = np.kron(self.embed_q(j), np.eye(self.dim_r))
        return e @ self.blocks[j].rho_qr @ e.conj().T

    def padded_rho_q(self, j: int) -> np.ndarray:
        e = self.embed_q(j)
        return e @ self.blocks[j].rho_q(self.dim_r) @ e.conj().T

    # -- assembled states ------------------------------------------------

    def omega_cnqr(self) -> MultipartiteState:
        """sum_j p_j |j><j| (x) omega_j (x) rho_j^{QR} on padded C, N, Q, R."""
        dc, dn, dq = self.dims_cnq
        dr = self.dim_r
        local = dn * dq * dr
        m = np.zeros((dc * local, dc * local), dtype=complex)
        for j, b in enumerate(self.blocks):
            m[j * local : (j + 1) * local, j * local : (j + 1) * local] = b.p * np.kron(
                self.padded_omega(j), self.padded_rho_qr(j)
            )
        return MultipartiteState([("C", dc), ("N", dn), ("Q", dq), ("R", dr)], m, check=False)

    def omega_cqr(self) -> MultipartiteState:
        dc, _, dq = self.dims_cnq
        dr = self.dim_r
        local = dq * dr
        m = np.zeros((dc * local, dc * local), dtype=complex)
        for j, b in enumerate(self.blocks):
            m[j * local : (j + 1) * local, j * local : (j + 1) * local] = b.p * self.padded_rho_qr(j)
        return MultipartiteState([("C", dc), ("Q", dq), ("R", dr)], m, check=False)

    def omega_cq(self) -> MultipartiteState:
        return partial_trace(self.omega_cqr(), ["C", "Q"])

    # -- maps -------------------------------------------------------------

    def forward(self, rho_ar: MultipartiteState) -> MultipartiteState:
        """(U_KI (x) 1_R) rho (U_KI (x) 1_R)^dag on padded C, N, Q, R."""
        a, r = self.labels
        s = permute(rho_ar, [a, r])
        u = np.kron(self.u_ki, np.eye(self.dim_r))
        dc, dn, dq = self.dims_cnq
        return MultipartiteState(
            [("C", dc), ("N", dn), ("Q", dq), ("R", self.dim_r)], u @ s.matrix @ u.conj().T, check=False
        )

    def reversal_channel(self) -> QuantumChannel:
        """X -> U_KI^dag X U_KI + Tr[(1 - Pi) X] sigma, with sigma a fixed support state."""
        u = self.u_ki
        proj = np.eye(u.shape[0]) - u @ u.conj().T
        w, v = np.linalg.eigh(_herm(proj))
        anchor = self.support[:, 0]
        kraus = [u.conj().T]
        for k in np.nonzero(w > 0.5)[0]:
            kraus.append(np.outer(anchor, v[:, k].conj()))
        return QuantumChannel(self.padded_dims(), [(self.labels[0], self.dim_a)], kraus)

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "labels": list(self.labels),
            "dim_A": self.dim_a,
            "dim_R": self.dim_r,
            "blocks": [
                {
                    "p": b.p,
                    "q_dim": b.q_dim,
                    "n_dim": b.n_dim,
                    "omega": encode_matrix(b.omega),
                    "rho_QR": encode_matrix(b.rho_qr),
                    "local_map": encode_matrix(b.local_map),
                }
                for b in self.blocks
            ],
            "U_KI": encode_matrix(self.u_ki),
            "support": encode_matrix(self.support),
            "seed": self.seed,
            "tolerances": self.tolerances,
            "verification": self.verification,
        }

    @classmethod
    def from_json(cls, obj) -> "KIDecomposition":
        if not isinstance(obj, dict):
            raise InputError("top-level value must be an object")
        for key in ("dim_A", "dim_R", "blocks", "U_KI", "support"):
            if key not in obj:
                raise InputError(f"missing field '{key}'")
        if not isinstance(obj["blocks"], list) or not obj["blocks"]:
            raise InputError("field 'blocks' must be a nonempty list")
        blocks = []
        for j, bo in enumerate(obj["blocks"]):
            where = f"blocks[{j}]"
            for key in ("p", "q_dim", "n_dim", "omega", "rho_QR", "local_map"):
                if key not in bo:
                    raise InputError(f"missing field '{where}.{key}'")
            blocks.append(
                KIBlock(
                    p=float(bo["p"]),
                    q_dim=int(bo["q_dim"]),
                    n_dim=int(bo["n_dim"]),
                    omega=decode_matrix(bo["omega"], f"{where}.omega"),
                    rho_qr=decode_matrix(bo["rho_QR"], f"{where}.rho_QR"),
                    local_map=decode_matrix(bo["local_map"], f"{where}.local_map"),
                )
            )
        ki = cls(
            blocks=tuple(blocks),
            dim_a=int(obj["dim_A"]),
            dim_r=int(obj["dim_R"]),
            u_ki=decode_matrix(obj["U_KI"], "U_KI"),
            support=decode_matrix(obj["support"], "support"),
            labels=tuple(obj.get("labels", ("A", "R"))),
            seed=int(obj.get("seed", 0)),
            tolerances=dict(obj.get("tolerances", {})),
            verification=dict(obj.get("verification", {})),
        )
        check_structure(ki)
        return ki

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "KIDecomposition":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid JSON in {path}: {exc}") from None
        return cls.from_json(obj)


def check_structure(ki: KIDecomposition, tol: float = 1e-9) -> None:
    """Type-level invariants: probabilities, block states, isometry on the support."""
    ps = np.array([b.p for b in ki.blocks])
    if abs(ps.sum() - 1) > tol or np.any(ps < -tol):
        raise VerificationFailed(f"block probabilities sum to {ps.sum():.12g}")
    for j, b in enumerate(ki.blocks):
        try:
            b.omega_state()
            b.rho_qr_state(ki.dim_r)
        except InvariantViolation as exc:
            raise VerificationFailed(f"block {j}: {exc}") from None
        if b.local_map.shape != (b.n_dim * b.q_dim, ki.dim_a):
            raise VerificationFailed(f"block {j}: local map has shape {b.local_map.shape}")
    dc, dn, dq = ki.dims_cnq
    if ki.u_ki.shape != (dc * dn * dq, ki.dim_a):
        raise VerificationFailed(f"U_KI has shape {ki.u_ki.shape}, expected {(dc * dn * dq, ki.dim_a)}")
    gram = ki.u_ki.conj().T @ ki.u_ki
    err = np.max(np.abs(gram - ki.support_projector))
    if err > tol:
        raise VerificationFailed(f"U_KI is not an isometry on the support (error {err:.2e})")


def reconstruct(ki: KIDecomposition) -> MultipartiteState:
    """Map the block states back to A (x) R through U_KI^dag."""
    dr = ki.dim_r
    m = np.zeros((ki.dim_a * dr, ki.dim_a * dr), dtype=complex)
    for b in ki.blocks:
        bm = np.kron(b.local_map, np.eye(dr))
        m += b.p * bm.conj().T @ np.kron(b.omega, b.rho_qr) @ bm
    a, r = ki.labels
    return MultipartiteState([(a, ki.dim_a), (r, dr)], _herm(m), check=False)


def assemble_u_ki(blocks, dim_a: int) -> np.ndarray:
    dn = max(b.n_dim for b in blocks)
    dq = max(b.q_dim for b in blocks)
    u = np.zeros((len(blocks) * dn * dq, dim_a), dtype=complex)
    for j, b in enumerate(blocks):
        loc = b.local_map.reshape(b.n_dim, b.q_dim, dim_a)
        for n in range(b.n_dim):
            base = j * dn * dq + n * dq
            u[base : base + b.q_dim] = loc[n]
    return u


def blocks_from_maps(rho_ar: MultipartiteState, maps, dims, labels=("A", "R")):
    """Block data extracted from ``rho_ar`` through the local maps.

    ``maps[j]`` sends A onto N_j (x) Q_j (N most significant) and ``dims[j]``
    is (d_j, m_j).  Also returns the largest cross-block coherence norm.
    """
    a, r = labels
    s = permute(rho_ar, [a, r])
    dr = s.dims.dim(r)
    sig = [np.kron(bm, np.eye(dr)) for bm in maps]
    blocks = []
    for full, bm, (d, m) in zip(sig, maps, dims):
        x = _herm(full @ s.matrix @ full.conj().T)
        p = float(np.trace(x).real)
        if p <= 0:
            raise VerificationFailed("a block carries no weight")
        t = (x / p).reshape(m, d * dr, m, d * dr)
        omega = _herm(np.einsum("aibi->ab", t))
        rho_qr = _herm(np.einsum("iaib->ab", t))
        blocks.append(KIBlock(p=p, q_dim=d, n_dim=m, omega=omega, rho_qr=rho_qr, local_map=bm))
    cross = 0.0
    for i in range(len(sig)):
        for k in range(len(sig)):
            if i != k:
                cross = max(cross, float(np.linalg.norm(sig[i] @ s.matrix @ sig[k].conj().T, 2)))
    return blocks, cross


def canonical_order(blocks):
    return sorted(blocks, key=lambda b: (-round(b.p, 12), -b.q_dim, -b.n_dim))


def verify(ki: KIDecomposition, rho_ar: MultipartiteState, cross: float = 0.0) -> dict:
    """Check every decomposition invariant against the source; raise on failure."""
    check_structure(ki)
    report = {"sum_p": float(sum(b.p for b in ki.blocks)), "cross_block": cross}
    a, r = ki.labels
    s = permute(rho_ar, [a, r])
    dr = ki.dim_r
    worst = 0.0
    for j, b in enumerate(ki.blocks):
        bm = np.kron(b.local_map, np.eye(dr))
        x = bm @ s.matrix @ bm.conj().T / b.p
        worst = max(worst, trace_distance(x, np.kron(b.omega, b.rho_qr)))
    report["product_residual"] = worst
    if worst > PRODUCT_TOL:
        raise VerificationFailed(f"conditional product structure violated: residual {worst:.2e}")
    if cross > PRODUCT_TOL:
        raise VerificationFailed(f"coherence between blocks {cross:.2e}")
    dc, dn, dq = ki.dims_cnq
    if dc * dn * dq * dr <= CMI_DENSE_CAP:
        cmi = entropic(ki.forward(s), "I(N:QR|C)")
    else:
        cmi = 0.0
        for b in ki.blocks:
            bm = np.kron(b.local_map, np.eye(dr))
            x = MultipartiteState(
                [("N", b.n_dim), ("Q", b.q_dim), ("R", dr)],
                _herm(bm @ s.matrix @ bm.conj().T / b.p),
                check=False,
            )
            cmi += b.p * entropic(x, "I(N:QR)")
    report["cmi"] = float(cmi)
    if cmi > PRODUCT_TOL:
        raise VerificationFailed(f"I(N:QR|C) = {cmi:.2e} exceeds {PRODUCT_TOL}")
    f = fidelity(reconstruct(ki).matrix, s.matrix)
    report["reconstruction_fidelity"] = f
    if f < 1 - FIDELITY_TOL:
        raise VerificationFailed(f"reconstruction fidelity {f:.12f} below 1 - {FIDELITY_TOL}")
    return report


def build_decomposition(rho_ar, maps, dims, labels=("A", "R"), support=None, seed=0, check=True):
    """Assemble, sort and (optionally) verify a decomposition from local block maps."""
    a, r = labels
    blocks, cross = blocks_from_maps(rho_ar, maps, dims, labels)
    blocks = canonical_order(blocks)
    dim_a = rho_ar.dims.dim(a)
    if support is None:
        ra = partial_trace(rho_ar, [a]).matrix
        w, v = np.linalg.eigh(_herm(ra))
        support = v[:, w > SUPPORT_TOL][:, ::-1]
    ki = KIDecomposition(
        blocks=tuple(blocks),
        dim_a=dim_a,
        dim_r=rho_ar.dims.dim(r),
        u_ki=assemble_u_ki(blocks, dim_a),
        support=support,
        labels=(a, r),
        seed=seed,
        tolerances={
            "support": SUPPORT_TOL,
            "span": 1e-9,
            "center_gap": 1e-8,
            "fidelity": FIDELITY_TOL,
            "product": PRODUCT_TOL,
        },
    )
    if check:
        rep = verify(ki, rho_ar, cross)
        object.__setattr__(ki, "verification", rep)
    return ki


def ki_decompose(
    rho_ar: MultipartiteState,
    povm: Povm | None = None,
    seed: int | None = None,
    labels: tuple[str, str] = ("A", "R"),
) -> KIDecomposition:
    """Decompose a source into blocks and verify the result against it.

    Raises VerificationFailed if any invariant fails.
    """
    a, r = labels
    seed = default_seed() if seed is None else seed
    rho_ar = permute(rho_ar, [a, r])
    dr = rho_ar.dims.dim(r)
    povm = make_ic_povm(dr, label=r) if povm is None else povm
    ens = measure_reference(rho_ar, povm, a, r)
    alg = generate_algebra(ens)
    bs = decompose_algebra(alg, seed=seed)
    maps, dims = [], []
    for blk in bs.blocks:
        d, m = blk.q_dim, blk.n_dim
        bm = blk.factor @ blk.projector_basis.conj().T @ alg.support.conj().T
        # factor rows are (q, n); reorder to (n, q)
        bm = bm.reshape(d, m, -1).transpose(1, 0, 2).reshape(d * m, -1)
        maps.append(bm)
        dims.append((d, m))
    return build_decomposition(rho_ar, maps, dims, labels, support=alg.support, seed=seed)


def block_entropies(ki: KIDecomposition) -> dict:
    """Per-block entropies S(omega_j), S(rho_j^Q), S(rho_j^{QR})."""
    out = []
    for b in ki.blocks:
        out.append(
            {
                "S_omega": entropy_bits(b.omega),
                "S_Q": entropy_bits(b.rho_q(ki.dim_r)),
                "S_QR": entropy_bits(b.rho_qr),
            }
        )
    return out
