"""Compression protocols on n copies of a source and their end-to-end fidelity.

Two evaluation routes are kept side by side:

* ``structured``: the fidelity is computed on the equivalent source
  omega^{CQR}.  Both the reconstruction map N: CQ -> CNQ and the KI reversal
  are channels, and the code output is block diagonal in C and supported on
  the block supports, so F(rho^{(x)n}, xi) = F(omega_CQR^{(x)n}, zeta) exactly.
  The latter is evaluated by ``code_fidelity`` from per-copy data.
* ``dense``: the literal pipeline U_KI^{(x)n}, trace out N^n, encoder,
  decoder, N^{(x)n}, reversal, on full density matrices.  Only feasible for
  tiny instances; it serves as the oracle for the structured route.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DimTooLarge
from ..ki.decomposition import KIDecomposition, ki_decompose
from ..qcore.measures import fidelity
from ..qcore.states import MultipartiteState, QuantumChannel, apply, partial_trace, permute, tensor_power
from ..rates import rate_region
from .code import (
    CodeInstance,
    all_indices,
    code_fidelity,
    copy_data,
    product_mass,
    product_vectors,
    retained_count,
    schumacher_code,
    sorted_eigh,
    top_indices,
)

DENSE_CAP = 1024  # largest dimension of (A R)^n handled by the dense route


@dataclass(frozen=True)
class SimulationReport:
    n: int
    rate_Q: float
    rate_E: float
    fidelity_achieved: float
    typical_mass: float
    dims_used: dict = field(default_factory=dict)
    mode: str = "unassisted"
    method: str = "structured"

    def __post_init__(self):
        if not (0.0 <= self.fidelity_achieved <= 1.0):
            raise ValueError(f"fidelity {self.fidelity_achieved} outside [0, 1]")

    def row(self) -> tuple:
        return (self.n, self.rate_Q, self.rate_E, self.fidelity_achieved, self.typical_mass)

    def to_json(self) -> dict:
        return asdict(self)


def reconstruct_N_channel(ki: KIDecomposition) -> QuantumChannel:
    """CQ -> CNQ: pinch C, then append omega_j on N next to block j."""
    dc, dn, dq = ki.dims_cnq
    kraus = []
    for j in range(dc):
        lam, vec = np.linalg.eigh(ki.padded_omega(j))
        for a in np.nonzero(lam > 1e-15)[0]:
            proj = np.zeros((dc, dc))
            proj[j, j] = 1.0
            col = (np.sqrt(lam[a]) * vec[:, a]).reshape(dn, 1)
            kraus.append(np.kron(np.kron(proj, col), np.eye(dq)))
    return QuantumChannel([("C", dc), ("Q", dq)], ki.padded_dims(), kraus)


def cq_eigenbasis(ki: KIDecomposition) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of omega_CQ aligned with C, descending; ties keep (block, index) order."""
    dc, _, dq = ki.dims_cnq
    vals, vecs, keys = [], [], []
    for j, b in enumerate(ki.blocks):
        mu, v = sorted_eigh(b.p * ki.padded_rho_q(j))
        for i in range(dq):
            e = np.zeros(dc)
            e[j] = 1.0
            vals.append(mu[i])
            vecs.append(np.kron(e, v[:, i]))
            keys.append((-round(float(mu[i]), 12), j, i))
    order = sorted(range(len(keys)), key=keys.__getitem__)
    return np.array([vals[i] for i in order]), np.stack([vecs[i] for i in order], axis=1)


def _resolve(rho_ar: MultipartiteState, ki: KIDecomposition | None, seed: int | None) -> KIDecomposition:
    return ki_decompose(rho_ar, seed=seed) if ki is None else ki


def _method(method: str):
    if method not in ("structured", "dense"):
        raise ValueError(f"unknown method {method!r}")


def _dense_check(rho_ar: MultipartiteState, n: int, extra: int = 1):
    total = (rho_ar.dims.total * extra) ** n
    if total > DENSE_CAP:
        raise DimTooLarge(f"dense route needs dimension {total} > {DENSE_CAP}", dim=total)


def _fidelity_vs_source(rho_ar: MultipartiteState, n: int, out: MultipartiteState, a: str, r: str) -> float:
    ref = tensor_power(permute(rho_ar, [a, r]), n)
    out = permute(out, list(ref.labels))
    return float(min(1.0, fidelity(ref.matrix, out.matrix)))


# ---------------------------------------------------------------------------
# unassisted


def unassisted_code(ki: KIDecomposition, n: int, rate_q: float, rounding: str = "ceil") -> CodeInstance:
    return schumacher_code(ki.omega_cq(), n, rate_q, basis=cq_eigenbasis(ki), rounding=rounding)


def run_unassisted(
    rho_ar: MultipartiteState,
    n: int,
    rate_q: float,
    ki: KIDecomposition | None = None,
    method: str = "structured",
    seed: int | None = None,
    rounding: str = "ceil",
) -> SimulationReport:
    """Trace out N^n, Schumacher-compress C^n Q^n, decode, regenerate N^n, undo U_KI."""
    _method(method)
    ki = _resolve(rho_ar, ki, seed)
    code = unassisted_code(ki, n, rate_q, rounding)
    if method == "structured":
        dc, _, dq = ki.dims_cnq
        cd = copy_data(ki.omega_cqr().matrix, dc * dq, ki.dim_r, code.bases[0])
        f = code_fidelity([cd] * n, code.retained)
    else:
        f = _dense_unassisted(rho_ar, ki, code)
    dims = {"M": code.dim_m, "X": code.dim_x, "copies": n}
    return SimulationReport(n, code.log_M / n, 0.0, f, code.mass, dims, "unassisted", method)


def _dense_unassisted(rho_ar: MultipartiteState, ki: KIDecomposition, code: CodeInstance) -> float:
    a, r = ki.labels
    n = code.n
    dc, dn, dq = ki.dims_cnq
    _dense_check(rho_ar, n, max(1, dc * dn * dq // ki.dim_a))
    s = tensor_power(permute(rho_ar, [a, r]), n)
    u = QuantumChannel([(a, ki.dim_a)], ki.padded_dims(), [ki.u_ki], check=False)
    for t in range(1, n + 1):
        ut = QuantumChannel([(f"{a}{t}", ki.dim_a)], [(f"{x}{t}", d) for x, d in ki.padded_dims()], u.kraus, check=False)
        s = apply(ut, s, [f"{a}{t}"])
        s = partial_trace(s, [lab for lab in s.labels if lab != f"N{t}"])
    xs = [lab for lab, _ in code.copy_labels()]
    s = apply(code.encoder, s, xs)
    s = apply(code.decoder, s, ["M"])
    return _dense_finish(rho_ar, ki, s, n)


def _dense_finish(rho_ar, ki, s, n):
    a, r = ki.labels
    nch = reconstruct_N_channel(ki)
    rev = ki.reversal_channel()
    for t in range(1, n + 1):
        nt = QuantumChannel([(f"C{t}", nch.in_dims.dim("C")), (f"Q{t}", nch.in_dims.dim("Q"))],
                            [(f"{x}{t}", d) for x, d in nch.out_dims], nch.kraus, check=False)
        s = apply(nt, s, [f"C{t}", f"Q{t}"])
        rt = QuantumChannel([(f"{x}{t}", d) for x, d in rev.in_dims], [(f"{a}{t}", ki.dim_a)], rev.kraus, check=False)
        s = apply(rt, s, [f"C{t}", f"N{t}", f"Q{t}"])
    return _fidelity_vs_source(rho_ar, n, s, a, r)


# ---------------------------------------------------------------------------
# control: Schumacher code on all of A


def run_schumacher_control(
    rho_ar: MultipartiteState,
    n: int,
    rate_q: float,
    labels: tuple[str, str] = ("A", "R"),
    method: str = "structured",
    rounding: str = "ceil",
) -> SimulationReport:
    """Plain Schumacher compression of A, ignoring any redundancy."""
    _method(method)
    a, r = labels
    rho_ar = permute(rho_ar, [a, r])
    rho_a = partial_trace(rho_ar, [a])
    code = schumacher_code(rho_a, n, rate_q, rounding=rounding)
    if method == "structured":
        cd = copy_data(rho_ar.matrix, rho_ar.dims.dim(a), rho_ar.dims.dim(r), code.bases[0])
        f = code_fidelity([cd] * n, code.retained)
    else:
        _dense_check(rho_ar, n)
        s = tensor_power(rho_ar, n)
        s = apply(code.encoder, s, [lab for lab, _ in code.copy_labels()])
        s = apply(code.decoder, s, ["M"])
        f = _fidelity_vs_source(rho_ar, n, s, a, r)
    dims = {"M": code.dim_m, "X": code.dim_x, "copies": n}
    return SimulationReport(n, code.log_M / n, 0.0, f, code.mass, dims, "control", method)


# ---------------------------------------------------------------------------
# entanglement assisted


@dataclass(frozen=True)
class AssistedPlan:
    n: int
    sequences: np.ndarray  # typical j-sequences, most probable first
    seq_probs: np.ndarray
    atypical: np.ndarray
    atyp_probs: np.ndarray
    k_q: int
    q_spectra: tuple  # per block
    q_bases: tuple
    retained: tuple  # per typical sequence
    rate_Q: float
    rate_E: float


def assisted_plan(ki: KIDecomposition, n: int, slack: float, rounding: str = "ceil") -> AssistedPlan:
    if slack < 0:
        raise ValueError("slack must be nonnegative")
    reg = rate_region(ki, cross_check=False)
    dc, _, dq = ki.dims_cnq
    ps = np.array([b.p for b in ki.blocks])
    if n * math.log2(max(dc * dq, 1)) > 14 + 1e-12:
        raise DimTooLarge(f"n log2 |CQ| = {n * math.log2(dc * dq):.3g} exceeds 14", dim=(dc * dq) ** n)
    k_c = retained_count(n, reg.s_C + slack, dc**n, rounding)
    seqs = top_indices([ps] * n, dc**n)
    typ, atyp = seqs[:k_c], seqs[k_c:]
    k_q = retained_count(n, reg.s_Q_given_C + slack, dq**n, rounding)
    spectra, bases = [], []
    for j in range(dc):
        mu, v = sorted_eigh(ki.padded_rho_q(j))
        spectra.append(mu)
        bases.append(v)
    retained = tuple(top_indices([spectra[j] for j in seq], k_q) for seq in typ)

    def probs(idx):
        return np.array([float(np.prod(ps[row])) for row in idx]) if len(idx) else np.zeros(0)

    half = (reg.s_C + slack) / 2
    return AssistedPlan(
        n=n,
        sequences=typ,
        seq_probs=probs(typ),
        atypical=atyp,
        atyp_probs=probs(atyp),
        k_q=k_q,
        q_spectra=tuple(spectra),
        q_bases=tuple(bases),
        retained=retained,
        rate_Q=half + reg.s_Q_given_C + slack,
        rate_E=half,
    )


def run_assisted(
    rho_ar: MultipartiteState,
    n: int,
    slack: float,
    ki: KIDecomposition | None = None,
    method: str = "structured",
    seed: int | None = None,
    rounding: str = "ceil",
) -> SimulationReport:
    """Typical-set code on the block index plus conditional Schumacher codes on Q.

    The classical index is charged at half its rate in qubits and half in
    ebits (dense coding); the coding itself is realized as a channel that
    keeps typical sequences and maps atypical ones to the most likely one.
    """
    _method(method)
    ki = _resolve(rho_ar, ki, seed)
    plan = assisted_plan(ki, n, slack, rounding)
    if method == "structured":
        f = _structured_assisted(ki, plan)
    else:
        f = _dense_assisted(rho_ar, ki, plan)
    mass = sum(
        p * product_mass([plan.q_spectra[j] for j in seq], ret)
        for p, seq, ret in zip(plan.seq_probs, plan.sequences, plan.retained)
    )
    dims = {"typical_sequences": len(plan.sequences), "K_Q": plan.k_q, "copies": n}
    return SimulationReport(n, plan.rate_Q, plan.rate_E, f, float(mass), dims, "assisted", method)


def _structured_assisted(ki: KIDecomposition, plan: AssistedPlan) -> float:
    dc, _, dq = ki.dims_cnq
    dr = ki.dim_r
    cds = [copy_data(ki.padded_rho_qr(j), dq, dr, plan.q_bases[j]) for j in range(dc)]
    rho_r = [np.einsum("araq->rq", ki.padded_rho_qr(j).reshape(dq, dr, dq, dr)) for j in range(dc)]
    extra = None
    if len(plan.atypical):
        extra = sum(p * _kron([rho_r[j] for j in seq]) for p, seq in zip(plan.atyp_probs, plan.atypical))
        extra = extra / plan.seq_probs[0]
    total = 0.0
    for k, (p, seq, ret) in enumerate(zip(plan.seq_probs, plan.sequences, plan.retained)):
        total += p * code_fidelity([cds[j] for j in seq], ret, extra if k == 0 else None)
    return float(min(1.0, total))


def _kron(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def assisted_channel(ki: KIDecomposition, plan: AssistedPlan) -> QuantumChannel:
    """The end-to-end code on C^n Q^n (labels C1..Cn, Q1..Qn) as Kraus operators."""
    dc, _, dq = ki.dims_cnq
    n = plan.n
    dcn, dqn = dc**n, dq**n
    flat = lambda seq: int(np.ravel_multi_index(tuple(seq), (dc,) * n))  # noqa: E731
    kraus = []
    for seq, ret in zip(plan.sequences, plan.retained):
        bases = [plan.q_bases[j] for j in seq]
        kept = product_vectors(bases, ret)
        idx = all_indices([dq] * n)
        keep = {tuple(r) for r in ret.tolist()}
        comp = idx[[tuple(r) not in keep for r in idx.tolist()]]
        lost = product_vectors(bases, comp)
        c = np.zeros((dcn, dcn))
        c[flat(seq), flat(seq)] = 1.0
        kraus.append(np.kron(c, kept @ kept.conj().T))
        for col in lost.T:
            kraus.append(np.kron(c, np.outer(kept[:, 0], col.conj())))
    j0 = plan.sequences[0]
    f0 = product_vectors([plan.q_bases[j] for j in j0], plan.retained[0][:1])[:, 0]
    for seq in plan.atypical:
        for q in range(dqn):
            c = np.zeros((dcn, dcn))
            c[flat(j0), flat(seq)] = 1.0
            e = np.zeros(dqn)
            e[q] = 1.0
            kraus.append(np.kron(c, np.outer(f0, e)))
    dims = [(f"C{t}", dc) for t in range(1, n + 1)] + [(f"Q{t}", dq) for t in range(1, n + 1)]
    return QuantumChannel(dims, dims, kraus)


def _dense_assisted(rho_ar: MultipartiteState, ki: KIDecomposition, plan: AssistedPlan) -> float:
    a, r = ki.labels
    n = plan.n
    dc, dn, dq = ki.dims_cnq
    _dense_check(rho_ar, n, max(1, dc * dn * dq // ki.dim_a))
    s = tensor_power(permute(rho_ar, [a, r]), n)
    for t in range(1, n + 1):
        ut = QuantumChannel([(f"{a}{t}", ki.dim_a)], [(f"{x}{t}", d) for x, d in ki.padded_dims()], [ki.u_ki], check=False)
        s = apply(ut, s, [f"{a}{t}"])
        s = partial_trace(s, [lab for lab in s.labels if lab != f"N{t}"])
    ch = assisted_channel(ki, plan)
    s = apply(ch, s, list(ch.in_dims.labels))
    return _dense_finish(rho_ar, ki, s, n)
