"""Numerical audit of the weak-converse entropy chains on a concrete code.

The code acts on n copies of the equivalent source
omega^{CNQRC'} = sum_j p_j |j><j| (x) omega_j (x) rho_j^{QR} (x) |j><j|.
The encoder discards N^n and compresses C^n Q^n into M; its Stinespring
environment W collects the Kraus index, the discarded N^n and the sender's
half A0 of any shared entanglement.  The decoder expands M and regenerates
N^n; its environment V collects the Kraus indices of the regeneration map
and the receiver's half B0.  All entropies are evaluated on the resulting
global state, so every labelled step is checked on the actual dilations.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from ..errors import DimMismatch, DimTooLarge, SlackViolation
from ..ki.decomposition import KIDecomposition, ki_decompose
from ..qcore.factored import FactoredState
from ..qcore.measures import binary_entropy
from ..qcore.states import MultipartiteState
from ..rates import rate_region
from .code import CodeInstance, code_fidelity, copy_data
from .protocols import reconstruct_N_channel

SLACK_TOL = 1e-8
MAX_COPIES = 3
TENSOR_CAP = 2**20  # entries of the global factor after decoding


class AuditStep(NamedTuple):
    step: str
    lhs: float
    rhs: float
    slack: float


def _h_envelope(x: float) -> float:
    # smallest nondecreasing majorant of h on [0, inf)
    return 1.0 if x >= 0.5 else binary_entropy(x)


def delta_term(n: int, epsilon: float, dim_cq: int) -> float:
    """sqrt(2 eps) log2|CQ| + h(sqrt(2 eps))/n, the continuity correction per copy."""
    x = math.sqrt(2.0 * max(epsilon, 0.0))
    return x * math.log2(dim_cq) + _h_envelope(x) / n


def _kraus_stack(kraus) -> np.ndarray:
    """V = sum_k K_k (x) |k>, environment index last."""
    k = np.stack(kraus, axis=1)  # (out, nk, in)
    return k.reshape(-1, k.shape[-1])


def _copy_state(ki: KIDecomposition, t: int) -> FactoredState:
    dc, dn, dq = ki.dims_cnq
    dr = ki.dim_r
    local = dn * dq * dr
    dim = dc * local * dc
    m = np.zeros((dim, dim), dtype=complex)
    for j, b in enumerate(ki.blocks):
        blk = b.p * np.kron(ki.padded_omega(j), ki.padded_rho_qr(j))
        sel = np.array([(j * local + a) * dc + j for a in range(local)])
        m[np.ix_(sel, sel)] = blk
    labels = [(f"C{t}", dc), (f"N{t}", dn), (f"Q{t}", dq), (f"R{t}", dr), (f"Cp{t}", dc)]
    return FactoredState.from_state(MultipartiteState(labels, m, check=False))


def audit_converse_chain(
    code: CodeInstance,
    rho_ar: MultipartiteState,
    epsilon: float | None = None,
    ki: KIDecomposition | None = None,
    ebits: int = 0,
    seed: int | None = None,
) -> list[AuditStep]:
    """Evaluate both converse chains on ``code`` and report each step's slack.

    ``code`` must act on copies of (C, Q) of the decomposition.  ``epsilon``
    defaults to one minus the code's achieved fidelity.  ``ebits`` adds a
    maximally entangled pair A0 B0 of that many ebits which the code leaves
    untouched, exercising the S(A0), S(B0) terms.
    """
    n = code.n
    if n > MAX_COPIES:
        raise DimTooLarge(f"audit holds the global state only for n <= {MAX_COPIES}, got {n}", dim=n)
    ki = ki_decompose(rho_ar, seed=seed) if ki is None else ki
    dc, dn, dq = ki.dims_cnq
    dr = ki.dim_r
    if tuple(code.copy_dims) != (("C", dc), ("Q", dq)):
        raise DimMismatch(f"code acts on {code.copy_dims}, expected C={dc}, Q={dq}")
    if code.mode != "unassisted":
        raise ValueError("only codes with explicit encoder and decoder can be audited")

    enc = code.encoder
    nch = reconstruct_N_channel(ki)
    nk_enc, nk_dec = len(enc.kraus), len(nch.kraus)
    kdim = 2**ebits
    rank = _copy_state(ki, 1).rank_dim ** n
    size = (dc * dn * dq * nk_dec * dn * dr * dc) ** n * nk_enc * kdim * kdim * rank
    if size > TENSOR_CAP:
        raise DimTooLarge(f"global state needs {size} entries > {TENSOR_CAP}", dim=size)

    if epsilon is None:
        cd = copy_data(ki.omega_cqr().matrix, dc * dq, dr, code.bases[0])
        epsilon = max(0.0, 1.0 - code_fidelity([cd] * n, code.retained))
    delta = delta_term(n, epsilon, dc * dq)

    reg = rate_region(ki, cross_check=False)
    s_cq, s_c, s_n_c = reg.s_CQ, reg.s_C, reg.s_N_given_C
    s_n_cq = s_n_c  # N is independent of Q given C
    ts = range(1, n + 1)
    C = [f"C{t}" for t in ts]
    N = [f"N{t}" for t in ts]
    Q = [f"Q{t}" for t in ts]
    Cp = [f"Cp{t}" for t in ts]
    A0, B0 = (["A0"], ["B0"]) if ebits else ([], [])

    g = _copy_state(ki, 1)
    for t in ts[1:]:
        g = g.kron(_copy_state(ki, t))
    if ebits:
        phi = np.eye(kdim, dtype=complex).reshape(kdim, kdim, 1) / math.sqrt(kdim)
        g = g.kron(FactoredState(["A0", "B0"], phi))
    S = g.entropy

    s_cnqa0cp = S(C + N + Q + A0 + Cp)
    s_a0 = S(A0)
    s_cnqcp = S(C + N + Q + Cp)
    s_cnq = S(C + N + Q)
    s_cpn = S(Cp)

    xs = [lab for lab, _ in code.copy_labels()]
    g = g.apply_isometry(_kraus_stack(enc.kraus), xs, [("M", code.dim_m), ("Wk", nk_enc)])
    W = ["Wk"] + N + A0
    S = g.entropy
    s_m, s_b0, s_mb0 = S(["M"]), S(B0), S(["M"] + B0)
    s_mwcp, s_wcp = S(["M"] + W + Cp), S(W + Cp)
    s_w_given_cp = s_wcp - s_cpn

    out = []
    for t in ts:
        out += [(f"Ch{t}", dc), (f"Qh{t}", dq)]
    g = g.apply_isometry(code.decoder.matrix, ["M"], out)
    vn = _kraus_stack(nch.kraus)
    for t in ts:
        g = g.apply_isometry(vn, [f"Ch{t}", f"Qh{t}"], [(f"Ch{t}", dc), (f"Nh{t}", dn), (f"Qh{t}", dq), (f"V{t}", nk_dec)])
    Ch = [f"Ch{t}" for t in ts]
    Nh = [f"Nh{t}" for t in ts]
    Qh = [f"Qh{t}" for t in ts]
    V = [f"V{t}" for t in ts] + B0
    S = g.entropy
    s_out = S(Ch + Nh + Qh + V)
    s_chqh = S(Ch + Qh)
    s_nv_g_chqh = s_out - s_chqh
    s_nv_g_chqhcp = S(Nh + V + Ch + Qh + Cp) - S(Ch + Qh + Cp)
    s_nv_g_cp = S(Nh + V + Cp) - s_cpn

    def cmi(x, y):
        return S(x + Cp) + S(y + Cp) - S(x + y + Cp) - s_cpn

    i_nv = cmi(Nh + V, Ch + Qh)
    i_nvw = cmi(Nh + V + W, Ch + Qh)
    s_nv_g_wcp = S(Nh + V + W + Cp) - s_wcp
    s_nvw_g_cp = S(Nh + V + W + Cp) - s_cpn

    nq = code.log_M
    nd = n * delta
    rows: list[AuditStep] = []

    def ge(name, lhs, rhs):
        rows.append(AuditStep(name, float(lhs), float(rhs), float(lhs - rhs)))

    def eq(name, lhs, rhs):
        rows.append(AuditStep(name, float(lhs), float(rhs), -abs(float(lhs - rhs))))

    # decoding chain
    d = [
        nq + s_b0,
        s_m + s_b0,
        s_mb0,
        s_out,
        s_chqh + s_nv_g_chqh,
        n * s_cq + s_nv_g_chqh - nd,
        n * s_cq + s_nv_g_chqhcp - nd,
        n * s_cq - i_nv + s_nv_g_cp - nd,
        n * s_cq - i_nvw + s_nv_g_cp - nd,
    ]
    names = [
        "dec1: nQ+S(B0) >= S(M)+S(B0)",
        "dec2: S(M)+S(B0) >= S(MB0)",
        "dec3: S(MB0) = S(ChNhQhV)",
        "dec4: S(ChNhQhV) = S(ChQh)+S(NhV|ChQh)",
        "dec5: S(ChQh) >= nS(CQ)-n*delta",
        "dec6: S(NhV|ChQh) >= S(NhV|ChQhC')",
        "dec7: S(NhV|ChQhC') = S(NhV|C')-I(NhV:ChQh|C')",
        "dec8: I(NhV:ChQh|C') <= I(NhVW:ChQh|C')",
    ]
    kinds = [ge, ge, eq, eq, ge, ge, eq, ge]
    for k, name, f in zip(range(8), names, kinds):
        f(name, d[k], d[k + 1])

    # encoding chain
    e = [
        nq,
        s_m,
        s_mwcp - s_wcp,
        s_mwcp - s_wcp,
        s_cnqa0cp - s_wcp,
        s_cnqcp + s_a0 - s_wcp,
        s_cnqcp + s_a0 - s_cpn - s_w_given_cp,
        s_cnq + s_a0 - s_cpn - s_w_given_cp,
        n * s_cq + n * s_n_cq + s_a0 - n * s_c - s_w_given_cp,
        n * s_cq + n * s_n_c + s_a0 - n * s_c - s_w_given_cp,
    ]
    names = [
        "enc1: nQ >= S(M)",
        "enc2: S(M) >= S(M|WC')",
        "enc3: S(M|WC') = S(MWC')-S(WC')",
        "enc4: S(MWC') = S(CNQA0C')",
        "enc5: S(CNQA0C') = S(CNQC')+S(A0)",
        "enc6: S(WC') = S(C')+S(W|C')",
        "enc7: S(CNQC') = S(CNQ)",
        "enc8: S(CNQ) = nS(CQ)+nS(N|CQ) and S(C'^n) = nS(C')",
        "enc9: S(N|CQ) = S(N|C)",
    ]
    kinds = [ge, ge, eq, eq, eq, eq, eq, eq, eq]
    for k, name, f in zip(range(9), names, kinds):
        f(name, e[k], e[k + 1])

    # combined bound on Q and sum rate
    both = d[-1] + e[-1]
    ge("comb1: 2nQ+S(B0) >= dec8+enc9", 2 * nq + s_b0, both)
    ge(
        "comb2: S(NhV|C')-S(W|C') >= -S(NhVW|C')",
        both,
        both - s_nv_g_cp + s_w_given_cp - s_nvw_g_cp,
    )
    ge("ssa: S(NhV|C')+S(NhV|WC') >= 0", s_nv_g_cp + s_nv_g_wcp, 0.0)
    ge("sum: nQ+nE >= nS(CQ)-I(NhVW:ChQh|C')-n*delta", nq + s_b0, d[-1] - s_nv_g_cp)
    ge("sum: S(NhV|C') >= 0", s_nv_g_cp, 0.0)
    rows.append(AuditStep("info:delta", delta, delta, 0.0))
    rows.append(AuditStep("info:epsilon", epsilon, epsilon, 0.0))
    return rows


def check_slacks(rows: list[AuditStep], tol: float = SLACK_TOL) -> None:
    bad = [r for r in rows if r.slack < -tol]
    if bad:
        raise SlackViolation("; ".join(f"{r.step}: slack {r.slack:.3g}" for r in bad))
