"""Qubit/ebit rate region of a source from its block decomposition."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation, VerificationFailed
from .ki.decomposition import KIDecomposition
from .qcore.measures import entropic, entropy_bits, entropy_of_spectrum

MEMBERSHIP_TOL = 1e-12
CROSS_CHECK_CAP = 256  # assembled-state cross check only up to this dimension


@dataclass(frozen=True)
class RatePoint:
    E: float
    Q: float

    def __post_init__(self):
        if not (np.isfinite(self.E) and np.isfinite(self.Q)) or self.E < 0 or self.Q < 0:
            raise InvariantViolation(f"rates must be finite and nonnegative, got E={self.E}, Q={self.Q}")


@dataclass(frozen=True)
class RateRegion:
    s_C: float
    s_CQ: float
    s_Q_given_C: float
    s_N_given_C: float
    s_CNQ: float
    corner_unassisted: RatePoint
    corner_assisted: RatePoint

    def q_min(self, e: float) -> float:
        return max(self.s_CQ - e, self.s_CQ - self.s_C / 2)


def _clip0(x: float) -> float:
    # entropies of pure block states come out as tiny negatives after subtraction
    return 0.0 if abs(x) < 1e-13 else x


def rate_region(ki: KIDecomposition, cross_check: bool = True) -> RateRegion:
    """Entropic quantities from block data; cross-checked on the assembled state when small."""
    ps = np.array([b.p for b in ki.blocks])
    s_c = entropy_of_spectrum(ps)
    s_q_c = float(sum(b.p * entropy_bits(b.rho_q(ki.dim_r)) for b in ki.blocks))
    s_n_c = float(sum(b.p * entropy_bits(b.omega) for b in ki.blocks))
    s_cq = s_c + s_q_c
    s_cnq = s_cq + s_n_c
    dc, dn, dq = ki.dims_cnq
    if cross_check and dc * dn * dq * ki.dim_r <= CROSS_CHECK_CAP:
        om = ki.omega_cnqr()
        checks = {
            "S(C)": (entropic(om, "S(C)"), s_c),
            "S(CQ)": (entropic(om, "S(CQ)"), s_cq),
            "S(CNQ)": (entropic(om, "S(CNQ)"), s_cnq),
            "S(N|C)": (entropic(om, "S(N|C)"), s_n_c),
        }
        for name, (dense, block) in checks.items():
            if abs(dense - block) > 1e-9:
                raise VerificationFailed(f"{name}: block formula {block!r} vs assembled {dense!r}")
    s_c, s_cq, s_q_c, s_n_c, s_cnq = map(_clip0, (s_c, s_cq, s_q_c, s_n_c, s_cnq))
    return RateRegion(
        s_C=s_c,
        s_CQ=s_cq,
        s_Q_given_C=s_q_c,
        s_N_given_C=s_n_c,
        s_CNQ=s_cnq,
        corner_unassisted=RatePoint(0.0, s_cq),
        corner_assisted=RatePoint(s_c / 2, s_cq - s_c / 2),
    )


def is_achievable(p: RatePoint, r: RateRegion, tol: float = MEMBERSHIP_TOL) -> bool:
    return p.Q >= r.s_CQ - r.s_C / 2 - tol and p.Q + p.E >= r.s_CQ - tol


def schumacher_gap(ki: KIDecomposition) -> float:
    """Rate saved relative to compressing all of A: S(CNQ) - S(CQ) = sum_j p_j S(omega_j)."""
    return rate_region(ki, cross_check=False).s_N_given_C


def region_boundary(r: RateRegion, samples: int) -> list[tuple[float, float]]:
    if samples < 2:
        raise ValueError("samples must be >= 2")
    es = np.linspace(0.0, r.s_C / 2 + 1.0, samples)
    return [(float(e), r.q_min(float(e))) for e in es]


def fmt(x: float) -> str:
    return f"{x:.17g}"


def region_boundary_csv(r: RateRegion, samples: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["E", "Qmin"])
    for e, q in region_boundary(r, samples):
        w.writerow([fmt(e), fmt(q)])
    return buf.getvalue()
