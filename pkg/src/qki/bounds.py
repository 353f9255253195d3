"""Lower bounds on the converse functionals J_eps and Z_eps.

For an isometry U: CNQ -> C^N^Q^E applied to
omega^{CNQRC'} = sum_j p_j |j><j| (x) omega_j (x) rho_j^{QR} (x) |j><j|,

    J(U) = I(N^E : C^Q^ | C')_tau,     Z(U) = S(N^E | C')_tau,
    F(U) = F(omega^{CNQR}, tau^{C^N^Q^R}),

and J_eps, Z_eps maximize J, Z over U with F >= 1 - eps.  ``estimate`` runs a
penalized Riemannian ascent over isometries from several starting points and
returns the best feasible point, which is a lower bound on the true maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimMismatch, DimTooLarge, InvariantViolation, NoFeasiblePoint
from .ki.decomposition import KIDecomposition
from .qcore.measures import entropy_bits, entropy_of_spectrum
from .qcore.rand import haar_isometry

CNQ_CAP = 8
E_CAP = 64
PRODUCT_CAP = 2**22
SPECTRAL_CUTOFF = 1e-14
FEASIBILITY_TOL = 1e-9
LOG_FLOOR = 1e-15
PENALTY_START = 10.0
PENALTY_GROWTH = 10.0
PENALTY_ROUNDS = 5
ARMIJO = 1e-4
MAX_HALVINGS = 30
KICK = 0.05


def _polar(m: np.ndarray) -> np.ndarray:
    w, _, vh = np.linalg.svd(m, full_matrices=False)
    return w @ vh


# ---------------------------------------------------------------------------
# source in factored form


class FactoredSource:
    """omega^{CNQRC'} as a factor Y0[(C N Q), (R C' P)] with omega = Y0 Y0^dag.

    Built from padded per-block data: probabilities ``ps`` (dc,), states
    ``omegas`` (dc, dn, dn) and ``rho_qrs`` (dc, dq*dr, dq*dr).
    """

    def __init__(self, ps, omegas, rho_qrs, dims: tuple[int, int, int, int], _roots=None):
        self.ps = np.asarray(ps, dtype=float)
        self.omegas = np.asarray(omegas, dtype=complex)
        self.rho_qrs = np.asarray(rho_qrs, dtype=complex)
        self.dims = tuple(int(d) for d in dims)
        dc, dn, dq, dr = self.dims
        if self.omegas.shape != (dc, dn, dn) or self.rho_qrs.shape != (dc, dq * dr, dq * dr):
            raise DimMismatch("block data does not match the declared dimensions")
        # per block: (factor, sqrt) of omega_j and of rho_j^{QR}
        if _roots is None:
            _roots = [(_factor(self.omegas[j]), _factor(self.rho_qrs[j])) for j in range(dc)]
        self._roots = _roots
        facs, sqrts = [], []
        for j, ((fo, so), (fr, sr)) in enumerate(_roots):
            facs.append(np.sqrt(self.ps[j]) * np.kron(fo, fr))  # (dn dq dr, r_j)
            sqrts.append(np.sqrt(self.ps[j]) * np.kron(so, sr))
        rank = max(1, sum(f.shape[1] for f in facs))
        y = np.zeros((dc, dn * dq * dr, dc, rank), dtype=complex)
        off = 0
        for j, f in enumerate(facs):
            y[j, :, j, off : off + f.shape[1]] = f
            off += f.shape[1]
        # axes C, N, Q, R, C', P -> rows (C N Q), columns (R C' P)
        y = y.reshape(dc, dn, dq, dr, dc, rank)
        self.y0 = y.reshape(dc * dn * dq, dr * dc * rank)
        self.rank = rank
        d = dn * dq * dr
        self.sqrt_omega = np.zeros((dc * d, dc * d), dtype=complex)
        for j, sq in enumerate(sqrts):
            self.sqrt_omega[j * d : (j + 1) * d, j * d : (j + 1) * d] = sq
        self.s_c = entropy_of_spectrum(self.ps)

    @classmethod
    def from_ki(cls, ki: KIDecomposition) -> "FactoredSource":
        dc, dn, dq = ki.dims_cnq
        ps = [b.p for b in ki.blocks]
        omegas = [ki.padded_omega(j) for j in range(dc)]
        rhos = [ki.padded_rho_qr(j) for j in range(dc)]
        return cls(ps, omegas, rhos, (dc, dn, dq, ki.dim_r))

    @property
    def dim_cnq(self) -> int:
        dc, dn, dq, _ = self.dims
        return dc * dn * dq

    def s_n_given_c(self) -> float:
        return float(sum(p * entropy_bits(o) for p, o in zip(self.ps, self.omegas)))

    def product(self, other: "FactoredSource") -> "FactoredSource":
        """Source of omega_1 (x) omega_2 with C = C1 C2, N = N1 N2, Q = Q1 Q2, R = R1 R2.

        Factors and square roots are Kronecker products of the components', so
        no spectral cutoff is reapplied to the product.
        """
        dc1, dn1, dq1, dr1 = self.dims
        dc2, dn2, dq2, dr2 = other.dims
        qr = (dq1, dr1, dq2, dr2)

        def regroup_rows(m):
            m = m.reshape(qr + (m.shape[1],)).transpose(0, 2, 1, 3, 4)
            return m.reshape(-1, m.shape[-1])

        def regroup(m):
            return regroup_rows(regroup_rows(m).T).T

        ps, oms, rhos, roots = [], [], [], []
        for j1 in range(dc1):
            (fo1, so1), (fr1, sr1) = self._roots[j1]
            for j2 in range(dc2):
                (fo2, so2), (fr2, sr2) = other._roots[j2]
                ps.append(self.ps[j1] * other.ps[j2])
                oms.append(np.kron(self.omegas[j1], other.omegas[j2]))
                rhos.append(regroup(np.kron(self.rho_qrs[j1], other.rho_qrs[j2])))
                roots.append(
                    (
                        (np.kron(fo1, fo2), np.kron(so1, so2)),
                        (regroup_rows(np.kron(fr1, fr2)), regroup(np.kron(sr1, sr2))),
                    )
                )
        dims = (dc1 * dc2, dn1 * dn2, dq1 * dq2, dr1 * dr2)
        return FactoredSource(ps, oms, rhos, dims, _roots=roots)


def _factor(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(F, sqrt(m)) with m = F F^dag, dropping the kernel."""
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    keep = w > SPECTRAL_CUTOFF * max(1.0, w.max(initial=0.0))
    w = np.where(keep, w, 0.0)
    return v[:, keep] * np.sqrt(w[keep]), (v * np.sqrt(w)) @ v.conj().T


# ---------------------------------------------------------------------------
# ansatz


@dataclass(frozen=True)
class IsometryAnsatz:
    """U: CNQ -> C^N^Q^E, rows ordered (C^, N^, Q^, E)."""

    matrix: np.ndarray
    dims: tuple  # (dc, dn, dq, de)

    def __post_init__(self):
        dc, dn, dq, de = self.dims
        if self.matrix.shape != (dc * dn * dq * de, dc * dn * dq):
            raise DimMismatch(f"isometry shape {self.matrix.shape} does not match dims {self.dims}")
        err = np.abs(self.matrix.conj().T @ self.matrix - np.eye(self.matrix.shape[1])).max()
        if err > 1e-9:
            raise InvariantViolation(f"U^dag U deviates from identity by {err:.2e}")

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.matrix.real.ravel(), self.matrix.imag.ravel()])

    @classmethod
    def from_params(cls, params: np.ndarray, dims) -> "IsometryAnsatz":
        """Orthonormalize the complex matrix stored as [real part, imaginary part]."""
        dc, dn, dq, de = dims
        rows, cols = dc * dn * dq * de, dc * dn * dq
        params = np.asarray(params, dtype=float)
        if params.size != 2 * rows * cols:
            raise DimMismatch(f"expected {2 * rows * cols} parameters, got {params.size}")
        m = params[: rows * cols].reshape(rows, cols) + 1j * params[rows * cols :].reshape(rows, cols)
        return cls(_polar(m), tuple(dims))

    @classmethod
    def embedding(cls, dims) -> "IsometryAnsatz":
        """Identity on CNQ with the environment in |0>."""
        dc, dn, dq, de = dims
        e0 = np.zeros((de, 1))
        e0[0] = 1.0
        return cls(np.kron(np.eye(dc * dn * dq), e0).astype(complex), tuple(dims))

    def tensor(self, other: "IsometryAnsatz") -> "IsometryAnsatz":
        """U1 (x) U2 with inputs and outputs regrouped as (C1C2)(N1N2)(Q1Q2)(E1E2)."""
        a, b = self.dims, other.dims
        u = np.kron(self.matrix, other.matrix)
        u = u.reshape(list(a) + list(b) + list(a[:3]) + list(b[:3]))
        u = u.transpose(0, 4, 1, 5, 2, 6, 3, 7, 8, 11, 9, 12, 10, 13)
        dims = tuple(x * y for x, y in zip(a, b))
        dc, dn, dq, de = dims
        return IsometryAnsatz(u.reshape(dc * dn * dq * de, dc * dn * dq), dims)

    def to_json(self) -> dict:
        return {
            "dims": list(self.dims),
            "matrix_re": self.matrix.real.tolist(),
            "matrix_im": self.matrix.imag.tolist(),
        }


# ---------------------------------------------------------------------------
# objective and gradients


def _cut(t: np.ndarray, axes: Sequence[int]) -> tuple[np.ndarray, list[int]]:
    rest = [i for i in range(t.ndim) if i not in axes]
    perm = list(axes) + rest
    d = int(np.prod([t.shape[i] for i in axes]))
    return t.transpose(perm).reshape(d, -1), perm


def _entropy(t: np.ndarray, axes: Sequence[int], grad: bool):
    """S of the reduced state on ``axes`` of Y Y^dag, and optionally (G (x) 1) Y.

    Works on the smaller Gram matrix of the cut; with m = W s V^dag,
    G m = m V g(s^2) V^dag, so the gradient needs only one side.
    """
    m, perm = _cut(t, axes)
    left = m.shape[0] <= m.shape[1]
    gram = m @ m.conj().T if left else m.conj().T @ m
    w, v = np.linalg.eigh((gram + gram.conj().T) / 2)
    w = np.clip(w, 0.0, None)
    s = entropy_of_spectrum(w)
    if not grad:
        return s, None
    g = (v * (-np.log2(np.maximum(w, LOG_FLOOR)) - 1.0 / math.log(2))) @ v.conj().T
    gy = g @ m if left else m @ g
    gy = gy.reshape([t.shape[i] for i in perm])
    return s, gy.transpose(np.argsort(perm))


@dataclass(frozen=True)
class Evaluation:
    J: float
    Z: float
    fidelity: float
    grad_J: np.ndarray | None = None
    grad_Z: np.ndarray | None = None
    grad_F: np.ndarray | None = None


def evaluate(src: FactoredSource, u: np.ndarray, de: int, grad: bool = False) -> Evaluation:
    """J, Z and fidelity at U; gradients are d f / d conj(U), so df = 2 Re Tr[G^dag dU]."""
    dc, dn, dq, dr = src.dims
    y = u @ src.y0
    # axes: 0 C^, 1 N^, 2 Q^, 3 E, 4 R, 5 C', 6 P
    t = y.reshape(dc, dn, dq, de, dr, dc, src.rank)
    s_nec, g_nec = _entropy(t, [1, 3, 5], grad)
    s_cqc, g_cqc = _entropy(t, [0, 2, 5], grad)
    s_all, g_all = _entropy(t, [0, 1, 2, 3, 5], grad)
    j_val = s_nec + s_cqc - s_all - src.s_c
    z_val = s_nec - src.s_c

    # fidelity: nuclear norm of sqrt(omega) L with tau^{C^N^Q^R} = L L^dag
    lt = t.transpose(0, 1, 2, 4, 3, 5, 6)
    shape_l = lt.shape
    l_mat = lt.reshape(dc * dn * dq * dr, -1)
    k = src.sqrt_omega @ l_mat
    w, sv, vh = np.linalg.svd(k, full_matrices=False)
    f_val = float(min(1.0, sv.sum()))
    if not grad:
        return Evaluation(j_val, z_val, f_val)

    y0h = src.y0.conj().T

    def back(gt):
        return gt.reshape(y.shape) @ y0h

    gj = back(g_nec + g_cqc - g_all)
    gz = back(g_nec)
    p = (src.sqrt_omega @ (w @ vh)).reshape(shape_l).transpose(0, 1, 2, 4, 3, 5, 6)
    gf = back(p) / 2
    return Evaluation(j_val, z_val, f_val, gj, gz, gf)


def objective(u: IsometryAnsatz, ki: KIDecomposition | FactoredSource, which: str) -> tuple[float, float]:
    """(J or Z at U, fidelity at U)."""
    src = ki if isinstance(ki, FactoredSource) else FactoredSource.from_ki(ki)
    dc, dn, dq, _ = src.dims
    if tuple(u.dims[:3]) != (dc, dn, dq):
        raise DimMismatch(f"ansatz dims {u.dims[:3]} do not match source (C, N, Q) = {(dc, dn, dq)}")
    ev = evaluate(src, u.matrix, u.dims[3])
    return (_pick(ev, which), ev.fidelity)


def _pick(ev: Evaluation, which: str) -> float:
    if which == "J":
        return ev.J
    if which == "Z":
        return ev.Z
    raise ValueError(f"which must be 'J' or 'Z', got {which!r}")


# ---------------------------------------------------------------------------
# optimization


@dataclass(frozen=True)
class BoundEstimate:
    epsilon: float
    achieved_fidelity: float
    J_value: float
    Z_value: float
    ansatz: IsometryAnsatz
    restarts_used: int
    which: str = "Z"
    source: FactoredSource | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.achieved_fidelity < 1 - self.epsilon - FEASIBILITY_TOL:
            raise InvariantViolation(
                f"fidelity {self.achieved_fidelity} violates the constraint F >= 1 - {self.epsilon}"
            )

    @property
    def value(self) -> float:
        return self.J_value if self.which == "J" else self.Z_value


@dataclass(frozen=True)
class Budget:
    restarts: int = 4
    iterations: int = 40


def _penalized(ev: Evaluation, which: str, eps: float, lam: float):
    gap = max(0.0, 1.0 - eps - ev.fidelity)
    return _pick(ev, which) - lam * gap * gap, gap


def _ascend(src, u, de, which, eps, lam, iters, track):
    """Riemannian gradient ascent on the Stiefel manifold with Armijo backtracking."""
    step = 0.1
    ev = evaluate(src, u, de, grad=True)
    track(u, ev)
    phi, gap = _penalized(ev, which, eps, lam)
    for _ in range(iters):
        g = ev.grad_J if which == "J" else ev.grad_Z
        if gap > 0:
            g = g + 2 * lam * gap * ev.grad_F
        sym = u.conj().T @ g
        d = g - u @ ((sym + sym.conj().T) / 2)
        nrm2 = float(np.vdot(d, d).real)
        if nrm2 < 1e-24:
            break
        t = step
        for _ in range(MAX_HALVINGS):
            cand = _polar(u + t * d)
            ev_c = evaluate(src, cand, de)
            track(cand, ev_c)
            phi_c, gap_c = _penalized(ev_c, which, eps, lam)
            if phi_c >= phi + ARMIJO * 2 * t * nrm2:
                break
            t /= 2
        else:
            break
        u, phi, gap = cand, phi_c, gap_c
        ev = evaluate(src, u, de, grad=True)
        step = min(4 * t, 10.0)
    return u


def _block_seed(src: FactoredSource, de: int, gen: np.random.Generator) -> np.ndarray:
    """Block form sum_j |j><j| (x) U_j (x) 1_Q (x) |0>_E with U_j commuting with omega_j."""
    dc, dn, dq, _ = src.dims
    e0 = np.zeros((de, 1))
    e0[0] = 1.0
    op = np.zeros((dc * dn * dq, dc * dn * dq), dtype=complex)
    for j in range(dc):
        _, v = np.linalg.eigh(src.omegas[j])
        uj = (v * np.exp(2j * np.pi * gen.random(dn))) @ v.conj().T
        c = np.zeros((dc, dc))
        c[j, j] = 1.0
        op += np.kron(np.kron(c, uj), np.eye(dq))
    # rows (C^ N^ Q^) x E with E fastest
    return np.kron(op, e0)


def _check_caps(src: FactoredSource, de: int | None) -> int:
    if src.dim_cnq > CNQ_CAP:
        raise DimTooLarge(f"padded |C||N||Q| = {src.dim_cnq} exceeds {CNQ_CAP}", dim=src.dim_cnq)
    default = min(src.dim_cnq**2, E_CAP)
    de = default if de is None else int(de)
    if not 1 <= de <= src.dim_cnq**2:
        raise ValueError(f"environment dimension must lie in [1, {src.dim_cnq ** 2}]")
    return de


def exact_zero(src: FactoredSource, which: str = "Z", de: int | None = None) -> BoundEstimate:
    """The eps = 0 value: identity embedding, J = 0 and Z = S(N|C)."""
    de = _check_caps(src, de)
    dc, dn, dq, _ = src.dims
    ans = IsometryAnsatz.embedding((dc, dn, dq, de))
    ev = evaluate(src, ans.matrix, de)
    return BoundEstimate(0.0, ev.fidelity, ev.J, ev.Z, ans, 0, which, src)


def estimate(
    ki: KIDecomposition | FactoredSource,
    epsilon: float,
    which: str = "Z",
    budget: Budget | dict | None = None,
    seed: int = 0,
    env_dim: int | None = None,
    warm: IsometryAnsatz | None = None,
) -> BoundEstimate:
    """Best feasible value of J or Z found by penalized ascent (a lower bound on J_eps, Z_eps)."""
    src = ki if isinstance(ki, FactoredSource) else FactoredSource.from_ki(ki)
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    _pick(Evaluation(0.0, 0.0, 1.0), which)
    budget = Budget(**budget) if isinstance(budget, dict) else (budget or Budget())
    de = _check_caps(src, env_dim if warm is None else warm.dims[3])
    if epsilon == 0.0:
        return exact_zero(src, which, de)
    dc, dn, dq, _ = src.dims
    dims = (dc, dn, dq, de)
    seeds = np.random.SeedSequence(seed).spawn(budget.restarts + 1)

    best = {"val": -np.inf, "u": None, "ev": None}

    def track(u, ev):
        if ev.fidelity >= 1.0 - epsilon:
            v = _pick(ev, which)
            if v > best["val"]:
                best.update(val=v, u=u.copy(), ev=ev)

    # deterministic seeds sit at saddle points (E unused), so each start is
    # recorded as is and then kicked before the ascent
    rows, cols = dc * dn * dq * de, dc * dn * dq
    gens = [np.random.default_rng(s) for s in seeds]
    starts = []
    if warm is not None:
        starts.append(warm.matrix)
    starts.append(IsometryAnsatz.embedding(dims).matrix)
    for k in range(budget.restarts):
        if k % 2 == 0:
            starts.append(haar_isometry(gens[k + 1], rows, cols))
        else:
            starts.append(_block_seed(src, de, gens[k + 1]))
    for u0 in starts:
        track(u0, evaluate(src, u0, de))
        u = _polar(u0 + KICK * haar_isometry(gens[0], rows, cols))
        lam = PENALTY_START
        for _ in range(PENALTY_ROUNDS):
            u = _ascend(src, u, de, which, epsilon, lam, budget.iterations, track)
            lam *= PENALTY_GROWTH
    if best["u"] is None:
        raise NoFeasiblePoint("no start satisfied the fidelity constraint")
    ev = best["ev"]
    ans = IsometryAnsatz(best["u"], dims)
    return BoundEstimate(float(epsilon), ev.fidelity, ev.J, ev.Z, ans, len(starts), which, src)


@dataclass(frozen=True)
class Envelope:
    estimates: list
    concave: list  # (epsilon, value) vertices of the upper concave envelope

    def __iter__(self):
        return iter(self.estimates)

    def __len__(self):
        return len(self.estimates)

    def __getitem__(self, i):
        return self.estimates[i]


def upper_concave_envelope(xs: Sequence[float], ys: Sequence[float]) -> list[tuple[float, float]]:
    pts = sorted(set(zip(map(float, xs), map(float, ys))))
    hull: list[tuple[float, float]] = []
    for p in pts:
        while hull and hull[-1][0] == p[0]:
            hull.pop()
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (y2 - y1) * (p[0] - x1) <= (p[1] - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def envelope(
    ki: KIDecomposition | FactoredSource,
    epsilons: Sequence[float],
    which: str = "Z",
    budget: Budget | dict | None = None,
    seed: int = 0,
    env_dim: int | None = None,
) -> Envelope:
    """Estimates along an ascending epsilon list, each warm-started from the previous optimum."""
    eps = [float(e) for e in epsilons]
    if any(b < a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be sorted ascending")
    src = ki if isinstance(ki, FactoredSource) else FactoredSource.from_ki(ki)
    out, cache, warm = [], {}, None
    for e in eps:
        if e not in cache:
            cache[e] = estimate(src, e, which, budget, seed, env_dim=env_dim, warm=warm)
        est = cache[e]
        warm = est.ansatz
        out.append(est)
    hull = upper_concave_envelope([e.epsilon for e in out], [e.value for e in out])
    return Envelope(out, hull)


def tensor_feasible(e1: BoundEstimate, e2: BoundEstimate) -> BoundEstimate:
    """U1 (x) U2 on omega_1 (x) omega_2, re-evaluated on the product source."""
    if e1.source is None or e2.source is None:
        raise DimMismatch("estimates must carry their source")
    if e1.which != e2.which:
        raise ValueError("cannot combine estimates of different functionals")
    rows = e1.ansatz.matrix.shape[0] * e2.ansatz.matrix.shape[0]
    cols = e1.ansatz.matrix.shape[1] * e2.ansatz.matrix.shape[1]
    if rows * cols > PRODUCT_CAP:
        raise DimTooLarge(f"product isometry needs {rows * cols} entries > {PRODUCT_CAP}", dim=rows * cols)
    src = e1.source.product(e2.source)
    ans = e1.ansatz.tensor(e2.ansatz)
    ev = evaluate(src, ans.matrix, ans.dims[3])
    eps = 1.0 - (1.0 - e1.epsilon) * (1.0 - e2.epsilon)
    return BoundEstimate(eps, ev.fidelity, ev.J, ev.Z, ans, e1.restarts_used + e2.restarts_used, e1.which, src)
