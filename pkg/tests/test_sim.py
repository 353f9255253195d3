import itertools
import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from qki.errors import DimTooLarge, SlackViolation
from qki.ki import ki_decompose, synth_ki_state
from qki.qcore import (
    MultipartiteState,
    apply,
    bell_state,
    fidelity,
    pure_state,
    random_state,
    tensor,
    tensor_power,
)
from qki.rates import rate_region
from qki.sim import (
    AuditStep,
    audit_converse_chain,
    check_slacks,
    delta_term,
    reconstruct_N_channel,
    retained_count,
    run_assisted,
    run_schumacher_control,
    run_unassisted,
    schumacher_code,
    top_indices,
    typical_projector,
    unassisted_code,
)


def classical_bit(p=0.5):
    return MultipartiteState([("A", 2), ("R", 2)], np.diag([p, 0, 0, 1 - p]))


def product_source():
    return tensor(random_state([("A", 3)], seed=3), random_state([("R", 2)], seed=4))


def scipy_fidelity(a, b):
    s = sla.sqrtm(a)
    return float(np.real(np.trace(sla.sqrtm(s @ b @ s))))


SOURCES = {
    "bell": bell_state,
    "classical": classical_bit,
    "two_block": lambda: synth_ki_state([(0.6, 1, 2), (0.4, 2, 1)], 2, 1)[0],
    "mixed_omega": lambda: synth_ki_state([(1.0, 2, 2)], 2, 0, qr_rank=1)[0],
}


# -- retained sets and typical projectors --------------------------------


def test_retained_count_edges():
    assert retained_count(3, 0.0, 8) == 1
    assert retained_count(3, 1.0, 8) == 8
    assert retained_count(3, 5.0, 8) == 8
    assert retained_count(2, 0.5, 4) == 2  # exact power of two is not rounded up
    with pytest.raises(ValueError):
        retained_count(2, -0.1, 4)


def test_retained_count_floor():
    assert retained_count(3, 0.5, 8, "floor") == 2  # 2^1.5 = 2.83
    assert retained_count(3, 0.5, 8) == 3
    assert retained_count(2, 0.5, 4, "floor") == 2  # exact power of two is not rounded down
    assert retained_count(2, 0.1, 4, "floor") == 1
    with pytest.raises(ValueError):
        retained_count(2, 0.5, 4, "round")


@given(st.integers(1, 12), st.floats(0.0, 2.0))
def test_floor_rounding_never_exceeds_rate(n, rate):
    k = retained_count(n, rate, 4**n, "floor")
    assert k == 1 or math.log2(k) / n <= rate + 1e-9
    assert k <= retained_count(n, rate, 4**n)


def test_top_indices_ties_are_lexicographic():
    idx = top_indices([np.array([0.5, 0.5])] * 2, 4)
    assert idx.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
    idx = top_indices([np.array([0.7, 0.3])] * 2, 3)
    assert idx.tolist() == [[0, 0], [0, 1], [1, 0]]


def test_typical_pure_state():
    rho = pure_state([("A", 2)], [0.6, 0.8])
    ts = typical_projector(rho, 5, 0.1)
    assert ts.rank == 1 and abs(ts.mass - 1) < 1e-12
    assert abs(np.trace(ts.projector) - 1) < 1e-12


def test_typical_maximally_mixed():
    ts = typical_projector(np.eye(2) / 2, 4, 1e-3)
    assert ts.rank == 16 and abs(ts.mass - 1) < 1e-12
    assert np.allclose(ts.projector, np.eye(16))


def test_typical_mass_matches_enumeration():
    p, n, delta = 0.9, 10, 0.2
    ts = typical_projector(np.diag([p, 1 - p]), n, delta)
    h = -p * math.log2(p) - (1 - p) * math.log2(1 - p)
    brute = 0.0
    for bits in itertools.product([0, 1], repeat=n):
        k = sum(bits)
        prob = p ** (n - k) * (1 - p) ** k
        if abs(-math.log2(prob) / n - h) <= delta:
            brute += prob
    binom = sum(
        math.comb(n, k) * p ** (n - k) * (1 - p) ** k
        for k in range(n + 1)
        if abs(-((n - k) * math.log2(p) + k * math.log2(1 - p)) / n - h) <= delta
    )
    assert abs(ts.mass - brute) < 1e-12 and abs(brute - binom) < 1e-12


def test_typical_projector_cap():
    with pytest.raises(DimTooLarge):
        typical_projector(np.eye(4) / 4, 8, 0.1)
    with pytest.raises(ValueError):
        typical_projector(np.eye(2) / 2, 2, 0.0)


# -- codes ---------------------------------------------------------------


def test_code_channels_are_valid():
    rho = random_state([("X", 3)], seed=5)
    code = schumacher_code(rho, 2, 0.8)
    assert code.dim_m == retained_count(2, 0.8, 9) <= 9
    total = sum(k.conj().T @ k for k in code.encoder.kraus)
    assert np.allclose(total, np.eye(9), atol=1e-10)
    b = code.decoder.matrix
    assert np.allclose(b.conj().T @ b, np.eye(code.dim_m), atol=1e-10)
    assert abs(code.log_M - math.log2(code.dim_m)) < 1e-12 and code.log_K == 0


def test_code_rate_zero_matches_direct_oracle():
    # K = 1: every input is replaced by the top product eigenvector
    rho = random_state([("X", 2), ("R", 2)], seed=7)
    rho_x = np.einsum("arbr->ab", rho.matrix.reshape(2, 2, 2, 2))
    w, v = np.linalg.eigh(rho_x)
    top = v[:, -1]
    rho_r = np.einsum("arak->rk", rho.matrix.reshape(2, 2, 2, 2))
    n = 2
    ref = tensor_power(rho, n)
    f_vec = np.kron(top, top)
    zeta = np.kron(np.outer(f_vec, f_vec.conj()), np.kron(rho_r, rho_r))
    # reorder (X1 X2 R1 R2) -> (X1 R1 X2 R2)
    zeta = zeta.reshape([2] * 8).transpose(0, 2, 1, 3, 4, 6, 5, 7).reshape(16, 16)
    expected = scipy_fidelity(ref.matrix, zeta)
    got = run_schumacher_control(rho.relabel({"X": "A"}), n, 0.0).fidelity_achieved
    assert abs(got - expected) < 1e-7


def test_code_rejects_large_message():
    rho = random_state([("X", 2)], seed=1)
    code = schumacher_code(rho, 2, 1.0)
    with pytest.raises(ValueError):
        type(code)(
            n=2,
            copy_dims=code.copy_dims,
            bases=code.bases,
            spectra=code.spectra,
            retained=code.retained,
            log_M=3.0,
        )


# -- reconstruction channel -------------------------------------------------


def test_reconstruction_channel_is_trace_preserving():
    _, ki = synth_ki_state([(0.5, 2, 2), (0.5, 1, 3)], 2, 2)
    ch = reconstruct_N_channel(ki)
    total = sum(k.conj().T @ k for k in ch.kraus)
    assert np.allclose(total, np.eye(total.shape[0]), atol=1e-10)


def test_reconstruction_channel_rebuilds_full_state():
    _, ki = synth_ki_state([(0.5, 2, 2), (0.5, 1, 3)], 2, 2)
    out = apply(reconstruct_N_channel(ki), ki.omega_cqr(), ["C", "Q"])
    assert np.allclose(out.matrix, ki.omega_cnqr().matrix, atol=1e-9)


def test_reconstruction_channel_on_block_diagonal_input():
    _, ki = synth_ki_state([(0.3, 2, 2), (0.7, 2, 1)], 2, 4)
    dc, dn, dq = ki.dims_cnq
    gen = np.random.default_rng(0)
    ps = [0.25, 0.75]
    m = np.zeros((dc * dq, dc * dq), dtype=complex)
    expect = np.zeros((dc * dn * dq,) * 2, dtype=complex)
    for j, p in enumerate(ps):
        g = gen.normal(size=(dq, dq)) + 1j * gen.normal(size=(dq, dq))
        rq = g @ g.conj().T
        rq /= np.trace(rq)
        m[j * dq : (j + 1) * dq, j * dq : (j + 1) * dq] = p * rq
        blk = p * np.kron(ki.padded_omega(j), rq)
        expect[j * dn * dq : (j + 1) * dn * dq, j * dn * dq : (j + 1) * dn * dq] = blk
    s = MultipartiteState([("C", dc), ("Q", dq)], m)
    out = apply(reconstruct_N_channel(ki), s)
    assert np.allclose(out.matrix, expect, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_reconstruction_channel_does_not_decrease_fidelity(seed):
    _, ki = synth_ki_state([(0.5, 2, 1), (0.5, 1, 2)], 2, 3)
    dc, dn, dq = ki.dims_cnq
    om = ki.omega_cqr()
    zeta = random_state(om.dims, seed=seed)
    ch = reconstruct_N_channel(ki)
    before = fidelity(om.matrix, zeta.matrix)
    after = fidelity(apply(ch, om, ["C", "Q"]).matrix, apply(ch, zeta, ["C", "Q"]).matrix)
    assert before <= after + 1e-9


# -- unassisted protocol ----------------------------------------------------


@pytest.mark.parametrize("name", sorted(SOURCES))
@pytest.mark.parametrize("n", [1, 2])
def test_structured_fidelity_matches_dense_pipeline(name, n):
    src = SOURCES[name]()
    ki = ki_decompose(src)
    for rate in (0.0, 0.3, 0.7, 1.2):
        a = run_unassisted(src, n, rate, ki=ki).fidelity_achieved
        b = run_unassisted(src, n, rate, ki=ki, method="dense").fidelity_achieved
        assert abs(a - b) < 1e-9
        c = run_schumacher_control(src, n, rate).fidelity_achieved
        d = run_schumacher_control(src, n, rate, method="dense").fidelity_achieved
        assert abs(c - d) < 1e-9


@pytest.mark.parametrize("name", sorted(SOURCES))
def test_full_rate_is_lossless(name):
    src = SOURCES[name]()
    dim_a = src.dims.dim("A")
    for n in (1, 2, 3):
        rep = run_unassisted(src, n, math.log2(dim_a))
        assert abs(rep.fidelity_achieved - 1) < 1e-8


def test_product_source_needs_no_qubits():
    rep = run_unassisted(product_source(), 4, 0.0)
    assert abs(rep.fidelity_achieved - 1) < 1e-8
    assert rep.rate_Q == 0.0 and rep.dims_used["M"] == 1


def test_classical_bit_full_rate_n6():
    rep = run_unassisted(classical_bit(), 6, 1.0)
    assert rep.fidelity_achieved >= 0.99


def test_report_rates_follow_message_size():
    rep = run_unassisted(bell_state(), 3, 0.5)
    assert abs(rep.rate_Q - math.log2(rep.dims_used["M"]) / 3) < 1e-12
    assert rep.rate_E == 0.0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.5), st.integers(1, 3))
def test_fidelity_at_least_retained_mass(seed, rate, n):
    # F(rho, Pi rho Pi) = Tr Pi rho and the fallback term only adds
    src, ki = synth_ki_state([(0.6, 2, 1), (0.4, 1, 2)], 2, seed % 50)
    rep = run_unassisted(src, n, rate, ki=ki)
    assert rep.fidelity_achieved >= rep.typical_mass - 1e-9
    assert 0.0 <= rep.fidelity_achieved <= 1.0


def pure_qubit_source(p):
    v = np.zeros(4)
    v[0], v[3] = math.sqrt(p), math.sqrt(1 - p)
    return pure_state([("A", 2), ("R", 2)], v)


def test_floor_code_fidelity_trend():
    # rate S(CQ)+0.25 with K = floor(2^{nR}): fidelity rises with n
    src = pure_qubit_source(0.8)
    ki = ki_decompose(src)
    rate = rate_region(ki).s_CQ + 0.25
    reps = [run_unassisted(src, n, rate, ki=ki, rounding="floor") for n in (2, 4, 6, 8)]
    f = [r.fidelity_achieved for r in reps]
    assert all(b >= a - 1e-9 for a, b in zip(f, f[1:]))
    assert f[0] < 0.99 and f[-1] > 0.85
    assert all(r.rate_Q <= rate + 1e-12 for r in reps)


def test_ceiling_overprovisions_short_blocks():
    # K = ceil(2^{nR}) keeps 3 of 4 sequences at n = 2, more than the rate buys later
    src = pure_qubit_source(0.9)
    ki = ki_decompose(src)
    rate = rate_region(ki).s_CQ + 0.25
    f = [run_unassisted(src, n, rate, ki=ki).fidelity_achieved for n in (2, 4)]
    assert f[1] < f[0]


def test_redundancy_beats_plain_compression():
    src, ki = synth_ki_state([(1.0, 2, 2)], 2, 0, qr_rank=1)
    r = rate_region(ki).s_CQ + 0.25
    a = run_unassisted(src, 6, r, ki=ki).fidelity_achieved
    b = run_schumacher_control(src, 6, r).fidelity_achieved
    assert a > b


def test_feasibility_cap():
    src = random_state([("A", 3), ("R", 3)], seed=1)
    with pytest.raises(DimTooLarge):
        run_unassisted(src, 9, 1.0)
    with pytest.raises(DimTooLarge):
        run_unassisted(src, 4, 1.0, method="dense")


# -- assisted protocol ---------------------------------------------------------


def test_assisted_without_classical_part_matches_unassisted():
    src = SOURCES["mixed_omega"]()
    ki = ki_decompose(src)
    reg = rate_region(ki)
    assert reg.s_C < 1e-12
    for n in (2, 4):
        a = run_assisted(src, n, 0.2, ki=ki)
        b = run_unassisted(src, n, reg.s_CQ + 0.2, ki=ki)
        assert abs(a.rate_E - 0.1) < 1e-12
        assert abs(a.fidelity_achieved - b.fidelity_achieved) < 1e-12


def test_assisted_classical_bit_ledger():
    rep = run_assisted(classical_bit(), 4, 0.0)
    assert abs(rep.rate_E - 0.5) < 1e-12 and abs(rep.rate_Q - 0.5) < 1e-12
    assert abs(rep.fidelity_achieved - 1) < 1e-12


def test_assisted_rate_formulas():
    src, ki = synth_ki_state([(0.6, 2, 1), (0.4, 1, 2)], 2, 5)
    reg = rate_region(ki)
    slack = 0.3
    rep = run_assisted(src, 4, slack, ki=ki)
    assert abs(rep.rate_E - (reg.s_C + slack) / 2) < 1e-12
    assert abs(rep.rate_Q - ((reg.s_C + slack) / 2 + reg.s_Q_given_C + slack)) < 1e-12
    assert abs(rep.rate_Q + rep.rate_E - (reg.s_CQ + 2 * slack)) < 1e-12
    assert rep.fidelity_achieved >= rep.typical_mass - 1e-9


@pytest.mark.parametrize("rounding", ["ceil", "floor"])
def test_assisted_longer_blocks_do_not_lose(rounding):
    src, ki = synth_ki_state([(0.5, 1, 2), (0.5, 2, 2)], 2, 0)
    f2 = run_assisted(src, 2, 0.3, ki=ki, rounding=rounding).fidelity_achieved
    f4 = run_assisted(src, 4, 0.3, ki=ki, rounding=rounding).fidelity_achieved
    assert f2 < 1 - 1e-6
    assert f4 >= f2 - 1e-9


@pytest.mark.parametrize("name", ["classical", "two_block", "bell"])
@pytest.mark.parametrize("slack", [0.0, 0.2])
def test_assisted_structured_matches_dense(name, slack):
    src = SOURCES[name]()
    ki = ki_decompose(src)
    for n in (1, 2):
        a = run_assisted(src, n, slack, ki=ki).fidelity_achieved
        b = run_assisted(src, n, slack, ki=ki, method="dense").fidelity_achieved
        assert abs(a - b) < 1e-9


def test_assisted_dense_with_atypical_sequences():
    src = classical_bit(0.8)
    ki = ki_decompose(src)
    a = run_assisted(src, 3, 0.0, ki=ki)
    b = run_assisted(src, 3, 0.0, ki=ki, method="dense")
    assert a.dims_used["typical_sequences"] < 8
    assert abs(a.fidelity_achieved - b.fidelity_achieved) < 1e-9


# -- converse audit -----------------------------------------------------------


def _check(rows):
    assert all(isinstance(r, AuditStep) for r in rows)
    assert min(r.slack for r in rows) >= -1e-8


def test_delta_term():
    assert delta_term(2, 0.0, 4) == 0.0
    x = math.sqrt(2 * 0.01)
    h = -x * math.log2(x) - (1 - x) * math.log2(1 - x)
    assert abs(delta_term(3, 0.01, 4) - (2 * x + h / 3)) < 1e-12
    # beyond 1/2 the binary entropy is replaced by its monotone envelope
    assert delta_term(1, 0.5, 2) == 1.0 + 1.0


@pytest.mark.parametrize("name", ["bell", "classical", "mixed_omega"])
@pytest.mark.parametrize("rate", [0.0, 0.5, 1.0])
def test_audit_slacks_nonnegative(name, rate):
    src = SOURCES[name]()
    ki = ki_decompose(src)
    _check(audit_converse_chain(unassisted_code(ki, 2, rate), src, ki=ki))


def test_audit_lossless_code_zero_epsilon():
    src = bell_state()
    ki = ki_decompose(src)
    rows = audit_converse_chain(unassisted_code(ki, 2, 1.0), src, ki=ki)
    _check(rows)
    info = {r.step: r.lhs for r in rows if r.step.startswith("info:")}
    assert info["info:epsilon"] < 1e-12
    assert info["info:delta"] < 1e-5
    last = [r for r in rows if r.step.startswith("sum: nQ")][0]
    assert abs(last.lhs - 2.0) < 1e-12 and abs(last.rhs - 2.0) < 1e-5  # tight for this code


def test_audit_with_shared_entanglement():
    src = classical_bit()
    ki = ki_decompose(src)
    rows = audit_converse_chain(unassisted_code(ki, 2, 0.5), src, ki=ki, ebits=1)
    _check(rows)
    d1 = [r for r in rows if r.step.startswith("dec1")][0]
    assert abs(d1.lhs - (1.0 + 1.0)) < 1e-9  # nQ = log2 2, S(B0) = 1


def test_audit_ssa_row_on_three_copies():
    src = classical_bit()
    ki = ki_decompose(src)
    rows = audit_converse_chain(unassisted_code(ki, 3, 0.4), src, ki=ki)
    _check(rows)
    ssa = [r for r in rows if r.step.startswith("ssa")]
    assert len(ssa) == 1 and ssa[0].lhs >= -1e-9


def test_audit_rejects_too_many_copies():
    src = random_state([("A", 3), ("R", 3)], seed=2)
    ki = ki_decompose(src)
    with pytest.raises(DimTooLarge):
        audit_converse_chain(unassisted_code(ki, 4, 0.5), src, ki=ki)


def test_check_slacks():
    good = [AuditStep("a", 1.0, 0.5, 0.5)]
    check_slacks(good)
    with pytest.raises(SlackViolation):
        check_slacks(good + [AuditStep("b", 0.0, 1.0, -1.0)])


def test_audit_detects_wrong_epsilon():
    # claiming a perfect code where the code is lossy must break the continuity step
    src = bell_state()
    ki = ki_decompose(src)
    rows = audit_converse_chain(unassisted_code(ki, 2, 0.0), src, ki=ki, epsilon=0.0)
    assert min(r.slack for r in rows) < -1e-3
