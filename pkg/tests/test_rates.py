import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qki.errors import InvariantViolation
from qki.ki import ki_decompose, synth_ki_state
from qki.qcore import MultipartiteState, bell_state, random_state, tensor, pure_state
from qki.rates import (
    RatePoint,
    is_achievable,
    rate_region,
    region_boundary,
    region_boundary_csv,
    schumacher_gap,
)


def classical_bit():
    return MultipartiteState([("A", 2), ("R", 2)], np.diag([0.5, 0, 0, 0.5]))


def test_bell_region():
    r = rate_region(ki_decompose(bell_state()))
    assert abs(r.s_C) < 1e-12 and abs(r.s_CQ - 1) < 1e-9
    assert r.corner_unassisted == RatePoint(0.0, r.s_CQ)
    assert abs(r.corner_assisted.E) < 1e-12 and abs(r.corner_assisted.Q - 1) < 1e-9


def test_classical_bit_region():
    r = rate_region(ki_decompose(classical_bit()))
    # hand computation: two equiprobable one-dimensional blocks
    assert abs(r.s_C - 1) < 1e-9 and abs(r.s_CQ - 1) < 1e-9
    assert abs(r.corner_assisted.E - 0.5) < 1e-9 and abs(r.corner_assisted.Q - 0.5) < 1e-9


def test_product_region():
    s = tensor(random_state([("A", 3)], seed=1), random_state([("R", 2)], seed=2))
    r = rate_region(ki_decompose(s))
    assert abs(r.s_C) < 1e-12 and abs(r.s_CQ) < 1e-12
    assert r.corner_unassisted.Q == 0 and r.corner_assisted.Q == 0


def test_is_achievable():
    r = rate_region(ki_decompose(classical_bit()))
    assert is_achievable(RatePoint(0, r.s_CQ), r)
    assert is_achievable(r.corner_assisted, r)
    assert not is_achievable(RatePoint(r.s_C / 2 - 0.01, r.s_CQ - r.s_C / 2), r)
    assert not is_achievable(RatePoint(10, r.s_CQ - r.s_C / 2 - 0.01), r)
    assert is_achievable(RatePoint(10, 10), r)


def test_rate_point_invariants():
    with pytest.raises(InvariantViolation):
        RatePoint(-0.1, 1)
    with pytest.raises(InvariantViolation):
        RatePoint(0, float("inf"))


def test_schumacher_gap_values():
    psi = pure_state([("A", 2), ("R", 2)], [1, 0.3, 0.2, 1])
    assert abs(schumacher_gap(ki_decompose(psi))) < 1e-12
    s = tensor(MultipartiteState([("A", 2)], np.eye(2) / 2), random_state([("R", 2)], seed=3))
    assert abs(schumacher_gap(ki_decompose(s)) - 1) < 1e-9
    _, truth = synth_ki_state([(1.0, 1, 2)], 2, seed=4, omegas=[np.diag([0.7, 0.3])])
    assert abs(schumacher_gap(truth) - 0.8812908992306927) < 1e-12


@pytest.mark.parametrize("seed", range(12))
def test_block_formulas_match_assembled_state(seed):
    layout = [[(0.5, 1, 2), (0.5, 2, 1)], [(0.2, 2, 2), (0.8, 1, 1)], [(1.0, 2, 3)]][seed % 3]
    s, _ = synth_ki_state(layout, 2, seed=seed)
    ki = ki_decompose(s)
    r = rate_region(ki)  # raises if block formulas and assembled entropies disagree
    assert abs(r.s_CQ - r.s_C - r.s_Q_given_C) < 1e-9
    assert abs(r.s_CNQ - r.s_CQ - r.s_N_given_C) < 1e-9
    assert abs(r.corner_assisted.Q + r.corner_assisted.E - r.s_CQ) < 1e-12
    # unassisted optimum never beats nothing compared to Schumacher on A
    assert r.s_CQ <= r.s_CNQ + 1e-12


def test_boundary_shape():
    r = rate_region(ki_decompose(classical_bit()))
    pts = region_boundary(r, 31)
    es = np.array([e for e, _ in pts])
    qs = np.array([q for _, q in pts])
    assert pts[0] == (0.0, r.s_CQ)
    assert np.all(np.diff(qs) <= 1e-15)
    assert np.allclose(qs[es >= r.s_C / 2], r.s_CQ - r.s_C / 2)
    slopes = np.diff(qs) / np.diff(es)
    kinks = np.sum(np.abs(np.diff(slopes)) > 1e-9)
    # one kink, possibly spread over the sample straddling E = s_C / 2
    assert 1 <= kinks <= 2
    assert np.all(np.diff(slopes) >= -1e-9)  # convex


def test_boundary_csv():
    r = rate_region(ki_decompose(bell_state()))
    text = region_boundary_csv(r, 5)
    lines = text.strip().split("\n")
    assert lines[0] == "E,Qmin"
    assert len(lines) == 6
    with pytest.raises(ValueError):
        region_boundary(r, 1)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 3), st.floats(0, 3), st.integers(0, 50))
def test_achievability_matches_boundary(e, q, seed):
    s, _ = synth_ki_state([(0.5, 1, 1), (0.5, 2, 1)], 2, seed=seed)
    r = rate_region(ki_decompose(s))
    assert is_achievable(RatePoint(e, q), r) == (q >= r.q_min(e) - 1e-12)
