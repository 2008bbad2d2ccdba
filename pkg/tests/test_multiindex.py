import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bochner_recover.multiindex import (
    BudgetExceededError,
    IndexSet,
    MultiIndex,
    WeightSystem,
    enumerate_threshold_set,
    enumerate_two_weight_set,
    first_by_weight,
    is_downward_closed,
    level_factor,
    log_sigma,
    sigma,
    sigma_squared,
)

dense = st.lists(st.integers(0, 4), min_size=1, max_size=5)


def brute_sigma2(rho, eta, s):
    out = 1.0
    for j, t in enumerate(s, 1):
        out *= sum(math.comb(t, i) * rho(j) ** (2 * i) for i in range(min(t, eta) + 1))
    return out


def test_zero_and_units():
    z = MultiIndex.zero()
    e = MultiIndex.unit(3, 2)
    assert z.order() == 0 and z.support() == ()
    assert e[3] == 2 and e[1] == 0 and e.support() == (3,)
    assert (z + e) == e and (e - e) == z


def test_subtraction_below_zero_raises():
    with pytest.raises(ValueError):
        MultiIndex.unit(1) - MultiIndex.unit(2)


@given(dense)
def test_text_round_trip(v):
    s = MultiIndex.from_dense(v)
    assert MultiIndex.from_text(s.to_text()) == s
    assert list(s.to_dense(len(v))) == v


@given(dense, dense)
def test_leq_matches_componentwise(a, b):
    n = max(len(a), len(b))
    a, b = a + [0] * (n - len(a)), b + [0] * (n - len(b))
    assert MultiIndex.from_dense(a).leq(MultiIndex.from_dense(b)) == all(x <= y for x, y in zip(a, b))


@given(dense)
def test_predecessors_are_unit_steps_down(v):
    s = MultiIndex.from_dense(v)
    preds = list(s.predecessors())
    assert len(preds) == len(s.support())
    assert all(p.leq(s) and s.order() - p.order() == 1 for p in preds)


def test_sigma_matches_frozen_oracle():
    # [DERIVED] mpmath at 30 digits from the closed-form rho and sigma definitions
    ws = WeightSystem.from_decay(0.6, 2.5, 0.5, 100.0, 2)
    assert ws.rho(1) == pytest.approx(1.801382609385795677, rel=1e-14)
    assert ws.rho(2) == pytest.approx(4.2844340318475113626, rel=1e-14)
    assert sigma(ws, MultiIndex.from_dense([3, 1])) == pytest.approx(28.622561409353390999, rel=1e-13)
    assert sigma(ws, MultiIndex.from_dense([0, 0, 2])) == pytest.approx(51.584221238123527267, rel=1e-13)


@given(dense, st.integers(0, 4), st.floats(0.3, 5.0), st.floats(1.0, 3.0))
def test_sigma_factorization_against_direct_sum(v, eta, first, ratio):
    ws = WeightSystem.geometric(first, ratio, eta)
    s = MultiIndex.from_dense(v)
    assert sigma_squared(ws, s) == pytest.approx(brute_sigma2(ws.rho, eta, v), rel=1e-12)
    assert log_sigma(ws, s) == pytest.approx(0.5 * math.log(brute_sigma2(ws.rho, eta, v)), abs=1e-12)


def test_rho_is_non_decreasing_and_unbounded():
    ws = WeightSystem.from_decay(0.6, 2.5, 0.45, 700.0, 2)
    rhos = [ws.rho(j) for j in range(1, 200)]
    assert all(b >= a for a, b in zip(rhos, rhos[1:]))
    assert rhos[-1] > 1e3


def test_decay_rejects_non_summable_exponent():
    with pytest.raises(ValueError):
        WeightSystem.from_decay(0.6, 2.5, 0.4, 10.0, 2)


def test_sigma_overflow_raises():
    ws = WeightSystem.geometric(1e200, 2.0, 3)
    with pytest.raises(OverflowError):
        sigma(ws, MultiIndex.from_dense([5, 5]))


def test_eta_zero_set_is_rejected():
    ws = WeightSystem.geometric(2.0, 1.5, 0)
    with pytest.raises(BudgetExceededError):
        enumerate_threshold_set(ws, 1.0, 3.0)


def test_cap_raises_budget_error():
    ws = WeightSystem.geometric(1.1, 1.01, 2)
    with pytest.raises(BudgetExceededError):
        enumerate_threshold_set(ws, 1.0, 1e4, cap=500)


def test_threshold_below_one_is_empty():
    ws = WeightSystem.geometric(2.0, 1.5, 2)
    assert len(enumerate_threshold_set(ws, 1.0, 0.5)) == 0


@settings(max_examples=40, deadline=None)
@given(st.floats(1.5, 4.0), st.floats(1.5, 3.0), st.integers(1, 3), st.floats(1.0, 30.0))
def test_threshold_sets_are_downward_closed_and_sorted(first, ratio, eta, T):
    ws = WeightSystem.geometric(first, ratio, eta)
    lam = enumerate_threshold_set(ws, 1.0, T, cap=50_000)
    assert lam.is_downward_closed()
    assert all(sigma(ws, s) <= T * (1 + 1e-12) for s in lam)
    keys = [log_sigma(ws, s) for s in lam]
    assert keys == sorted(keys)


def test_threshold_set_against_box_filter():
    ws = WeightSystem.from_decay(0.6, 2.5, 0.5, 40.0, 2)
    T = 25.0
    lam = set(enumerate_threshold_set(ws, 1.0, T))
    box = set()
    for v in itertools.product(range(9), repeat=4):
        s = MultiIndex.from_dense(list(v))
        if sum(v) <= 8 and sigma(ws, s) <= T:
            box.add(s)
    assert {s for s in lam if s.max_coordinate() <= 4 and s.order() <= 8} == box


def test_two_weight_set_is_intersection():
    ws1 = WeightSystem.from_decay(0.6, 2.5, 0.45, 200.0, 2)
    ws2 = WeightSystem.from_decay(0.6, 2.5, 0.6, 20.0, 2)
    q1, xi, m, alpha, tau = 0.45 / 0.55, 12.0, 2, 1.0, 1.1
    lam = enumerate_two_weight_set(ws1, ws2, q1, xi, m, alpha, tau)
    top = xi ** (1 / q1)
    a = set(enumerate_threshold_set(ws1, q1, top))
    b = set(enumerate_threshold_set(ws2, q1, top * level_factor(m, alpha, tau)))
    assert set(lam) == a & b
    assert lam.is_downward_closed()


def test_index_set_text_round_trip():
    ws = WeightSystem.geometric(1.5, 2.0, 2)
    lam = enumerate_threshold_set(ws, 0.8, 10.0)
    back = IndexSet.from_text(lam.to_text(ws))
    assert back.members == lam.members
    assert back.threshold == lam.threshold and back.kind == lam.kind
    assert back.digest == lam.digest


def test_first_by_weight_is_prefix_of_threshold_order():
    ws = WeightSystem.geometric(1.5, 1.7, 2)
    chosen, logw = first_by_weight([(ws, 1.0)], 30)
    assert len(chosen) == 30
    full = enumerate_threshold_set(ws, 1.0, math.exp(logw[-1]) * (1 + 1e-12))
    assert list(full.members[:30]) == chosen
    assert all(b >= a for a, b in zip(logw, logw[1:]))


def test_first_by_weight_max_of_two_systems():
    ws1 = WeightSystem.geometric(2.0, 2.0, 2)
    ws2 = WeightSystem.geometric(1.2, 1.5, 2)
    chosen, logw = first_by_weight([(ws1, 1.0), (ws2, 3.0)], 20)
    for s, lw in zip(chosen, logw):
        assert lw == pytest.approx(max(log_sigma(ws1, s), math.log(3.0) + log_sigma(ws2, s)))
