import itertools

import numpy as np
import pytest
from helpers import random_downward_closed, smooth_function
from hypothesis import given, settings
from hypothesis import strategies as st

from bochner_recover.hermite import hermite_roots, interpolate_1d, tensor_hermite_matrix
from bochner_recover.multiindex import MultiIndex, WeightSystem
from bochner_recover.sparsegrid import (
    combination_coefficients,
    combination_terms,
    delta_tensor,
    delta_tensor_sequential,
    interpolate_set,
    interpolation_exponents,
    interpolation_level_set,
    interpolation_regime,
    level_count,
    raw_point_count,
    tensor_grid,
)


def test_combination_terms_signs():
    s = MultiIndex.from_dense([2, 0, 1])
    terms = combination_terms(s)
    assert len(terms) == 4
    assert sum(t.sign for t in terms) == 0
    assert {t.degree for t in terms} == {MultiIndex.from_dense(v) for v in ([2, 0, 1], [1, 0, 1], [2, 0, 0], [1, 0, 0])}


def test_tensor_grid_layout():
    pts, lab = tensor_grid(MultiIndex.from_dense([0, 2]), 3)
    assert pts.shape == (3, 3)
    assert np.all(pts[:, 0] == 0) and np.all(pts[:, 2] == 0)
    assert np.allclose(pts[:, 1], hermite_roots(2))
    assert list(lab[:, 0]) == [-1, 0, 1]


def test_tensor_grid_rejects_narrow_dim():
    with pytest.raises(ValueError):
        tensor_grid(MultiIndex.unit(3), 2)


def test_one_dimensional_difference_is_interpolant_difference():
    f = np.cos
    y = np.linspace(-2, 2, 9)
    D = delta_tensor(MultiIndex.unit(1, 3), lambda Y: f(Y[:, 0]), 1)
    want = interpolate_1d(3, f)(y) - interpolate_1d(2, f)(y)
    assert np.allclose(D(y[:, None]), want, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=3), st.integers(0, 10_000))
def test_combination_agrees_with_sequential(v, seed):
    s = MultiIndex.from_dense(v)
    rng = np.random.default_rng(seed)
    f = smooth_function(rng, 3)
    Y = rng.standard_normal((15, 3))
    assert np.allclose(delta_tensor(s, f, 3)(Y), delta_tensor_sequential(s, f, 3)(Y), atol=1e-10, rtol=0)


def test_difference_vanishes_below_its_degree():
    # degree 2 < s_1 = 3 in the first coordinate, so Delta_s f = 0
    f = lambda Y: Y[:, 0] ** 2 * Y[:, 1] ** 5 + Y[:, 0]  # noqa: E731
    Y = np.random.default_rng(0).standard_normal((10, 2))
    s = MultiIndex.from_dense([3, 1])
    assert np.max(np.abs(delta_tensor(s, f, 2)(Y))) < 1e-10


@pytest.mark.parametrize("seed", range(8))
def test_gpc_reproduction(seed):
    rng = np.random.default_rng(seed)
    lam = random_downward_closed(rng, int(rng.integers(5, 40)), 4, max_order=6)
    coef = rng.standard_normal(len(lam))
    interp = interpolate_set(lam, lambda Y: tensor_hermite_matrix(lam, Y) @ coef, dim=4, record_points=False)
    got = np.array([interp.coefficient_of(s) for s in lam]).ravel()
    assert np.max(np.abs(got - coef)) < 1e-9


def test_vector_valued_function_keeps_columns():
    lam = random_downward_closed(np.random.default_rng(3), 10, 2)
    C = np.random.default_rng(4).standard_normal((len(lam), 3))
    interp = interpolate_set(lam, lambda Y: tensor_hermite_matrix(lam, Y) @ C, dim=2, record_points=False)
    assert np.allclose(interp.coefficients, C, atol=1e-10)
    Y = np.random.default_rng(5).standard_normal((7, 2))
    assert interp(Y).shape == (7, 3)


def test_box_set_gives_tensor_interpolant():
    # for a box {s <= t} the combination collapses to I_t, which interpolates on the t grid
    t = MultiIndex.from_dense([2, 1])
    lam = [MultiIndex.from_dense(v) for v in itertools.product(range(3), range(2))]
    f = smooth_function(np.random.default_rng(1), 2)
    interp = interpolate_set(lam, f, dim=2, record_points=False)
    assert combination_coefficients(lam) == {t: 1}
    pts = tensor_grid(t, 2)[0]
    assert np.allclose(interp(pts), f(pts), atol=1e-12)


def test_rejects_non_downward_closed():
    with pytest.raises(ValueError):
        interpolate_set([MultiIndex.zero(), MultiIndex.unit(1, 2)], lambda Y: Y[:, 0], dim=1)


def test_ledger_counts_small_set():
    lam = [MultiIndex.from_dense(v) for v in ([0, 0], [1, 0], [0, 1], [1, 1], [2, 0])]
    interp = interpolate_set(lam, lambda Y: Y.sum(axis=1), dim=2)
    ledger = interp.ledger
    # [TRIVIAL] 1 + 3 + 3 + 9 + 5
    assert ledger.raw_count == raw_point_count(lam) == 21
    assert ledger.distinct_count <= ledger.raw_count
    assert ledger.evaluated_count <= ledger.distinct_count
    assert len(ledger.rows) == ledger.raw_count


def test_ledger_csv(tmp_path):
    lam = [MultiIndex.zero(), MultiIndex.unit(1)]
    interp = interpolate_set(lam, lambda Y: Y[:, 0], dim=1)
    path = tmp_path / "grid.csv"
    interp.ledger.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("level,s,e,node,y1")
    assert len(lines) == 1 + interp.ledger.raw_count


def test_combination_coefficients_sum_to_one_on_zero_mean():
    # sum_t c_t = 1 for any downward-closed set: I_Lambda reproduces constants
    for seed in range(5):
        lam = random_downward_closed(np.random.default_rng(seed), 15, 3)
        assert sum(combination_coefficients(lam).values()) == 1


def test_interpolation_regime_split():
    assert interpolation_regime(0.2, 0.8, 1.0) == "single"
    assert interpolation_regime(1.0, 0.8, 1.5) == "two"
    rate, expo = interpolation_exponents(1.0, 0.8, 1.5)
    assert rate == pytest.approx(4.0) and expo == pytest.approx(4 * (1.25 - 0.5))


def test_level_sets_are_nested_and_downward_closed():
    ws1 = WeightSystem.from_decay(0.6, 2.5, 0.45, 10_000.0, 2)
    ws2 = WeightSystem.from_decay(0.6, 2.5, 0.6, 470.0, 2)
    q1, q2, xi = 0.45 / 0.55, 1.5, 40.0
    top = level_count(xi, 1.0, q1, q2)
    sets = [interpolation_level_set(k, xi, ws1, ws2, q1, q2, 1.0) for k in range(top + 1)]
    for a, b in itertools.pairwise(sets):
        assert set(b) <= set(a)
    assert all(s.is_downward_closed() for s in sets)
    assert len(sets[0]) > len(sets[-1]) >= 1
