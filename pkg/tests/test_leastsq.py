import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import hermite_e
from scipy.integrate import quad

from bochner_recover.hermite import tensor_hermite_matrix
from bochner_recover.leastsq import (
    DegenerateDensityWarning,
    SampleBatch,
    basis_size_for,
    build_density,
    draw_batch,
    estimate_l2_error,
    estimate_tail_deviation,
    jackknife_rms,
    lsq_fit,
    samples_for,
    univariate_cdf,
)
from bochner_recover.multiindex import MultiIndex, WeightSystem, first_by_weight


def density_for(ws, m, factor=8):
    ordered, logw = first_by_weight([(ws, 1.0)], factor * m)
    return ordered, build_density(ordered, m, factor * m, log_weights=logw)


def test_sample_count_rule():
    # [TRIVIAL] ceil(2 m ln(m + 1))
    assert [samples_for(m) for m in (1, 4, 16, 64)] == [2, 13, 91, 535]
    assert basis_size_for(91) == 16 and basis_size_for(90) == 15
    assert basis_size_for(1000, conservative_basis=True) == int(1000 / (20 * math.log(1000)))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5000))
def test_basis_size_is_largest_fit(n):
    m = basis_size_for(n)
    assert samples_for(m) <= n if m else True
    assert samples_for(m + 1) > n


def test_univariate_cdf_frozen_value():
    # [DERIVED] mpmath quadrature of H_2^2 gamma on (-inf, 0.7]
    assert univariate_cdf(2, 0.7) == pytest.approx(0.59519592152616098787, abs=1e-14)


@pytest.mark.parametrize("t", [0, 1, 3, 6])
def test_univariate_cdf_limits_and_monotone(t):
    y = np.linspace(-12, 12, 2001)
    F = univariate_cdf(t, y)
    assert F[0] == pytest.approx(0, abs=1e-15) and F[-1] == pytest.approx(1, abs=1e-14)
    assert np.all(np.diff(F) >= -1e-15)


def test_density_mass_is_one_in_two_dimensions():
    ws = WeightSystem.from_sequence([1.5, 3.0], 2)
    ordered, spec = density_for(ws, 5)
    assert spec.dimension == 2
    nodes, weights = hermite_e.hermegauss(60)
    weights = weights / math.sqrt(2 * math.pi)
    d = spec.dimension
    grids = np.meshgrid(*([nodes] * d), indexing="ij")
    W = np.prod(np.meshgrid(*([weights] * d), indexing="ij"), axis=0).ravel()
    pts = np.stack([g.ravel() for g in grids], axis=1)
    assert float(W @ spec.density(pts)) == pytest.approx(1.0, abs=1e-10)


def test_density_one_dimensional_quadrature():
    ws = WeightSystem.from_sequence([1.5], 2)
    _, spec = density_for(ws, 3)
    pdf = lambda y: spec.density(np.array([[y]]))[0] * math.exp(-y * y / 2) / math.sqrt(2 * math.pi)  # noqa: E731
    assert quad(pdf, -np.inf, np.inf, limit=200)[0] == pytest.approx(1.0, abs=1e-8)


def test_density_lower_bound_by_christoffel_half():
    ws = WeightSystem.geometric(1.5, 2.0, 2)
    _, spec = density_for(ws, 6)
    Y = np.random.default_rng(0).standard_normal((500, spec.dimension))
    assert np.all(spec.density(Y) >= 0.5 * spec.christoffel_part(Y) * (1 - 1e-14))


def test_weights_are_reciprocal_density():
    ws = WeightSystem.geometric(1.5, 2.0, 2)
    _, spec = density_for(ws, 6)
    batch = draw_batch(spec, 2000, 1)
    err = np.abs(batch.weights * spec.density(batch.points) - 1.0)
    assert err.max() <= np.finfo(float).eps


def test_importance_weights_have_unit_mean():
    ws = WeightSystem.geometric(1.5, 2.0, 2)
    _, spec = density_for(ws, 6)
    batch = draw_batch(spec, 200_000, 3)
    se = batch.weights.std() / math.sqrt(len(batch))
    assert abs(batch.weights.mean() - 1.0) < 4 * se


def test_sampler_matches_univariate_marginal():
    # chi-square style check of the component sampler against the closed-form CDF
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateDensityWarning)
        spec = build_density([MultiIndex.unit(1, 3)], 1)
    y = draw_batch(spec, 1_000_000, 7).points[:, 0]
    edges = np.linspace(-6, 6, 41)
    counts, _ = np.histogram(y, bins=edges)
    probs = np.diff(univariate_cdf(3, edges))
    assert np.abs(counts / y.size - probs).sum() < 0.01


def test_degenerate_tail_falls_back():
    with pytest.warns(DegenerateDensityWarning):
        spec = build_density([MultiIndex.zero(), MultiIndex.unit(1)], 2)
    assert spec.degenerate and np.allclose(spec.mixture, [0.5, 0.5])


def test_ambient_coordinates():
    ws = WeightSystem.from_sequence([1.5], 2)
    _, spec = density_for(ws, 2)
    g = draw_batch(spec, 5000, 0, ambient_dim=4)
    z = draw_batch(spec, 50, 0, ambient_dim=4, ambient="zero")
    assert g.points.shape == (5000, 4) and np.all(z.points[:, 1:] == 0)
    assert abs(g.points[:, 3].std() - 1) < 0.05
    with pytest.raises(ValueError):
        draw_batch(spec, 5, 0, ambient="uniform")


def test_same_seed_same_batch():
    ws = WeightSystem.geometric(1.5, 2.0, 2)
    _, spec = density_for(ws, 4)
    a, b = draw_batch(spec, 100, 42), draw_batch(spec, 100, 42)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.weights, b.weights)
    assert not np.array_equal(a.points, draw_batch(spec, 100, 43).points)


def test_batch_csv_round_trip(tmp_path):
    ws = WeightSystem.geometric(1.5, 2.0, 2)
    _, spec = density_for(ws, 4)
    batch = draw_batch(spec, 20, 5)
    path = tmp_path / "batch.csv"
    batch.to_csv(path)
    back = SampleBatch.from_csv(path, spec.digest)
    assert np.array_equal(back.points, batch.points) and np.array_equal(back.weights, batch.weights)
    assert np.array_equal(back.components, batch.components)


@pytest.mark.parametrize("m", [4, 16, 64])
def test_reproduction_of_basis_functions(m):
    ws = WeightSystem.from_decay(0.6, 2.5, 0.5, 120.0, 2)
    ordered, spec = density_for(ws, m)
    basis = ordered[:m]
    rng = np.random.default_rng(m)
    coef = rng.standard_normal(m)
    good = 0
    for seed in range(20):
        batch = draw_batch(spec, samples_for(m), seed)
        fit = lsq_fit(batch, basis, tensor_hermite_matrix(basis, batch.points) @ coef)
        good += np.max(np.abs(fit.coefficients - coef)) < 1e-9
    assert good >= 16


def test_fit_flags_rank_deficiency():
    basis = [MultiIndex.zero(), MultiIndex.unit(1)]
    batch = SampleBatch(np.zeros((3, 1)), np.ones(3), np.zeros(3, dtype=int), 0, "")
    fit = lsq_fit(batch, basis, np.ones(3))
    assert fit.flagged and fit.rank == 1
    assert fit.diagnostics()["flagged"] is True


def test_fit_needs_enough_samples():
    batch = SampleBatch(np.zeros((1, 1)), np.ones(1), np.zeros(1, dtype=int), 0, "")
    with pytest.raises(ValueError):
        lsq_fit(batch, [MultiIndex.zero(), MultiIndex.unit(1)], np.ones(1))


def test_fit_rejects_non_finite_values():
    batch = SampleBatch(np.array([[0.0], [1.0]]), np.ones(2), np.zeros(2, dtype=int), 0, "")
    with pytest.raises(FloatingPointError):
        lsq_fit(batch, [MultiIndex.zero()], np.array([1.0, np.nan]))


def test_monte_carlo_second_moment():
    # [DERIVED] E[y_1^2] = 1 under the standard Gaussian
    est = estimate_l2_error(lambda Y: Y[:, 0], lambda Y: np.zeros(len(Y)), 100_000, 9)
    assert abs(est.value - 1.0) < 3 * est.stderr


def test_jackknife_constant_has_zero_error():
    est = jackknife_rms(np.full(10, 4.0))
    assert est.value == 2.0 and est.stderr == pytest.approx(0.0, abs=1e-15)


def test_tail_deviation_in_unit_interval():
    ws = WeightSystem.geometric(1.5, 1.5, 2)
    _, logw = first_by_weight([(ws, 1.0)], 80)
    dev = estimate_tail_deviation(logw, 10, 80)
    assert 0 <= dev <= 1
