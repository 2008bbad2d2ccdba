import numpy as np
import pytest

from bochner_recover.spatial import (
    ExactSolution,
    GalerkinSolution,
    ParametricField,
    ProblemConfig,
    SpatialHierarchy,
    assemble_and_solve,
    h1_error_rule,
    load_problem,
    write_solution_csv,
)


def h1_seminorm_error(hier, level, fe_coeffs, du, npts=4):
    xq, wq = h1_error_rule(hier, level + 2, npts)
    approx = hier.basis_matrix(level, xq, derivative=True) @ fe_coeffs
    return float(np.sqrt(np.sum(wq * (approx - du(xq)) ** 2)))


def test_dimensions_and_nodes():
    h = SpatialHierarchy(5)
    assert [h.dimension(k) for k in range(4)] == [0, 1, 3, 7]
    assert h.merged_dimension(3) == 10
    h2 = SpatialHierarchy(4, n0=2, order=2)
    assert h2.dimension(0) == 3 and np.allclose(h2.interior_nodes(0), [0.25, 0.5, 0.75])


@pytest.mark.parametrize("order", [1, 2])
def test_constant_coefficient_nodal_exactness(order):
    # [DERIVED] -u'' = 1 with zero boundary values has u = x(1-x)/2
    hier = SpatialHierarchy(7, order=order)
    sol = assemble_and_solve(ParametricField(scale=0.0), hier, 7, np.zeros(3))
    x = hier.interior_nodes(7)
    assert np.max(np.abs(sol.coefficients - x * (1 - x) / 2)) < 1e-12
    assert sol.residual < 1e-10


@pytest.mark.parametrize("order,rate", [(1, 1.0), (2, 2.0)])
def test_interpolation_rate(order, rate):
    hier = SpatialHierarchy(9, order=order)
    v = lambda x: np.sin(np.pi * x) * np.exp(x)  # noqa: E731
    dv = lambda x: np.exp(x) * (np.pi * np.cos(np.pi * x) + np.sin(np.pi * x))  # noqa: E731
    errs = [h1_seminorm_error(hier, k, hier.project(k, v).coefficients, dv) for k in range(3, 9)]
    slopes = -np.diff(np.log2(errs))
    assert np.all(np.abs(slopes - rate) < 0.15)


def test_galerkin_self_convergence_rate():
    hier = SpatialHierarchy(11)
    field_ = ParametricField()
    y = np.random.default_rng(0).standard_normal(64)
    ref = assemble_and_solve(field_, hier, 11, y).as_function()
    errs = []
    for k in range(3, 8):
        u = assemble_and_solve(field_, hier, k, y)
        errs.append(h1_seminorm_error(hier, k, u.coefficients, ref.derivative))
    assert np.all(np.abs(-np.diff(np.log2(errs)) - 1.0) < 0.15)


def test_details_telescope_to_projection():
    hier = SpatialHierarchy(6)
    v = lambda x: np.cos(3 * x) * x * (1 - x)  # noqa: E731
    total = sum(hier.detail(k, v).on_level(6) for k in range(7))
    assert np.allclose(total, hier.project(6, v).coefficients, atol=1e-14)


def test_merged_detail_evaluates_as_difference():
    hier = SpatialHierarchy(5, n0=2)
    v = lambda x: np.sin(2 * x)  # noqa: E731
    x = np.linspace(0, 1, 33)
    d = hier.detail(3, v)
    assert np.allclose(d(x), hier.project(3, v)(x) - hier.project(2, v)(x), atol=1e-14)
    assert list(d.signs[: hier.dimension(3)]) == [1.0] * hier.dimension(3)


def test_prolongation_is_exact_for_coarse_functions():
    hier = SpatialHierarchy(6, order=2)
    v = hier.project(2, lambda x: x * (1 - x) * np.exp(x))
    x = np.linspace(0, 1, 41)
    fine = hier.basis_matrix(5, x) @ v.on_level(5)
    assert np.allclose(fine, v(x), atol=1e-13)


def test_basis_matrix_rejects_outside_points():
    with pytest.raises(ValueError):
        SpatialHierarchy(3).basis_matrix(2, [1.5])


def test_exact_solution_agrees_with_fine_galerkin():
    field_ = ParametricField()
    hier = SpatialHierarchy(10)
    Y = np.random.default_rng(1).standard_normal((3, 64))
    exact = ExactSolution(field_, 1.0, quad_level=12)
    galerkin = GalerkinSolution(field_, hier, 10)
    x = hier.interior_nodes(10)
    # P1 Galerkin is nodally exact in 1-D up to quadrature of a(x, y)
    assert np.max(np.abs(exact(x, Y) - galerkin(x, Y))) < 1e-6


def test_exact_solution_constant_coefficient():
    exact = ExactSolution(ParametricField(scale=0.0), 2.0, quad_level=6)
    x = np.arange(1, 64) / 64
    assert np.allclose(exact(x, np.zeros((1, 4)))[0], x * (1 - x), atol=1e-14)
    assert np.allclose(exact.derivative(x, np.zeros((1, 4)))[0], 1 - 2 * x, atol=1e-14)


def test_exact_solution_guards():
    exact = ExactSolution(ParametricField(), 1.0, quad_level=4)
    with pytest.raises(ValueError):
        exact([0.3], np.zeros((1, 64)))
    with pytest.raises(TypeError):
        ExactSolution(ParametricField(), lambda x: x)


def test_field_invariants():
    f = ParametricField(theta=2.5, scale=0.6, active=32)
    b = f.b(np.arange(1, 33))
    assert np.all(np.diff(b) <= 0)
    x = np.linspace(0, 1, 11)
    Y = np.random.default_rng(0).standard_normal((5, 32))
    assert np.all(f.coefficient(x, Y) > 0)
    fine = np.linspace(0, 1, 100_001)
    assert np.max(np.abs(f.psi(fine)), axis=1) == pytest.approx(b, rel=1e-3)


def test_tail_bound_decreases_with_truncation():
    assert ProblemConfig(J_a=128).tail_bound() < ProblemConfig(J_a=64).tail_bound() < 0.01


def test_problem_file_and_csv(tmp_path):
    path = tmp_path / "problem.toml"
    path.write_text("[problem]\ntheta = 3.0\nc = 0.5\nK = 8\nJ_a = 16\n")
    cfg = load_problem(path)
    assert (cfg.theta, cfg.c, cfg.K, cfg.J_a, cfg.r_sp) == (3.0, 0.5, 8, 16, 1)
    out = tmp_path / "u.csv"
    write_solution_csv(out, [0.25, 0.5], [0.1, 0.2])
    assert out.read_text().splitlines() == ["x,u", "0.25,0.1", "0.5,0.2"]
