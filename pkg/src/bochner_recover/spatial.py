"""Dyadic 1-D Lagrange finite elements on (0, 1) and the log-normal diffusion problem.

Level k has n0 * 2^k cells carrying continuous piecewise polynomials of
order r with zero boundary values. Nodes are nested across levels, so the
coarse space sits inside the fine one and nodal interpolation commutes with
refinement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss
from scipy.sparse.linalg import spsolve

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


@lru_cache(maxsize=None)
def gauss_rule(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def _local_basis(order: int, t: np.ndarray) -> np.ndarray:
    ref = np.linspace(0.0, 1.0, order + 1)
    out = np.ones((t.size, order + 1))
    for i in range(order + 1):
        for m in range(order + 1):
            if m != i:
                out[:, i] *= (t - ref[m]) / (ref[i] - ref[m])
    return out


def _local_deriv(order: int, t: np.ndarray) -> np.ndarray:
    ref = np.linspace(0.0, 1.0, order + 1)
    out = np.zeros((t.size, order + 1))
    for i in range(order + 1):
        for skip in range(order + 1):
            if skip == i:
                continue
            term = np.full(t.size, 1.0 / (ref[i] - ref[skip]))
            for m in range(order + 1):
                if m != i and m != skip:
                    term *= (t - ref[m]) / (ref[i] - ref[m])
            out[:, i] += term
    return out


@dataclass(frozen=True)
class SpatialHierarchy:
    max_level: int
    n0: int = 1
    order: int = 1
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.max_level < 0 or self.n0 < 1 or self.order < 1:
            raise ValueError("need max_level >= 0, n0 >= 1, order >= 1")

    def cells(self, k: int) -> int:
        self._check(k)
        return self.n0 * 2**k

    def _check(self, k: int) -> None:
        if not 0 <= k <= self.max_level + 3:
            raise ValueError(f"level {k} outside 0..{self.max_level + 3}")

    def dimension(self, k: int) -> int:
        return self.order * self.cells(k) - 1

    def interior_nodes(self, k: int) -> np.ndarray:
        n = self.order * self.cells(k)
        return np.arange(1, n) / n

    def merged_nodes(self, k: int) -> np.ndarray:
        """Nodes of the merged frame: level-k nodes followed by level-(k-1) nodes."""
        if k == 0:
            return self.interior_nodes(0)
        return np.concatenate([self.interior_nodes(k), self.interior_nodes(k - 1)])

    def merged_dimension(self, k: int) -> int:
        return self.dimension(k) + (self.dimension(k - 1) if k > 0 else 0)

    def basis_matrix(self, k: int, x, derivative: bool = False) -> sp.csr_matrix:
        """Rows: level-k nodal basis functions (or derivatives) at the points x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any((x < 0) | (x > 1)):
            raise ValueError("points must lie in [0, 1]")
        n = self.cells(k)
        cell = np.clip(np.floor(x * n).astype(int), 0, n - 1)
        t = x * n - cell
        vals = _local_deriv(self.order, t) * n if derivative else _local_basis(self.order, t)
        glob = cell[:, None] * self.order + np.arange(self.order + 1)[None, :]
        rows = np.repeat(np.arange(x.size), self.order + 1)
        cols = glob.ravel() - 1
        keep = (cols >= 0) & (cols < self.dimension(k))
        return sp.csr_matrix(
            (vals.ravel()[keep], (rows[keep], cols[keep])), shape=(x.size, self.dimension(k))
        )

    def prolongation(self, k: int, K: int) -> sp.csr_matrix:
        """Coefficients of a level-k function re-expressed on level K >= k."""
        key = ("prolong", k, K)
        if key not in self._cache:
            if K < k:
                raise ValueError("can only prolongate to a finer level")
            self._cache[key] = self.basis_matrix(k, self.interior_nodes(K))
        return self._cache[key]

    def merged_to_fine(self, k: int, K: int) -> sp.csr_matrix:
        """Map merged-frame detail coefficients to level-K nodal coefficients.

        The coarse half of the frame enters with a minus sign.
        """
        key = ("merged", k, K)
        if key not in self._cache:
            if k == 0:
                M = self.prolongation(0, K)
            else:
                M = sp.hstack([self.prolongation(k, K), -self.prolongation(k - 1, K)]).tocsr()
            self._cache[key] = M
        return self._cache[key]

    def project(self, k: int, v: Callable) -> "FEFunction":
        """P_k v: nodal interpolation."""
        vals = np.asarray(v(self.interior_nodes(k)), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("non-finite nodal value")
        return FEFunction(self, k, vals)

    def detail(self, k: int, v: Callable) -> "MergedDetail":
        """delta_k v = P_k v - P_{k-1} v in the merged nodal frame (delta_0 = P_0)."""
        vals = np.asarray(v(self.merged_nodes(k)), dtype=float)
        return MergedDetail(self, k, vals)

    def detail_values(self, k: int, v, Y) -> np.ndarray:
        """v at the merged-frame nodes for each parametric point; shape (N, merged dimension)."""
        return np.asarray(v(self.merged_nodes(k), np.atleast_2d(Y)), dtype=float)


@dataclass(frozen=True)
class FEFunction:
    hier: SpatialHierarchy
    level: int
    coefficients: np.ndarray

    def __call__(self, x) -> np.ndarray:
        return self.hier.basis_matrix(self.level, x) @ self.coefficients

    def derivative(self, x) -> np.ndarray:
        return self.hier.basis_matrix(self.level, x, derivative=True) @ self.coefficients

    def on_level(self, K: int) -> np.ndarray:
        return self.hier.prolongation(self.level, K) @ self.coefficients


@dataclass(frozen=True)
class MergedDetail:
    """Values at the merged nodes; basis is +phi on level k and -phi on level k-1."""

    hier: SpatialHierarchy
    level: int
    values: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        return self.hier.merged_nodes(self.level)

    @property
    def signs(self) -> np.ndarray:
        h, k = self.hier, self.level
        coarse = h.dimension(k - 1) if k > 0 else 0
        return np.concatenate([np.ones(h.dimension(k)), -np.ones(coarse)])

    def __call__(self, x) -> np.ndarray:
        h, k = self.hier, self.level
        nk = h.dimension(k)
        out = h.basis_matrix(k, x) @ self.values[:nk]
        if k > 0:
            out = out - h.basis_matrix(k - 1, x) @ self.values[nk:]
        return out

    def on_level(self, K: int) -> np.ndarray:
        return self.hier.merged_to_fine(self.level, K) @ self.values


@dataclass(frozen=True)
class ParametricField:
    """a(x, y) = exp(sum_{j <= J_a} y_j c j^-theta sin(j pi x))."""

    theta: float = 2.5
    scale: float = 0.6
    active: int = 64

    def __post_init__(self):
        if self.theta <= 1:
            raise ValueError("theta must exceed 1")

    def b(self, j) -> np.ndarray:
        return self.scale * np.asarray(j, dtype=float) ** (-self.theta)

    def psi(self, x) -> np.ndarray:
        """Shape (J_a, len(x))."""
        j = np.arange(1, self.active + 1)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.b(j)[:, None] * np.sin(np.pi * j[:, None] * x[None, :])

    def exponent(self, x, Y, psi: np.ndarray | None = None) -> np.ndarray:
        Y = _fit_width(Y, self.active)
        psi = self.psi(x) if psi is None else psi
        return Y @ psi

    def coefficient(self, x, Y) -> np.ndarray:
        return np.exp(self.exponent(x, Y))


def _fit_width(Y, width: int) -> np.ndarray:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] >= width:
        return Y[:, :width]
    return np.hstack([Y, np.zeros((Y.shape[0], width - Y.shape[1]))])


def _rhs_values(f, x: np.ndarray) -> np.ndarray:
    if callable(f):
        return np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)
    return np.full(x.shape, float(f))


@dataclass(frozen=True)
class PdeSolution:
    level: int
    coefficients: np.ndarray
    y: np.ndarray
    hier: SpatialHierarchy
    residual: float = 0.0

    def as_function(self) -> FEFunction:
        return FEFunction(self.hier, self.level, self.coefficients)


def stiffness_and_load(field_: ParametricField, hier: SpatialHierarchy, k: int, y, f=1.0):
    """Galerkin matrix and load vector on level k with 4-point Gauss per cell."""
    n = hier.cells(k)
    r = hier.order
    tq, wq = gauss_rule(4)
    xq = (np.arange(n)[:, None] + tq[None, :]) / n
    a = np.exp(field_.exponent(xq.ravel(), np.atleast_2d(y))[0]).reshape(n, -1)
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise FloatingPointError("coefficient not positive and finite at quadrature points")
    fq = _rhs_values(f, xq.ravel()).reshape(n, -1)
    phi = _local_basis(r, tq)
    dphi = _local_deriv(r, tq) * n
    h = 1.0 / n
    Kloc = np.einsum("cq,q,qa,qb->cab", a, wq * h, dphi, dphi)
    Floc = np.einsum("cq,q,qa->ca", fq, wq * h, phi)
    glob = np.arange(n)[:, None] * r + np.arange(r + 1)[None, :] - 1
    rows = np.repeat(glob, r + 1, axis=1).ravel()
    cols = np.tile(glob, (1, r + 1)).ravel()
    dim = hier.dimension(k)
    keep = (rows >= 0) & (rows < dim) & (cols >= 0) & (cols < dim)
    A = sp.csr_matrix((Kloc.ravel()[keep], (rows[keep], cols[keep])), shape=(dim, dim))
    fl, gl = Floc.ravel(), glob.ravel()
    ok = (gl >= 0) & (gl < dim)
    b = np.bincount(gl[ok], weights=fl[ok], minlength=dim)
    return A, b


def assemble_and_solve(field_: ParametricField, hier: SpatialHierarchy, k: int, y, f=1.0) -> PdeSolution:
    """Galerkin solution u_k(., y) in V_k."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    A, b = stiffness_and_load(field_, hier, k, y, f)
    if A.shape[0] == 0:
        return PdeSolution(k, np.zeros(0), y, hier)
    u = np.atleast_1d(spsolve(A.tocsc(), b))
    res = float(np.linalg.norm(A @ u - b) / max(np.linalg.norm(b), 1e-300))
    return PdeSolution(k, u, y, hier, res)


def evaluate_solution(sol: PdeSolution, x) -> np.ndarray:
    return sol.as_function()(x)


class ExactSolution:
    """Point values and derivatives of the exact 1-D solution for constant right-hand side.

    With F(x) = f x and C = int F/a / int 1/a, the solution is
    u(x) = int_0^x (C - F)/a and u'(x) = (C - F(x))/a(x). Integrals use
    3-point Gauss on a uniform mesh of 2^quad_level cells, so values at
    dyadic points up to that level are exact up to quadrature error.
    """

    def __init__(self, field_: ParametricField, rhs: float = 1.0, quad_level: int = 13, cache_size: int = 50_000):
        if callable(rhs):
            raise TypeError("the exact solution supports a constant right-hand side only")
        self.field = field_
        self.rhs = float(rhs)
        self.quad_level = quad_level
        n = 2**quad_level
        tq, wq = gauss_rule(3)
        self._xq = ((np.arange(n)[:, None] + tq[None, :]) / n).ravel()
        self._wq = np.tile(wq / n, n)
        self._psi = field_.psi(self._xq)
        self._n = n
        self._cache: dict[bytes, np.ndarray] = {}
        self._cache_size = cache_size

    def _integrals(self, Y: np.ndarray):
        inv_a = np.exp(-(Y @ self._psi))
        i1 = (inv_a * self._wq).reshape(Y.shape[0], self._n, 3).sum(axis=2)
        ix = (inv_a * self._wq * self._xq).reshape(Y.shape[0], self._n, 3).sum(axis=2)
        C = self.rhs * ix.sum(axis=1) / i1.sum(axis=1)
        return C, i1, ix

    def _boundary_values(self, Y: np.ndarray) -> np.ndarray:
        """u at the 2^quad_level + 1 mesh points, one row per parametric point."""
        out = np.empty((Y.shape[0], self._n + 1))
        missing = []
        for i, y in enumerate(Y):
            hit = self._cache.get(y.tobytes())
            if hit is None:
                missing.append(i)
            else:
                out[i] = hit
        for start in range(0, len(missing), 64):
            idx = missing[start:start + 64]
            C, i1, ix = self._integrals(Y[idx])
            cell = C[:, None] * i1 - self.rhs * ix
            vals = np.zeros((len(idx), self._n + 1))
            vals[:, 1:] = np.cumsum(cell, axis=1)
            vals[:, -1] = 0.0
            out[idx] = vals
            if len(self._cache) < self._cache_size:
                for i, row in zip(idx, vals):
                    self._cache[Y[i].tobytes()] = row
        return out

    def __call__(self, x, Y) -> np.ndarray:
        """u(x_i, y_n); x must be dyadic points of the quadrature mesh."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        pos = x * self._n
        idx = np.rint(pos).astype(int)
        if np.any(np.abs(pos - idx) > 1e-9):
            raise ValueError("exact point values are available at mesh points of the quadrature level only")
        Y = _fit_width(Y, self.field.active)
        return self._boundary_values(Y)[:, idx]

    def derivative(self, x, Y) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        Y = _fit_width(Y, self.field.active)
        C, _, _ = self._integrals(Y)
        a = np.exp(Y @ self.field.psi(x))
        return (C[:, None] - self.rhs * x[None, :]) / a


class GalerkinSolution:
    """Point values of the level-`level` Galerkin solution, as an alternative sampler."""

    def __init__(self, field_: ParametricField, hier: SpatialHierarchy, level: int, rhs=1.0):
        self.field, self.hier, self.level, self.rhs = field_, hier, level, rhs
        self._cache: dict[bytes, np.ndarray] = {}

    def _coeffs(self, y: np.ndarray) -> np.ndarray:
        key = y.tobytes()
        if key not in self._cache:
            self._cache[key] = assemble_and_solve(self.field, self.hier, self.level, y, self.rhs).coefficients
        return self._cache[key]

    def __call__(self, x, Y) -> np.ndarray:
        B = self.hier.basis_matrix(self.level, x)
        Y = _fit_width(Y, self.field.active)
        return np.vstack([B @ self._coeffs(y) for y in Y])

    def derivative(self, x, Y) -> np.ndarray:
        B = self.hier.basis_matrix(self.level, x, derivative=True)
        Y = _fit_width(Y, self.field.active)
        return np.vstack([B @ self._coeffs(y) for y in Y])


@dataclass(frozen=True)
class ProblemConfig:
    theta: float = 2.5
    c: float = 0.6
    r_sp: int = 1
    n0: int = 1
    K: int = 10
    J_a: int = 64
    rhs: float = 1.0

    def field(self) -> ParametricField:
        return ParametricField(self.theta, self.c, self.J_a)

    def hierarchy(self) -> SpatialHierarchy:
        return SpatialHierarchy(self.K, self.n0, self.r_sp)

    def tail_bound(self) -> float:
        """sum_{j > J_a} c j^-theta sqrt(2/pi): expected size of the neglected exponent terms."""
        return self.c * np.sqrt(2 / np.pi) * self.J_a ** (1 - self.theta) / (self.theta - 1)


def load_problem(path) -> ProblemConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    data = data.get("problem", data)
    allowed = ProblemConfig.__dataclass_fields__
    return ProblemConfig(**{k: v for k, v in data.items() if k in allowed})


def write_solution_csv(path, x, u) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "u"])
        for xi, ui in zip(np.atleast_1d(x), np.atleast_1d(u)):
            w.writerow([repr(float(xi)), repr(float(ui))])


def h1_error_rule(hier: SpatialHierarchy, level: int | None = None, npts: int = 4):
    """Quadrature points and weights fine enough to integrate derivatives of V_K exactly."""
    level = hier.max_level + 1 if level is None else level
    n = hier.n0 * 2**level
    tq, wq = gauss_rule(npts)
    x = ((np.arange(n)[:, None] + tq[None, :]) / n).ravel()
    return x, np.tile(wq / n, n)
