"""Tensor difference operators, sparse-grid GPC interpolation and its multi-level version."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hermite import hermite_roots, hermite_transform, lagrange_matrix, signed_indices
from .hermite import tensor_hermite_matrix
from .multiindex import (
    DEFAULT_CAP,
    IndexSet,
    MultiIndex,
    WeightSystem,
    enumerate_constrained_set,
    is_downward_closed,
)


@dataclass(frozen=True)
class CombinationTerm:
    s: MultiIndex
    e: MultiIndex

    @property
    def sign(self) -> int:
        return -1 if self.e.order() % 2 else 1

    @property
    def degree(self) -> MultiIndex:
        return self.s - self.e


def combination_terms(s: MultiIndex) -> list[CombinationTerm]:
    """All e in {0,1}^supp(s) with their signs (-1)^|e|."""
    supp = s.support()
    out = []
    for bits in itertools.product((0, 1), repeat=len(supp)):
        e = MultiIndex(zip(supp, bits))
        out.append(CombinationTerm(s, e))
    return out


def tensor_grid(t: MultiIndex, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Points y_{t;k} (zeros off the support) and their signed labels, C-order over the support."""
    supp = t.support()
    if supp and supp[-1] > dim:
        raise ValueError(f"grid needs {supp[-1]} coordinates, got dim = {dim}")
    axes = [hermite_roots(v) for _, v in t.entries]
    labels = [signed_indices(v) for _, v in t.entries]
    n = math.prod(a.size for a in axes)
    pts = np.zeros((n, dim))
    lab = np.zeros((n, len(supp)), dtype=int)
    if supp:
        mesh = np.meshgrid(*axes, indexing="ij")
        lmesh = np.meshgrid(*labels, indexing="ij")
        for i, j in enumerate(supp):
            pts[:, j - 1] = mesh[i].ravel()
            lab[:, i] = lmesh[i].ravel()
    return pts, lab


def _tensor_lagrange_rows(t: MultiIndex, Y: np.ndarray) -> np.ndarray:
    """prod_j L_{t_j;k_j}(y_j) for every grid node, same order as tensor_grid."""
    rows = np.ones((Y.shape[0], 1))
    for j, v in t.entries:
        col = Y[:, j - 1] if j <= Y.shape[1] else np.zeros(Y.shape[0])
        L = lagrange_matrix(v, col)
        rows = (rows[:, :, None] * L[:, None, :]).reshape(Y.shape[0], -1)
    return rows


def _as_points(Y, dim: int) -> np.ndarray:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] < dim:
        Y = np.hstack([Y, np.zeros((Y.shape[0], dim - Y.shape[1]))])
    return Y


def _call(f: Callable, pts: np.ndarray) -> np.ndarray:
    vals = np.asarray(f(pts), dtype=float)
    if vals.shape[0] != pts.shape[0]:
        raise ValueError(f"function returned {vals.shape[0]} rows for {pts.shape[0]} points")
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite function value at a grid point")
    return vals


class TensorDifference:
    """Delta_s f assembled from the combination formula sum_e (-1)^|e| I_{s-e} f."""

    def __init__(self, s: MultiIndex, f: Callable, dim: int | None = None):
        self.s = s
        self.dim = max(dim or 0, s.max_coordinate(), 1)
        self.terms = combination_terms(s)
        self._values = []
        for term in self.terms:
            pts, _ = tensor_grid(term.degree, self.dim)
            self._values.append(_call(f, pts))

    def __call__(self, Y) -> np.ndarray:
        Y = _as_points(Y, self.dim)
        out = 0.0
        for term, vals in zip(self.terms, self._values):
            out = out + term.sign * (_tensor_lagrange_rows(term.degree, Y) @ vals)
        return out


def delta_tensor(s: MultiIndex, f: Callable, dim: int | None = None) -> TensorDifference:
    return TensorDifference(s, f, dim)


def delta_tensor_sequential(s: MultiIndex, f: Callable, dim: int | None = None) -> Callable:
    """Delta_s f applied one coordinate at a time; an independent route to delta_tensor."""
    width = max(dim or 0, s.max_coordinate(), 1)
    supp = set(s.support())

    def base(Y):
        Z = _as_points(Y, width).copy()
        off = [j for j in range(1, width + 1) if j not in supp]
        if off:
            Z[:, np.array(off) - 1] = 0.0
        return np.asarray(f(Z), dtype=float)

    def along(F, j, m):
        def G(Y):
            Y = _as_points(Y, width)
            out = 0.0
            for deg, sign in ((m, 1.0), (m - 1, -1.0)):
                if deg < 0:
                    continue
                nodes = hermite_roots(deg)
                L = lagrange_matrix(deg, Y[:, j - 1])
                for k, node in enumerate(nodes):
                    Z = Y.copy()
                    Z[:, j - 1] = node
                    vals = F(Z)
                    weight = L[:, k].reshape((-1,) + (1,) * (vals.ndim - 1))
                    out = out + sign * weight * vals
            return out

        return G

    F = base
    for j, m in s.entries:
        F = along(F, j, m)
    return F


@dataclass
class GridLedger:
    """Sample points of a sparse-grid operator.

    raw_count feeds the cost model and counts every (s, e, k).
    distinct_count deduplicates the union of all tensor grids. evaluated_count
    counts the points actually fed to the function, i.e. the grids whose
    aggregated combination coefficient is non-zero.
    """

    rows: list = field(default_factory=list)
    raw_count: int = 0
    distinct_count: int = 0
    evaluated_count: int = 0

    def to_csv(self, path) -> None:
        dim = max((len(r[4]) for r in self.rows), default=0)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "s", "e", "node"] + [f"y{j + 1}" for j in range(dim)] + ["raw_count_flag"])
            seen = set()
            for level, s, e, node, y in self.rows:
                key = (level, tuple(np.round(y, 15)))
                flag = 0 if key in seen else 1
                seen.add(key)
                w.writerow([level, s.to_text(), e.to_text(), " ".join(map(str, node))] + [repr(float(v)) for v in y] + [flag])


def raw_point_count(members: Sequence[MultiIndex]) -> int:
    """sum_s sum_e |pi_{s-e}| = sum_s prod_{j in supp s} (2 s_j + 1)."""
    return sum(math.prod(2 * v + 1 for _, v in s.entries) for s in members)


def combination_coefficients(members: Sequence[MultiIndex]) -> dict[MultiIndex, int]:
    """Aggregated c_t with I_Lambda = sum_t c_t I_t; zero entries dropped."""
    coef: dict[MultiIndex, int] = {}
    for s in members:
        for term in combination_terms(s):
            t = term.degree
            coef[t] = coef.get(t, 0) + term.sign
    return {t: c for t, c in coef.items() if c}


class SparseInterpolant:
    """I_Lambda f stored as Hermite coefficients over Lambda.

    Evaluation is H_Lambda(Y) @ coefficients. Vector-valued f gives one
    coefficient column per output component.
    """

    def __init__(self, members: Sequence[MultiIndex], coefficients: np.ndarray, scalar: bool, ledger: GridLedger, dim: int):
        self.members = list(members)
        self.coefficients = coefficients
        self.scalar = scalar
        self.ledger = ledger
        self.dim = dim
        self._row = {s: i for i, s in enumerate(self.members)}

    def __call__(self, Y) -> np.ndarray:
        out = tensor_hermite_matrix(self.members, np.atleast_2d(Y)) @ self.coefficients
        return out[:, 0] if self.scalar else out

    def coefficient_of(self, s: MultiIndex):
        """Coefficient of H_s (a float for scalar f, a row otherwise); zero outside Lambda."""
        i = self._row.get(s)
        row = np.zeros(self.coefficients.shape[1]) if i is None else self.coefficients[i]
        return float(row[0]) if self.scalar else row


def _box(t: MultiIndex):
    return itertools.product(*[range(v + 1) for _, v in t.entries])


def interpolate_set(
    index_set: IndexSet | Sequence[MultiIndex],
    f: Callable,
    dim: int | None = None,
    level: int = 0,
    record_points: bool = True,
) -> SparseInterpolant:
    """I_Lambda f via the combination formula.

    f maps an (N, dim) array of points to (N,) or (N, X) values. Points are
    padded with zeros beyond the support of each grid.
    """
    members = list(index_set)
    if not members:
        raise ValueError("empty index set")
    if not is_downward_closed(members):
        raise ValueError("index set is not downward closed")
    width = max(dim or 0, max(s.max_coordinate() for s in members), 1)

    ledger = GridLedger(raw_count=raw_point_count(members))
    if record_points:
        distinct = set()
        for s in members:
            for term in combination_terms(s):
                pts, lab = tensor_grid(term.degree, width)
                for p, l in zip(pts, lab):
                    ledger.rows.append((level, s, term.e, tuple(l), p))
                    distinct.add(p.tobytes())
        ledger.distinct_count = len(distinct)

    coef = combination_coefficients(members)
    grids = {t: tensor_grid(t, width)[0] for t in coef}
    allpts = np.vstack(list(grids.values()))
    uniq, inverse = np.unique(allpts, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    ledger.evaluated_count = uniq.shape[0]
    if not record_points:
        ledger.distinct_count = ledger.evaluated_count
    vals = _call(f, uniq)
    scalar = vals.ndim == 1
    vals = vals.reshape(vals.shape[0], -1)

    row = {s: i for i, s in enumerate(members)}
    C = np.zeros((len(members), vals.shape[1]))
    start = 0
    for t, c in coef.items():
        npts = grids[t].shape[0]
        F = vals[inverse[start:start + npts]]
        start += npts
        shape = tuple(v + 1 for _, v in t.entries)
        G = F.reshape(shape + (F.shape[1],))
        for axis, (_, v) in enumerate(t.entries):
            G = np.moveaxis(np.tensordot(hermite_transform(v), G, axes=([1], [axis])), 0, axis)
        G = G.reshape(-1, F.shape[1])
        supp = t.support()
        rows = [row[MultiIndex(zip(supp, n))] for n in _box(t)]
        np.add.at(C, rows, c * G)
    return SparseInterpolant(members, C, scalar, ledger, width)


# multi-level interpolation


def interpolation_regime(alpha: float, q1: float, q2: float) -> str:
    """'single' when alpha <= 1/q2 - 1/2, otherwise 'two'."""
    return "single" if alpha <= 1.0 / q2 - 0.5 else "two"


def interpolation_exponents(alpha: float, q1: float, q2: float) -> tuple[float, float]:
    """(level rate, xi exponent) = (2 alpha/(2 - q2), (2/(2 - q2))(1/q1 - 1/2))."""
    if not (0 < q1 <= q2 < 2):
        raise ValueError("need 0 < q1 <= q2 < 2")
    return 2 * alpha / (2 - q2), (2 / (2 - q2)) * (1 / q1 - 0.5)


def level_count(xi: float, alpha: float, q1: float, q2: float) -> int:
    """k(xi): the finest level used by the multi-level interpolant."""
    if xi < 1:
        return -1
    if interpolation_regime(alpha, q1, q2) == "single":
        return int(math.floor(math.log2(xi)))
    rate, expo = interpolation_exponents(alpha, q1, q2)
    return int(math.floor(expo / rate * math.log2(xi)))


def interpolation_level_set(
    k: int,
    xi: float,
    ws1: WeightSystem,
    ws2: WeightSystem,
    q1: float,
    q2: float,
    alpha: float,
    cap: int = DEFAULT_CAP,
) -> IndexSet:
    """Lambda_k(xi) for either case of the regime split."""
    if interpolation_regime(alpha, q1, q2) == "single":
        T = 2.0 ** (-k / q2) * xi ** (1.0 / q2)
        return enumerate_constrained_set(
            [(ws2, T)], "interp-single", order_by=ws2, cap=cap, meta={"k": k, "xi": xi}
        )
    rate, expo = interpolation_exponents(alpha, q1, q2)
    bounds = [(ws1, xi ** (1.0 / q1)), (ws2, 2.0 ** (-rate * k) * xi**expo)]
    return enumerate_constrained_set(bounds, "interp-two", order_by=ws2, cap=cap, meta={"k": k, "xi": xi})


def multilevel_interpolate(
    xi: float,
    ws1: WeightSystem,
    ws2: WeightSystem,
    q1: float,
    q2: float,
    alpha: float,
    hier,
    v,
    dim: int | None = None,
    cap: int = DEFAULT_CAP,
    record_points: bool = False,
):
    """sum_{k <= k(xi)} I_{Lambda_k(xi)}(delta_k v) as a RecoveryResult.

    hier must provide merged_dimension(k), detail_values(k, v, Y) and
    merged_to_fine(k, K); v(x, Y) returns values at spatial points x.
    """
    from .multilevel import LevelPiece, RecoveryResult

    if xi <= 1:
        raise ValueError("xi must exceed 1")
    top = level_count(xi, alpha, q1, q2)
    if top > hier.max_level:
        raise ValueError(f"k(xi) = {top} exceeds the hierarchy's max level {hier.max_level}")
    pieces = []
    for k in range(top + 1):
        lam = interpolation_level_set(k, xi, ws1, ws2, q1, q2, alpha, cap)
        if len(lam) == 0 or hier.merged_dimension(k) == 0:
            pieces.append(LevelPiece(k, lam.members, None, 0, 0, lam))
            continue
        interp = interpolate_set(
            lam, lambda Y, k=k: hier.detail_values(k, v, Y), dim=dim, level=k, record_points=record_points
        )
        pieces.append(
            LevelPiece(k, interp.members, interp.coefficients, interp.ledger.raw_count, interp.ledger.evaluated_count, lam, interp.ledger)
        )
    return RecoveryResult(
        "ml-interp",
        pieces,
        hier,
        meta={"xi": xi, "k_xi": top, "regime": interpolation_regime(alpha, q1, q2)},
    )
