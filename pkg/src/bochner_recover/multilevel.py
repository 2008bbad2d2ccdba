"""Multi-level least squares and multi-level sparse-grid interpolation with budget planning.

Each level k recovers the spatial detail delta_k v = P_k v - P_{k-1} v with
its own parametric budget. Results are stored level by level as Hermite
coefficients over the level basis, one column per merged-frame node.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hermite import tensor_hermite_matrix
from .leastsq import (
    DensitySpec,
    LsqFit,
    basis_size_for,
    build_density,
    draw_batch,
    estimate_tail_deviation,
    lsq_fit,
)
from .multiindex import DEFAULT_CAP, IndexSet, MultiIndex, WeightSystem, first_by_weight, level_factor
from .sparsegrid import (
    interpolation_level_set,
    interpolation_regime,
    level_count,
    multilevel_interpolate,
    raw_point_count,
)


class ContractViolation(AssertionError):
    """A planned run used more sample points than its budget."""


def comp_weight(k: int) -> int:
    """2^k + 2^(k-1), with the second term taken as 0 at k = 0."""
    return 2**k + (2 ** (k - 1) if k >= 1 else 0)


@dataclass
class LevelPiece:
    k: int
    basis: Sequence[MultiIndex]
    coefficients: np.ndarray | None
    n_points: int
    distinct_points: int
    index_set: IndexSet | None = None
    detail: object = None
    spatial_width: int | None = None  # spatial samples per parametric point; merged dimension if None

    @property
    def active(self) -> bool:
        return self.coefficients is not None


@dataclass
class RecoveryResult:
    """Assembled multi-level approximation; evaluates to nodal coefficients on the finest level."""

    method: str
    pieces: list[LevelPiece]
    hier: object
    meta: dict = field(default_factory=dict)

    @property
    def finest_level(self) -> int:
        return max((p.k for p in self.pieces if p.active), default=0)

    def nodal(self, Y, level: int | None = None) -> np.ndarray:
        """Level-K nodal coefficients of S v(y) for each row of Y; shape (N, dim V_K)."""
        K = self.finest_level if level is None else level
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        out = np.zeros((Y.shape[0], self.hier.dimension(K)))
        for p in self.pieces:
            if not p.active:
                continue
            merged = tensor_hermite_matrix(p.basis, Y) @ p.coefficients
            out += (self.hier.merged_to_fine(p.k, K) @ merged.T).T
        return out

    def derivative(self, x, Y, level: int | None = None) -> np.ndarray:
        K = self.finest_level if level is None else level
        B = self.hier.basis_matrix(K, x, derivative=True)
        return (B @ self.nodal(Y, K).T).T

    def values(self, x, Y, level: int | None = None) -> np.ndarray:
        K = self.finest_level if level is None else level
        B = self.hier.basis_matrix(K, x)
        return (B @ self.nodal(Y, K).T).T


def _width(hier, piece: LevelPiece) -> int:
    return hier.merged_dimension(piece.k) if piece.spatial_width is None else piece.spatial_width


def comp_account(result: RecoveryResult, budget: int | None = None) -> dict:
    """Integer cost ledger; raises ContractViolation if sample points exceed the budget."""
    comp = sum(comp_weight(p.k) * p.n_points for p in result.pieces)
    points = sum(_width(result.hier, p) * p.n_points for p in result.pieces if p.active)
    distinct = sum(result.hier.dimension(p.k) * p.distinct_points for p in result.pieces if p.active)
    record = {"comp": int(comp), "sample_points": int(points), "distinct_pairs": int(distinct), "budget": budget}
    if budget is not None and points > budget:
        raise ContractViolation(f"{points} sample points exceed budget {budget}")
    return record


# least-squares planning


def lsq_regime(alpha: float, q1: float, q2: float) -> str:
    if math.isclose(alpha, 1.0 / q2):
        return "equality"
    return "below" if alpha < 1.0 / q2 else "above"


def rate_exponents(alpha: float, q1: float, q2: float) -> tuple[float, float]:
    """(delta, beta) with delta = 1/q1 - 1/q2 and beta = (1/q1) alpha / (alpha + delta)."""
    if not (0 < q1 <= q2 < 2):
        raise ValueError("need 0 < q1 <= q2 < 2")
    delta = 1.0 / q1 - 1.0 / q2
    return delta, alpha / (q1 * (alpha + delta))


def select_xi(N: float, alpha: float, q1: float, q2: float) -> float:
    """Largest xi with g(xi) <= N, g(xi) = xi or xi^(q1 (alpha + delta)) depending on the regime.

    The bracketing condition g(xi) <= N < 2 g(xi) then holds as well.
    """
    if lsq_regime(alpha, q1, q2) != "above":
        return float(N)
    delta, _ = rate_exponents(alpha, q1, q2)
    return float(N) ** (1.0 / (q1 * (alpha + delta)))


@dataclass
class LevelSpec:
    k: int
    n_k: int
    m_k: int
    basis: tuple[MultiIndex, ...] = ()
    density: DensitySpec | None = None
    status: str = "active"

    @property
    def lambda_hash(self) -> str:
        return self.density.digest if self.density is not None else ""


@dataclass
class LevelPlan:
    n: int
    effective_budget: int
    xi_n: float
    k_n: int
    levels: list[LevelSpec]
    regime: str
    alpha: float
    q1: float
    q2: float
    tau: float
    beta: float
    sample_points: int
    comp: int
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "xi_n": self.xi_n,
                "k_n": self.k_n,
                "levels": [
                    {"k": L.k, "n_k": L.n_k, "m_k": L.m_k, "lambda_hash": L.lambda_hash, "status": L.status}
                    for L in self.levels
                ],
                "comp": self.comp,
                "sample_points": self.sample_points,
                "regime": self.regime,
                "effective_budget": self.effective_budget,
                "beta": self.beta,
                "tau": self.tau,
                "notes": self.notes,
            },
            indent=2,
        )


def _schedule(N: int, alpha, q1, q2, hier, c_os, conservative_basis):
    xi = select_xi(N, alpha, q1, q2)
    k_n = int(math.floor(math.log2(xi))) if xi >= 1 else 0
    capped = k_n > hier.max_level
    k_n = min(k_n, hier.max_level)
    rows = []
    points = 0
    for k in range(k_n + 1):
        n_k = int(N // 2**k)
        if hier.merged_dimension(k) == 0:
            rows.append((k, n_k, 0, "no-spatial-dofs"))
            continue
        m_k = basis_size_for(n_k, c_os, conservative_basis) if n_k >= 1 else 0
        if m_k < 1:
            rows.append((k, n_k, 0, "dropped"))
            continue
        rows.append((k, n_k, m_k, "active"))
        points += hier.merged_dimension(k) * n_k
    return xi, k_n, capped, rows, points


def plan(
    n: int,
    alpha: float,
    q1: float,
    q2: float,
    ws1: WeightSystem,
    ws2: WeightSystem,
    hier,
    tau: float | None = None,
    variant: str = "bar",
    c_os: float = 2.0,
    conservative_basis: bool = False,
    tail_factor: int = 8,
    cap: int = DEFAULT_CAP,
) -> LevelPlan:
    """Level schedule of the multi-level least-squares operator for a budget of n sample points.

    The "bar" variant starts from ceil(n / log2 n) parametric samples, the
    "plain" one from n. Either way the effective budget N is then lowered
    until sum_k (merged dimension) * n_k <= n.
    """
    if n < 2:
        raise ValueError("budget must be at least 2")
    regime = lsq_regime(alpha, q1, q2)
    _, beta = rate_exponents(alpha, q1, q2)
    if tau is None:
        tau = 1.001 if regime != "above" else alpha / (alpha - beta)
    N0 = int(math.ceil(n / math.log2(n))) if variant == "bar" else n
    notes = []

    lo, hi = 0, N0
    if _schedule(N0, alpha, q1, q2, hier, c_os, conservative_basis)[4] <= n:
        lo = N0
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _schedule(mid, alpha, q1, q2, hier, c_os, conservative_basis)[4] <= n:
                lo = mid
            else:
                hi = mid
        notes.append(f"effective budget lowered from {N0} to {lo} to keep sample points <= {n}")
    N = max(lo, 1)
    xi, k_n, capped, rows, points = _schedule(N, alpha, q1, q2, hier, c_os, conservative_basis)
    if capped:
        notes.append(f"k_n capped at the hierarchy's max level {hier.max_level}")

    levels = []
    for k, n_k, m_k, status in rows:
        if status != "active":
            if status == "dropped":
                notes.append(f"level {k} dropped: n_k = {n_k} cannot support one basis function")
            levels.append(LevelSpec(k, n_k, 0, status=status))
            continue
        if regime == "above":
            terms = [(ws2, 1.0 / level_factor(k, alpha, tau)), (ws1, 1.0)]
        else:
            terms = [(ws2, 1.0)]
        s_max = tail_factor * m_k
        ordered, logw = first_by_weight(terms, s_max, cap)
        dev = estimate_tail_deviation(logw, m_k, s_max)
        density = build_density(ordered, m_k, s_max, log_weights=logw, tail_deviation=dev)
        levels.append(LevelSpec(k, n_k, m_k, tuple(ordered[:m_k]), density))

    comp = sum(comp_weight(L.k) * L.n_k for L in levels if L.status == "active")
    return LevelPlan(n, N, xi, k_n, levels, regime, alpha, q1, q2, tau, beta, points, comp, notes)


def recover_ml_lsq(
    level_plan: LevelPlan,
    v,
    hier,
    seed=0,
    ambient_dim: int | None = None,
    ambient: str = "gaussian",
) -> RecoveryResult:
    """sum_k S_{n_k}(delta_k v), one density, batch and columnwise fit per level.

    v(x, Y) returns values at spatial points x for each parametric row of Y.
    """
    streams = np.random.SeedSequence(seed).spawn(len(level_plan.levels))
    pieces = []
    flags = []
    for L, stream in zip(level_plan.levels, streams):
        if L.status != "active":
            pieces.append(LevelPiece(L.k, (), None, 0, 0))
            continue
        fit: LsqFit | None = None
        for attempt, sub in enumerate(stream.spawn(2)):
            batch = draw_batch(L.density, L.n_k, sub, ambient_dim, ambient)
            vals = hier.detail_values(L.k, v, batch.points)
            fit = lsq_fit(batch, L.basis, vals)
            if not fit.flagged:
                break
        if fit.flagged:
            flags.append(L.k)
        coef = fit.coefficients.reshape(len(L.basis), -1)
        pieces.append(LevelPiece(L.k, L.basis, coef, L.n_k, L.n_k, None, fit))
    meta = {"plan": level_plan, "flagged_levels": flags, "seed": seed}
    return RecoveryResult("ml-lsq", pieces, hier, meta)


# interpolation planning


@dataclass
class InterpPlan:
    n: int
    xi: float
    k_xi: int
    regime: str
    levels: list[dict]
    sample_points: int
    comp: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "xi_n": self.xi,
                "k_n": self.k_xi,
                "levels": self.levels,
                "comp": self.comp,
                "sample_points": self.sample_points,
                "regime": self.regime,
            },
            indent=2,
        )


def _interp_schedule(xi, ws1, ws2, q1, q2, alpha, hier, cap):
    top = level_count(xi, alpha, q1, q2)
    if top > hier.max_level:
        return None
    levels, points, comp = [], 0, 0
    for k in range(top + 1):
        lam = interpolation_level_set(k, xi, ws1, ws2, q1, q2, alpha, cap)
        raw = raw_point_count(lam.members) if len(lam) else 0
        levels.append({"k": k, "n_k": raw, "m_k": len(lam), "lambda_hash": lam.digest, "kind": lam.kind})
        if hier.merged_dimension(k) > 0:
            points += hier.merged_dimension(k) * raw
            comp += comp_weight(k) * raw
    return top, levels, points, comp


def plan_interp(
    n: int,
    ws1: WeightSystem,
    ws2: WeightSystem,
    q1: float,
    q2: float,
    alpha: float,
    hier,
    cap: int = DEFAULT_CAP,
    iterations: int = 60,
) -> InterpPlan:
    """Largest xi whose multi-level sparse grid uses at most n sample points (bisection in log xi)."""
    if n < 1:
        raise ValueError("budget must be positive")

    def fits(xi):
        sched = _interp_schedule(xi, ws1, ws2, q1, q2, alpha, hier, cap)
        return sched is not None and sched[2] <= n

    lo = 1.0 + 1e-12
    if not fits(lo):
        raise ValueError(f"budget {n} cannot afford even the coarsest level")
    hi = 2.0
    while fits(hi):
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            raise ValueError("budget never binds")
    for _ in range(iterations):
        mid = math.sqrt(lo * hi)
        if fits(mid):
            lo = mid
        else:
            hi = mid
    top, levels, points, comp = _interp_schedule(lo, ws1, ws2, q1, q2, alpha, hier, cap)
    return InterpPlan(n, lo, top, interpolation_regime(alpha, q1, q2), levels, points, comp)


def recover_ml_interp(
    xi: float,
    v,
    hier,
    ws1: WeightSystem,
    ws2: WeightSystem,
    alpha: float,
    q1: float,
    q2: float,
    dim: int | None = None,
    cap: int = DEFAULT_CAP,
) -> RecoveryResult:
    """Deterministic multi-level sparse-grid interpolant sum_k I_{Lambda_k(xi)}(delta_k v)."""
    return multilevel_interpolate(xi, ws1, ws2, q1, q2, alpha, hier, v, dim=dim, cap=cap)
