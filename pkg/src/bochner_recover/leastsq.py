"""Christoffel-mixture sampling and weighted least squares on a Hermite GPC span."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import qr, solve_triangular
from scipy.special import ndtr

from .hermite import hermite_table, tensor_hermite_matrix
from .multiindex import MultiIndex, WeightSystem, log_sigma

GRID_SIZE = 4096


class DegenerateDensityWarning(UserWarning):
    """The tail part of the sampling density is empty; only the Christoffel part is used."""


def samples_for(m: int, c_os: float = 2.0) -> int:
    """n = ceil(c_os m log(m + 1)), natural log."""
    return int(math.ceil(c_os * m * math.log(m + 1)))


def basis_size_for(n: int, c_os: float = 2.0, conservative_basis: bool = False) -> int:
    """Largest m whose sample requirement fits in n (0 if none).

    conservative_basis switches to m = n / (20 ln n), a much smaller basis.
    """
    if conservative_basis:
        return max(int(n / (20 * math.log(n))), 0) if n > 1 else 0
    m = 0
    while samples_for(m + 1, c_os) <= n:
        m += 1
    return m


@dataclass(frozen=True)
class DensitySpec:
    """rho(y) = 1/2 [(1/m) sum_basis H_s^2 + sum_tail w_s H_s^2 / sum_tail w_s], w_s = sigma_s^-2.

    Every mixture component is a product of univariate densities H_t(y_j)^2 gamma(y_j).
    """

    basis: tuple[MultiIndex, ...]
    tail: tuple[MultiIndex, ...]
    tail_weights: np.ndarray
    tail_deviation: float = 0.0
    degenerate: bool = False

    @property
    def m(self) -> int:
        return len(self.basis)

    @property
    def components(self) -> tuple[MultiIndex, ...]:
        return self.basis + self.tail

    @property
    def mixture(self) -> np.ndarray:
        if self.degenerate:
            return np.full(self.m, 1.0 / self.m)
        tw = self.tail_weights / self.tail_weights.sum()
        return np.concatenate([np.full(self.m, 0.5 / self.m), 0.5 * tw])

    @property
    def dimension(self) -> int:
        return max((s.max_coordinate() for s in self.components), default=0)

    @property
    def max_degree(self) -> int:
        return max((v for s in self.components for _, v in s.entries), default=0)

    @property
    def digest(self) -> str:
        h = hashlib.sha1()
        for s in self.components:
            h.update(s.to_text().encode() + b";")
        h.update(np.asarray(self.tail_weights, dtype=float).tobytes())
        return h.hexdigest()[:12]

    def density(self, Y) -> np.ndarray:
        """rho at each row of Y."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        comps = self.components if not self.degenerate else self.basis
        H2 = tensor_hermite_matrix(comps, Y) ** 2
        return H2 @ self.mixture

    def christoffel_part(self, Y) -> np.ndarray:
        """(1/m) sum_basis H_s^2, the quantity rho is bounded below by half of."""
        H2 = tensor_hermite_matrix(self.basis, np.atleast_2d(Y)) ** 2
        return H2.mean(axis=1)


def build_density(
    ordered: Sequence[MultiIndex],
    m: int,
    s_max: int | None = None,
    ws: WeightSystem | None = None,
    log_weights: Sequence[float] | None = None,
    tail_deviation: float | None = None,
) -> DensitySpec:
    """Density for the first m indices of `ordered`, with the next ones up to s_max as tail.

    Tail weights are sigma^-2, from ws or from explicit log sigma values aligned with `ordered`.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    s_max = 8 * m if s_max is None else s_max
    if s_max < m:
        raise ValueError("s_max must be >= m")
    ordered = list(ordered)
    if len(ordered) < m:
        raise ValueError(f"need {m} ordered indices, got {len(ordered)}")
    basis = tuple(ordered[:m])
    tail = tuple(ordered[m:s_max])
    if log_weights is None:
        if ws is None and tail:
            raise ValueError("tail weights need ws or log_weights")
        lw = np.array([log_sigma(ws, s) for s in tail]) if tail else np.zeros(0)
    else:
        lw = np.asarray(log_weights, dtype=float)[m:s_max]
    w = np.exp(-2.0 * (lw - (lw.min() if lw.size else 0.0)))
    degenerate = not tail or not np.all(np.isfinite(w)) or w.sum() <= 0
    if degenerate:
        warnings.warn("empty tail: falling back to the Christoffel part only", DegenerateDensityWarning)
        return DensitySpec(basis, (), np.zeros(0), 0.0, True)
    dev = math.nan if tail_deviation is None else float(tail_deviation)
    return DensitySpec(basis, tail, w, dev)


def estimate_tail_deviation(log_w: np.ndarray, m: int, s_max: int) -> float:
    """Share of sum_{s > m} sigma^-2 carried by indices beyond s_max, from a power-law fit.

    Fits the counting function N(t) ~ A t^kappa on the upper half of the
    known weights and integrates t^-2 dN beyond the last one.
    """
    w = np.exp(np.asarray(log_w, dtype=float))
    if w.size < max(s_max, 4) or s_max <= m:
        return math.nan
    lo, hi = w.size // 2, w.size - 1
    if w[hi] <= w[lo]:
        return math.nan
    kappa = math.log((hi + 1) / (lo + 1)) / math.log(w[hi] / w[lo])
    if kappa >= 2:
        return 1.0
    A = (hi + 1) / w[hi] ** kappa
    T = w[s_max - 1]
    beyond = A * kappa * T ** (kappa - 2) / (2 - kappa)
    inside = float(np.sum(w[m:s_max] ** -2.0))
    return beyond / (beyond + inside)


@lru_cache(maxsize=256)
def _inverse_cdf(t: int, top_degree: int) -> PchipInterpolator:
    """Inverse CDF of H_t(y)^2 gamma(y) on a 4096-node grid over [-R, R]."""
    R = math.sqrt(2.0 * (top_degree + 40))
    grid = np.linspace(-R, R, GRID_SIZE)
    H = hermite_table(max(t, 1), grid)
    phi = np.exp(-0.5 * grid**2) / math.sqrt(2 * math.pi)
    corr = np.zeros_like(grid)
    for k in range(1, t + 1):
        corr += H[k - 1] * H[k] / math.sqrt(k)
    cdf = np.clip(ndtr(grid) - phi * corr, 0.0, 1.0)
    cdf = np.maximum.accumulate(cdf)
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return PchipInterpolator(cdf[keep], grid[keep], extrapolate=False)


def univariate_cdf(t: int, y) -> np.ndarray:
    """CDF of H_t^2 gamma, closed form via Phi(y) - phi(y) sum_k H_{k-1} H_k / sqrt(k)."""
    y = np.asarray(y, dtype=float)
    H = hermite_table(max(t, 1), y)
    corr = sum(H[k - 1] * H[k] / math.sqrt(k) for k in range(1, t + 1)) if t else 0.0
    return ndtr(y) - np.exp(-0.5 * y**2) / math.sqrt(2 * math.pi) * corr


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


@dataclass
class SampleBatch:
    points: np.ndarray
    weights: np.ndarray
    components: np.ndarray
    seed: object
    spec_digest: str
    ambient: str = "gaussian"

    def __len__(self) -> int:
        return self.points.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            d = self.points.shape[1]
            w.writerow(["seed", "component"] + [f"y{j + 1}" for j in range(d)] + ["weight"])
            for y, c, om in zip(self.points, self.components, self.weights):
                w.writerow([str(self.seed), int(c)] + [repr(float(v)) for v in y] + [repr(float(om))])

    @classmethod
    def from_csv(cls, path, spec_digest: str = "") -> "SampleBatch":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        body = rows[1:]
        pts = np.array([[float(v) for v in r[2:-1]] for r in body]).reshape(len(body), -1)
        return cls(
            pts,
            np.array([float(r[-1]) for r in body]),
            np.array([int(r[1]) for r in body]),
            body[0][0] if body else None,
            spec_digest,
        )


def draw_batch(spec: DensitySpec, n: int, seed, ambient_dim: int | None = None, ambient: str = "gaussian") -> SampleBatch:
    """n i.i.d. points from the mixture, with weights 1/rho.

    Coordinates up to the density's own dimension follow the chosen component
    (off-support coordinates are standard normal). Coordinates between that and
    ambient_dim are standard normal when ambient == "gaussian" and 0 when
    ambient == "zero".
    """
    if n < 1:
        raise ValueError("n must be positive")
    if ambient not in ("gaussian", "zero"):
        raise ValueError("ambient must be 'gaussian' or 'zero'")
    rng = _generator(seed)
    probs = spec.mixture
    comps = rng.choice(probs.size, size=n, p=probs)
    d_own = max(spec.dimension, 1)
    d = max(d_own, ambient_dim or 0)
    Y = np.zeros((n, d))
    U = rng.random((n, d_own))
    top = spec.max_degree
    pool = spec.components if not spec.degenerate else spec.basis
    table = np.array([s.to_dense(d_own) for s in pool]).reshape(len(pool), d_own)
    for j in range(1, d_own + 1):
        degree = table[comps, j - 1]
        for t in np.unique(degree):
            rows = degree == t
            inv = _inverse_cdf(int(t), top)
            # keep u inside the tabulated CDF range; the clipped mass is below grid resolution
            Y[rows, j - 1] = inv(np.clip(U[rows, j - 1], inv.x[0], inv.x[-1]))
    if d > d_own and ambient == "gaussian":
        Y[:, d_own:] = rng.standard_normal((n, d - d_own))
    rho = spec.density(Y[:, :d_own])
    return SampleBatch(Y, 1.0 / rho, comps, seed, spec.digest, ambient)


@dataclass
class LsqFit:
    basis: tuple[MultiIndex, ...]
    coefficients: np.ndarray
    residual: float
    rank: int
    condition: float
    flagged: bool = False
    n: int = 0

    def __call__(self, Y) -> np.ndarray:
        return tensor_hermite_matrix(self.basis, np.atleast_2d(Y)) @ self.coefficients

    def diagnostics(self) -> dict:
        return {
            "m": len(self.basis),
            "n": self.n,
            "condition": self.condition,
            "rank": self.rank,
            "residual": self.residual,
            "flagged": self.flagged,
        }

    def to_json(self) -> str:
        return json.dumps(self.diagnostics())


def lsq_fit(batch: SampleBatch, basis: Sequence[MultiIndex], values, rank_tol: float = 1e-12) -> LsqFit:
    """argmin over span(H_s, s in basis) of sum_i w_i |f(y_i) - g(y_i)|^2.

    values may be (n,) or (n, X); all columns share one pivoted QR of W^(1/2) L.
    """
    basis = tuple(basis)
    n, m = len(batch), len(basis)
    if n < m:
        raise ValueError(f"need n >= m, got n = {n}, m = {m}")
    vals = np.asarray(values, dtype=float)
    scalar = vals.ndim == 1
    vals = vals.reshape(n, -1)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite sample values")
    sw = np.sqrt(batch.weights)
    A = sw[:, None] * tensor_hermite_matrix(basis, batch.points)
    b = sw[:, None] * vals
    Q, R, piv = qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rank_tol * diag[0])) if diag.size and diag[0] > 0 else 0
    coef = np.zeros((m, vals.shape[1]))
    if rank:
        z = solve_triangular(R[:rank, :rank], Q[:, :rank].T @ b)
        coef[piv[:rank]] = z
    cond = float(np.linalg.cond(R[:rank, :rank])) if rank else math.inf
    resid = float(np.linalg.norm(A @ coef - b))
    flagged = rank < m or cond > 1e12
    return LsqFit(basis, coef[:, 0] if scalar else coef, resid, rank, cond, flagged, n)


@dataclass(frozen=True)
class ErrorEstimate:
    value: float
    stderr: float
    n_mc: int

    def __iter__(self):
        return iter((self.value, self.stderr))


def jackknife_rms(sq: np.ndarray) -> ErrorEstimate:
    """sqrt(mean(sq)) with its jackknife standard error."""
    sq = np.asarray(sq, dtype=float)
    n = sq.size
    est = math.sqrt(sq.mean())
    if n < 2:
        return ErrorEstimate(est, math.nan, n)
    loo = np.sqrt(np.maximum((sq.sum() - sq) / (n - 1), 0.0))
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return ErrorEstimate(est, se, n)


def estimate_l2_error(approx: Callable, reference: Callable, n_mc: int, seed, dim: int = 1) -> ErrorEstimate:
    """Monte Carlo ||approx - reference|| in L2(gamma) with a jackknife standard error.

    Both callables map an (n_mc, dim) array of standard normal points to
    (n_mc,) or (n_mc, ...) arrays; trailing axes are summed in the square.
    """
    Y = _generator(seed).standard_normal((n_mc, dim))
    diff = np.asarray(approx(Y), dtype=float) - np.asarray(reference(Y), dtype=float)
    sq = (diff.reshape(n_mc, -1) ** 2).sum(axis=1)
    return jackknife_rms(sq)
