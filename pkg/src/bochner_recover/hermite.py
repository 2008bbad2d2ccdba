"""Orthonormal probabilists' Hermite polynomials and Lagrange interpolation at their roots."""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

DEFAULT_MAX_CACHED_DEGREE = 64

_lock = threading.Lock()
_roots: dict[int, np.ndarray] = {}
_bary: dict[int, np.ndarray] = {}
_transforms: dict[int, np.ndarray] = {}
_max_cached = DEFAULT_MAX_CACHED_DEGREE


def set_cache_limit(max_degree: int) -> None:
    global _max_cached
    _max_cached = int(max_degree)


def hermite_eval(s: int, y) -> np.ndarray:
    """H_s(y) for the orthonormal probabilists' family (H_1(y) = y)."""
    return hermite_table(s, y)[s]


def hermite_table(max_degree: int, y) -> np.ndarray:
    """Rows H_0(y), ..., H_max_degree(y); shape (max_degree + 1, *y.shape)."""
    if max_degree < 0:
        raise ValueError("degree must be non-negative")
    y = np.asarray(y, dtype=float)
    out = np.empty((max_degree + 1,) + y.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = y
    for s in range(1, max_degree):
        out[s + 1] = (y * out[s] - np.sqrt(s) * out[s - 1]) / np.sqrt(s + 1)
    return out


def _cached(store: dict, m: int, build):
    hit = store.get(m)
    if hit is not None:
        return hit
    val = build(m)
    val.setflags(write=False)
    if m <= _max_cached:
        with _lock:
            store.setdefault(m, val)
    return val


def _build_roots(m: int) -> np.ndarray:
    if m == 0:
        return np.zeros(1)
    off = np.sqrt(np.arange(1, m + 1, dtype=float))
    r = np.sort(eigvalsh_tridiagonal(np.zeros(m + 1), off))
    r = 0.5 * (r - r[::-1])
    if m % 2 == 0:
        r[m // 2] = 0.0
    return r


def hermite_roots(m: int) -> np.ndarray:
    """The m + 1 roots of H_{m+1} in increasing order, exactly symmetric about 0."""
    if m < 0:
        raise ValueError("degree must be non-negative")
    return _cached(_roots, m, _build_roots)


def signed_indices(m: int) -> np.ndarray:
    """Node labels k in pi_m matching hermite_roots(m) position by position.

    Even m: -m/2..m/2 with 0 at the middle root y = 0. Odd m: the zero label is skipped.
    """
    if m % 2 == 0:
        return np.arange(-(m // 2), m // 2 + 1)
    h = (m + 1) // 2
    return np.concatenate([np.arange(-h, 0), np.arange(1, h + 1)])


def _position(m: int, k: int) -> int:
    hits = np.nonzero(signed_indices(m) == k)[0]
    if hits.size == 0:
        raise ValueError(f"k = {k} is not a node label for degree {m}")
    return int(hits[0])


def _build_bary(m: int) -> np.ndarray:
    r = hermite_roots(m)
    diff = r[:, None] - r[None, :]
    np.fill_diagonal(diff, 1.0)
    # scale each factor to keep the product in range for large m
    scale = 4.0 / max(r[-1] - r[0], 1.0)
    w = 1.0 / np.prod(diff * scale, axis=1)
    return w / np.abs(w).max()


def barycentric_weights(m: int) -> np.ndarray:
    return _cached(_bary, m, _build_bary)


def lagrange_matrix(m: int, y) -> np.ndarray:
    """All cardinal functions of degree m at y; shape (len(y), m + 1)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    nodes = hermite_roots(m)
    if m == 0:
        return np.ones((y.size, 1))
    w = barycentric_weights(m)
    diff = y[:, None] - nodes[None, :]
    # within a few ulps of a node the cardinal values are the unit vector to rounding,
    # and w / diff would overflow for subnormal gaps
    exact = np.abs(diff) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(nodes))[None, :]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        terms = w / diff
        out = terms / terms.sum(axis=1, keepdims=True)
    hit_rows = exact.any(axis=1)
    if hit_rows.any():
        out[hit_rows] = exact[hit_rows].astype(float)
    return out


def lagrange_basis(m: int, k: int, y) -> np.ndarray:
    """L_{m;k}(y) with k a signed node label."""
    y = np.asarray(y, dtype=float)
    return lagrange_matrix(m, y.ravel())[:, _position(m, k)].reshape(y.shape)


def _build_transform(m: int) -> np.ndarray:
    r = hermite_roots(m)
    V = hermite_table(m, r).T
    # row scaling keeps sum V^2 finite for degrees in the hundreds
    scale = np.abs(V).max(axis=1, keepdims=True)
    U = V / scale
    return (U / (scale * np.sum(U * U, axis=1, keepdims=True))).T


def hermite_transform(m: int) -> np.ndarray:
    """Matrix mapping node values of a degree-m interpolant to its Hermite coefficients.

    Uses the Christoffel identity at Gauss nodes, so it is the exact inverse of
    the Vandermonde-like matrix [H_n(y_k)].
    """
    return _cached(_transforms, m, _build_transform)


@dataclass(frozen=True)
class UnivariateInterpolant:
    """I_m f stored through its node values."""

    degree: int
    nodes: np.ndarray
    values: np.ndarray

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        L = lagrange_matrix(self.degree, y.ravel())
        out = L @ self.values
        return out.reshape(y.shape + self.values.shape[1:])

    def coefficients(self) -> np.ndarray:
        """Hermite coefficients of the interpolating polynomial."""
        return hermite_transform(self.degree) @ self.values


def _node_values(m: int, f) -> np.ndarray:
    nodes = hermite_roots(m)
    try:
        vals = np.asarray(f(nodes), dtype=float)
    except TypeError:
        vals = None
    if vals is None or vals.shape[:1] != nodes.shape:
        vals = np.array([f(x) for x in nodes], dtype=float)
    return vals


def interpolate_1d(m: int, f) -> UnivariateInterpolant:
    """I_m f from f evaluated at the roots of H_{m+1}."""
    if m < 0:
        raise ValueError("degree must be non-negative")
    return UnivariateInterpolant(m, hermite_roots(m), _node_values(m, f))


@dataclass(frozen=True)
class UnivariateDifference:
    """Delta_m f = I_m f - I_{m-1} f, with I_{-1} = 0."""

    fine: UnivariateInterpolant
    coarse: UnivariateInterpolant | None

    def __call__(self, y) -> np.ndarray:
        out = self.fine(y)
        if self.coarse is not None:
            out = out - self.coarse(y)
        return out


def delta_1d(m: int, f) -> UnivariateDifference:
    coarse = interpolate_1d(m - 1, f) if m >= 1 else None
    return UnivariateDifference(interpolate_1d(m, f), coarse)


def tensor_hermite_matrix(members, Y) -> np.ndarray:
    """Rows prod_j H_{s_j}(y_j) for each multi-index s; shape (len(Y), len(members)).

    Coordinates beyond the width of Y are treated as 0.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    members = list(members)
    out = np.ones((Y.shape[0], len(members)))
    if not members:
        return out
    tables: dict[int, np.ndarray] = {}
    top: dict[int, int] = {}
    for s in members:
        for j, v in s.entries:
            top[j] = max(top.get(j, 0), v)
    for j, deg in top.items():
        col = Y[:, j - 1] if j <= Y.shape[1] else np.zeros(Y.shape[0])
        tables[j] = hermite_table(deg, col)
    for c, s in enumerate(members):
        for j, v in s.entries:
            out[:, c] *= tables[j][v]
    return out
