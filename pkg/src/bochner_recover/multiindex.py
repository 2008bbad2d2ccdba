"""Multi-indices, sigma weights built from holomorphy parameters, and threshold index sets.

A multi-index is a finitely supported sequence of non-negative integers with
1-based coordinates. Weight systems map a multi-index to a weight sigma_s >= 1
that factorizes over coordinates, which is what makes depth-first enumeration
of threshold sets cheap.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy.special import zeta

DEFAULT_CAP = 200_000


class BudgetExceededError(RuntimeError):
    """Raised when an enumeration would exceed its cardinality cap."""


class MultiIndex:
    """Immutable sparse multi-index; coordinates are 1-based, zeros are not stored."""

    __slots__ = ("_entries", "_hash")

    def __init__(self, entries: Mapping[int, int] | Iterable[tuple[int, int]] = ()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        clean = {}
        for j, v in items:
            j, v = int(j), int(v)
            if j < 1:
                raise ValueError(f"coordinate must be >= 1, got {j}")
            if v < 0:
                raise ValueError(f"entry must be >= 0, got {v} at {j}")
            if v:
                clean[j] = v
        self._entries = tuple(sorted(clean.items()))
        self._hash = hash(self._entries)

    @classmethod
    def zero(cls) -> "MultiIndex":
        return cls()

    @classmethod
    def unit(cls, j: int, value: int = 1) -> "MultiIndex":
        return cls({j: value})

    @classmethod
    def from_dense(cls, values: Sequence[int]) -> "MultiIndex":
        return cls((j + 1, v) for j, v in enumerate(values))

    @property
    def entries(self) -> tuple[tuple[int, int], ...]:
        return self._entries

    def __getitem__(self, j: int) -> int:
        for jj, v in self._entries:
            if jj == j:
                return v
        return 0

    def support(self) -> tuple[int, ...]:
        return tuple(j for j, _ in self._entries)

    def order(self) -> int:
        """The 1-norm |s|_1."""
        return sum(v for _, v in self._entries)

    def max_coordinate(self) -> int:
        return self._entries[-1][0] if self._entries else 0

    def to_dense(self, dim: int) -> np.ndarray:
        out = np.zeros(dim, dtype=int)
        for j, v in self._entries:
            if j > dim:
                raise ValueError(f"coordinate {j} outside dense length {dim}")
            out[j - 1] = v
        return out

    def leq(self, other: "MultiIndex") -> bool:
        """Componentwise partial order."""
        return all(v <= other[j] for j, v in self._entries)

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        d = dict(self._entries)
        for j, v in other._entries:
            d[j] = d.get(j, 0) + v
        return MultiIndex(d)

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        d = dict(self._entries)
        for j, v in other._entries:
            d[j] = d.get(j, 0) - v
        return MultiIndex(d)

    def predecessors(self) -> Iterator["MultiIndex"]:
        """Yields s - e_j for each j in the support."""
        for j, _ in self._entries:
            yield self - MultiIndex.unit(j)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MultiIndex) and self._entries == other._entries

    def __hash__(self) -> int:
        return self._hash

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        return f"MultiIndex({dict(self._entries)})"

    def to_text(self) -> str:
        if not self._entries:
            return "0"
        return " ".join(f"{j}:{v}" for j, v in self._entries)

    @classmethod
    def from_text(cls, text: str) -> "MultiIndex":
        text = text.strip()
        if text in ("", "0"):
            return cls()
        pairs = []
        for tok in text.split():
            j, v = tok.split(":")
            pairs.append((int(j), int(v)))
        return cls(pairs)


def _log_factor(rho: float, eta: int, t: int) -> float:
    """log of sum_{i <= min(t, eta)} C(t, i) rho^(2i)."""
    if t == 0 or eta == 0:
        return 0.0
    if math.isinf(rho):
        return math.inf
    top = min(t, eta)
    logs = [
        math.lgamma(t + 1) - math.lgamma(i + 1) - math.lgamma(t - i + 1) + 2 * i * math.log(rho)
        for i in range(top + 1)
    ]
    mx = max(logs)
    return mx + math.log(sum(math.exp(x - mx) for x in logs))


@dataclass(frozen=True)
class WeightSystem:
    """Per-coordinate growth rates rho_j and the truncation order eta.

    The squared weight factorizes as sigma_s^2 = prod_j g_j(s_j) where
    g_j(t) = sum_{i <= min(t, eta)} C(t, i) rho_j^(2i).

    Use one of the constructors rather than calling this directly.
    """

    kind: str
    params: tuple
    eta: int
    _cache: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be non-negative")

    @classmethod
    def from_decay(cls, c: float, theta: float, p: float, xi: float, eta: int) -> "WeightSystem":
        """rho_j = b_j^(p-1) xi / (4 sqrt(eta!) ||b||_p) with b_j = c j^-theta."""
        if not (0 < p < 1):
            raise ValueError("summability exponent p must lie in (0, 1)")
        if c <= 0 or xi <= 0:
            raise ValueError("c and xi must be positive")
        if theta * p <= 1:
            raise ValueError(f"b = c j^-{theta} is not p-summable for p = {p}")
        return cls("decay", (float(c), float(theta), float(p), float(xi)), int(eta))

    @classmethod
    def geometric(cls, first: float, ratio: float, eta: int) -> "WeightSystem":
        """rho_j = first * ratio^(j-1); ratio > 1 keeps every threshold set finite."""
        if first <= 0 or ratio < 1:
            raise ValueError("need first > 0 and ratio >= 1")
        return cls("geometric", (float(first), float(ratio)), int(eta))

    @classmethod
    def from_sequence(cls, rho: Sequence[float], eta: int) -> "WeightSystem":
        """Finitely many coordinates; rho_j = inf beyond the list."""
        rho = tuple(float(r) for r in rho)
        if any(r <= 0 for r in rho):
            raise ValueError("rho entries must be positive")
        if any(b < a for a, b in zip(rho, rho[1:])):
            raise ValueError("rho must be non-decreasing")
        return cls("sequence", rho, int(eta))

    def b_norm(self) -> float:
        c, theta, p, _ = self.params
        return c * float(zeta(theta * p)) ** (1.0 / p)

    def rho(self, j: int) -> float:
        if j < 1:
            raise ValueError("coordinates are 1-based")
        if self.kind == "decay":
            c, theta, p, xi = self.params
            b = c * j ** (-theta)
            return b ** (p - 1) * xi / (4 * math.sqrt(math.factorial(self.eta)) * self.b_norm())
        if self.kind == "geometric":
            first, ratio = self.params
            return first * ratio ** (j - 1)
        return self.params[j - 1] if j <= len(self.params) else math.inf

    def sigma2_factor(self, j: int, t: int) -> float:
        """g_j(t) in linear space; inf when it overflows."""
        key = (j, t)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        rho = self.rho(j)
        if t == 0 or self.eta == 0:
            val = 1.0
        elif math.isinf(rho):
            val = math.inf
        else:
            lf = _log_factor(rho, self.eta, t)
            if lf > 690.0:
                val = math.inf
            else:
                # exact summation keeps hand-checkable ties such as 1 + 2*4 = 9 exact
                r2 = rho * rho
                val = sum(math.comb(t, i) * r2**i for i in range(min(t, self.eta) + 1))
        self._cache[key] = val
        return val

    def log_factor(self, j: int, t: int) -> float:
        return _log_factor(self.rho(j), self.eta, t)

    @property
    def label(self) -> str:
        return f"{self.kind}{self.params}/eta={self.eta}"

    @property
    def digest(self) -> str:
        return hashlib.sha1(self.label.encode()).hexdigest()[:12]


def sigma_squared(ws: WeightSystem, s: MultiIndex) -> float:
    out = 1.0
    for j, v in s.entries:
        out *= ws.sigma2_factor(j, v)
    return out


def log_sigma(ws: WeightSystem, s: MultiIndex) -> float:
    s2 = sigma_squared(ws, s)
    if math.isfinite(s2):
        return 0.5 * math.log(s2)
    return 0.5 * sum(ws.log_factor(j, v) for j, v in s.entries)


def sigma(ws: WeightSystem, s: MultiIndex) -> float:
    """sigma_s >= 1; raises OverflowError if sigma itself is not representable."""
    s2 = sigma_squared(ws, s)
    if math.isfinite(s2):
        return math.sqrt(s2)
    ls = log_sigma(ws, s)
    if ls > 709.0:
        raise OverflowError(f"sigma out of range for {s!r} (log sigma = {ls:.1f})")
    return math.exp(ls)


@dataclass(frozen=True)
class IndexSet:
    """Finite downward-closed set of multi-indices with the provenance of its threshold."""

    members: tuple[MultiIndex, ...]
    threshold: float
    kind: str
    meta: dict = field(default_factory=dict, compare=False, hash=False)
    _pool: frozenset = field(default=frozenset(), compare=False, hash=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_pool", frozenset(self.members))

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self.members)

    def __contains__(self, s: MultiIndex) -> bool:
        return s in self._pool

    def is_downward_closed(self) -> bool:
        return is_downward_closed(self.members)

    def dimension(self) -> int:
        return max((s.max_coordinate() for s in self.members), default=0)

    @property
    def digest(self) -> str:
        h = hashlib.sha1()
        for s in self.members:
            h.update(s.to_text().encode() + b";")
        return h.hexdigest()[:12]

    def to_text(self, ws: WeightSystem | None = None) -> str:
        head = [f"#% kind={self.kind}", f"#% T={self.threshold!r}"]
        for key in ("q", "ws"):
            if key in self.meta:
                head.append(f"#% {key}={self.meta[key]}")
        lines = []
        for s in self.members:
            tail = f" # sigma={sigma(ws, s)!r}" if ws is not None else ""
            lines.append(s.to_text() + tail)
        return "\n".join(head + lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "IndexSet":
        meta, members = {}, []
        kind, T = "unknown", math.nan
        for raw in text.splitlines():
            if raw.startswith("#%"):
                key, _, val = raw[2:].strip().partition("=")
                if key == "kind":
                    kind = val
                elif key == "T":
                    T = float(val)
                else:
                    meta[key] = val
                continue
            body = raw.split("#", 1)[0]
            if raw.strip():
                members.append(MultiIndex.from_text(body))
        return cls(tuple(members), T, kind, meta)


def is_downward_closed(members: Iterable[MultiIndex]) -> bool:
    pool = set(members)
    return all(p in pool for s in pool for p in s.predecessors())


def _enumerate(constraints: Sequence[tuple[WeightSystem, float]], cap: int) -> list[MultiIndex]:
    """All s with sigma_i(s) <= T_i for every (ws_i, T_i).

    Relies on rho being non-decreasing in j, so the first coordinate whose unit
    vector fails bounds the active dimension.
    """
    bounds = [T * T if T < 1e150 else math.inf for _, T in constraints]
    if any(b < 1.0 for b in bounds):
        return []
    if all(ws.eta == 0 for ws, _ in constraints):
        raise BudgetExceededError("eta = 0 makes sigma identically 1; the set is infinite")

    columns: list[list[tuple[float, ...]]] = []
    j = 1
    while True:
        col = []
        t = 1
        while True:
            fs = tuple(ws.sigma2_factor(j, t) for ws, _ in constraints)
            if any(f > b for f, b in zip(fs, bounds)):
                break
            col.append(fs)
            t += 1
            if t > cap:
                raise BudgetExceededError(f"coordinate {j} admits more than {cap} values")
        if not col:
            break
        columns.append(col)
        j += 1
        if j > cap:
            raise BudgetExceededError(f"more than {cap} active coordinates")

    out: list[MultiIndex] = []
    nb = len(bounds)

    def rec(start: int, prods: tuple[float, ...], entries: tuple[tuple[int, int], ...]):
        out.append(MultiIndex(entries))
        if len(out) > cap:
            raise BudgetExceededError(f"index set exceeds cap {cap}")
        for jj in range(start, len(columns)):
            col = columns[jj]
            first = col[0]
            if any(prods[i] * first[i] > bounds[i] for i in range(nb)):
                break
            for t, fs in enumerate(col, 1):
                nxt = tuple(prods[i] * fs[i] for i in range(nb))
                if any(nxt[i] > bounds[i] for i in range(nb)):
                    break
                rec(jj + 1, nxt, entries + ((jj + 1, t),))

    rec(0, (1.0,) * nb, ())
    return out


def reorder_by_weight(ws: WeightSystem, members: Iterable[MultiIndex]) -> list[MultiIndex]:
    """Sort by (sigma, entries); the entries tuple breaks ties lexicographically."""
    return sorted(members, key=lambda s: (log_sigma(ws, s), s.entries))


def enumerate_threshold_set(
    ws: WeightSystem, q: float, T: float, cap: int = DEFAULT_CAP
) -> IndexSet:
    """{s : sigma_s <= T}, ordered by weight. q is recorded for provenance only."""
    members = reorder_by_weight(ws, _enumerate([(ws, T)], cap))
    return IndexSet(tuple(members), float(T), "threshold", {"q": q, "ws": ws.digest})


def level_factor(m: int, alpha: float, tau: float) -> float:
    """2^(-alpha m) m^tau with 0^tau taken as 1."""
    return 2.0 ** (-alpha * m) * (m**tau if m > 0 else 1.0)


def enumerate_two_weight_set(
    ws1: WeightSystem,
    ws2: WeightSystem,
    q1: float,
    xi: float,
    m: int,
    alpha: float,
    tau: float,
    cap: int = DEFAULT_CAP,
) -> IndexSet:
    """{s : sigma2_s <= xi^(1/q1) 2^(-alpha m) m^tau, sigma1_s <= xi^(1/q1)}."""
    top = xi ** (1.0 / q1)
    members = _enumerate([(ws1, top), (ws2, top * level_factor(m, alpha, tau))], cap)
    members = reorder_by_weight(ws2, members)
    meta = {"q": q1, "ws": f"{ws1.digest}+{ws2.digest}", "m": m}
    return IndexSet(tuple(members), float(top), "two-weight", meta)


def enumerate_constrained_set(
    constraints: Sequence[tuple[WeightSystem, float]],
    kind: str,
    order_by: WeightSystem | None = None,
    cap: int = DEFAULT_CAP,
    meta: dict | None = None,
) -> IndexSet:
    """Intersection of several single-weight threshold sets."""
    members = _enumerate(constraints, cap)
    members = reorder_by_weight(order_by or constraints[-1][0], members)
    return IndexSet(tuple(members), float(constraints[0][1]), kind, dict(meta or {}))


def first_by_weight(
    terms: Sequence[tuple[WeightSystem, float]],
    count: int,
    cap: int = DEFAULT_CAP,
) -> tuple[list[MultiIndex], np.ndarray]:
    """The first `count` multi-indices ordered by w(s) = max_i scale_i * sigma_i(s).

    Returns the indices and their log w values. Ties are broken by the entries tuple.
    Because {w <= T} is an intersection of single-weight threshold sets, the
    threshold is grown geometrically until enough indices are found.
    """
    if count < 1:
        return [], np.zeros(0)

    def logw(s):
        return max(math.log(f) + log_sigma(ws, s) for ws, f in terms)

    T = max(f for _, f in terms) * 2.0
    while True:
        found = _enumerate([(ws, T / f) for ws, f in terms], cap)
        if len(found) >= count:
            keyed = sorted(((logw(s), s.entries, s) for s in found), key=lambda x: x[:2])
            chosen = keyed[:count]
            return [c[2] for c in chosen], np.array([c[0] for c in chosen])
        T *= 2.0
