"""Interpolate a smooth function of 4 Gaussian parameters on growing weighted index sets.

Prints, for each threshold, the set size, raw grid point count and the
mean-square error against fresh standard-normal samples.
"""

import numpy as np

from bochner_recover.multiindex import WeightSystem, enumerate_threshold_set
from bochner_recover.sparsegrid import combination_coefficients, interpolate_set

DIM = 4
b = 0.6 * np.arange(1, DIM + 1) ** -2.5


def f(Y):
    return np.exp(Y[:, :DIM] @ b)


# rho grows like 1 / b_j, so coordinates with small b get fewer degrees
ws = WeightSystem.from_sequence(list(1.2 / b), 2)
Y = np.random.default_rng(0).standard_normal((4000, DIM))
truth = f(Y)

print(f"{'T':>6} {'|Lambda|':>9} {'terms':>6} {'points':>7} {'rms error':>10}")
for T in (2, 8, 32, 128, 512, 2048):
    lam = enumerate_threshold_set(ws, 1.0, T)
    interp = interpolate_set(lam, f, dim=DIM)
    err = np.sqrt(np.mean((interp(Y) - truth) ** 2))
    terms = len(combination_coefficients(list(lam)))
    print(f"{T:6d} {len(lam):9d} {terms:6d} {interp.ledger.raw_count:7d} {err:10.2e}")
