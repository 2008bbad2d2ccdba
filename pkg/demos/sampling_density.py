"""Draw from the weighted least-squares sampling density in one dimension.

Shows how the density departs from the Gaussian as m grows and
checks the sampler against it with a coarse text histogram.
"""

import math

import numpy as np

from bochner_recover.leastsq import build_density, draw_batch
from bochner_recover.multiindex import WeightSystem, first_by_weight

ws = WeightSystem.from_sequence([2.2], 2)
edges = np.linspace(-5, 5, 21)
mid = 0.5 * (edges[1:] + edges[:-1])

for m in (1, 3, 6):
    ordered, logw = first_by_weight([(ws, 1.0)], 8 * m)
    spec = build_density(ordered, m, 8 * m, log_weights=logw)
    batch = draw_batch(spec, 200_000, seed=m)
    counts, _ = np.histogram(batch.points[:, 0], bins=edges)
    dens = spec.density(mid[:, None]) * np.exp(-0.5 * mid**2) / math.sqrt(2 * math.pi)
    width = edges[1] - edges[0]
    print(f"m = {m}: basis {[s.to_text() for s in spec.components]}")
    for x, c, p in zip(mid, counts / len(batch.points) / width, dens):
        print(f"  {x:5.2f} {'#' * int(120 * c):<60} {c:.4f} vs {p:.4f}")
    print(f"  max |w * rho - 1| = {np.max(np.abs(batch.weights * spec.density(batch.points) - 1)):.1e}\n")
