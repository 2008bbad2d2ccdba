import numpy as np

from bochner_recover.multiindex import MultiIndex


def random_downward_closed(rng: np.random.Generator, size: int, dim: int, max_order: int = 99) -> list[MultiIndex]:
    """Grow a downward-closed set by adding random admissible neighbours."""
    members = [MultiIndex.zero()]
    pool = set(members)
    for _ in range(20 * size):
        if len(members) >= size:
            break
        base = members[rng.integers(len(members))]
        cand = base + MultiIndex.unit(int(rng.integers(1, dim + 1)))
        if cand in pool or cand.order() > max_order:
            continue
        if all(p in pool for p in cand.predecessors()):
            members.append(cand)
            pool.add(cand)
    return members


def smooth_function(rng: np.random.Generator, dim: int):
    """exp(a.y) cos(b.y + c), a random smooth test function on R^dim."""
    a = rng.uniform(-0.4, 0.4, dim)
    b = rng.uniform(-1.0, 1.0, dim)
    c = rng.uniform(0, np.pi)

    def f(Y):
        Y = np.atleast_2d(Y)[:, :dim]
        return np.exp(Y @ a) * np.cos(Y @ b + c)

    return f
