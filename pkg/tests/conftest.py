from __future__ import annotations

import numpy as np
import pytest

from orderbias import ObservationSet, RatingMatrix
from orderbias.poset import (Element, build_dag_ordering, build_group_ordering,
                             build_total_ordering, build_tree_ordering)

KINDS = ("group", "total", "tree", "dag")


def random_order(rng: np.random.Generator, elements, kind: str):
    """A random ordering of the requested kind over the given cells."""
    els = list(elements)
    if kind == "group":
        r = int(rng.integers(1, 4))
        return build_group_ordering({e: int(rng.integers(r)) for e in els}, r)
    if kind == "total":
        perm = rng.permutation(len(els))
        return build_total_ordering([els[int(i)] for i in perm])
    if kind == "tree":
        nodes = int(rng.integers(1, 4))
        parents = {v: (int(rng.integers(v)) if v > 0 and rng.random() < 0.8 else -1)
                   for v in range(nodes)}
        return build_tree_ordering({e: int(rng.integers(nodes)) for e in els}, parents)
    cons = []
    if len(els) >= 2:
        for _ in range(int(rng.integers(1, 2 + len(els)))):
            a, b = sorted(int(i) for i in rng.choice(len(els), 2, replace=False))
            cons.append((els[a], els[b]))
    return build_dag_ordering(cons, els)


def random_instance(rng: np.random.Generator, kinds=KINDS, max_d: int = 3,
                    max_n: int = 6, scale: float = 2.0):
    """A random ratings matrix with a random compatible ordering."""
    d = int(rng.integers(1, max_d + 1))
    counts = [int(rng.integers(1, max_n + 1)) for _ in range(d)]
    els = [Element(i, j) for i in range(d) for j in range(counts[i])]
    obs = ObservationSet.from_elements(els)
    kind = str(rng.choice(list(kinds)))
    order = random_order(rng, els, kind)
    y = RatingMatrix(obs, rng.normal(0.0, scale, obs.size))
    return y, order, obs, kind


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
