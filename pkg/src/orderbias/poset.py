"""Partial orderings over rating cells.

A rating cell is identified by ``(course, slot)``.  Four kinds of ordering are
supported:

* ``group`` -- cells are partitioned into totally ordered groups; every cell of
  a lower group is constrained below every cell of a higher group, with no
  constraints inside a group.
* ``total`` -- a full ranking of all cells.
* ``tree``  -- cells live on the nodes of a rooted forest; a constraint exists
  between two cells exactly when their nodes are joined by a parent->child
  edge (roots are lowest).
* ``dag``   -- an explicit acyclic list of pairwise constraints.

All orderings are immutable after construction and safe to share across
threads.  Samplers take a caller-owned ``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

GROUP = "group"
TOTAL = "total"
TREE = "tree"
DAG = "dag"

KINDS = (GROUP, TOTAL, TREE, DAG)

#: Default absolute tolerance for feasibility checks on solver output.
FEASIBILITY_TOL = 1e-9


class Element(NamedTuple):
    """A rating cell: ``course`` index and ``slot`` index within the course."""

    course: int
    slot: int


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PartialOrder:
    """Immutable ordering constraint set over a fixed tuple of elements.

    ``elements`` is kept in canonical (course, slot) order; the per-kind
    payload arrays are aligned with it.
    """

    kind: str
    elements: tuple[Element, ...]
    group_of: np.ndarray | None = None      # group kind: group index per element
    n_groups: int = 0
    rank_of: np.ndarray | None = None       # total kind: rank per element
    node_of: np.ndarray | None = None       # tree kind: node id per element
    node_parents: tuple[tuple[int, int], ...] = ()   # tree kind: (node, parent), parent −1 for roots
    edges: tuple[tuple[int, int], ...] = ()          # dag kind: (low idx, high idx)

    @cached_property
    def index(self) -> dict[Element, int]:
        return {e: i for i, e in enumerate(self.elements)}

    @cached_property
    def courses(self) -> np.ndarray:
        return _readonly(np.array([e.course for e in self.elements], dtype=np.intp))

    @cached_property
    def parent_of(self) -> dict[int, int]:
        return dict(self.node_parents)

    @cached_property
    def tree_edges(self) -> tuple[tuple[int, int], ...]:
        """Parent->child node pairs of a tree ordering."""
        return tuple((p, c) for c, p in self.node_parents if p >= 0)

    def __len__(self) -> int:
        return len(self.elements)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown ordering kind {self.kind!r}")
        if not self.elements:
            raise ValueError("empty element set")
        if len(set(self.elements)) != len(self.elements):
            raise ValueError("duplicate elements")

    # -- constraint views --------------------------------------------------

    def constraint_pairs(self) -> list[tuple[Element, Element]]:
        """Materialise the implied pairwise constraints (first <= second).

        Quadratic in size for group orderings; intended for small instances
        and tests.  Solvers use the kind-specific structure instead.
        """
        lo, hi = self.constraint_index_pairs()
        els = self.elements
        return [(els[a], els[b]) for a, b in zip(lo.tolist(), hi.tolist())]

    def constraint_index_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Implied constraints as aligned (low, high) element-index arrays."""
        if self.kind == GROUP:
            g = self.group_of
            los, his = [], []
            order = np.argsort(g, kind="stable")
            for i in order:
                for j in order:
                    if g[i] < g[j]:
                        los.append(i)
                        his.append(j)
        elif self.kind == TOTAL:
            order = np.argsort(self.rank_of)
            los, his = [], []
            for a in range(len(order)):
                for b in range(a + 1, len(order)):
                    los.append(order[a])
                    his.append(order[b])
        elif self.kind == TREE:
            node = self.node_of
            los, his = [], []
            for parent, child in self.tree_edges:
                for i in np.flatnonzero(node == parent):
                    for j in np.flatnonzero(node == child):
                        los.append(i)
                        his.append(j)
        else:
            los = [a for a, _ in self.edges]
            his = [b for _, b in self.edges]
        return (np.asarray(los, dtype=np.intp), np.asarray(his, dtype=np.intp))

    def restrict(self, keep: Sequence[Element]) -> "PartialOrder":
        """Induced ordering on a subset of elements (same kind)."""
        keep = canonical_elements(keep)
        missing = [e for e in keep if e not in self.index]
        if missing:
            raise ValueError(f"elements not in ordering: {missing[:3]}")
        if keep == self.elements:
            return self
        idx = np.array([self.index[e] for e in keep], dtype=np.intp)
        if self.kind == GROUP:
            return PartialOrder(GROUP, keep, group_of=_readonly(self.group_of[idx]),
                                n_groups=self.n_groups)
        if self.kind == TOTAL:
            sub = self.rank_of[idx]
            ranks = np.empty(len(idx), dtype=np.intp)
            ranks[np.argsort(sub)] = np.arange(len(idx))
            return PartialOrder(TOTAL, keep, rank_of=_readonly(ranks))
        if self.kind == TREE:
            return PartialOrder(TREE, keep, node_of=_readonly(self.node_of[idx]),
                                node_parents=self.node_parents)
        # dag: keep constraints implied through dropped vertices, then reduce
        n = len(self.elements)
        reach = _reachability(n, self.edges)
        kept = set(idx.tolist())
        pos = {int(k): p for p, k in enumerate(idx.tolist())}
        pairs = [(pos[a], pos[b]) for a in kept for b in kept
                 if a != b and reach[a, b]]
        return PartialOrder(DAG, keep, edges=transitive_reduction(len(keep), pairs))


def canonical_elements(elements: Iterable[Element]) -> tuple[Element, ...]:
    return tuple(sorted(Element(int(c), int(s)) for c, s in elements))


def _reachability(n: int, edges: Iterable[tuple[int, int]]) -> np.ndarray:
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
    reach = np.zeros((n, n), dtype=bool)
    for s in range(n):
        stack = list(adj[s])
        while stack:
            v = stack.pop()
            if not reach[s, v]:
                reach[s, v] = True
                stack.extend(adj[v])
    return reach


def _check_acyclic(n: int, edges: Sequence[tuple[int, int]]) -> None:
    reach = _reachability(n, edges)
    if any(reach[v, v] for v in range(n)):
        raise ValueError("constraint relation contains a cycle")


def transitive_reduction(n: int, edges: Iterable[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    """Drop edges implied by two-step reachability through the remaining ones."""
    edge_set = {(int(a), int(b)) for a, b in edges if a != b}
    adj: dict[int, set[int]] = {v: set() for v in range(n)}
    for a, b in edge_set:
        adj[a].add(b)
    kept = set(edge_set)
    for a, b in sorted(edge_set):
        adj[a].discard(b)
        kept.discard((a, b))
        # reachable a->b without the edge?
        stack, seen, found = list(adj[a]), set(), False
        while stack:
            v = stack.pop()
            if v == b:
                found = True
                break
            if v not in seen:
                seen.add(v)
                stack.extend(adj[v])
        if not found:
            adj[a].add(b)
            kept.add((a, b))
    return tuple(sorted(kept))


# -- builders ---------------------------------------------------------------


def build_group_ordering(group_of: Mapping[Element, int], r: int) -> PartialOrder:
    """Group ordering: all cells of group k sit below all cells of group k' > k."""
    if not group_of:
        raise ValueError("empty element set")
    if r < 1:
        raise ValueError("need at least one group")
    elements = canonical_elements(group_of.keys())
    groups = np.array([group_of[e] for e in elements], dtype=np.intp)
    if groups.min() < 0 or groups.max() >= r:
        raise ValueError(f"group index out of range [0, {r})")
    return PartialOrder(GROUP, elements, group_of=_readonly(groups), n_groups=int(r))


def build_total_ordering(ranked: Sequence[Element]) -> PartialOrder:
    """Total ordering given as the ascending sequence of cells."""
    ranked = [Element(int(c), int(s)) for c, s in ranked]
    elements = canonical_elements(ranked)
    if len(elements) != len(ranked):
        raise ValueError("ranked sequence has duplicate or missing elements")
    pos = {e: t for t, e in enumerate(ranked)}
    ranks = np.array([pos[e] for e in elements], dtype=np.intp)
    return PartialOrder(TOTAL, tuple(elements), rank_of=_readonly(ranks))


def build_tree_ordering(node_of: Mapping[Element, int],
                        parents: Mapping[int, int]) -> PartialOrder:
    """Tree ordering: constraints between cells of parent and child nodes.

    ``parents`` maps node id -> parent node id; roots may be omitted or map
    to -1.  The parent relation must form a rooted forest.
    """
    if not node_of:
        raise ValueError("empty element set")
    elements = canonical_elements(node_of.keys())
    nodes = np.array([node_of[e] for e in elements], dtype=np.intp)
    all_nodes = sorted(set(nodes.tolist()) | set(parents.keys()) | (set(parents.values()) - {-1}))
    parent_map = {int(v): int(parents.get(v, -1)) for v in all_nodes}
    for v0 in all_nodes:
        seen = set()
        v = v0
        while v != -1:
            if v in seen:
                raise ValueError("parent map contains a cycle")
            seen.add(v)
            v = parent_map.get(v, -1)
    parent_pairs = tuple(sorted(parent_map.items()))
    return PartialOrder(TREE, elements, node_of=_readonly(nodes), node_parents=parent_pairs)


def build_dag_ordering(constraints: Iterable[tuple[Element, Element]],
                       elements: Iterable[Element] | None = None) -> PartialOrder:
    """Generic DAG ordering from explicit (lower, upper) cell pairs.

    ``elements`` may list additional unconstrained cells.
    """
    pairs = [(Element(*a), Element(*b)) for a, b in constraints]
    seen = {e for p in pairs for e in p}
    if elements is not None:
        seen |= {Element(*e) for e in elements}
    if not seen:
        raise ValueError("empty element set")
    els = canonical_elements(seen)
    index = {e: i for i, e in enumerate(els)}
    edges = sorted({(index[a], index[b]) for a, b in pairs})
    _check_acyclic(len(els), edges)
    return PartialOrder(DAG, els, edges=tuple(edges))


# -- total orders ------------------------------------------------------------


@dataclass(frozen=True)
class TotalOrder:
    """A linear extension: cells listed from lowest to highest bias rank."""

    ranked: tuple[Element, ...]

    def __len__(self) -> int:
        return len(self.ranked)

    @cached_property
    def rank(self) -> dict[Element, int]:
        return {e: t for t, e in enumerate(self.ranked)}

    def ranks_for(self, elements: Sequence[Element]) -> np.ndarray:
        r = self.rank
        return np.array([r[e] for e in elements], dtype=np.intp)

    def as_partial_order(self) -> PartialOrder:
        return build_total_ordering(self.ranked)


def sample_linear_extension(order: PartialOrder, rng: np.random.Generator) -> TotalOrder:
    """Draw a total ordering consistent with ``order``.

    Group, total and tree kinds are sampled exactly uniformly.  For generic
    DAGs the sampler draws a random topological order with uniform
    tie-breaking, which is only approximately uniform over extensions.
    """
    els = order.elements
    n = len(els)
    if order.kind == TOTAL:
        ranked = [els[i] for i in np.argsort(order.rank_of)]
        return TotalOrder(tuple(ranked))
    if order.kind == GROUP:
        perm = rng.permutation(n)
        key = order.group_of[perm]
        out = perm[np.argsort(key, kind="stable")]
        return TotalOrder(tuple(els[i] for i in out))
    if order.kind == TREE:
        return _sample_tree_extension(order, rng)
    return _sample_dag_extension(order, rng)


def _sample_tree_extension(order: PartialOrder, rng: np.random.Generator) -> TotalOrder:
    """Exact uniform extension of a forest ordering.

    Cells of each root node occupy the lowest positions of their tree
    (shuffled); the remaining positions are split uniformly at random among
    the child subtrees, recursively.
    """
    parent = order.parent_of
    children: dict[int, list[int]] = {}
    for v, p in order.node_parents:
        children.setdefault(p, []).append(v)
    members: dict[int, list[int]] = {}
    for i, nd in enumerate(order.node_of.tolist()):
        members.setdefault(nd, []).append(i)

    def subtree_size(v: int) -> int:
        return len(members.get(v, ())) + sum(subtree_size(c) for c in children.get(v, ()))

    out = np.empty(len(order), dtype=np.intp)

    def fill(node: int, positions: np.ndarray) -> None:
        own = members.get(node, [])
        k = len(own)
        out[positions[:k]] = rng.permutation(np.asarray(own, dtype=np.intp))
        rest = positions[k:]
        subs = children.get(node, [])
        if not subs:
            return
        sizes = [subtree_size(c) for c in subs]
        labels = np.repeat(np.arange(len(subs)), sizes)
        rng.shuffle(labels)
        for t, c in enumerate(subs):
            fill(c, rest[labels == t])

    roots = sorted({v for v, p in order.node_parents if p == -1})
    sizes = [subtree_size(v) for v in roots]
    positions = np.arange(len(order), dtype=np.intp)
    labels = np.repeat(np.arange(len(roots)), sizes)
    rng.shuffle(labels)
    for t, v in enumerate(roots):
        fill(v, positions[labels == t])
    els = order.elements
    return TotalOrder(tuple(els[i] for i in out))


def _sample_dag_extension(order: PartialOrder, rng: np.random.Generator) -> TotalOrder:
    n = len(order)
    indeg = np.zeros(n, dtype=np.intp)
    succ: list[list[int]] = [[] for _ in range(n)]
    for a, b in order.edges:
        indeg[b] += 1
        succ[a].append(b)
    avail = [i for i in range(n) if indeg[i] == 0]
    out = []
    while avail:
        pick = int(rng.integers(len(avail)))
        v = avail.pop(pick)
        out.append(v)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                avail.append(w)
    if len(out) != n:
        raise ValueError("constraint relation contains a cycle")
    els = order.elements
    return TotalOrder(tuple(els[i] for i in out))


# -- feasibility --------------------------------------------------------------


def satisfies(values: np.ndarray, order: PartialOrder, tol: float = FEASIBILITY_TOL) -> bool:
    """True iff ``values[lo] <= values[hi] + tol`` for every implied constraint.

    ``values`` is aligned with ``order.elements``.  For generic DAGs the
    stored edge list is the constraint set.
    """
    return feasibility_residual(values, order) <= tol


def feasibility_residual(values: np.ndarray, order: PartialOrder) -> float:
    """Largest constraint violation ``max(values[lo] - values[hi], 0)``."""
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (len(order),):
        raise ValueError(f"expected {len(order)} values, got shape {v.shape}")
    worst = 0.0
    if order.kind == GROUP:
        run_max = -np.inf
        for k in range(order.n_groups):
            sel = order.group_of == k
            if not sel.any():
                continue
            worst = max(worst, run_max - v[sel].min())
            run_max = max(run_max, v[sel].max())
    elif order.kind == TOTAL:
        seq = v[np.argsort(order.rank_of)]
        if len(seq) > 1:
            prefix = np.maximum.accumulate(seq[:-1])
            worst = max(worst, float((prefix - seq[1:]).max()))
    elif order.kind == TREE:
        node = order.node_of
        for parent, child in order.tree_edges:
            ps = v[node == parent]
            cs = v[node == child]
            if ps.size and cs.size:
                worst = max(worst, float(ps.max() - cs.min()))
    else:
        for a, b in order.edges:
            worst = max(worst, float(v[a] - v[b]))
    return max(worst, 0.0)


# -- constraint preprocessing --------------------------------------------------


@dataclass(frozen=True)
class ConstraintSet:
    """Reduced pairwise constraints ``first <= second`` over an ordering."""

    order: PartialOrder
    lo: np.ndarray
    hi: np.ndarray

    @property
    def pairs(self) -> list[tuple[Element, Element]]:
        els = self.order.elements
        return [(els[a], els[b]) for a, b in zip(self.lo.tolist(), self.hi.tolist())]

    def __len__(self) -> int:
        return len(self.lo)


def reduce_constraints(order: PartialOrder, values: np.ndarray) -> ConstraintSet:
    """Equivalent sparse constraint set for solving against ``values``.

    The optimum of the order-constrained least-squares problem is unchanged:
    cells of the same course sharing a group (or tree node) are exchangeable,
    so their fitted biases follow the sort order of the observations.  Within
    each such cell block we chain the elements by sorted value and keep
    cross-block constraints only between block extremes.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (len(order),):
        raise ValueError(f"expected {len(order)} values, got shape {v.shape}")
    los: list[int] = []
    his: list[int] = []

    def chain(cell_idx: np.ndarray) -> tuple[int, int]:
        """Add the sorted-value chain of one cell; return (argmin, argmax)."""
        srt = cell_idx[np.argsort(v[cell_idx], kind="stable")]
        for a, b in zip(srt[:-1], srt[1:]):
            los.append(int(a))
            his.append(int(b))
        return int(srt[0]), int(srt[-1])

    courses = order.courses
    if order.kind == GROUP:
        cell_min: dict[tuple[int, int], int] = {}
        cell_max: dict[tuple[int, int], int] = {}
        present: list[int] = []
        for k in range(order.n_groups):
            in_group = np.flatnonzero(order.group_of == k)
            if in_group.size == 0:
                continue
            present.append(k)
            for c in np.unique(courses[in_group]):
                cell = in_group[courses[in_group] == c]
                mn, mx = chain(cell)
                cell_min[(int(c), k)] = mn
                cell_max[(int(c), k)] = mx
        for k, k2 in zip(present[:-1], present[1:]):
            for (c, g), mx in cell_max.items():
                if g != k:
                    continue
                for (c2, g2), mn in cell_min.items():
                    if g2 == k2:
                        los.append(mx)
                        his.append(mn)
    elif order.kind == TOTAL:
        srt = np.argsort(order.rank_of)
        for a, b in zip(srt[:-1], srt[1:]):
            los.append(int(a))
            his.append(int(b))
    elif order.kind == TREE:
        node = order.node_of
        cell_min, cell_max = {}, {}
        for nd in np.unique(node):
            in_node = np.flatnonzero(node == nd)
            for c in np.unique(courses[in_node]):
                cell = in_node[courses[in_node] == c]
                mn, mx = chain(cell)
                cell_min[(int(c), int(nd))] = mn
                cell_max[(int(c), int(nd))] = mx
        for parent, child in order.tree_edges:
            for (c, nd), mx in cell_max.items():
                if nd != parent:
                    continue
                for (c2, nd2), mn in cell_min.items():
                    if nd2 == child:
                        los.append(mx)
                        his.append(mn)
    else:
        red = transitive_reduction(len(order), order.edges)
        los = [a for a, _ in red]
        his = [b for _, b in red]
    return ConstraintSet(order, np.asarray(los, dtype=np.intp), np.asarray(his, dtype=np.intp))


# -- regularity classification -------------------------------------------------


def classify(order: PartialOrder, c: float) -> dict:
    """Group-fraction regularity checks and interleaving-point count.

    ``all_c_fraction``: every (course, group) cell holds at least ``c * n_i``
    cells.  ``single_c_fraction``: some group exceeds ``c * n_i`` in every
    course.  ``interleaving_points`` (total orderings only): ranks where
    consecutive cells belong to different courses.  Total orderings are
    treated as singleton-group orderings for the fraction checks.
    """
    if order.kind not in (GROUP, TOTAL):
        raise ValueError("fraction checks are defined for group and total orderings")
    courses = order.courses
    uniq = np.unique(courses)
    n_i = {int(ci): int((courses == ci).sum()) for ci in uniq}
    if order.kind == GROUP:
        groups = order.group_of
        r = order.n_groups
    else:
        groups = order.rank_of
        r = len(order)
    ell = {(int(ci), int(k)): 0 for ci in uniq for k in range(r)}
    for ci, k in zip(courses.tolist(), groups.tolist()):
        ell[(ci, k)] += 1
    all_c = all(ell[(ci, k)] >= c * n_i[ci] for ci in n_i for k in range(r))
    single_c = any(all(ell[(ci, k)] > c * n_i[ci] for ci in n_i) for k in range(r))
    interleaving = None
    if order.kind == TOTAL:
        by_rank = courses[np.argsort(order.rank_of)]
        interleaving = int((by_rank[1:] != by_rank[:-1]).sum())
    return {
        "all_c_fraction": bool(all_c),
        "single_c_fraction": bool(single_c),
        "interleaving_points": interleaving,
    }


# -- serialization --------------------------------------------------------------


def dump_poset(order: PartialOrder) -> str:
    """Serialise to the line-oriented text format (see README for the grammar)."""
    lines = []
    d = int(order.courses.max()) + 1
    if order.kind == GROUP:
        r = order.n_groups
        payload = order.group_of
    elif order.kind == TOTAL:
        r = len(order)
        payload = order.rank_of
    elif order.kind == TREE:
        r = len({v for v, _ in order.node_parents})
        payload = order.node_of
    else:
        raise ValueError("dag orderings have no text serialization")
    lines.append(f"{order.kind} {d} {r}")
    for e, p in zip(order.elements, payload.tolist()):
        lines.append(f"{e.course} {e.slot} {p}")
    if order.kind == TREE:
        for v, p in order.node_parents:
            lines.append(f"{v} {p}")
    return "\n".join(lines) + "\n"


def load_poset(text: str) -> PartialOrder:
    """Parse the text format produced by :func:`dump_poset`."""
    rows = [ln.split() for ln in text.strip().splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise ValueError("empty poset file")
    kind, _d, r = rows[0][0], int(rows[0][1]), int(rows[0][2])
    if kind == TREE:
        body, tail = rows[1:1 + (len(rows) - 1 - r)], rows[-r:] if r else []
    else:
        body, tail = rows[1:], []
    cells = [(Element(int(c), int(s)), int(p)) for c, s, p in body]
    if kind == GROUP:
        return build_group_ordering(dict(cells), r)
    if kind == TOTAL:
        ranked = [e for e, _ in sorted(cells, key=lambda cp: cp[1])]
        return build_total_ordering(ranked)
    if kind == TREE:
        parents = {int(v): int(p) for v, p in tail}
        return build_tree_ordering(dict(cells), parents)
    raise ValueError(f"unknown ordering kind {kind!r}")
