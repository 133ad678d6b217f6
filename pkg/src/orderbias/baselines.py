"""Reference estimators: course mean, course median, and reweighted means.

The reweighted mean balances the group composition across courses by
weighting each (course, group) cell mean with the smallest count of that
group over courses, dropping groups absent from some course, then recentres
so the count-weighted quality total matches the grand total of the ratings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ObservationSet, RatingMatrix, course_means, restrict_ratings
from .poset import GROUP, TREE, PartialOrder


class NotApplicable(ValueError):
    """The estimator is undefined on the given layout."""


@dataclass(frozen=True)
class GroupLayout:
    """Cell counts of a group partition: ``ell[i, k]`` cells of group k in course i."""

    ell: np.ndarray

    @property
    def ell_min(self) -> np.ndarray:
        return self.ell.min(axis=0)

    @property
    def groups_in_all_courses(self) -> np.ndarray:
        """Indices of groups present in every course (the usable set R)."""
        return np.flatnonzero(self.ell_min > 0)

    @classmethod
    def from_labels(cls, courses: np.ndarray, labels: np.ndarray, d: int,
                    r: int) -> "GroupLayout":
        ell = np.zeros((d, r), dtype=np.intp)
        np.add.at(ell, (courses, labels), 1)
        return cls(ell)


def mean_estimator(y: RatingMatrix, obs: ObservationSet | None = None) -> np.ndarray:
    """Per-course sample mean."""
    return course_means(restrict_ratings(y, obs or y.obs))


def median_estimator(y: RatingMatrix, obs: ObservationSet | None = None) -> np.ndarray:
    """Per-course median; even counts average the two central values."""
    yr = restrict_ratings(y, obs or y.obs)
    return np.array([float(np.median(row)) for row in yr.rows()])


def _reweighted(yv: np.ndarray, courses: np.ndarray, labels: np.ndarray,
                d: int, r: int) -> np.ndarray:
    layout = GroupLayout.from_labels(courses, labels, d, r)
    usable = layout.groups_in_all_courses
    if usable.size == 0:
        raise NotApplicable("no group appears in every course")
    weights = layout.ell_min[usable] / layout.ell_min[usable].sum()
    x = np.zeros(d)
    for w, k in zip(weights, usable):
        cell_sum = np.bincount(courses, weights=np.where(labels == k, yv, 0.0), minlength=d)
        x += w * cell_sum / layout.ell[:, k]
    counts = np.bincount(courses, minlength=d).astype(np.float64)
    total = counts.sum()
    x += (yv.sum() - counts @ x) / total
    return x


def _aligned(y: RatingMatrix, order: PartialOrder,
             obs: ObservationSet | None) -> tuple[np.ndarray, np.ndarray, PartialOrder, int]:
    obs = obs or y.obs
    yr = restrict_ratings(y, obs)
    work = order if order.elements == obs.elements else order.restrict(obs.elements)
    sub = np.array([obs.index[e] for e in work.elements], dtype=np.intp)
    return yr.flat[sub], work.courses, work, obs.d


def reweighted_mean(y: RatingMatrix, order: PartialOrder,
                    obs: ObservationSet | None = None) -> np.ndarray:
    """Group-balanced weighted mean with recentering.

    Groups missing from some course are discarded; raises
    :class:`NotApplicable` when no group spans all courses.  With identical
    group compositions across courses this reduces to the sample mean.
    """
    if order.kind != GROUP:
        raise NotApplicable("reweighted mean is defined for group orderings only")
    yv, courses, work, d = _aligned(y, order, obs)
    return _reweighted(yv, courses, work.group_of, d, work.n_groups)


def reweighted_mean_tree(y: RatingMatrix, order: PartialOrder, mode: str,
                         obs: ObservationSet | None = None) -> np.ndarray:
    """Reweighted mean on a tree ordering, partitioning by node or by depth.

    ``mode="node"`` uses tree nodes as the groups and requires every node to
    hold cells of every course; ``mode="level"`` partitions by node depth and
    drops levels missing from some course, like the group form.
    """
    if order.kind != TREE:
        raise NotApplicable("tree reweighting requires a tree ordering")
    yv, courses, work, d = _aligned(y, order, obs)
    parent = work.parent_of
    if mode == "node":
        nodes = sorted({int(v) for v in np.unique(work.node_of)})
        relabel = {v: k for k, v in enumerate(nodes)}
        labels = np.array([relabel[int(v)] for v in work.node_of], dtype=np.intp)
        layout = GroupLayout.from_labels(courses, labels, d, len(nodes))
        if np.any(layout.ell_min == 0):
            raise NotApplicable("some tree node has no cells in some course")
        return _reweighted(yv, courses, labels, d, len(nodes))
    if mode == "level":
        def depth(v: int) -> int:
            k = 0
            while parent.get(v, -1) != -1:
                v = parent[v]
                k += 1
            return k

        levels = np.array([depth(int(v)) for v in work.node_of], dtype=np.intp)
        return _reweighted(yv, courses, levels, d, int(levels.max()) + 1)
    raise ValueError(f"unknown mode {mode!r}; expected 'node' or 'level'")
