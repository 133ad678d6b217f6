"""Ordering-guided cross-validation for the regularisation weight.

The split samples one linear extension and pairs consecutive cells of each
course along it, sending one of each pair to training and one to validation
(odd leftover to validation), so every validation cell has a nearby training
cell in the ordering.  Validation bias is interpolated from the training fit
by nearest rank over sampled extensions, and the weight with the smallest
validation error wins.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import ObservationSet, RatingMatrix, restrict_ratings
from .estimator import Lambda, Solution, fit
from .poset import GROUP, TOTAL, Element, PartialOrder, sample_linear_extension


@dataclass(frozen=True)
class Split:
    train: ObservationSet
    validation: ObservationSet


@dataclass(frozen=True)
class CvReport:
    """Validation error per candidate weight and the selected minimiser."""

    errors: Mapping[Lambda, float]
    selected: Lambda
    extensions_used: int
    seed: int | None = None


def split(obs: ObservationSet, order: PartialOrder, rng: np.random.Generator) -> Split:
    """Sample a train/validation split guided by one linear extension.

    Each course contributes floor(n_i / 2) training cells and the rest to
    validation; courses need at least two cells.
    """
    if int(obs.counts.min()) < 2:
        raise ValueError("cross-validation needs at least two cells per course")
    work = order if order.elements == obs.elements else order.restrict(obs.elements)
    ext = sample_linear_extension(work, rng)
    rank = ext.ranks_for(obs.elements)
    elements = obs.elements
    train: list[Element] = []
    val: list[Element] = []
    for i in range(obs.d):
        in_course = np.flatnonzero(obs.course_of == i)
        by_rank = in_course[np.argsort(rank[in_course])]
        t = 0
        while t + 1 < by_rank.size:
            a, b = elements[int(by_rank[t])], elements[int(by_rank[t + 1])]
            if rng.integers(2) == 0:
                train.append(a)
                val.append(b)
            else:
                train.append(b)
                val.append(a)
            t += 2
        if t < by_rank.size:
            val.append(elements[int(by_rank[t])])
    return Split(ObservationSet.from_elements(train), ObservationSet.from_elements(val))


class _Interpolator:
    """Nearest-rank interpolation maps from training onto validation cells.

    The neighbour structure of each sampled extension does not depend on the
    fitted bias, so it is computed once and reused across candidate weights.
    """

    def __init__(self, order: PartialOrder, obs: ObservationSet, split_: Split,
                 extensions: int, rng: np.random.Generator):
        if extensions < 1:
            raise ValueError("need at least one sampled extension")
        self.obs = obs
        self.split = split_
        work = order if order.elements == obs.elements else order.restrict(obs.elements)
        self.work = work
        self.extensions = 1 if work.kind == TOTAL else int(extensions)
        self.train_cells = split_.train.elements
        self.val_cells = split_.validation.elements
        if work.kind == GROUP:
            idx = {e: k for k, e in enumerate(work.elements)}
            self.val_groups = np.array([work.group_of[idx[e]] for e in self.val_cells])
        else:
            self.val_groups = None
        self.plans: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
        for _ in range(self.extensions):
            ext = sample_linear_extension(work, rng)
            t_ranks = ext.ranks_for(self.train_cells)
            v_ranks = ext.ranks_for(self.val_cells)
            srt = np.argsort(t_ranks)
            t_sorted = t_ranks[srt]
            pos = np.searchsorted(t_sorted, v_ranks)
            has_lo = pos > 0
            has_hi = pos < t_sorted.size
            lo = srt[np.clip(pos - 1, 0, t_sorted.size - 1)]
            hi = srt[np.clip(pos, 0, t_sorted.size - 1)]
            d_lo = np.where(has_lo, v_ranks - t_sorted[np.clip(pos - 1, 0, None)], np.inf)
            d_hi = np.where(has_hi, t_sorted[np.clip(pos, None, t_sorted.size - 1)] - v_ranks,
                            np.inf)
            w_lo = np.where(d_lo < d_hi, 1.0, np.where(d_lo == d_hi, 0.5, 0.0))
            w_hi = 1.0 - w_lo
            self.plans.append((lo, hi, w_lo, w_hi))

    def apply(self, b_train: np.ndarray) -> np.ndarray:
        """Average the per-extension nearest-neighbour bias over extensions.

        For group orderings the exact average over all extensions is constant
        on each validation group by exchangeability, so the sampled average is
        symmetrised group-wise.
        """
        acc = np.zeros(len(self.val_cells))
        for lo, hi, w_lo, w_hi in self.plans:
            acc += w_lo * b_train[lo] + w_hi * b_train[hi]
        acc /= len(self.plans)
        if self.val_groups is not None:
            for g in np.unique(self.val_groups):
                sel = self.val_groups == g
                acc[sel] = acc[sel].mean()
        return acc


def interpolate(b_hat_train: RatingMatrix, split_: Split, order: PartialOrder,
                extensions: int, rng: np.random.Generator) -> RatingMatrix:
    """Interpolated bias on the validation cells.

    ``b_hat_train`` may live on the full cell set (zero outside training) or
    on the training cells alone.  For each sampled extension a validation
    cell takes the bias of its nearest training cell by rank, averaging the
    two neighbours when exactly equidistant on both sides; boundary cells
    take the single nearest.  The result is the mean over extensions (a
    single extension for total orderings, where the set has one element).
    """
    full = _union_obs(split_)
    interp = _Interpolator(order, full, split_, extensions, rng)
    b_train = _train_vector(b_hat_train, split_)
    return RatingMatrix(split_.validation, interp.apply(b_train))


def _union_obs(split_: Split) -> ObservationSet:
    return ObservationSet.from_elements(split_.train.elements + split_.validation.elements)


def _train_vector(b_hat: RatingMatrix, split_: Split) -> np.ndarray:
    idx = b_hat.obs.index
    missing = [e for e in split_.train.elements if e not in idx]
    if missing:
        raise ValueError(f"bias matrix lacks training cells: {missing[:3]}")
    return b_hat.flat[np.array([idx[e] for e in split_.train.elements], dtype=np.intp)]


def cv_error(y: RatingMatrix, x_hat: np.ndarray, b_tilde: RatingMatrix,
             validation: ObservationSet) -> float:
    """Mean squared validation residual after quality and bias correction."""
    if validation.size == 0:
        raise ValueError("empty validation set")
    yv = restrict_ratings(y, validation)
    r = yv.flat - np.asarray(x_hat)[validation.course_of] - b_tilde.flat
    return float(r @ r) / validation.size


def _score_grid(y: RatingMatrix, order: PartialOrder, obs: ObservationSet,
                lambdas: Sequence[Lambda | float | str], extensions: int,
                rng: np.random.Generator, seed: int | None
                ) -> tuple[CvReport, dict[Lambda, Solution]]:
    grid = [Lambda.of(v) for v in lambdas]
    if not grid:
        raise ValueError("empty candidate grid")
    split_ = split(obs, order, rng)
    interp = _Interpolator(order, obs, split_, extensions, rng)
    errors: dict[Lambda, float] = {}
    solutions: dict[Lambda, Solution] = {}
    best: Lambda | None = None
    for lam in grid:
        sol = fit(y, order, lam, obs=split_.train)
        solutions[lam] = sol
        b_train = _train_vector(sol.b_hat, split_)
        b_tilde = RatingMatrix(split_.validation, interp.apply(b_train))
        err = cv_error(y, sol.x_hat, b_tilde, split_.validation)
        errors[lam] = err
        if best is None or err < errors[best]:
            best = lam
    return CvReport(errors, best, interp.extensions, seed), solutions


def select_lambda(y: RatingMatrix, order: PartialOrder, obs: ObservationSet | None,
                  lambdas: Sequence[Lambda | float | str], extensions: int,
                  rng: np.random.Generator, seed: int | None = None) -> CvReport:
    """Score every candidate weight on one ordering-guided split.

    The split and the interpolation extensions are drawn once and shared by
    all candidates; ties go to the earliest candidate in ``lambdas``.
    """
    report, _ = _score_grid(y, order, obs or y.obs, lambdas, extensions, rng, seed)
    return report


def fit_cv(y: RatingMatrix, order: PartialOrder, obs: ObservationSet | None,
           lambdas: Sequence[Lambda | float | str], extensions: int,
           rng: np.random.Generator, refit: str = "full") -> Solution:
    """Select the weight by cross-validation, then refit.

    ``refit="full"`` solves again on all observed cells at the selected
    weight (the default); ``refit="train"`` returns the solution fitted on
    the training half only.
    """
    obs = obs or y.obs
    if refit not in ("full", "train"):
        raise ValueError(f"unknown refit mode {refit!r}")
    report, solutions = _score_grid(y, order, obs, lambdas, extensions, rng, None)
    if refit == "full":
        return fit(y, order, report.selected, obs=obs)
    return solutions[report.selected]
