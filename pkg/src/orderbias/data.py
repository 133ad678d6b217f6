"""Observations, synthetic data generation and the error metric.

Storage is ragged: each course holds its own vector of observed cells, so
unequal course sizes are first-class.  All cells are float64; generators are
pure functions of their inputs and a caller-owned RNG.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .poset import Element, PartialOrder, sample_linear_extension


@dataclass(frozen=True)
class ObservationSet:
    """The set of observed (course, slot) cells, ragged across courses."""

    slots: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        for i, s in enumerate(self.slots):
            if not s:
                raise ValueError(f"course {i} has no observed cells")
            if len(set(s)) != len(s):
                raise ValueError(f"course {i} has duplicate slots")
            if tuple(sorted(s)) != tuple(s):
                raise ValueError(f"course {i} slots must be sorted")

    @classmethod
    def full(cls, d: int, n: int) -> "ObservationSet":
        """Dense d x n cell set."""
        return cls(tuple(tuple(range(n)) for _ in range(d)))

    @classmethod
    def from_elements(cls, elements: Iterable[Element]) -> "ObservationSet":
        by_course: dict[int, list[int]] = {}
        for c, s in elements:
            by_course.setdefault(int(c), []).append(int(s))
        d = max(by_course) + 1
        if sorted(by_course) != list(range(d)):
            raise ValueError("every course up to the max index must be observed")
        return cls(tuple(tuple(sorted(by_course[i])) for i in range(d)))

    @property
    def d(self) -> int:
        return len(self.slots)

    @cached_property
    def counts(self) -> np.ndarray:
        return np.array([len(s) for s in self.slots], dtype=np.intp)

    @property
    def size(self) -> int:
        return int(self.counts.sum())

    @cached_property
    def elements(self) -> tuple[Element, ...]:
        return tuple(Element(i, s) for i, row in enumerate(self.slots) for s in row)

    @cached_property
    def index(self) -> dict[Element, int]:
        return {e: k for k, e in enumerate(self.elements)}

    @cached_property
    def course_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.d, dtype=np.intp), self.counts)


@dataclass(frozen=True)
class RatingMatrix:
    """Per-cell values over an :class:`ObservationSet` (ratings, bias, noise)."""

    obs: ObservationSet
    flat: np.ndarray  # aligned with obs.elements

    def __post_init__(self) -> None:
        if self.flat.shape != (self.obs.size,):
            raise ValueError(f"expected {self.obs.size} values, got {self.flat.shape}")
        if not np.all(np.isfinite(self.flat)):
            raise ValueError("non-finite entries")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "RatingMatrix":
        obs = ObservationSet.full(len(rows), len(rows[0])) if _rect(rows) else \
            ObservationSet(tuple(tuple(range(len(r))) for r in rows))
        return cls(obs, np.concatenate([np.asarray(r, dtype=np.float64) for r in rows]))

    @classmethod
    def zeros(cls, obs: ObservationSet) -> "RatingMatrix":
        return cls(obs, np.zeros(obs.size))

    def rows(self) -> list[np.ndarray]:
        out, k = [], 0
        for c in self.obs.counts:
            out.append(self.flat[k:k + c])
            k += c
        return out

    def value(self, course: int, slot: int) -> float:
        return float(self.flat[self.obs.index[Element(course, slot)]])

    def with_flat(self, flat: np.ndarray) -> "RatingMatrix":
        return RatingMatrix(self.obs, np.asarray(flat, dtype=np.float64))

    def norm_sq(self) -> float:
        return float(self.flat @ self.flat)


def _rect(rows: Sequence[Sequence[float]]) -> bool:
    return len({len(r) for r in rows}) == 1


@dataclass(frozen=True)
class GenParams:
    """Bias / noise scales and the base seed of a synthetic draw."""

    sigma: float
    eta: float
    seed: int

    def __post_init__(self) -> None:
        if self.sigma < 0 or self.eta < 0:
            raise ValueError("sigma and eta must be non-negative")


def course_means(y: RatingMatrix) -> np.ndarray:
    """Per-course mean of the observed cells."""
    return np.array([row.mean() for row in y.rows()])


def restrict_ratings(y: RatingMatrix, obs: ObservationSet) -> RatingMatrix:
    """The same ratings on a subset of the observed cells."""
    if obs == y.obs:
        return y
    idx = np.array([y.obs.index[e] for e in obs.elements], dtype=np.intp)
    return RatingMatrix(obs, y.flat[idx])


def generate_bias(order: PartialOrder, obs: ObservationSet, sigma: float,
                  rng: np.random.Generator) -> RatingMatrix:
    """Draw bias consistent with ``order``: i.i.d. normal values sorted and
    assigned by rank of a uniformly sampled linear extension."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    work = order if order.elements == obs.elements else order.restrict(obs.elements)
    draws = np.sort(rng.normal(0.0, sigma, obs.size))
    ext = sample_linear_extension(work, rng)
    flat = np.empty(obs.size)
    idx = obs.index
    for t, e in enumerate(ext.ranked):
        flat[idx[e]] = draws[t]
    return RatingMatrix(obs, flat)


def generate_bias_uniform_binary(order: PartialOrder, obs: ObservationSet,
                                 rng: np.random.Generator) -> RatingMatrix:
    """Two-group bias with Unif[-1, 0] in the low group and Unif[0, 1] in the
    high group, drawn i.i.d. per cell.

    Because every low-group draw lies below every high-group draw, the result
    satisfies the ordering exactly; it realises the uniform-marginal variant
    used by the analytic risk comparison.
    """
    if order.kind != "group" or order.n_groups != 2:
        raise ValueError("uniform binary bias requires a two-group ordering")
    work = order if order.elements == obs.elements else order.restrict(obs.elements)
    flat = np.empty(obs.size)
    idx = obs.index
    for e, g in zip(work.elements, work.group_of):
        flat[idx[e]] = rng.uniform(-1.0, 0.0) if g == 0 else rng.uniform(0.0, 1.0)
    return RatingMatrix(obs, flat)


def generate_noise(obs: ObservationSet, eta: float,
                   rng: np.random.Generator) -> RatingMatrix:
    """I.i.d. centred normal noise with standard deviation ``eta``."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    return RatingMatrix(obs, rng.normal(0.0, eta, obs.size))


def synthesize(x_star: np.ndarray, bias: RatingMatrix, noise: RatingMatrix) -> RatingMatrix:
    """Observations ``y = x*_course + bias + noise`` cell by cell."""
    if bias.obs != noise.obs:
        raise ValueError("bias and noise observation sets differ")
    x_star = np.asarray(x_star, dtype=np.float64)
    if x_star.shape != (bias.obs.d,):
        raise ValueError(f"expected {bias.obs.d} quality values, got {x_star.shape}")
    return bias.with_flat(x_star[bias.obs.course_of] + bias.flat + noise.flat)


def sq_error(x_hat: np.ndarray, x_star: np.ndarray) -> float:
    """Normalised squared error ``mean((x_hat - x_star)^2)``."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64)
    if x_hat.shape != x_star.shape:
        raise ValueError("length mismatch")
    diff = x_hat - x_star
    return float(diff @ diff) / x_hat.shape[0]


# -- CSV interchange -----------------------------------------------------------

CSV_HEADER = "course,slot,value"


def dump_ratings(y: RatingMatrix) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for e, v in zip(y.obs.elements, y.flat):
        buf.write(f"{e.course},{e.slot},{float(v)!r}\n")
    return buf.getvalue()


def load_ratings(text: str) -> RatingMatrix:
    """Parse ``course,slot,value`` rows; the observation set is the rows present."""
    cells: dict[Element, float] = {}
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if lines and lines[0].replace(" ", "").lower().startswith("course,"):
        lines = lines[1:]
    for ln in lines:
        c, s, v = ln.split(",")
        e = Element(int(c), int(s))
        if e in cells:
            raise ValueError(f"duplicate cell {e}")
        cells[e] = float(v)
    obs = ObservationSet.from_elements(cells.keys())
    return RatingMatrix(obs, np.array([cells[e] for e in obs.elements]))
