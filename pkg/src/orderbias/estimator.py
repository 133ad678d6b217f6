"""The order-constrained quality estimator.

Solves, jointly in the course qualities ``x`` and the per-cell bias ``b``,

    minimise  ||y - x·1 - b||^2  +  lam * ||b||^2
    over      b satisfying the given partial ordering (restricted to the
              observed cells),

for any regularisation weight in [0, inf].  Ties at lam = 0 are broken by the
bias of minimal norm, which is unique.  The solver alternates two exact
block updates: the bias update is a regularised isotonic projection of the
residuals, and the quality update is the per-course mean of the bias-corrected
observations, so the objective is non-increasing (checked at runtime).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .data import ObservationSet, RatingMatrix, course_means, restrict_ratings
from .isotonic import SolverError, cross_course_gaps, isotonic_project, solve_offset_qp
from .poset import GROUP, PartialOrder, feasibility_residual

MAX_SWEEPS = 10_000
REL_TOL = 1e-10


@dataclass(frozen=True)
class Lambda:
    """Regularisation weight: a finite non-negative value or symbolic infinity."""

    finite: float | None = None  # None encodes infinity

    def __post_init__(self) -> None:
        if self.finite is not None:
            if not math.isfinite(self.finite) or self.finite < 0:
                raise ValueError("finite weight must be a non-negative real; "
                                 "use Lambda.infinity() for the limit")

    @classmethod
    def of(cls, value: "Lambda | float | int | str") -> "Lambda":
        if isinstance(value, Lambda):
            return value
        if isinstance(value, str):
            return cls.parse(value)
        if math.isinf(value):
            return cls.infinity()
        return cls(float(value))

    @classmethod
    def infinity(cls) -> "Lambda":
        return cls(None)

    @classmethod
    def parse(cls, text: str) -> "Lambda":
        t = text.strip().lower()
        if t in ("inf", "infinity"):
            return cls.infinity()
        return cls(float(t))

    @property
    def is_infinite(self) -> bool:
        return self.finite is None

    @property
    def value(self) -> float:
        if self.finite is None:
            raise ValueError("symbolic infinity has no finite value")
        return self.finite

    def as_float(self) -> float:
        return math.inf if self.finite is None else self.finite

    def __str__(self) -> str:
        return "inf" if self.finite is None else format(self.finite, "g")


def lambda_grid(values: Iterable[float | str]) -> tuple[Lambda, ...]:
    return tuple(Lambda.of(v) for v in values)


#: The default regularisation grid: 0, powers of two from 2^-9 to 2^5, infinity.
DEFAULT_GRID: tuple[Lambda, ...] = lambda_grid(
    [0.0] + [float(2.0 ** i) for i in range(-9, 6)] + ["inf"])


@dataclass(frozen=True)
class FitDiagnostics:
    sweeps: int
    objective: float
    feasibility_residual: float
    converged: bool


@dataclass(frozen=True)
class Solution:
    """Fitted qualities and bias, with the weight used and solve diagnostics."""

    x_hat: np.ndarray
    b_hat: RatingMatrix
    lam: Lambda
    diagnostics: FitDiagnostics


class _Problem:
    """Observed cells of one fit, aligned with the restricted ordering."""

    def __init__(self, y: RatingMatrix, order: PartialOrder, obs: ObservationSet | None):
        full_obs = y.obs
        obs = obs or full_obs
        if obs != full_obs:
            missing = [e for e in obs.elements if e not in full_obs.index]
            if missing:
                raise ValueError(f"observation cells missing from ratings: {missing[:3]}")
        self.full_obs = full_obs
        self.obs = obs
        self.order = order if order.elements == obs.elements else order.restrict(obs.elements)
        self.sub = np.array([full_obs.index[e] for e in self.order.elements], dtype=np.intp)
        self.yv = y.flat[self.sub]
        self.courses = self.order.courses
        self.d = obs.d
        self.counts = np.bincount(self.courses, minlength=self.d).astype(np.float64)
        if np.any(self.counts == 0):
            raise ValueError("every course needs at least one observed cell")

    def x_update(self, b: np.ndarray) -> np.ndarray:
        return np.bincount(self.courses, weights=self.yv - b, minlength=self.d) / self.counts

    def objective(self, x: np.ndarray, b: np.ndarray, lam: float) -> float:
        r = self.yv - x[self.courses] - b
        return float(r @ r + lam * (b @ b))

    def embed(self, b: np.ndarray) -> RatingMatrix:
        """Bias vector as a matrix over the full cell set, zero off the fit cells."""
        flat = np.zeros(self.full_obs.size)
        flat[self.sub] = b
        return RatingMatrix(self.full_obs, flat)


def fit(y: RatingMatrix, order: PartialOrder, lam: Lambda | float | str,
        obs: ObservationSet | None = None) -> Solution:
    """Solve the estimator at the given regularisation weight.

    ``obs`` restricts the fit to a subset of the observed cells (the returned
    bias is zero elsewhere; feasibility is with respect to the ordering
    restricted to those cells).  At symbolic infinity the solution is exactly
    the per-course sample mean with zero bias.
    """
    lam = Lambda.of(lam)
    prob = _Problem(y, order, obs)
    if lam.is_infinite:
        x = course_means(restrict_ratings(y, prob.obs))
        diag = FitDiagnostics(0, prob.objective(x, np.zeros_like(prob.yv), 0.0), 0.0, True)
        return Solution(x, RatingMatrix.zeros(prob.full_obs), lam, diag)
    if lam.value == 0.0:
        return _fit_zero(prob)
    return _fit_positive(prob, lam)


def fit_at_zero(y: RatingMatrix, order: PartialOrder,
                obs: ObservationSet | None = None) -> Solution:
    """The unregularised fit with the minimal-norm tie-break."""
    return fit(y, order, Lambda(0.0), obs)


def _bcd(prob: _Problem, lam: float) -> tuple[np.ndarray, np.ndarray, int, bool]:
    """Alternate exact bias and quality updates until both stall.

    Stops when the relative objective decrease drops below ``REL_TOL`` and
    the iterates stop moving (the objective criterion alone can quit while
    the qualities still drift at a few ulps times its square root).
    """
    x = prob.x_update(np.zeros_like(prob.yv))
    b = np.zeros_like(prob.yv)
    scale = max(1.0, float(prob.yv @ prob.yv))
    step_scale = max(1.0, float(np.abs(prob.yv).max()))
    obj = prob.objective(x, b, lam)
    shrink = 1.0 / (1.0 + lam)
    sweeps = 0
    converged = False
    while sweeps < MAX_SWEEPS:
        sweeps += 1
        v = prob.yv - x[prob.courses]
        b_new = isotonic_project(v, prob.order) * shrink
        step_b = float(np.abs(b_new - b).max(initial=0.0))
        b = b_new
        x_new = prob.x_update(b)
        step_x = float(np.abs(x_new - x).max(initial=0.0))
        x = x_new
        new_obj = prob.objective(x, b, lam)
        if new_obj > obj + 1e-9 * (1.0 + obj):
            raise SolverError("objective increased during block-coordinate descent")
        stalled_obj = obj - new_obj <= REL_TOL * max(new_obj, 1e-8 * scale)
        stalled_iter = max(step_b, step_x) <= 1e-11 * step_scale
        obj = new_obj
        if stalled_obj and stalled_iter:
            converged = True
            break
    return x, b, sweeps, converged


def _fit_positive(prob: _Problem, lam: Lambda) -> Solution:
    x, b, sweeps, converged = _bcd(prob, lam.value)
    diag = FitDiagnostics(sweeps, prob.objective(x, b, lam.value),
                          feasibility_residual(b, prob.order), converged)
    return Solution(x, prob.embed(b), lam, diag)


def _fit_zero(prob: _Problem) -> Solution:
    x, b, sweeps, converged = _bcd(prob, 0.0)
    # the fitted surface x·1 + b is unique; resolve the per-course shift by
    # minimising the bias norm over shifts that keep the bias feasible.
    # Building the surface from the final exact quality update makes the
    # course-mean and sum identities of the returned solution exact.
    w0 = x[prob.courses] + b
    m = np.bincount(prob.courses, weights=w0, minlength=prob.d) / prob.counts
    lo_c, hi_c, gaps = cross_course_gaps(w0, prob.courses, prob.order)
    if lo_c.size:
        u = solve_offset_qp(m, prob.counts, lo_c, hi_c, gaps, start=x)
    else:
        u = m
    b_final = w0 - u[prob.courses]
    diag = FitDiagnostics(sweeps, prob.objective(u, b_final, 0.0),
                          feasibility_residual(b_final, prob.order), converged)
    return Solution(u, prob.embed(b_final), Lambda(0.0), diag)


def closed_form_d2r2(y: RatingMatrix, order: PartialOrder,
                     obs: ObservationSet | None = None) -> np.ndarray:
    """Closed-form qualities for two courses under a two-group ordering.

    Valid for feasible (noise-free) observations: the fitted surface equals
    the observations, and the minimal-norm course shift has an explicit
    three-branch form obtained by clipping the course-mean gap to the range
    the cross-course constraints allow.  Missing course/group cells simply
    drop the corresponding bound.  Exposed as a test oracle.
    """
    prob = _Problem(y, order, obs)
    if prob.d != 2:
        raise ValueError("closed form requires exactly two courses")
    if prob.order.kind != GROUP or prob.order.n_groups != 2:
        raise ValueError("closed form requires a two-group ordering")
    yv, courses, groups = prob.yv, prob.courses, prob.order.group_of
    grand = float(yv.mean())
    mean_gap = float(yv[courses == 1].mean() - yv[courses == 0].mean())

    def cell(c: int, g: int) -> np.ndarray:
        return yv[(courses == c) & (groups == g)]

    upper = np.inf
    lower = -np.inf
    c1g1, c0g0 = cell(1, 1), cell(0, 0)
    if c1g1.size and c0g0.size:
        upper = float(c1g1.min() - c0g0.max())
    c1g0, c0g1 = cell(1, 0), cell(0, 1)
    if c1g0.size and c0g1.size:
        lower = float(c1g0.max() - c0g1.min())
    gamma = min(max(mean_gap, lower), upper)
    return np.array([grand - gamma / 2.0, grand + gamma / 2.0])
