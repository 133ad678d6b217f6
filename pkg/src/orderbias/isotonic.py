"""Isotonic projections on chains and posets, plus an independent QP oracle.

The chain case is weighted PAVA (compiled kernel when available).  Group and
tree orderings with uniform weights reduce exactly to chain / forest problems
by sorting exchangeable cells; everything else is handled by a block-merging
active-set solver over the reduced constraint set, with an iterative
projection fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import ObservationSet, RatingMatrix
from .poset import DAG, GROUP, TOTAL, TREE, PartialOrder


class SolverError(RuntimeError):
    """An iterative solve failed to reach its tolerance within the cap."""


@dataclass(frozen=True)
class IsotonicFit:
    """Chain-isotonic fit: non-decreasing values and their level-set blocks."""

    fitted: np.ndarray
    blocks: tuple[tuple[int, int], ...]  # half-open [start, stop) index ranges


def pava(values: np.ndarray, weights: np.ndarray | None = None) -> IsotonicFit:
    """Weighted least-squares projection onto the non-decreasing cone."""
    v = np.ascontiguousarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("input must be a non-empty 1-d sequence")
    if weights is None:
        w = np.ones_like(v)
    else:
        w = np.ascontiguousarray(weights, dtype=np.float64)
        if w.shape != v.shape:
            raise ValueError("weights must match values in length")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
    fitted, bounds = _kernels.pava(v, w)
    blocks = tuple((int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]))
    return IsotonicFit(fitted, blocks)


# -- poset projection -----------------------------------------------------------


def isotonic_project(values: np.ndarray, order: PartialOrder,
                     weights: np.ndarray | None = None) -> np.ndarray:
    """argmin of sum w_e (values_e - u_e)^2 over u satisfying ``order``.

    ``values`` is aligned with ``order.elements``.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (len(order),):
        raise ValueError(f"expected {len(order)} values, got shape {v.shape}")
    uniform = weights is None or np.ptp(weights) == 0
    if order.kind == TOTAL:
        perm = np.argsort(order.rank_of)
        w = None if weights is None else np.asarray(weights, dtype=np.float64)[perm]
        out = np.empty_like(v)
        out[perm] = pava(v[perm], w).fitted
        return out
    if order.kind == GROUP and uniform:
        # cells of one group are exchangeable: the projection keeps their value
        # order, so sorting within groups turns the cone into a single chain
        perm = np.lexsort((v, order.group_of))
        out = np.empty_like(v)
        out[perm] = pava(v[perm]).fitted
        return out
    if order.kind == TREE and uniform:
        lo, hi = _tree_chain_edges(order, v)
        return _active_set_qp(v, np.ones_like(v), lo, hi,
                              np.zeros(len(lo)), _uniform_start(v, None))
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=np.float64)
    lo, hi = _general_edges(order)
    return _active_set_qp(v, w, lo, hi, np.zeros(len(lo)), _uniform_start(v, w))


def _uniform_start(v: np.ndarray, w: np.ndarray | None) -> np.ndarray:
    mean = float(v.mean()) if w is None else float((w * v).sum() / w.sum())
    return np.full_like(v, mean)


def _tree_chain_edges(order: PartialOrder, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reduce a tree cone at uniform weights to a forest of value-sorted chains."""
    node = order.node_of
    los: list[int] = []
    his: list[int] = []
    first: dict[int, int] = {}
    last: dict[int, int] = {}
    for nd in np.unique(node):
        cell = np.flatnonzero(node == nd)
        srt = cell[np.argsort(v[cell], kind="stable")]
        for a, b in zip(srt[:-1], srt[1:]):
            los.append(int(a))
            his.append(int(b))
        first[int(nd)] = int(srt[0])
        last[int(nd)] = int(srt[-1])
    for parent, child in order.tree_edges:
        if parent in last and child in first:
            los.append(last[parent])
            his.append(first[child])
    return np.asarray(los, dtype=np.intp), np.asarray(his, dtype=np.intp)


def _general_edges(order: PartialOrder) -> tuple[np.ndarray, np.ndarray]:
    """Constraint edges for the weighted active-set path."""
    if order.kind == DAG:
        lo = np.array([a for a, _ in order.edges], dtype=np.intp)
        hi = np.array([b for _, b in order.edges], dtype=np.intp)
        return lo, hi
    if order.kind == GROUP:
        los, his = [], []
        by_group = [np.flatnonzero(order.group_of == k) for k in range(order.n_groups)]
        present = [g for g in by_group if g.size]
        for ga, gb in zip(present[:-1], present[1:]):
            for a in ga:
                for b in gb:
                    los.append(int(a))
                    his.append(int(b))
        return np.asarray(los, dtype=np.intp), np.asarray(his, dtype=np.intp)
    if order.kind == TREE:
        los, his = [], []
        node = order.node_of
        for parent, child in order.tree_edges:
            for a in np.flatnonzero(node == parent):
                for b in np.flatnonzero(node == child):
                    los.append(int(a))
                    his.append(int(b))
        return np.asarray(los, dtype=np.intp), np.asarray(his, dtype=np.intp)
    raise ValueError(f"no edge form for kind {order.kind!r}")


def regularized_isotonic(values: np.ndarray, order: PartialOrder, lam: float,
                         weights: np.ndarray | None = None) -> np.ndarray:
    """Minimise ``||y - u||_w^2 + lam * ||u||_w^2`` over order-feasible u.

    Because the feasible set is a cone, the minimiser is the plain projection
    scaled by ``1 / (1 + lam)``.
    """
    if not (lam >= 0) or math.isinf(lam):
        raise ValueError("lam must be a finite non-negative number")
    projected = isotonic_project(values, order, weights)
    return projected / (1.0 + lam)


# -- offset-constrained weighted least squares (active set) ----------------------


def solve_offset_qp(target: np.ndarray, weights: np.ndarray,
                    lo: np.ndarray, hi: np.ndarray, gaps: np.ndarray,
                    start: np.ndarray) -> np.ndarray:
    """Minimise sum w (u - target)^2 subject to ``u[lo] - u[hi] <= gaps``.

    ``start`` must be feasible.  Exact active-set solve with an iterative
    fallback; used for tie-breaking and as the generic projection engine.
    """
    return _active_set_qp(np.asarray(target, dtype=np.float64),
                          np.asarray(weights, dtype=np.float64),
                          np.asarray(lo, dtype=np.intp),
                          np.asarray(hi, dtype=np.intp),
                          np.asarray(gaps, dtype=np.float64),
                          np.asarray(start, dtype=np.float64))


def _components(n: int, lo: np.ndarray, hi: np.ndarray, active: np.ndarray) -> np.ndarray:
    parent = np.arange(n, dtype=np.intp)

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in np.flatnonzero(active):
        ra, rb = find(int(lo[e])), find(int(hi[e]))
        if ra != rb:
            parent[ra] = rb
    labels = np.empty(n, dtype=np.intp)
    seen: dict[int, int] = {}
    for i in range(n):
        r = find(i)
        labels[i] = seen.setdefault(r, len(seen))
    return labels


def _active_set_qp(target, weights, lo, hi, gaps, start) -> np.ndarray:
    n = target.shape[0]
    m = lo.shape[0]
    u = start.astype(np.float64, copy=True)
    if m == 0:
        return target.astype(np.float64, copy=True)
    scale = max(1.0, float(np.abs(target).max(initial=0.0)),
                float(np.abs(u).max(initial=0.0)),
                float(np.abs(gaps).max(initial=0.0)))
    if float((u[lo] - u[hi] - gaps).max()) > 1e-8 * scale:
        raise ValueError("active-set start point is infeasible")
    active = np.zeros(m, dtype=bool)
    labels = np.arange(n, dtype=np.intp)  # maintained incrementally across merges
    tol_p = 1e-13 * scale
    cap = 30 * (n + m) + 200
    for _ in range(cap):
        wsum = np.bincount(labels, weights=weights, minlength=n)
        shift = np.bincount(labels, weights=weights * (target - u), minlength=n)
        with np.errstate(invalid="ignore"):
            shift = np.where(wsum > 0, shift / np.where(wsum > 0, wsum, 1.0), 0.0)
        p = shift[labels]
        if np.abs(p).max(initial=0.0) <= tol_p:
            drop = _most_negative_multiplier(u, target, weights, lo, hi, active, labels)
            if drop is None:
                return u
            active[drop] = False
            labels = _components(n, lo, hi, active)
            continue
        inactive = np.flatnonzero(~active)
        alpha = 1.0
        blocker = -1
        d = p[lo[inactive]] - p[hi[inactive]]
        moving = d > 1e-14 * max(1.0, float(np.abs(p).max()))
        if moving.any():
            idx = inactive[moving]
            slack = np.maximum(gaps[idx] - (u[lo[idx]] - u[hi[idx]]), 0.0)
            steps = slack / d[moving]
            k = int(np.argmin(steps))
            if steps[k] < alpha:
                alpha = float(steps[k])
                blocker = int(idx[k])
        u += alpha * p
        if blocker >= 0:
            active[blocker] = True
            la, lb = labels[lo[blocker]], labels[hi[blocker]]
            if la != lb:
                labels[labels == lb] = la
    # degenerate cycling: fall back to an iterative projection
    return _dykstra(target, weights, lo, hi, gaps)


def _most_negative_multiplier(u, target, weights, lo, hi, active, labels) -> int | None:
    act = np.flatnonzero(active)
    if act.size == 0:
        return None
    g = 2.0 * weights * (u - target)
    mus = np.zeros(act.size)
    for b in np.unique(labels[lo[act]]):
        rows = np.flatnonzero(labels == b)
        cols = np.flatnonzero(labels[lo[act]] == b)
        mat = np.zeros((rows.size, cols.size))
        rpos = {int(r): i for i, r in enumerate(rows)}
        for j, e in enumerate(act[cols]):
            mat[rpos[int(lo[e])], j] += 1.0
            mat[rpos[int(hi[e])], j] -= 1.0
        sol, *_ = np.linalg.lstsq(mat, -g[rows], rcond=None)
        mus[cols] = sol
    worst = int(np.argmin(mus))
    if mus[worst] >= -1e-12 * max(1.0, float(np.abs(g).max(initial=0.0))):
        return None
    return int(act[worst])


def _dykstra(target, weights, lo, hi, gaps, sweeps: int = 200_000,
             tol: float = 1e-12) -> np.ndarray:
    """Cyclic weighted halfspace projections with Dykstra corrections."""
    u = target.astype(np.float64, copy=True)
    m = lo.shape[0]
    if m == 0:
        return u
    corr = np.zeros(m)
    inv_w = 1.0 / weights
    denom = inv_w[lo] + inv_w[hi]
    scale = max(1.0, float(np.abs(target).max()))
    for _ in range(sweeps):
        delta = 0.0
        for e in range(m):
            a, b = lo[e], hi[e]
            # undo previous correction, then project onto the halfspace
            viol = (u[a] + corr[e] * inv_w[a]) - (u[b] - corr[e] * inv_w[b]) - gaps[e]
            new_u_a = u[a] + corr[e] * inv_w[a]
            new_u_b = u[b] - corr[e] * inv_w[b]
            if viol > 0:
                t = viol / denom[e]
                new_u_a -= t * inv_w[a]
                new_u_b += t * inv_w[b]
                new_corr = t
            else:
                new_corr = 0.0
            delta = max(delta, abs(new_u_a - u[a]), abs(new_u_b - u[b]))
            u[a], u[b] = new_u_a, new_u_b
            corr[e] = new_corr
        if delta <= tol * scale:
            break
    else:
        raise SolverError("iterative projection failed to converge")
    return u


# -- independent oracle for the joint estimator problem --------------------------


@dataclass(frozen=True)
class OracleResult:
    x: np.ndarray
    b: RatingMatrix
    objective: float
    iterations: int


def qp_oracle(y: RatingMatrix, order: PartialOrder, lam: float,
              obs: ObservationSet | None = None,
              stat_tol: float = 1e-10, max_iter: int = 100_000) -> OracleResult:
    """Solve the joint quality/bias problem by projected gradient descent.

    Minimises ``||y - x·1 - b||^2 + lam * ||b||^2`` over order-feasible ``b``
    (per observed cell), eliminating ``x`` exactly through course means.
    Intended as a slow, independent check on small instances (< ~30 cells
    recommended).  ``lam`` may be ``math.inf`` (exact course-mean branch).

    Raises
    ------
    SolverError
        If first-order stationarity is not reached within ``max_iter``.
    """
    obs = obs or y.obs
    if lam < 0:
        raise ValueError("lam must be non-negative")
    work = order if order.elements == obs.elements else order.restrict(obs.elements)
    yv = y.flat[np.array([y.obs.index[e] for e in work.elements], dtype=np.intp)]
    sub_idx = np.array([obs.index[e] for e in work.elements], dtype=np.intp)
    courses = work.courses
    counts = np.bincount(courses, minlength=obs.d).astype(np.float64)
    if np.any(counts == 0):
        raise ValueError("every course needs at least one observed cell")
    if math.isinf(lam):
        x = np.bincount(courses, weights=yv, minlength=obs.d) / counts
        return OracleResult(x, RatingMatrix.zeros(obs), 0.0, 0)

    def x_of(b: np.ndarray) -> np.ndarray:
        return np.bincount(courses, weights=yv - b, minlength=obs.d) / counts

    def objective(b: np.ndarray) -> float:
        r = yv - x_of(b)[courses] - b
        return float(r @ r + lam * (b @ b))

    def gradient(b: np.ndarray) -> np.ndarray:
        return -2.0 * (yv - x_of(b)[courses] - b) + 2.0 * lam * b

    # gradient of the reduced objective is 2(1+lam)-Lipschitz, so this step
    # always decreases the objective; backtracking never needs to go below it
    safe_step = 1.0 / (2.0 * (1.0 + lam))
    tol = stat_tol * max(1.0, float(np.abs(yv).max()))
    b = np.zeros_like(yv)
    fb = objective(b)
    converged = False
    iters = 0
    for iters in range(1, max_iter + 1):
        grad = gradient(b)
        probe = isotonic_project(b - safe_step * grad, work)
        if float(np.abs(b - probe).max()) / safe_step <= tol:
            converged = True
            break
        f_probe = objective(probe)
        step = 1.0
        cand, f_cand = probe, f_probe
        while step > safe_step:
            trial = isotonic_project(b - step * grad, work)
            diff = trial - b
            f_trial = objective(trial)
            # take a longer step only if it strictly beats the safe one;
            # ties go to the safe step, whose map is a strict contraction
            if (f_trial <= fb + grad @ diff + (diff @ diff) / (2 * step)
                    and f_trial < f_probe):
                cand, f_cand = trial, f_trial
                break
            step *= 0.5
        b = cand
        fb = f_cand
    if not converged:
        raise SolverError(f"oracle did not reach stationarity {stat_tol:g} "
                          f"within {max_iter} iterations")
    if lam == 0.0:
        b = _oracle_tie_break(yv, b, courses, counts, work)
        fb = objective(b)
    x = x_of(b)
    flat = np.zeros(obs.size)
    flat[sub_idx] = b
    return OracleResult(x, RatingMatrix(obs, flat), fb, iters)


def _oracle_tie_break(yv, b, courses, counts, work: PartialOrder) -> np.ndarray:
    """Among zero-penalty optima, pick the bias of minimal norm.

    The optimal fitted surface ``w0 = x·1 + b`` is unique; the solution family
    shifts whole courses.  Project the course-mean vector onto the polyhedron
    of shifts keeping ``w0 - u·1`` feasible (iterative projection keeps this
    oracle independent of the estimator's own tie-break solver).
    """
    x0 = np.bincount(courses, weights=yv - b, minlength=counts.size) / counts
    w0 = x0[courses] + b
    m = np.bincount(courses, weights=w0, minlength=counts.size) / counts
    lo_c, hi_c, gaps = cross_course_gaps(w0, courses, work)
    if lo_c.size == 0:
        u = m
    else:
        u = _dykstra(m, counts, lo_c, hi_c, gaps, sweeps=500_000, tol=1e-14)
    return w0 - u[courses]


def cross_course_gaps(w0: np.ndarray, courses: np.ndarray,
                      order: PartialOrder) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Feasibility bounds for per-course shifts of a fitted surface.

    ``b = w0 - u[course]`` satisfies ``order`` iff for every implied
    cross-course constraint pair, ``u[i'] - u[i] <= w0_hi - w0_lo``; returns
    the binding bound per ordered course pair as ``(lo, hi, gap)`` arrays,
    encoding ``u[lo] - u[hi] <= gap``.
    """
    d = int(courses.max()) + 1
    bound = np.full((d, d), np.inf)

    def cell_stats(sel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-course (max, min) of w0 over the selected cells."""
        mx = np.full(d, -np.inf)
        mn = np.full(d, np.inf)
        np.maximum.at(mx, courses[sel], w0[sel])
        np.minimum.at(mn, courses[sel], w0[sel])
        return mx, mn

    def tighten_blocks(low_max: np.ndarray, high_min: np.ndarray) -> None:
        # constraint pairs run from every low cell to every high cell
        np.minimum(bound, high_min[:, None] - low_max[None, :], out=bound)

    if order.kind == GROUP:
        present = [np.flatnonzero(order.group_of == k) for k in range(order.n_groups)]
        present = [g for g in present if g.size]
        run_max = np.full(d, -np.inf)
        for ki in range(len(present) - 1):
            mx, _ = cell_stats(present[ki])
            run_max = np.maximum(run_max, mx)
            _, mn = cell_stats(present[ki + 1])
            tighten_blocks(run_max, mn)
    elif order.kind == TOTAL:
        srt = np.argsort(order.rank_of)
        w0s, cs = w0[srt], courses[srt]
        suffmin = np.full((d, len(srt) + 1), np.inf)
        for t in range(len(srt) - 1, -1, -1):
            suffmin[:, t] = suffmin[:, t + 1]
            suffmin[cs[t], t] = min(suffmin[cs[t], t], w0s[t])
        for t in range(len(srt) - 1):
            np.minimum(bound[:, cs[t]], suffmin[:, t + 1] - w0s[t],
                       out=bound[:, cs[t]])
    elif order.kind == TREE:
        node = order.node_of
        for parent, child in order.tree_edges:
            psel = np.flatnonzero(node == parent)
            csel = np.flatnonzero(node == child)
            if psel.size and csel.size:
                mx, _ = cell_stats(psel)
                _, mn = cell_stats(csel)
                tighten_blocks(mx, mn)
    else:
        lo_e, hi_e = _closure_pairs(order)
        for a, b_ in zip(lo_e, hi_e):
            ca, cb = int(courses[a]), int(courses[b_])
            if ca != cb:
                bound[cb, ca] = min(bound[cb, ca], w0[b_] - w0[a])
    np.fill_diagonal(bound, np.inf)
    rows, cols = np.nonzero(np.isfinite(bound))  # bound[cb, ca]: u[cb]-u[ca] <= gap
    return (rows.astype(np.intp), cols.astype(np.intp),
            bound[rows, cols].astype(np.float64))


def _closure_pairs(order: PartialOrder) -> tuple[list[int], list[int]]:
    n = len(order)
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in order.edges:
        adj[a].append(b)
    lo, hi = [], []
    for s in range(n):
        stack = list(adj[s])
        seen = set()
        while stack:
            v = stack.pop()
            if v not in seen:
                seen.add(v)
                lo.append(s)
                hi.append(v)
                stack.extend(adj[v])
    return lo, hi
