"""Seeded Monte-Carlo experiment runner over synthetic bias scenarios.

Each run derives its own counter-based RNG from a stable 64-bit mix of the
base seed and the run index, so results are bit-identical whether runs
execute serially or on a worker pool.  True qualities are fixed to zero;
the estimator family is shift-invariant, so errors are unaffected.
"""

from __future__ import annotations

import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .baselines import (NotApplicable, mean_estimator, median_estimator,
                        reweighted_mean, reweighted_mean_tree)
from .crossval import fit_cv
from .data import (ObservationSet, RatingMatrix, generate_bias,
                   generate_bias_uniform_binary, generate_noise, sq_error,
                   synthesize)
from .estimator import DEFAULT_GRID, Lambda, fit
from .poset import (Element, PartialOrder, build_group_ordering,
                    build_total_ordering, build_tree_ordering)

SCENARIOS = ("non_interleaving", "interleaving", "binary", "tree_total",
             "tree_3level", "unequal_groups", "uniform_d2")

ESTIMATORS = ("cv", "best_fixed", "mean", "median", "reweighted",
              "reweighted_node", "reweighted_level")

_DEFAULT_D = {"non_interleaving": 3, "interleaving": 3, "binary": 4,
              "tree_total": 2, "tree_3level": 3, "unequal_groups": 3,
              "uniform_d2": 2}

MASK64 = (1 << 64) - 1


def derive_run_seed(seed: int, run: int) -> int:
    """Stable 64-bit mix of the base seed and run index (splitmix64 step)."""
    z = (seed + (run + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def run_rng(seed: int, run: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_run_seed(seed, run)))


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    n: int
    d: int = 0  # 0: scenario default
    sigma: float = 1.0
    eta: float = 0.0
    runs: int = 250
    seed: int = 0
    lambda_grid: tuple[Lambda, ...] = DEFAULT_GRID
    estimators: tuple[str, ...] = ("cv", "best_fixed", "mean", "median")
    extensions: int = 100
    frac: float = 0.9     # large-group share of the binary layout
    uniform_frac: float = 0.5  # first-group share of the uniform two-group layout
    r: int = 3            # groups for the unequal_groups scenario
    workers: int = 1

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}")
        if self.runs < 1:
            raise ValueError("need at least one run")
        if self.d == 0:
            object.__setattr__(self, "d", _DEFAULT_D[self.scenario])
        _validate_sizes(self)

    @classmethod
    def from_mapping(cls, raw: Mapping[str, str]) -> "ScenarioConfig":
        """Build from flat key=value strings (config file / CLI overrides)."""
        kw: dict = {}
        for key, value in raw.items():
            if key in ("scenario",):
                kw[key] = value
            elif key in ("n", "d", "runs", "seed", "extensions", "r", "workers"):
                kw[key] = int(value)
            elif key in ("sigma", "eta", "frac", "uniform_frac"):
                kw[key] = float(value)
            elif key == "lambda_grid":
                kw[key] = tuple(Lambda.parse(tok) for tok in value.split(","))
            elif key == "estimators":
                kw[key] = tuple(tok.strip() for tok in value.split(",") if tok.strip())
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(**kw)


def _validate_sizes(cfg: ScenarioConfig) -> None:
    if cfg.scenario == "binary":
        if cfg.d % 2:
            raise ValueError("binary scenario splits the courses in half; d must be even")
        small = round(cfg.frac * cfg.n)
        if not 0 < small < cfg.n:
            raise ValueError("binary layout fraction leaves an empty group")
    elif cfg.scenario == "tree_total":
        if cfg.d != 2:
            raise ValueError("the total-tree scenario is defined for two courses")
        if cfg.n < 3 or (cfg.n + 1) & cfg.n:
            raise ValueError("total-tree size needs n = 2**(depth-1) - 1")
    elif cfg.scenario == "tree_3level":
        if cfg.d != 3:
            raise ValueError("the three-level tree scenario is defined for three courses")
        if cfg.n % 7:
            raise ValueError("three-level tree sizes need n divisible by 7")
    elif cfg.scenario == "uniform_d2":
        if cfg.d != 2:
            raise ValueError("the uniform-bias scenario is defined for two courses")
        small = round(cfg.uniform_frac * cfg.n)
        if not 0 < small < cfg.n:
            raise ValueError("uniform layout fraction leaves an empty group")


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    estimator: str
    d: int
    n: int
    sigma: float
    eta: float
    run: int
    sq_error: float | None
    selected_lambda: str = ""


CSV_COLUMNS = "scenario,estimator,d,n,sigma,eta,run,sq_error,selected_lambda"


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    buf.write(CSV_COLUMNS + "\n")
    for r in rows:
        err = "" if r.sq_error is None else repr(r.sq_error)
        buf.write(f"{r.scenario},{r.estimator},{r.d},{r.n},{r.sigma!r},{r.eta!r},"
                  f"{r.run},{err},{r.selected_lambda}\n")
    return buf.getvalue()


# -- scenario construction -----------------------------------------------------


def non_interleaving_order(d: int, n: int) -> PartialOrder:
    """Total ordering ranking whole courses one after another."""
    ranked = [Element(i, j) for i in range(d) for j in range(n)]
    return build_total_ordering(ranked)


def interleaving_order(d: int, n: int) -> PartialOrder:
    """Total ordering alternating courses at every rank."""
    ranked = [Element(i, j) for j in range(n) for i in range(d)]
    return build_total_ordering(ranked)


def binary_order(d: int, n: int, frac: float = 0.9) -> PartialOrder:
    """Two-group ordering; half the courses are mostly low-group, half mostly high."""
    big = round(frac * n)
    group_of: dict[Element, int] = {}
    for i in range(d):
        lo = big if i < d // 2 else n - big
        for j in range(n):
            group_of[Element(i, j)] = 0 if j < lo else 1
    return build_group_ordering(group_of, 2)


def equal_groups_order(d: int, n: int, r: int) -> PartialOrder:
    """Group ordering with (near-)equal per-course group sizes.

    When r does not divide n the first ``n % r`` groups hold one extra cell,
    so every cell count is within one of n/r in every course.
    """
    if n < r:
        raise ValueError("need at least one cell per group")
    base, extra = divmod(n, r)
    sizes = [base + 1 if k < extra else base for k in range(r)]
    bounds = np.cumsum([0] + sizes)
    group_of = {Element(i, j): int(np.searchsorted(bounds, j, side="right") - 1)
                for i in range(d) for j in range(n)}
    return build_group_ordering(group_of, r)


def uniform_layout_order(n: int, frac: float = 0.5) -> PartialOrder:
    """Two courses, two groups, with mirrored group shares (frac, 1 - frac)."""
    big = round(frac * n)
    group_of: dict[Element, int] = {}
    for j in range(n):
        group_of[Element(0, j)] = 0 if j < big else 1
        group_of[Element(1, j)] = 0 if j < n - big else 1
    return build_group_ordering(group_of, 2)


def total_tree_order(n: int) -> PartialOrder:
    """Binary tree with one leaf removed; inner levels are course 0, leaves course 1.

    One cell per node; ``n = 2**(depth-1) - 1`` cells per course.
    """
    depth = (n + 1).bit_length()
    node_of: dict[Element, int] = {}
    parents: dict[int, int] = {}
    # heap indexing: node v has children 2v+1, 2v+2; drop the last leaf
    total_nodes = 2 ** depth - 2
    for v in range(total_nodes):
        parents[v] = (v - 1) // 2 if v else -1
    inner = [v for v in range(2 ** (depth - 1) - 1)]
    leaves = [v for v in range(2 ** (depth - 1) - 1, total_nodes)]
    for j, v in enumerate(inner):
        node_of[Element(0, j)] = v
    for j, v in enumerate(leaves):
        node_of[Element(1, j)] = v
    return build_tree_ordering(node_of, parents)


def three_level_tree_order(n: int, rng: np.random.Generator) -> PartialOrder:
    """Seven-node binary tree of three levels, k = 3n/7 cells per node.

    Courses draw fixed numbers of cells per level (uniformly among the
    level's cells): course 0 takes the root level, k from level two and k/3
    leaves; course 1 takes k from level two and 4k/3 leaves; course 2 is all
    leaves.
    """
    k = 3 * n // 7
    parents = {0: -1, 1: 0, 2: 0, 3: 1, 4: 1, 5: 2, 6: 2}
    level_nodes = {0: [0], 1: [1, 2], 2: [3, 4, 5, 6]}
    cells = {lv: [(node, c) for node in level_nodes[lv] for c in range(k)]
             for lv in range(3)}
    take = {0: [(0, k)], 1: [(0, k), (1, k)], 2: [(0, k // 3), (1, 4 * k // 3), (2, 7 * k // 3)]}
    assignment: dict[int, list[int]] = {0: [], 1: [], 2: []}
    for lv in range(3):
        pool = list(rng.permutation(len(cells[lv])))
        for course, count in take[lv]:
            for _ in range(count):
                node, _c = cells[lv][pool.pop()]
                assignment[course].append(node)
    node_of: dict[Element, int] = {}
    for course, nodes in assignment.items():
        for j, node in enumerate(nodes):
            node_of[Element(course, j)] = node
    return build_tree_ordering(node_of, parents)


def unequal_groups_order(d: int, n: int, r: int,
                         rng: np.random.Generator) -> tuple[PartialOrder, ObservationSet]:
    """Ragged course sizes with every group present in every course."""
    group_of: dict[Element, int] = {}
    for i in range(d):
        n_i = int(rng.integers(max(r, (n + 1) // 2), n + 1))
        sizes = np.full(r, 1, dtype=np.intp)
        extra = np.bincount(rng.integers(0, r, n_i - r), minlength=r) if n_i > r else 0
        sizes = sizes + extra
        j = 0
        for k in range(r):
            for _ in range(int(sizes[k])):
                group_of[Element(i, j)] = k
                j += 1
    order = build_group_ordering(group_of, r)
    return order, ObservationSet.from_elements(group_of.keys())


def build_scenario(cfg: ScenarioConfig,
                   rng: np.random.Generator) -> tuple[PartialOrder, ObservationSet]:
    if cfg.scenario == "non_interleaving":
        return non_interleaving_order(cfg.d, cfg.n), ObservationSet.full(cfg.d, cfg.n)
    if cfg.scenario == "interleaving":
        return interleaving_order(cfg.d, cfg.n), ObservationSet.full(cfg.d, cfg.n)
    if cfg.scenario == "binary":
        return binary_order(cfg.d, cfg.n, cfg.frac), ObservationSet.full(cfg.d, cfg.n)
    if cfg.scenario == "tree_total":
        return total_tree_order(cfg.n), ObservationSet.full(2, cfg.n)
    if cfg.scenario == "tree_3level":
        return three_level_tree_order(cfg.n, rng), ObservationSet.full(3, cfg.n)
    if cfg.scenario == "uniform_d2":
        return uniform_layout_order(cfg.n, cfg.uniform_frac), ObservationSet.full(2, cfg.n)
    return unequal_groups_order(cfg.d, cfg.n, cfg.r, rng)


# -- running -------------------------------------------------------------------


def _one_run(cfg: ScenarioConfig, run: int) -> list[ResultRow]:
    rng = run_rng(cfg.seed, run)
    order, obs = build_scenario(cfg, rng)
    x_star = np.zeros(obs.d)
    if cfg.scenario == "uniform_d2":
        bias = generate_bias_uniform_binary(order, obs, rng)
    else:
        bias = generate_bias(order, obs, cfg.sigma, rng)
    noise = generate_noise(obs, cfg.eta, rng)
    y = synthesize(x_star, bias, noise)
    rows: list[ResultRow] = []

    def emit(name: str, x_hat: np.ndarray | None, selected: str = "") -> None:
        err = None if x_hat is None else sq_error(x_hat, x_star)
        rows.append(ResultRow(cfg.scenario, name, obs.d, cfg.n, cfg.sigma, cfg.eta,
                              run, err, selected))

    for name in cfg.estimators:
        if name == "cv":
            sol = fit_cv(y, order, obs, cfg.lambda_grid, cfg.extensions, rng)
            emit(name, sol.x_hat, str(sol.lam))
        elif name == "best_fixed":
            best = min(sq_error(fit(y, order, lam, obs).x_hat, x_star)
                       for lam in cfg.lambda_grid)
            rows.append(ResultRow(cfg.scenario, name, obs.d, cfg.n, cfg.sigma,
                                  cfg.eta, run, best))
        elif name == "mean":
            emit(name, mean_estimator(y, obs))
        elif name == "median":
            emit(name, median_estimator(y, obs))
        elif name == "reweighted":
            try:
                emit(name, reweighted_mean(y, order, obs))
            except NotApplicable:
                emit(name, None)
        elif name in ("reweighted_node", "reweighted_level"):
            mode = name.removeprefix("reweighted_")
            try:
                emit(name, reweighted_mean_tree(y, order, mode, obs))
            except NotApplicable:
                emit(name, None)
    return rows


def run_scenario(cfg: ScenarioConfig) -> list[ResultRow]:
    """All runs of one scenario, rows in (run, estimator) order."""
    if cfg.workers > 1:
        serial_cfg = replace(cfg, workers=1)
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_one_run, [serial_cfg] * cfg.runs, range(cfg.runs)))
    else:
        chunks = [_one_run(cfg, run) for run in range(cfg.runs)]
    return [row for chunk in chunks for row in chunk]


def lambda_histogram(cfg: ScenarioConfig) -> dict[str, int]:
    """How often cross-validation selects each weight, over all runs."""
    if "cv" not in cfg.estimators:
        raise ValueError("the histogram needs the cv estimator")
    counts: dict[str, int] = {str(lam): 0 for lam in cfg.lambda_grid}
    for row in run_scenario(cfg):
        if row.estimator == "cv":
            counts[row.selected_lambda] += 1
    return counts
