"""Command-line interface: ``fit``, ``cv`` and ``simulate`` subcommands."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .crossval import fit_cv, select_lambda
from .data import load_ratings
from .estimator import Lambda, Solution, fit
from .harness import ScenarioConfig, rows_to_csv, run_scenario
from .poset import load_poset


def _read(path: str) -> str:
    return Path(path).read_text()


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def solution_csv(sol: Solution) -> str:
    """Solution rows: ``x,<course>,,<value>`` then ``b,<course>,<slot>,<value>``."""
    lines = ["kind,course,slot,value"]
    for i, v in enumerate(sol.x_hat):
        lines.append(f"x,{i},,{float(v)!r}")
    for e, v in zip(sol.b_hat.obs.elements, sol.b_hat.flat):
        lines.append(f"b,{e.course},{e.slot},{float(v)!r}")
    return "\n".join(lines) + "\n"


def _diagnostics_json(sol: Solution) -> str:
    d = sol.diagnostics
    return json.dumps({
        "lambda": str(sol.lam),
        "sweeps": d.sweeps,
        "objective": d.objective,
        "feasibility_residual": d.feasibility_residual,
        "converged": d.converged,
    }, indent=2)


def _parse_grid(text: str) -> tuple[Lambda, ...]:
    return tuple(Lambda.parse(tok) for tok in text.split(",") if tok.strip())


def _cmd_fit(args: argparse.Namespace) -> int:
    y = load_ratings(_read(args.y))
    order = load_poset(_read(args.poset))
    sol = fit(y, order, Lambda.parse(args.lam))
    _write(args.out, solution_csv(sol))
    print(_diagnostics_json(sol))
    return 0


def _cmd_cv(args: argparse.Namespace) -> int:
    y = load_ratings(_read(args.y))
    order = load_poset(_read(args.poset))
    grid = _parse_grid(args.lambda_grid)
    rng = np.random.Generator(np.random.Philox(key=args.seed))
    report = select_lambda(y, order, None, grid, args.extensions, rng, seed=args.seed)
    lines = ["lambda,cv_error"]
    lines += [f"{lam},{err!r}" for lam, err in report.errors.items()]
    _write(args.report_out, "\n".join(lines) + "\n")
    rng = np.random.Generator(np.random.Philox(key=args.seed))
    sol = fit_cv(y, order, None, grid, args.extensions, rng, refit=args.refit)
    _write(args.solution_out, solution_csv(sol))
    print(_diagnostics_json(sol))
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    raw: dict[str, str] = {}
    if args.config:
        for ln in _read(args.config).splitlines():
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            key, _, value = ln.partition("=")
            raw[key.strip()] = value.strip()
    for key in ("scenario", "n", "d", "sigma", "eta", "runs", "seed",
                "extensions", "frac", "uniform_frac", "r", "workers",
                "lambda_grid", "estimators"):
        flag = getattr(args, key, None)
        if flag is not None:
            raw[key] = str(flag)
    cfg = ScenarioConfig.from_mapping(raw)
    rows = run_scenario(cfg)
    _write(args.out, rows_to_csv(rows))
    if args.histogram:
        counts: dict[str, int] = {str(lam): 0 for lam in cfg.lambda_grid}
        for row in rows:
            if row.estimator == "cv":
                counts[row.selected_lambda] += 1
        print(json.dumps(counts, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orderbias",
        description="Bias-corrected quality estimation under outcome orderings.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="solve the estimator at one weight")
    p_fit.add_argument("--y", required=True, help="ratings CSV (course,slot,value)")
    p_fit.add_argument("--poset", required=True, help="ordering file")
    p_fit.add_argument("--lambda", dest="lam", required=True,
                       help="regularisation weight (float or 'inf')")
    p_fit.add_argument("--out", default="-", help="solution CSV path (default stdout)")
    p_fit.set_defaults(func=_cmd_fit)

    p_cv = sub.add_parser("cv", help="select the weight by cross-validation")
    p_cv.add_argument("--y", required=True)
    p_cv.add_argument("--poset", required=True)
    p_cv.add_argument("--lambda-grid", default="0,0.001953125,0.00390625,0.0078125,"
                      "0.015625,0.03125,0.0625,0.125,0.25,0.5,1,2,4,8,16,32,inf",
                      help="comma list of weights, 'inf' allowed")
    p_cv.add_argument("--extensions", type=int, default=100,
                      help="sampled linear extensions for interpolation")
    p_cv.add_argument("--seed", type=int, default=0)
    p_cv.add_argument("--refit", choices=("full", "train"), default="full")
    p_cv.add_argument("--report-out", default="-")
    p_cv.add_argument("--solution-out", default="-")
    p_cv.set_defaults(func=_cmd_cv)

    p_sim = sub.add_parser("simulate", help="run a seeded Monte-Carlo scenario")
    p_sim.add_argument("--config", help="flat key=value config file; flags override")
    p_sim.add_argument("--scenario")
    p_sim.add_argument("--n", type=int)
    p_sim.add_argument("--d", type=int)
    p_sim.add_argument("--sigma", type=float)
    p_sim.add_argument("--eta", type=float)
    p_sim.add_argument("--runs", type=int)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--extensions", type=int)
    p_sim.add_argument("--frac", type=float)
    p_sim.add_argument("--uniform-frac", dest="uniform_frac", type=float)
    p_sim.add_argument("--r", type=int, help="groups for the unequal_groups scenario")
    p_sim.add_argument("--workers", type=int)
    p_sim.add_argument("--lambda-grid", dest="lambda_grid")
    p_sim.add_argument("--estimators")
    p_sim.add_argument("--histogram", action="store_true",
                       help="also print the selected-weight tally as JSON")
    p_sim.add_argument("--out", default="-", help="result CSV path")
    p_sim.set_defaults(func=_cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface a clean error and a nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
