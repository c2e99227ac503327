"""Command-line entry point.

Exit codes: 0 success, 1 task-level failure, 2 usage or input error.
Results go to stdout (or ``--out``), diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from . import benchmarks
from .core import InvalidTreeError
from .gp import BenchSummary, ConfigError, convergence_benchmark, fitness, parse_config, run_evolution, stats_csv
from .lfd import LearningError, demos_to_bt, infer_action_models
from .planner import PlannerConfig, PlanningError, plan_bt, static_facts_of
from .simulator import SimulationError, Simulator
from .text import ParseError, export_dot, parse_bt, serialize_bt
from .world import SemanticError, TraceError, WorldParseError, parse_domain, parse_scenario, parse_trace, serialize_domain

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_INPUT_ERRORS = (
    OSError,
    WorldParseError,
    SemanticError,
    TraceError,
    ParseError,
    InvalidTreeError,
    ConfigError,
    SimulationError,
    PlanningError,
)


class _Usage(Exception):
    """Raised for input problems; becomes exit code 2."""


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise _Usage(f"{path}: {e.strerror or e}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dump(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _load_world(args):
    try:
        domain = parse_domain(_read(args.domain))
    except (WorldParseError, SemanticError) as e:
        raise _Usage(f"{args.domain}:{e}") from None
    try:
        scenario = parse_scenario(_read(args.scenario), domain)
    except (WorldParseError, SemanticError) as e:
        raise _Usage(f"{args.scenario}:{e}") from None
    return domain, scenario


def _load_tree(path: str):
    try:
        return parse_bt(Path(path).read_bytes())
    except OSError as e:
        raise _Usage(f"{path}: {e.strerror or e}") from None
    except (ParseError, InvalidTreeError) as e:
        raise _Usage(f"{path}:{e}") from None


def cmd_plan(args) -> int:
    domain, scenario = _load_world(args)
    cfg = PlannerConfig(max_expansion_depth=args.max_depth)
    tree = plan_bt(domain, scenario.goal, cfg, static_facts_of(domain, scenario.init))
    _emit(serialize_bt(tree), args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    domain, scenario = _load_world(args)
    tree = _load_tree(args.tree)
    sim = Simulator(domain)
    sim.check_tree(tree)
    results = [sim.run(tree, scenario, args.seed + i, checked=True) for i in range(args.episodes)]
    rate = Fraction(sum(r.success for r in results), len(results))
    if args.format == "machine":
        doc = {
            "episodes": [dict(r.to_dict(), seed=args.seed + i) for i, r in enumerate(results)],
            "success_rate": str(rate),
        }
        _emit(_dump(doc), args.out)
    else:
        lines = []
        for i, r in enumerate(results):
            verdict = "success" if r.success else "failure"
            lines.append(
                f"episode {i} seed {args.seed + i}: {verdict} "
                f"ticks={r.ticks_used} goal_fraction={r.goal_fraction_end}"
            )
        lines.append(f"success rate: {rate} ({float(rate):.3f})")
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if rate == 1 else EXIT_FAIL


def cmd_learn(args) -> int:
    domain, scenario = _load_world(args)
    try:
        cfg = parse_config(_read(args.config))
    except ConfigError as e:
        raise _Usage(f"{args.config}: {e}") from None
    seeds = tuple(_load_tree(p) for p in args.seed_tree)
    cfg = replace(cfg, seed_trees=seeds)
    result = run_evolution(domain, scenario, cfg, jobs=args.jobs)
    best = result.best
    if args.stats:
        Path(args.stats).write_text(stats_csv(result.stats), encoding="utf-8")
    tree_text = serialize_bt(best.tree)
    if args.out:
        Path(args.out).write_text(tree_text, encoding="utf-8")
    r = best.report
    if args.format == "machine":
        doc = {
            "generations": len(result.stats),
            "goal_term": r.goal_term,
            "size_term": r.size_term,
            "time_term": r.time_term,
            "total": r.total,
        }
        if not args.out:
            doc["tree"] = tree_text
        sys.stdout.write(_dump(doc))
    else:
        if not args.out:
            sys.stdout.write(tree_text)
        sys.stdout.write(f"generations: {len(result.stats)}\n{r.describe()}\n")
    if cfg.target_fitness is not None and r.total < cfg.target_fitness:
        return EXIT_FAIL
    return EXIT_OK


def cmd_demo2bt(args) -> int:
    traces = []
    for path in args.traces:
        try:
            traces.append(parse_trace(_read(path)))
        except (WorldParseError, SemanticError, TraceError) as e:
            raise _Usage(f"{path}: {e}") from None
    try:
        for path, t in zip(args.traces, traces):
            t.check_chain()
    except TraceError as e:
        raise _Usage(f"{path}: {e}") from None
    try:
        tree = demos_to_bt(traces, PlannerConfig(max_expansion_depth=args.max_depth))
    except LearningError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    if args.domain_out:
        Path(args.domain_out).write_text(serialize_domain(infer_action_models(traces)), encoding="utf-8")
    _emit(serialize_bt(tree), args.out)
    return EXIT_OK


def cmd_render(args) -> int:
    _emit(export_dot(_load_tree(args.tree)), args.out)
    return EXIT_OK


def _bench_text(suite: str, summary: BenchSummary) -> str:
    def g(v):
        return "-" if v is None else str(v)

    lines = [f"suite {suite}: convergence generation (- = not solved in {summary.generations_max})"]
    lines.append(f"{'seed':>4}  {'unseeded':>8}  {'seeded':>6}")
    for r in summary.rows:
        lines.append(f"{r.seed:>4}  {g(r.unseeded):>8}  {g(r.seeded):>6}")
    lines.append(f"median unseeded: {summary.median_unseeded:g}")
    lines.append(f"median seeded: {summary.median_seeded:g}")
    return "\n".join(lines) + "\n"


def cmd_bench(args) -> int:
    if args.suite not in benchmarks.SUITES:
        raise _Usage(f"unknown suite {args.suite!r}; choose from {', '.join(benchmarks.SUITES)}")
    if args.seeds < 1:
        raise _Usage("--seeds must be >= 1")
    domain, scenario = benchmarks.load_suite(args.suite)
    summary = convergence_benchmark(domain, scenario, args.seeds, jobs=args.jobs)
    if args.format == "machine":
        doc = {
            "median_seeded": summary.median_seeded,
            "median_unseeded": summary.median_unseeded,
            "rows": [[r.seed, r.unseeded, r.seeded] for r in summary.rows],
            "seed_tree_size": summary.seed_tree_size,
            "suite": args.suite,
        }
        sys.stdout.write(_dump(doc))
    else:
        sys.stdout.write(_bench_text(args.suite, summary))
    return EXIT_OK


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="btsynth", description="Behavior tree synthesis toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def world(sp):
        sp.add_argument("--domain", required=True)
        sp.add_argument("--scenario", required=True)

    def fmt(sp):
        sp.add_argument("--format", choices=("text", "machine"), default="text")

    sp = sub.add_parser("plan", help="backward-chain a tree for the scenario goal")
    world(sp)
    sp.add_argument("--out")
    sp.add_argument("--max-depth", type=_positive, default=PlannerConfig().max_expansion_depth)
    sp.set_defaults(fn=cmd_plan)

    sp = sub.add_parser("run", help="simulate a tree for N seeded episodes")
    world(sp)
    sp.add_argument("--tree", required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--episodes", type=_positive, default=1)
    sp.add_argument("--out")
    fmt(sp)
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("learn", help="evolve a tree with genetic programming")
    world(sp)
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed-tree", action="append", default=[])
    sp.add_argument("--out")
    sp.add_argument("--stats")
    sp.add_argument("--jobs", type=_positive, default=1)
    fmt(sp)
    sp.set_defaults(fn=cmd_learn)

    sp = sub.add_parser("demo2bt", help="learn a domain and goal from traces, then plan")
    sp.add_argument("--traces", nargs="+", required=True)
    sp.add_argument("--domain-out")
    sp.add_argument("--out")
    sp.add_argument("--max-depth", type=_positive, default=PlannerConfig().max_expansion_depth)
    sp.set_defaults(fn=cmd_demo2bt)

    sp = sub.add_parser("render", help="export a tree as Graphviz dot")
    sp.add_argument("--tree", required=True)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_render)

    sp = sub.add_parser("bench", help="paired seeded/unseeded GP convergence")
    sp.add_argument("--suite", required=True)
    sp.add_argument("--seeds", type=int, default=20)
    sp.add_argument("--jobs", type=_positive, default=1)
    fmt(sp)
    sp.set_defaults(fn=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except _Usage as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except _INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
