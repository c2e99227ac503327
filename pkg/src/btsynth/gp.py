"""Genetic programming over behavior trees.

Individuals are immutable :class:`~btsynth.core.BtNode` values. The loop is
generational with elitism and tournament selection; mutation adds, deletes
or changes one node and crossover swaps random subtrees between parents.
Every random choice comes from a splitmix64 stream derived from the config
seed, and evaluation seeds depend only on (seed, generation, index), so the
result does not depend on how many worker processes evaluate fitness.
"""

from __future__ import annotations

import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from typing import Sequence

from .core import (
    BtNode,
    NodeKind,
    TreeEditError,
    action,
    condition,
    delete_node,
    depth,
    get_subtree,
    insert_child,
    iter_paths,
    node_count,
    replace_subtree,
)
from .rng import RngStream, derive_seed
from .planner import static_facts_of, static_predicates
from .simulator import Simulator
from .world import Domain, Scenario, ground_actions, ground_atoms

MUTATION_ATTEMPTS = 20
_P_CONTROL = 0.25  # chance that a non-root node above the depth limit is a control node


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GpConfig:
    population_size: int = 64
    generations_max: int = 100
    tournament_size: int = 3
    elitism_count: int = 2
    p_crossover: float = 0.6
    p_mutation: float = 0.3
    w_add: float = 1.0
    w_delete: float = 1.0
    w_change: float = 1.0
    max_depth: int = 6
    max_nodes: int = 60
    w_goal: float = 100.0
    w_time: float = 10.0
    w_size: float = 0.5
    episodes_per_eval: int = 5
    seed: int = 0
    target_fitness: float | None = None
    allow_parallel: bool = False
    seed_trees: tuple[BtNode, ...] = field(default=(), compare=False)

    @property
    def mutation_kind_weights(self) -> tuple[float, float, float]:
        return (self.w_add, self.w_delete, self.w_change)

    def problems(self) -> list[str]:
        out = []
        for name in ("p_crossover", "p_mutation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                out.append(f"{name} = {v} outside [0, 1]")
        if self.p_crossover + self.p_mutation > 1.0 + 1e-12:
            out.append("p_crossover + p_mutation exceeds 1")
        if not self.population_size > self.elitism_count >= 0:
            out.append("need population_size > elitism_count >= 0")
        for name in ("w_add", "w_delete", "w_change", "w_goal", "w_time", "w_size"):
            if getattr(self, name) < 0:
                out.append(f"{name} must be >= 0")
        if sum(self.mutation_kind_weights) <= 0:
            out.append("mutation kind weights must not all be zero")
        if self.generations_max < 1:
            out.append("generations_max must be >= 1")
        if self.tournament_size < 1:
            out.append("tournament_size must be >= 1")
        if self.max_depth < 2:
            out.append("max_depth must be >= 2")
        if self.max_nodes < 3:
            out.append("max_nodes must be >= 3")
        if self.episodes_per_eval < 1:
            out.append("episodes_per_eval must be >= 1")
        return out

    def validate(self) -> "GpConfig":
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))
        return self


_CONFIG_KEYS = {f.name: f for f in fields(GpConfig) if f.name != "seed_trees"}


def _coerce(key: str, raw: str):
    f = _CONFIG_KEYS[key]
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if kind == "float | None":
            return None if raw.lower() in ("none", "") else float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    raise ConfigError(f"unsupported key {key}")


def parse_config(text: str, base: GpConfig = GpConfig()) -> GpConfig:
    """Read ``key = value`` lines (``#`` comments). Unknown keys are errors.

    ``mutation_kind_weights = a, d, c`` sets the three mutation weights.
    """
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key == "mutation_kind_weights":
            parts = [p.strip() for p in raw.split(",")]
            if len(parts) != 3:
                raise ConfigError(f"line {lineno}: mutation_kind_weights needs three values")
            try:
                values["w_add"], values["w_delete"], values["w_change"] = map(float, parts)
            except ValueError:
                raise ConfigError(f"line {lineno}: bad value for mutation_kind_weights") from None
            continue
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return replace(base, **values).validate()


def format_config(cfg: GpConfig) -> str:
    lines = []
    for name in _CONFIG_KEYS:
        v = getattr(cfg, name)
        lines.append(f"{name} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FitnessReport:
    goal_term: float
    time_term: float
    size_term: int
    total: float

    def describe(self) -> str:
        return (
            f"total={self.total:.6g} goal_term={self.goal_term:.6g} "
            f"time_term={self.time_term:.6g} size_term={self.size_term}"
        )


def combine(cfg: GpConfig, goal_term: float, time_term: float, size_term: int) -> float:
    return cfg.w_goal * goal_term - cfg.w_time * time_term - cfg.w_size * size_term


@dataclass(frozen=True)
class Individual:
    tree: BtNode
    report: FitnessReport

    @property
    def total(self) -> float:
        return self.report.total


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best: float
    mean: float
    best_size: int
    evaluations: int
    best_goal_term: float = 0.0

    def csv_row(self) -> str:
        return f"{self.generation},{self.best!r},{self.mean!r},{self.best_size},{self.evaluations}"


STATS_HEADER = "generation,best,mean,best_size,evaluations"


def stats_csv(stats: Sequence[GenerationStats]) -> str:
    return "\n".join([STATS_HEADER] + [s.csv_row() for s in stats]) + "\n"


# --------------------------------------------------------------------------
# Leaves and random trees


@dataclass(frozen=True)
class LeafPool:
    conditions: tuple
    actions: tuple

    def sample(self, rng: RngStream) -> BtNode:
        if not self.actions or (self.conditions and rng.uniform() < 0.5):
            return condition(rng.choice(self.conditions))
        return action(rng.choice(self.actions))


@lru_cache(maxsize=32)
def leaf_pool(domain: Domain, static_facts: frozenset | None = None) -> LeafPool:
    """Ground leaves for a domain, optionally pruned for one scenario.

    With ``static_facts`` (the scenario's facts over predicates no action
    changes), actions guarded by a false static fact and conditions over
    static predicates are dropped. Neither can change what a tree does: the
    former always fail and the latter are constants.
    """
    conds = tuple(ground_atoms(domain))
    acts = ground_actions(domain)
    if static_facts is not None:
        statics = static_predicates(domain)
        acts = [g for g in acts if all(p.name not in statics or p in static_facts for p in g.pre)] or acts
        conds = tuple(a for a in conds if a.name not in statics) or conds
    return LeafPool(conds, tuple(g.atom for g in acts))


def scenario_leaf_pool(domain: Domain, scenario: Scenario) -> LeafPool:
    return leaf_pool(domain, static_facts_of(domain, scenario.init))


def _control_kinds(allow_parallel: bool) -> list[NodeKind]:
    kinds = [NodeKind.SEQUENCE, NodeKind.FALLBACK]
    if allow_parallel:
        kinds.append(NodeKind.PARALLEL)
    return kinds


def _control(kind: NodeKind, children: tuple, rng: RngStream) -> BtNode:
    threshold = rng.randint(1, len(children)) if kind is NodeKind.PARALLEL else None
    return BtNode(kind, children, threshold=threshold)


def random_tree(
    domain: Domain,
    rng: RngStream,
    max_depth: int,
    allow_parallel: bool = False,
    pool: LeafPool | None = None,
) -> BtNode:
    """Grow a random tree whose root is a control node.

    Nodes at depth ``max_depth`` are leaves; above that a non-root node is a
    control node with probability 1/4. Control nodes get 2 to 4 children.
    """
    pool = pool or leaf_pool(domain)
    if not pool.actions or not pool.conditions:
        raise ConfigError("random trees need at least one ground action and one ground atom")
    if max_depth < 2:
        raise ConfigError("max_depth must be >= 2")
    kinds = _control_kinds(allow_parallel)

    def grow(level: int, force_control: bool) -> BtNode:
        if level < max_depth and (force_control or rng.uniform() < _P_CONTROL):
            kind = rng.choice(kinds)
            n = rng.randint(2, 4)
            kids = tuple(grow(level + 1, False) for _ in range(n))
            return _control(kind, kids, rng)
        return pool.sample(rng)

    return grow(1, True)


def _within(tree: BtNode, cfg: GpConfig) -> bool:
    return node_count(tree) <= cfg.max_nodes and depth(tree) <= cfg.max_depth


# --------------------------------------------------------------------------
# Operators


def _mutate_add(tree, pool, rng, cfg):
    slots = []
    for path, node in iter_paths(tree):
        if not node.is_leaf and len(path) + 2 <= cfg.max_depth:
            slots.extend((path, i) for i in range(len(node.children) + 1))
    if not slots:
        return None
    path, index = rng.choice(slots)
    return insert_child(tree, path, index, pool.sample(rng))


def _mutate_delete(tree, pool, rng, cfg):
    paths = [p for p, _ in iter_paths(tree) if p]
    if not paths:
        return None
    return delete_node(tree, rng.choice(paths))


def _mutate_change(tree, pool, rng, cfg):
    nodes = list(iter_paths(tree))
    path, node = rng.choice(nodes)
    if node.is_leaf:
        for _ in range(MUTATION_ATTEMPTS):
            new = pool.sample(rng)
            if new != node:
                break
        else:
            return None
    else:
        kinds = [k for k in _control_kinds(cfg.allow_parallel) if k is not node.kind]
        if not kinds:
            return None
        new = _control(rng.choice(kinds), node.children, rng)
    return replace_subtree(tree, path, new)


_MUTATIONS = (_mutate_add, _mutate_delete, _mutate_change)


def mutate(
    tree: BtNode, domain: Domain, rng: RngStream, cfg: GpConfig, pool: LeafPool | None = None
) -> BtNode:
    """Add, delete or change one node; the input comes back if nothing fits."""
    pool = pool or leaf_pool(domain)
    for _ in range(MUTATION_ATTEMPTS):
        op = _MUTATIONS[rng.weighted_index(cfg.mutation_kind_weights)]
        try:
            new = op(tree, pool, rng, cfg)
        except TreeEditError:
            continue
        if new is not None and _within(new, cfg):
            return new
    return tree


def crossover(a: BtNode, b: BtNode, rng: RngStream, cfg: GpConfig) -> tuple[BtNode, BtNode]:
    """Swap one uniformly chosen subtree of ``a`` with one of ``b``."""
    pa = rng.choice([p for p, _ in iter_paths(a)])
    pb = rng.choice([p for p, _ in iter_paths(b)])
    sa, sb = get_subtree(a, pa), get_subtree(b, pb)
    child_a = replace_subtree(a, pa, sb)
    child_b = replace_subtree(b, pb, sa)
    if not _within(child_a, cfg):
        child_a = a
    if not _within(child_b, cfg):
        child_b = b
    return child_a, child_b


# --------------------------------------------------------------------------
# Fitness


def _deterministic(domain: Domain) -> bool:
    """True when no action outcome depends on the random stream."""
    return all(t.p_fail in (0.0, 1.0) for t in domain.actions)


def fitness(
    tree: BtNode,
    domain: Domain,
    scenario: Scenario,
    cfg: GpConfig,
    eval_seed: int,
    simulator: Simulator | None = None,
) -> FitnessReport:
    sim = simulator or Simulator(domain)
    sim.check_tree(tree)
    n = cfg.episodes_per_eval
    if _deterministic(domain):
        results = [sim.run(tree, scenario, eval_seed, checked=True)] * n
    else:
        results = [sim.run(tree, scenario, eval_seed + i, checked=True) for i in range(n)]
    goal_term = float(sum(r.goal_fraction_end for r in results) / n)
    time_term = sum(r.ticks_used for r in results) / (n * scenario.max_ticks)
    size_term = node_count(tree)
    return FitnessReport(goal_term, time_term, size_term, combine(cfg, goal_term, time_term, size_term))


def _sort_key(indexed: tuple[int, Individual]):
    i, ind = indexed
    return (-ind.total, node_count(ind.tree), i)


def select_tournament(population: Sequence[Individual], rng: RngStream, k: int) -> Individual:
    """Best of ``k`` uniform draws with replacement.

    Ties go to the smaller tree, then to the earlier population index.
    """
    if not population:
        raise ValueError("empty population")
    if k < 1:
        raise ValueError("tournament size must be >= 1")
    picks = [rng.randbelow(len(population)) for _ in range(k)]
    best = min(picks, key=lambda i: _sort_key((i, population[i])))
    return population[best]


# --------------------------------------------------------------------------
# Evolution


_WORKER: dict = {}


def _init_worker(domain, scenario, cfg):
    _WORKER["args"] = (domain, scenario, cfg, Simulator(domain))


def _eval_task(task):
    tree, seed = task
    domain, scenario, cfg, sim = _WORKER["args"]
    return fitness(tree, domain, scenario, cfg, seed, sim)


class _Evaluator:
    def __init__(self, domain, scenario, cfg, jobs):
        self.domain, self.scenario, self.cfg = domain, scenario, cfg
        self.sim = Simulator(domain)
        self.cache: dict[BtNode, FitnessReport] | None = {} if _deterministic(domain) else None
        self.jobs = jobs
        self.pool = None
        self.evaluations = 0
        if jobs > 1:
            self.pool = ProcessPoolExecutor(
                max_workers=jobs, initializer=_init_worker, initargs=(domain, scenario, cfg)
            )

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def __call__(self, trees: Sequence[BtNode], seeds: Sequence[int]) -> list[FitnessReport]:
        self.evaluations += len(trees)
        out: list[FitnessReport | None] = [None] * len(trees)
        todo = []
        for i, t in enumerate(trees):
            if self.cache is not None and t in self.cache:
                out[i] = self.cache[t]
            else:
                todo.append(i)
        if self.cache is not None:
            # evaluate each distinct tree once
            unique: dict[BtNode, int] = {}
            for i in todo:
                unique.setdefault(trees[i], i)
            todo_unique = list(unique.values())
        else:
            todo_unique = todo
        tasks = [(trees[i], seeds[i]) for i in todo_unique]
        if self.pool is not None and len(tasks) > 1:
            reports = list(self.pool.map(_eval_task, tasks, chunksize=max(1, len(tasks) // (4 * self.jobs))))
        else:
            reports = [fitness(t, self.domain, self.scenario, self.cfg, s, self.sim) for t, s in tasks]
        for i, r in zip(todo_unique, reports):
            out[i] = r
            if self.cache is not None:
                self.cache[trees[i]] = r
        for i in todo:
            if out[i] is None:
                out[i] = self.cache[trees[i]]
        return out  # type: ignore[return-value]


@dataclass
class EvolutionResult:
    best: Individual
    stats: list[GenerationStats]

    @property
    def solved_generation(self) -> int | None:
        """First generation holding an individual that fully reaches the goal."""
        for s in self.stats:
            if s.best_goal_term >= 1.0:
                return s.generation
        return None


def _initial_population(domain, cfg, rng, pool) -> list[BtNode]:
    trees: list[BtNode] = []
    for t in cfg.seed_trees:
        if t not in trees:
            trees.append(t)
    trees = trees[: cfg.population_size]
    while len(trees) < cfg.population_size:
        for _ in range(100):
            t = random_tree(domain, rng, cfg.max_depth, cfg.allow_parallel, pool)
            if _within(t, cfg):
                break
        else:
            t = random_tree(domain, rng, 2, cfg.allow_parallel, pool)
        trees.append(t)
    return trees


def run_evolution(
    domain: Domain,
    scenario: Scenario,
    cfg: GpConfig,
    *,
    jobs: int = 1,
    stop_when_solved: bool = False,
) -> EvolutionResult:
    """Full evolution loop; :func:`evolve` is the thin spec-shaped wrapper.

    ``stop_when_solved`` ends the run at the first generation holding an
    individual with goal term 1, which is what convergence benchmarks need.
    """
    cfg.validate()
    rng = RngStream(derive_seed(cfg.seed, 0x6770))
    evaluate = _Evaluator(domain, scenario, cfg, jobs)
    try:
        pool = scenario_leaf_pool(domain, scenario)
        trees = _initial_population(domain, cfg, rng, pool)
        reports = evaluate(trees, [derive_seed(cfg.seed, 0, i) for i in range(len(trees))])
        pop = [Individual(t, r) for t, r in zip(trees, reports)]
        stats: list[GenerationStats] = []
        best_ever: Individual | None = None

        for gen in range(cfg.generations_max):
            if gen > 0:
                ranked = sorted(enumerate(pop), key=_sort_key)
                elites = [ind for _, ind in ranked[: cfg.elitism_count]]
                children: list[BtNode] = []
                while len(elites) + len(children) < cfg.population_size:
                    r = rng.uniform()
                    if r < cfg.p_crossover:
                        a = select_tournament(pop, rng, cfg.tournament_size).tree
                        b = select_tournament(pop, rng, cfg.tournament_size).tree
                        children.extend(crossover(a, b, rng, cfg))
                    elif r < cfg.p_crossover + cfg.p_mutation:
                        parent = select_tournament(pop, rng, cfg.tournament_size).tree
                        children.append(mutate(parent, domain, rng, cfg, pool))
                    else:
                        children.append(select_tournament(pop, rng, cfg.tournament_size).tree)
                children = children[: cfg.population_size - len(elites)]
                offset = len(elites)
                seeds = [derive_seed(cfg.seed, gen, offset + i) for i in range(len(children))]
                reports = evaluate(children, seeds)
                pop = elites + [Individual(t, r) for t, r in zip(children, reports)]

            ranked = sorted(enumerate(pop), key=_sort_key)
            top = ranked[0][1]
            if best_ever is None or _sort_key((0, top)) < _sort_key((0, best_ever)):
                best_ever = top
            totals = [ind.total for ind in pop]
            stats.append(
                GenerationStats(
                    generation=gen,
                    best=top.total,
                    mean=math.fsum(totals) / len(totals),
                    best_size=node_count(top.tree),
                    evaluations=evaluate.evaluations,
                    best_goal_term=max(ind.report.goal_term for ind in pop),
                )
            )
            if cfg.target_fitness is not None and best_ever.total >= cfg.target_fitness:
                break
            if stop_when_solved and stats[-1].best_goal_term >= 1.0:
                break
        return EvolutionResult(best_ever, stats)
    finally:
        evaluate.close()


def evolve(
    domain: Domain, scenario: Scenario, cfg: GpConfig, jobs: int = 1
) -> tuple[BtNode, list[GenerationStats]]:
    result = run_evolution(domain, scenario, cfg, jobs=jobs)
    return result.best.tree, result.stats


def median_or_none(values: Sequence[int | None], cap: int) -> float:
    """Median with unsolved runs counted as ``cap``."""
    return statistics.median(cap if v is None else v for v in values)


# --------------------------------------------------------------------------
# Bootstrapping benchmark


def bootstrap_tree(domain: Domain, scenario: Scenario, cfg: GpConfig) -> BtNode | None:
    """Deepest planner tree that still fits the GP size and depth bounds."""
    from .planner import PlannerConfig, plan_bt

    statics = static_facts_of(domain, scenario.init)
    best = None
    for d in range(1, 9):
        tree = plan_bt(domain, scenario.goal, PlannerConfig(max_expansion_depth=d), statics)
        if not _within(tree, cfg):
            break
        best = tree
    return best


@dataclass(frozen=True)
class BenchRow:
    seed: int
    unseeded: int | None
    seeded: int | None


@dataclass(frozen=True)
class BenchSummary:
    rows: tuple[BenchRow, ...]
    generations_max: int
    seed_tree_size: int | None

    @property
    def median_unseeded(self) -> float:
        return median_or_none([r.unseeded for r in self.rows], self.generations_max)

    @property
    def median_seeded(self) -> float:
        return median_or_none([r.seeded for r in self.rows], self.generations_max)

    def solved_fraction(self, which: str) -> float:
        return sum(getattr(r, which) is not None for r in self.rows) / len(self.rows)


def convergence_benchmark(
    domain: Domain, scenario: Scenario, seeds: int, base: GpConfig = GpConfig(), jobs: int = 1
) -> BenchSummary:
    """Paired runs per seed, without and with a planner tree in generation 0.

    Unsolved runs count as ``generations_max`` in the medians.
    """
    if seeds < 1:
        raise ValueError("need at least one seed")
    tree = bootstrap_tree(domain, scenario, base)
    rows = []
    for s in range(seeds):
        cfg = replace(base, seed=s, seed_trees=())
        plain = run_evolution(domain, scenario, cfg, jobs=jobs, stop_when_solved=True)
        seeded_cfg = replace(cfg, seed_trees=(tree,) if tree is not None else ())
        boot = run_evolution(domain, scenario, seeded_cfg, jobs=jobs, stop_when_solved=True)
        rows.append(BenchRow(s, plain.solved_generation, boot.solved_generation))
    return BenchSummary(tuple(rows), base.generations_max, None if tree is None else node_count(tree))
