"""Seeded episode loops, summary statistics and CSV outputs."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from contpomdp.baselines import QmdpPlanner, QTable, RandomPlanner, enumerate_model, value_iterate
from contpomdp.belief import filter_update
from contpomdp.core import ConfigurationError, DiscretizationWrapper, make_rng
from contpomdp.domains import make_domain
from contpomdp.harness.config import DEFAULT_OBS_WIDTH, ExperimentConfig
from contpomdp.solvers import TreePlanner
from contpomdp.tree import dump_tree

log = logging.getLogger(__name__)

# independent random streams inside one episode
ENV_STREAM, PLANNER_STREAM, FILTER_STREAM = 0, 1, 2

EPISODE_COLUMNS = (
    "kind", "episode", "n", "steps", "discounted_return", "sem", "total_reward",
    "terminated", "depleted_updates", "planner_fallbacks", "actions",
)
COMPARISON_COLUMNS = ("domain", "solver", "mean", "sem", "n")
SWEEP_COLUMNS = ("width", "mean", "sem", "n")


@dataclass
class EpisodeRecord:
    """Trace of one episode; ``discounted_return`` is sum of discount**t * rewards[t]."""

    episode: int
    actions: list = field(default_factory=list)
    observations: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    discounted_return: float = 0.0
    terminated: bool = False
    plan_seconds: list = field(default_factory=list)
    depleted_updates: int = 0
    planner_fallbacks: int = 0

    @property
    def steps(self) -> int:
        return len(self.rewards)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    sem: float
    n: int

    @classmethod
    def of(cls, values) -> SummaryStats:
        x = np.asarray(values, dtype=np.float64)
        if x.size == 0:
            raise ValueError("no values to summarize")
        sem = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
        return cls(float(x.mean()), sem, int(x.size))

    def beats(self, other: SummaryStats, k: float = 3.0) -> bool:
        """Mean exceeds ``other``'s by more than ``k`` combined standard errors."""
        return self.mean - other.mean > k * math.hypot(self.sem, other.sem)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    stats: SummaryStats

    def action_frequency(self, action_label: str) -> float:
        """Fraction of all steps whose action is described by ``action_label``."""
        total = sum(r.steps for r in self.records)
        hits = sum(a == action_label for r in self.records for a in r.actions)
        return hits / total if total else 0.0


# ---------------------------------------------------------------------------
# Planner construction


def _qmdp_table(cfg: ExperimentConfig, model, view) -> QTable:
    if cfg.qtable and Path(cfg.qtable).exists():
        table = QTable.load(cfg.qtable)
        if table.Q.shape == (view.n_states, view.n_actions):
            return table
        log.warning("cached Q table %s has the wrong shape; recomputing", cfg.qtable)
    table = value_iterate(view, tol=cfg.vi_tol)
    if cfg.qtable:
        table.save(cfg.qtable)
    return table


def build_planner(cfg: ExperimentConfig, model):
    """Planner for ``cfg.solver`` acting in ``model``."""
    if cfg.solver == "random":
        return RandomPlanner(model)
    if cfg.solver == "qmdp":
        view = enumerate_model(model)
        return QmdpPlanner(model, view, _qmdp_table(cfg, model, view))
    if cfg.solver == "pomcp":
        width = cfg.obs_width if cfg.obs_width is not None else DEFAULT_OBS_WIDTH.get(cfg.domain)
        grid = None if model.has_finite_actions else model.action_grid(cfg.action_headings)
        planning_model = DiscretizationWrapper(model, obs_width=width, action_grid=grid)
        return TreePlanner(planning_model, cfg.solver_config, "pomcp")
    return TreePlanner(model, cfg.solver_config, cfg.solver)


def build_model(cfg: ExperimentConfig):
    return make_domain(cfg.domain, small=cfg.small, **cfg.domain_overrides)


# ---------------------------------------------------------------------------
# Episodes


def run_episode(cfg: ExperimentConfig, episode: int, model=None, planner=None) -> EpisodeRecord:
    """Simulate one episode: the planner sees only the filtered belief."""
    model = model or build_model(cfg)
    planner = planner or build_planner(cfg, model)
    env_rng = make_rng(cfg.seed, episode, ENV_STREAM)
    plan_rng = make_rng(cfg.seed, episode, PLANNER_STREAM)
    filter_rng = make_rng(cfg.seed, episode, FILTER_STREAM)

    s = model.sample_initial(env_rng)
    belief = model.initial_belief(s, cfg.filter_particles, filter_rng)
    rec = EpisodeRecord(episode)
    gamma = model.discount
    for t in range(cfg.step_cap):
        if model.is_terminal(s):
            break
        t0 = time.perf_counter()
        a = planner.plan(belief, plan_rng)
        rec.plan_seconds.append(time.perf_counter() - t0)
        rec.planner_fallbacks += bool(planner.last_info.get("fallback"))
        if cfg.tree_dump and getattr(planner, "last_tree", None) is not None:
            dump_tree(planner.last_tree, Path(cfg.tree_dump) / f"episode{episode:04d}_step{t:03d}.json")
        sp, o, r = model.generative_step(s, a, env_rng)
        rec.actions.append(model.describe_action(a))
        rec.observations.append(np.round(o, 3).tolist())
        rec.rewards.append(float(r))
        rec.discounted_return += gamma**t * float(r)
        if not model.is_terminal(sp):
            belief = filter_update(model, belief, a, o, cfg.filter_particles, filter_rng)
            rec.depleted_updates += belief.depleted
        s = sp
    rec.terminated = model.is_terminal(s)
    return rec


def _episode_chunk(args):
    cfg, episodes = args
    model = build_model(cfg)
    planner = build_planner(cfg, model)
    return [run_episode(cfg, e, model, planner) for e in episodes]


def run_episodes(cfg: ExperimentConfig) -> list:
    """All episodes of ``cfg`` in episode order, optionally on a process pool."""
    episodes = list(range(cfg.episodes))
    if cfg.workers == 1:
        return _episode_chunk((cfg, episodes))
    chunks = [(cfg, episodes[i::cfg.workers]) for i in range(cfg.workers)]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        results = [rec for chunk in pool.map(_episode_chunk, chunks) for rec in chunk]
    return sorted(results, key=lambda r: r.episode)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def episodes_csv(records, stats: SummaryStats) -> str:
    """Per-episode rows followed by one summary row (mean and SEM of discounted returns)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EPISODE_COLUMNS)
    for r in records:
        w.writerow(["episode", r.episode, "", r.steps, _fmt(r.discounted_return), "", _fmt(r.total_reward),
                    int(r.terminated), r.depleted_updates, r.planner_fallbacks, "|".join(r.actions)])
    w.writerow(["summary", "", stats.n, "", _fmt(stats.mean), _fmt(stats.sem), "", "", "", "", ""])
    return buf.getvalue()


def _write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every episode, write the CSV to ``cfg.out`` if set, return the summary."""
    records = run_episodes(cfg)
    stats = SummaryStats.of([r.discounted_return for r in records])
    if cfg.out:
        _write(cfg.out, episodes_csv(records, stats))
    log.info("%s/%s: %.3f +- %.3f over %d episodes", cfg.domain, cfg.solver, stats.mean, stats.sem, stats.n)
    return ExperimentResult(cfg, records, stats)


def supports(domain: str, solver: str) -> bool:
    return not (solver == "qmdp" and domain == "vdptag")


def run_comparison(cfg: ExperimentConfig, domains, solvers, out=None) -> list:
    """Grid of (domain, solver) summaries; unsupported or failed cells stay empty."""
    rows = []
    for domain in domains:
        for solver in solvers:
            cell = cfg.replace(domain=domain, solver=solver, out=None)
            if not supports(domain, cell.solver):
                rows.append((domain, solver, None))
                continue
            try:
                rows.append((domain, solver, run_experiment(cell).stats))
            except (ConfigurationError, RuntimeError, ValueError) as e:
                log.error("%s/%s failed: %s", domain, solver, e)
                rows.append((domain, solver, None))
    if out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for domain, solver, st in rows:
            w.writerow([domain, solver] + (["", "", ""] if st is None else [_fmt(st.mean), _fmt(st.sem), st.n]))
        _write(out, buf.getvalue())
    return rows


def run_discretization_sweep(cfg: ExperimentConfig, widths, out=None) -> list:
    """Discretized POMCP at each observation bin width: ``[(width, SummaryStats)]``."""
    model = build_model(cfg)
    if model.has_finite_actions and model.obs_dim == 0:
        raise ConfigurationError("nothing to discretize")
    rows = []
    for width in widths:
        cell = cfg.replace(solver="pomcp", obs_width=float(width), out=None,
                           solver_config=cfg.solver_config if cfg.solver == "pomcp" else None)
        rows.append((float(width), run_experiment(cell).stats))
    if out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for width, st in rows:
            w.writerow([_fmt(width), _fmt(st.mean), _fmt(st.sem), st.n])
        _write(out, buf.getvalue())
    return rows
