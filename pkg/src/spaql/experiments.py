"""Multi-agent training runs, the xi sweep and CSV persistence."""
from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

from .agents import AqlAgent, RandomAgent, SpaqlAgent, TerminalStateConfig, TERMINAL_VALUES
from .environments import ENV_NAMES, Environment
from .stats import ci95

ALGOS = ("random", "aql", "spaql", "spaql-ts")
XI_SWEEP = (0.0, 0.4, 4.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 120.0, 160.0)

CURVES_HEADER = ["algo", "env", "xi", "seed", "iteration", "samples", "eval_mean", "n_arms"]
SWEEP_HEADER = ["algo", "env", "xi", "final_mean", "ci95_low", "ci95_high", "n_agents"]


@dataclass
class RunConfig:
    env: str = "cartpole"
    algo: str = "spaql"
    xi: float = 0.4
    iterations: int = 100
    eval_rollouts: int = 20
    agents: int = 20
    seed: int = 0
    tau_min: float = 0.01
    u: float = 2.0
    d: float = 0.8
    lam: float = 1.2
    boltzmann_norm: str = "shift"
    split_reset_at: int = 2
    ts_weight: str = "next"
    terminal_value: str = "bootstrap"

    def validate(self):
        if self.env not in ENV_NAMES:
            raise ValueError(f"unknown env {self.env!r}")
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algo {self.algo!r}")
        if self.iterations < 1 or self.eval_rollouts < 1 or self.agents < 1:
            raise ValueError("iterations, eval_rollouts and agents must be positive")
        if self.xi < 0:
            raise ValueError("xi must be non-negative")
        if self.boltzmann_norm not in ("shift", "scale"):
            raise ValueError("boltzmann_norm must be shift or scale")
        if self.split_reset_at not in (2, 3):
            raise ValueError("split_reset_at must be 2 or 3")
        if self.ts_weight not in ("next", "current"):
            raise ValueError("ts_weight must be next or current")
        if self.terminal_value not in TERMINAL_VALUES:
            raise ValueError(f"terminal_value must be one of {TERMINAL_VALUES}")
        return self


@dataclass
class IterationRecord:
    iteration: int
    samples: int
    eval_mean: float
    arm_count: int


@dataclass
class AgentResult:
    seed: int
    records: list[IterationRecord]
    final_returns: np.ndarray = field(repr=False)

    @property
    def final_mean(self) -> float:
        return self.records[-1].eval_mean

    @property
    def final_arms(self) -> int:
        return self.records[-1].arm_count


@dataclass
class RunResult:
    config: RunConfig
    agents: list[AgentResult]

    @property
    def final_means(self) -> np.ndarray:
        return np.array([a.final_mean for a in self.agents])

    @property
    def final_arms(self) -> np.ndarray:
        return np.array([a.final_arms for a in self.agents], dtype=float)

    @property
    def mean(self) -> float:
        return float(self.final_means.mean())

    @property
    def ci95(self) -> tuple[float, float]:
        m = self.final_means
        if len(m) < 2:
            return (float(m[0]), float(m[0]))
        return ci95(m)


def make_agent(config: RunConfig, env: Environment):
    if config.algo == "random":
        return RandomAgent(env)
    if config.algo == "aql":
        return AqlAgent(env, config.xi, terminal_value=config.terminal_value)
    ts = TerminalStateConfig(env.x_ref, config.lam) if config.algo == "spaql-ts" else None
    return SpaqlAgent(
        env,
        config.xi,
        tau_min=config.tau_min,
        u=config.u,
        d=config.d,
        ts=ts,
        boltzmann_norm=config.boltzmann_norm,
        split_reset_at=config.split_reset_at,
        ts_weight_current=config.ts_weight == "current",
        terminal_value=config.terminal_value,
    )


def run_agent(config: RunConfig, index: int, keep_agent: bool = False):
    """Train agent ``index`` of a run; returns ``(AgentResult, agent or None)``.

    The agent's whole random stream derives from ``config.seed + index``.
    Evaluation rollouts do not count as training samples.
    """
    seed = config.seed + index
    rng = np.random.default_rng(seed)
    env = Environment(config.env)
    agent = make_agent(config, env)
    H = env.horizon
    N = config.eval_rollouts
    records = []
    returns = None
    for k in range(1, config.iterations + 1):
        if isinstance(agent, SpaqlAgent):
            agent.iteration(rng, N)
            returns = agent.best_returns
            score = agent.best_score
        else:
            if isinstance(agent, AqlAgent):
                agent.episode(rng)
            returns = agent.evaluate_returns(rng, N)
            score = float(returns.mean())
        records.append(IterationRecord(k, k * H, float(score), agent.arm_count()))
    return AgentResult(seed, records, np.asarray(returns)), (agent if keep_agent else None)


def _run_agent_star(args):
    return run_agent(*args)


def train_run(config: RunConfig, workers: int | None = None, keep_agents: bool = False):
    """Train ``config.agents`` independent agents.

    Returns a :class:`RunResult`, or ``(RunResult, agents)`` when
    ``keep_agents`` is set.  Results do not depend on ``workers``.
    """
    config.validate()
    jobs = [(config, i, keep_agents) for i in range(config.agents)]
    workers = workers or os.cpu_count() or 1
    if workers <= 1 or config.agents == 1:
        outs = [run_agent(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, config.agents)) as pool:
            outs = list(pool.map(_run_agent_star, jobs))
    result = RunResult(config, [o[0] for o in outs])
    if keep_agents:
        return result, [o[1] for o in outs]
    return result


@dataclass
class SweepRow:
    algo: str
    env: str
    xi: float
    final_mean: float
    ci95_low: float
    ci95_high: float
    n_agents: int


def xi_sweep(config: RunConfig, xi_values: Iterable[float] = XI_SWEEP, workers: int | None = None):
    """Run ``config`` once per xi value; returns (rows, results)."""
    rows, results = [], []
    for xi in xi_values:
        cfg = RunConfig(**{**asdict(config), "xi": float(xi)})
        res = train_run(cfg, workers=workers)
        lo, hi = res.ci95
        rows.append(SweepRow(cfg.algo, cfg.env, cfg.xi, res.mean, lo, hi, cfg.agents))
        results.append(res)
    return rows, results


def _g(x: float) -> str:
    return format(float(x), ".9g")


def write_curves_csv(results: RunResult | Sequence[RunResult], path) -> None:
    if isinstance(results, RunResult):
        results = [results]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CURVES_HEADER)
        for res in results:
            c = res.config
            for a in res.agents:
                for r in a.records:
                    w.writerow([c.algo, c.env, _g(c.xi), a.seed, r.iteration, r.samples, _g(r.eval_mean), r.arm_count])


def read_curves_csv(path) -> dict[tuple[str, str, float], dict[int, list[IterationRecord]]]:
    """Parse a curves file into ``{(algo, env, xi): {seed: records}}``."""
    out: dict = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CURVES_HEADER:
            raise ValueError(f"{path}: unexpected curves header {reader.fieldnames}")
        for row in reader:
            key = (row["algo"], row["env"], float(row["xi"]))
            rec = IterationRecord(int(row["iteration"]), int(row["samples"]), float(row["eval_mean"]), int(row["n_arms"]))
            out.setdefault(key, {}).setdefault(int(row["seed"]), []).append(rec)
    return out


def final_means_from_curves(path) -> np.ndarray:
    """Final evaluation mean of every agent in a curves file, ordered by seed."""
    groups = read_curves_csv(path)
    finals = []
    for per_seed in groups.values():
        for seed in sorted(per_seed):
            recs = per_seed[seed]
            finals.append(max(recs, key=lambda r: r.iteration).eval_mean)
    return np.array(finals)


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([r.algo, r.env, _g(r.xi), _g(r.final_mean), _g(r.ci95_low), _g(r.ci95_high), r.n_agents])


def read_sweep_csv(path) -> list[SweepRow]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != SWEEP_HEADER:
            raise ValueError(f"{path}: unexpected sweep header {reader.fieldnames}")
        return [
            SweepRow(r["algo"], r["env"], float(r["xi"]), float(r["final_mean"]),
                     float(r["ci95_low"]), float(r["ci95_high"]), int(r["n_agents"]))
            for r in reader
        ]


def config_fields() -> list[str]:
    return [f.name for f in fields(RunConfig)]
