"""Command-line front end: ``spaql {train,sweep,evaluate,export-policy,compare}``."""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict

import numpy as np

from .agents import TERMINAL_VALUES, evaluate_kernel, _env_args
from .environments import ENV_NAMES, Environment
from .experiments import (
    ALGOS,
    XI_SWEEP,
    RunConfig,
    final_means_from_curves,
    train_run,
    write_curves_csv,
    write_sweep_csv,
    xi_sweep,
)
from .policy_io import format_agent, load_agent, save_agent
from .stats import SOLVED_TRIALS, ci95, solved_check, welch_test

# flag name -> (RunConfig field, type)
RUN_FLAGS = {
    "env": ("env", str),
    "algo": ("algo", str),
    "xi": ("xi", float),
    "iterations": ("iterations", int),
    "agents": ("agents", int),
    "eval-rollouts": ("eval_rollouts", int),
    "seed": ("seed", int),
    "tau-min": ("tau_min", float),
    "u": ("u", float),
    "d": ("d", float),
    "lambda": ("lam", float),
    "boltzmann-norm": ("boltzmann_norm", str),
    "split-reset-at": ("split_reset_at", int),
    "ts-weight": ("ts_weight", str),
    "terminal-value": ("terminal_value", str),
}
OTHER_FLAGS = {"workers": int, "out": str, "xi-list": str, "save-dir": str, "curves-out": str}

CHOICES = {
    "env": ENV_NAMES,
    "algo": ALGOS,
    "boltzmann-norm": ("shift", "scale"),
    "split-reset-at": (2, 3),
    "ts-weight": ("next", "current"),
    "terminal-value": TERMINAL_VALUES,
}

HELP = {
    "env": "benchmark system",
    "algo": "learner",
    "xi": "UCB bonus scale (default 0.4)",
    "iterations": "training iterations K per agent (default 100)",
    "agents": "number of independent agents (default 20)",
    "eval-rollouts": "evaluation rollouts N per iteration (default 20)",
    "seed": "base seed; agent i uses seed + i (default 0)",
    "tau-min": "minimum Boltzmann temperature (default 0.01)",
    "u": "temperature growth factor (default 2)",
    "d": "decay exponent applied to u on improvement (default 0.8)",
    "lambda": "terminal-state Gaussian width (default 1.2)",
    "boltzmann-norm": "shift: subtract the max Q; scale: divide by the max Q (default shift)",
    "split-reset-at": "reset the trainee after this many splits without improvement (default 2)",
    "ts-weight": "terminal-state weight uses the next state or the current state (default next)",
    "terminal-value": "value backed up at a simulator termination (default bootstrap)",
    "workers": "parallel agents (default: available CPUs)",
    "xi-list": "comma-separated xi values (default: the 13-value sweep set)",
    "save-dir": "directory for one policy file per trained agent",
    "curves-out": "also write the per-iteration curves of every sweep point",
}


class UsageError(Exception):
    """Invalid flags or configuration; exit status 2."""


def _add_run_flags(p: argparse.ArgumentParser, extra: tuple[str, ...]):
    for flag, (_, typ) in RUN_FLAGS.items():
        p.add_argument(f"--{flag}", type=typ, choices=CHOICES.get(flag), default=None, help=HELP[flag])
    for flag in extra:
        p.add_argument(f"--{flag}", type=OTHER_FLAGS[flag], default=None, help=HELP[flag])
    p.add_argument("--config", default=None, help="flat 'key = value' file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spaql", description="Adaptive Q-learning benchmark harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train agents and write learning curves")
    _add_run_flags(p, ("workers", "save-dir"))
    p.add_argument("--out", default=None, help="curves CSV path (default curves.csv)")

    p = sub.add_parser("sweep", help="train once per xi value and summarise")
    _add_run_flags(p, ("workers", "xi-list", "curves-out"))
    p.add_argument("--out", default=None, help="sweep CSV path (default sweep.csv)")

    p = sub.add_parser("evaluate", help="evaluate a saved agent")
    p.add_argument("--agent", required=True, help="saved agent file")
    p.add_argument("--eval-rollouts", type=int, default=100, help="number of rollouts (default 100)")
    p.add_argument("--seed", type=int, default=0, help="evaluation seed (default 0)")
    p.add_argument("--out", default=None, help="optional file for the individual returns")

    p = sub.add_parser("export-policy", help="write the policy table of a saved agent")
    p.add_argument("--agent", required=True, help="saved agent file or policy table")
    p.add_argument("--out", required=True, help="policy table path")

    p = sub.add_parser("compare", help="Welch test on the final evaluation means of two curves files")
    p.add_argument("a", help="curves CSV of the first group")
    p.add_argument("b", help="curves CSV of the second group")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level (default 0.05)")
    return parser


def read_config_file(path: str, allowed: set[str]) -> dict[str, str]:
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or not key:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            if key not in allowed:
                raise UsageError(f"{path}:{lineno}: unknown key '{key}'")
            values[key] = value.strip()
    return values


def _resolve(args: argparse.Namespace, extra: tuple[str, ...]) -> tuple[RunConfig, dict]:
    """Merge defaults, the config file and flags (flags win)."""
    allowed = set(RUN_FLAGS) | set(extra) | {"out"}
    file_values = {}
    if args.config:
        try:
            file_values = read_config_file(args.config, allowed)
        except OSError as e:
            raise UsageError(f"--config: {e}") from e
    cfg = asdict(RunConfig())
    other = {}
    for flag in sorted(allowed):
        dest = flag.replace("-", "_")
        value = getattr(args, dest, None)
        if flag in file_values and value is None:
            typ = RUN_FLAGS[flag][1] if flag in RUN_FLAGS else OTHER_FLAGS.get(flag, str)
            try:
                value = typ(file_values[flag])
            except ValueError as e:
                raise UsageError(f"--config: bad value for '{flag}': {file_values[flag]!r}") from e
            if flag in CHOICES and value not in CHOICES[flag]:
                raise UsageError(f"--config: '{flag}' must be one of {CHOICES[flag]}")
        if flag in RUN_FLAGS:
            if value is not None:
                cfg[RUN_FLAGS[flag][0]] = value
        else:
            other[dest] = value
    try:
        config = RunConfig(**cfg).validate()
    except ValueError as e:
        raise UsageError(str(e)) from e
    if other.get("workers") is not None and other["workers"] < 1:
        raise UsageError("--workers must be positive")
    return config, other


def _parse_xi_list(text: str | None) -> list[float]:
    if text is None:
        return list(XI_SWEEP)
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"--xi-list: malformed list {text!r}") from e
    if not values or any(v < 0 for v in values):
        raise UsageError(f"--xi-list: expected non-negative values, got {text!r}")
    return values


def _summary(res) -> str:
    c = res.config
    lo, hi = res.ci95
    line = (
        f"{c.env} {c.algo} xi={c.xi:g}: final mean {res.mean:.2f} +/- {(hi - lo) / 2:.2f} (95% CI), "
        f"arms {res.final_arms.mean():.2f}, agents {len(res.agents)}"
    )
    if c.env == "cartpole" and c.eval_rollouts == SOLVED_TRIALS:
        solved = sum(solved_check(a.final_returns) for a in res.agents)
        line += f", solved {solved}/{len(res.agents)}"
    return line


def cmd_train(args) -> int:
    config, other = _resolve(args, ("workers", "save-dir"))
    save_dir = other.get("save_dir")
    out = other.get("out") or "curves.csv"
    if save_dir:
        result, agents = train_run(config, workers=other.get("workers"), keep_agents=True)
    else:
        result = train_run(config, workers=other.get("workers"))
    write_curves_csv(result, out)
    if save_dir:
        os.makedirs(save_dir, exist_ok=True)
        for a, agent in zip(result.agents, agents):
            meta = {"env": config.env, "algo": config.algo, "xi": format(config.xi, ".9g"), "seed": a.seed, "H": agent.env.horizon}
            save_agent(os.path.join(save_dir, f"agent_{a.seed}.tsv"), meta, agent.policy_trees())
    print(_summary(result))
    return 0


def cmd_sweep(args) -> int:
    config, other = _resolve(args, ("workers", "xi-list", "curves-out"))
    xis = _parse_xi_list(other.get("xi_list"))
    rows, results = xi_sweep(config, xis, workers=other.get("workers"))
    write_sweep_csv(rows, other.get("out") or "sweep.csv")
    if other.get("curves_out"):
        write_curves_csv(results, other["curves_out"])
    for res in results:
        print(_summary(res))
    return 0


def cmd_evaluate(args) -> int:
    if args.eval_rollouts < 1:
        raise UsageError("--eval-rollouts must be positive")
    saved = load_agent(args.agent)
    env = Environment(saved.env)
    rng = np.random.default_rng(args.seed)
    tree = saved.trees[0]
    roots = np.array([t.root_index for t in saved.trees], dtype=np.int64)
    if saved.time_variant:
        # rebuilt trees each own a pool; evaluate step by step through a merged view
        returns = _evaluate_time_variant(saved, env, rng, args.eval_rollouts)
    else:
        returns = evaluate_kernel(tree.nodes, roots, False, tree.S, saved.H, *_env_args(env), rng, args.eval_rollouts)
    mean = float(np.mean(returns))
    if len(returns) >= 2:
        lo, hi = ci95(returns)
        print(f"{saved.env} {saved.algo}: mean return {mean:.2f} +/- {(hi - lo) / 2:.2f} (95% CI) over {len(returns)} rollouts, arms {saved.arm_count()}")
    else:
        print(f"{saved.env} {saved.algo}: return {mean:.2f}, arms {saved.arm_count()}")
    if len(returns) == SOLVED_TRIALS and saved.env == "cartpole":
        print("solved" if solved_check(returns) else "not solved")
    if args.out:
        with open(args.out, "w") as f:
            f.write("".join(f"{r:.9g}\n" for r in returns))
    return 0


def _evaluate_time_variant(saved, env, rng, n):
    from .partition import Forest

    forest = Forest(env.spec, saved.H, len(saved.trees))
    for h, tree in enumerate(saved.trees):
        _graft(forest, h, tree)
    return evaluate_kernel(forest.nodes, forest.roots, True, env.spec.state_dims, saved.H, *_env_args(env), rng, n)


def _graft(forest, slot: int, tree) -> None:
    """Append ``tree``'s nodes to ``forest`` and make them root ``slot``."""
    src = tree.nodes
    n = int(src.counts[0])
    forest.reserve(n)
    dst = forest.nodes
    off = int(dst.counts[0])
    for name in ("center", "depth", "nchild", "amask", "q", "visits", "order"):
        getattr(dst, name)[off:off + n] = getattr(src, name)[:n]
    child = src.child[:n].copy()
    child[child >= 0] += off
    dst.child[off:off + n] = child
    dst.counts[0] = off + n
    dst.counts[2 + slot] = tree.arm_count()
    forest.roots[slot] = off + tree.root_index


def cmd_export_policy(args) -> int:
    saved = load_agent(args.agent)
    meta = {"env": saved.env, "algo": saved.algo, "xi": format(saved.xi, ".9g"), "seed": saved.seed, "H": saved.H}
    with open(args.out, "w") as f:
        f.write(format_agent(meta, saved.trees, digits=9))
    print(f"{saved.arm_count()} arms written to {args.out}")
    return 0


def cmd_compare(args) -> int:
    a = final_means_from_curves(args.a)
    b = final_means_from_curves(args.b)
    two = welch_test(a, b, "two")
    one = welch_test(a, b, "one")
    print(f"a: n={len(a)} mean={a.mean():.6g}  b: n={len(b)} mean={b.mean():.6g}")
    print(f"t={two.t:.6g} dof={two.dof:.6g} p_two_sided={two.p:.6g} p_a_greater={one.p:.6g}")
    if two.p < args.alpha:
        verdict = "a better than b" if two.t > 0 else "b better than a"
    else:
        verdict = "no difference"
    print(f"verdict at alpha={args.alpha:g}: {verdict}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "sweep": cmd_sweep,
    "evaluate": cmd_evaluate,
    "export-policy": cmd_export_policy,
    "compare": cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"spaql {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"spaql {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
