import subprocess
import sys

import pytest

import suites
from spaql.cli import main
from spaql.partition import PartitionTree
from spaql.environments import Environment
from spaql.policy_io import load_agent, save_agent

FAST = ["--iterations", "3", "--agents", "2", "--eval-rollouts", "3"]


def test_help_lists_every_flag():
    out = subprocess.run([sys.executable, "-m", "spaql", "train", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for flag in ("--env", "--algo", "--xi", "--iterations", "--agents", "--eval-rollouts", "--seed", "--tau-min",
                 "--u", "--d", "--lambda", "--boltzmann-norm", "--split-reset-at", "--workers", "--out", "--config"):
        assert flag in out.stdout
    sweep = subprocess.run([sys.executable, "-m", "spaql", "sweep", "--help"], capture_output=True, text=True)
    assert sweep.returncode == 0 and "--xi-list" in sweep.stdout


def test_unknown_env_exits_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["train", "--env", "nosuch"])
    assert e.value.code == 2
    assert "--env" in capsys.readouterr().err


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as e:
        main(["train", "--bogus"])
    assert e.value.code == 2


def test_train_prints_summary(tmp_path, capsys):
    out = tmp_path / "c.csv"
    assert main(["train", "--env", "cartpole", "--algo", "spaql-ts", *FAST, "--seed", "7", "--out", str(out), "--workers", "1"]) == 0
    text = capsys.readouterr().out
    assert "final mean" in text and "arms" in text
    assert out.read_text().startswith("algo,env,xi,seed,iteration,samples,eval_mean,n_arms\n")


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# demo\nenv = pendulum\nalgo = aql\nxi = 4\niterations = 2\nagents = 2\neval-rollouts = 2\n")
    out = tmp_path / "c.csv"
    assert main(["train", "--config", str(cfg), "--xi", "10", "--out", str(out), "--workers", "1"]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 + 2 * 2
    assert lines[1].startswith("aql,pendulum,10,0,1,200,")


@pytest.mark.parametrize("body", ["colour = red\n", "just a line\n", "xi = lots\n", "env = nosuch\n"])
def test_bad_config_exits_2(tmp_path, body):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(body)
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "x.csv")]) == 2


def test_missing_config_exits_2(tmp_path):
    assert main(["train", "--config", str(tmp_path / "none.cfg")]) == 2


def test_sweep_lists(tmp_path):
    assert main(["sweep", "--xi-list", "0,abc", "--out", str(tmp_path / "s.csv")]) == 2
    assert main(["sweep", "--xi-list", "-1", "--out", str(tmp_path / "s.csv")]) == 2
    out = tmp_path / "s.csv"
    assert main(["sweep", "--env", "cartpole", "--algo", "spaql", "--xi-list", "0.4", *FAST, "--seed", "2",
                 "--out", str(out), "--workers", "1"]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "algo,env,xi,final_mean,ci95_low,ci95_high,n_agents" and len(rows) == 2


def test_default_sweep_list_has_thirteen_values():
    from spaql.cli import _parse_xi_list

    assert len(_parse_xi_list(None)) == 13


def test_export_fresh_agent(tmp_path, capsys):
    tree = PartitionTree(Environment("cartpole").spec, 200)
    src = tmp_path / "fresh.tsv"
    save_agent(src, {"env": "cartpole", "algo": "random", "xi": 0, "seed": 0, "H": 200}, [tree])
    out = tmp_path / "policy.tsv"
    assert main(["export-policy", "--agent", str(src), "--out", str(out)]) == 0
    assert "1 arms" in capsys.readouterr().out
    body = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert len(body) == 2
    # the exported table can itself be loaded again
    assert load_agent(out).arm_count() == 1
    assert main(["export-policy", "--agent", str(out), "--out", str(tmp_path / "again.tsv")]) == 0


def test_export_row_count_matches_arms(tmp_path, capsys):
    assert main(["train", "--env", "cartpole", "--algo", "spaql", "--iterations", "15", "--agents", "1",
                 "--eval-rollouts", "3", "--out", str(tmp_path / "c.csv"), "--save-dir", str(tmp_path / "ag")]) == 0
    arms = int(capsys.readouterr().out.split("arms ")[1].split(".")[0])
    out = tmp_path / "p.tsv"
    assert main(["export-policy", "--agent", str(tmp_path / "ag" / "agent_0.tsv"), "--out", str(out)]) == 0
    body = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert len(body) - 1 == arms


def test_compare(tmp_path, capsys):
    a = tmp_path / "a.csv"
    assert main(["train", "--env", "cartpole", "--algo", "random", *FAST, "--out", str(a), "--workers", "1"]) == 0
    capsys.readouterr()
    assert main(["compare", str(a), str(a)]) == 0
    text = capsys.readouterr().out
    assert "p_two_sided=1 " in text and "no difference" in text
    assert main(["compare", str(a), str(tmp_path / "missing.csv")]) == 1


def test_evaluate_errors(tmp_path):
    assert main(["evaluate", "--agent", str(tmp_path / "none.tsv")]) == 1
    bad = tmp_path / "bad.tsv"
    bad.write_text("# algo = x\n")
    assert main(["evaluate", "--agent", str(bad)]) == 1


def test_outputs_do_not_depend_on_workers(tmp_path):
    suites.cli_determinism(tmp_path)


def test_shipped_configs_resolve():
    from pathlib import Path

    from spaql.cli import _resolve, build_parser

    parser = build_parser()
    files = sorted((Path(__file__).parent.parent / "configs").glob("*.cfg"))
    assert len(files) >= 20
    for path in files:
        command = "sweep" if path.name.startswith("sweep_") else "train"
        extra = ("workers", "xi-list", "curves-out") if command == "sweep" else ("workers", "save-dir")
        config, other = _resolve(parser.parse_args([command, "--config", str(path)]), extra)
        assert other["out"].endswith(".csv")
        if path.name.startswith("long_"):
            assert config.iterations == 2000 and config.agents == 20
            assert config.eval_rollouts == (100 if config.env == "cartpole" else 20)
