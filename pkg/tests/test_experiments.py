import csv
from dataclasses import asdict

import numpy as np
import pytest

from spaql.experiments import (
    CURVES_HEADER,
    SWEEP_HEADER,
    XI_SWEEP,
    RunConfig,
    final_means_from_curves,
    read_curves_csv,
    read_sweep_csv,
    train_run,
    write_curves_csv,
    write_sweep_csv,
    xi_sweep,
)


def small(**kw):
    base = dict(env="cartpole", algo="spaql", iterations=6, eval_rollouts=5, agents=3, seed=4)
    base.update(kw)
    return RunConfig(**base)


def test_sweep_values():
    assert len(XI_SWEEP) == 13 and XI_SWEEP[0] == 0 and XI_SWEEP[1] == 0.4 and XI_SWEEP[-1] == 160


@pytest.mark.parametrize("field,value", [("env", "nosuch"), ("algo", "ppo"), ("iterations", 0), ("xi", -1.0),
                                         ("boltzmann_norm", "x"), ("split_reset_at", 4), ("ts_weight", "x"),
                                         ("terminal_value", "x")])
def test_config_validation(field, value):
    with pytest.raises(ValueError):
        small(**{field: value}).validate()


@pytest.mark.parametrize("algo", ["random", "aql", "spaql", "spaql-ts"])
def test_run_shapes_and_invariants(algo):
    res = train_run(small(algo=algo), workers=1)
    assert len(res.agents) == 3
    for i, a in enumerate(res.agents):
        assert a.seed == 4 + i
        assert [r.iteration for r in a.records] == list(range(1, 7))
        assert [r.samples for r in a.records] == [200 * k for k in range(1, 7)]
        arms = [r.arm_count for r in a.records]
        assert arms == sorted(arms)
        assert len(a.final_returns) == 5
        assert a.final_mean == pytest.approx(a.final_returns.mean())
    assert res.mean == pytest.approx(np.mean(res.final_means))


def test_random_baseline_cartpole():
    res = train_run(small(algo="random", iterations=2, eval_rollouts=20, agents=10), workers=1)
    assert 15 <= res.mean <= 35
    assert set(res.final_arms) == {1.0}


def test_spaql_curve_never_decreases():
    res = train_run(small(iterations=25), workers=1)
    for a in res.agents:
        m = [r.eval_mean for r in a.records]
        assert all(y >= x for x, y in zip(m, m[1:]))


def test_determinism_and_workers():
    cfg = small(algo="spaql-ts")
    a = train_run(cfg, workers=1)
    b = train_run(cfg, workers=2)
    assert [asdict(r) for ag in a.agents for r in ag.records] == [asdict(r) for ag in b.agents for r in ag.records]
    assert all(np.array_equal(x.final_returns, y.final_returns) for x, y in zip(a.agents, b.agents))


def test_curves_csv(tmp_path):
    res = train_run(small(), workers=1)
    path = tmp_path / "c.csv"
    write_curves_csv(res, path)
    text = path.read_text()
    assert text.endswith("\n") and "\r" not in text
    rows = list(csv.reader(text.splitlines()))
    assert rows[0] == CURVES_HEADER
    assert len(rows) == 1 + 3 * 6
    back = read_curves_csv(path)
    assert list(back) == [("spaql", "cartpole", 0.4)]
    finals = final_means_from_curves(path)
    assert np.allclose(finals, res.final_means, atol=1e-9 * np.abs(res.final_means).max())
    assert abs(finals.mean() - res.mean) < 1e-9 * max(1, abs(res.mean))
    write_curves_csv(res, path)
    assert path.read_text() == text


def test_curves_csv_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_curves_csv(p)


def test_sweep_single_value_matches_train(tmp_path):
    cfg = small(xi=4.0)
    rows, results = xi_sweep(cfg, [4.0], workers=1)
    res = train_run(cfg, workers=1)
    assert results[0].mean == res.mean
    assert rows[0].final_mean == res.mean and (rows[0].ci95_low, rows[0].ci95_high) == res.ci95
    path = tmp_path / "s.csv"
    write_sweep_csv(rows, path)
    assert path.read_text().splitlines()[0].split(",") == SWEEP_HEADER
    back = read_sweep_csv(path)
    assert back[0].xi == 4.0 and back[0].n_agents == 3
    assert back[0].final_mean == pytest.approx(res.mean, rel=1e-8)
