import csv
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netucb.core import ConfigError, Dimensions
from netucb.environment import InstanceConfig, preset, preset_names
from netucb.harness import (
    OUTPUT_ENV,
    SUMMARY_HEADER,
    TRACE_HEADER,
    PolicyParams,
    RegretTrace,
    RunConfig,
    config_to_dict,
    expand_grid,
    load_config,
    make_policy,
    per_node_average,
    radius_reduction,
    read_trace,
    run_replication,
    sweep,
    time_average_curve,
    trace_filename,
    write_curve,
    write_summary,
    write_trace,
)

SMALL = InstanceConfig(Dimensions.uniform(4, 3, 2, 2))


def cfg(policy="netlinucb", topology="4", horizon=30, seeds=(0,), instance=SMALL, **params):
    return RunConfig(instance, policy, topology, horizon, list(seeds), params=PolicyParams(**params))


def synthetic(node_regret, radius=None, policy="netlinucb", topology="4", seed=0):
    node_regret = np.asarray(node_regret, dtype=float)
    shape = node_regret.shape
    return RegretTrace(
        policy, topology, seed,
        np.zeros(shape, dtype=np.int64), np.zeros(shape, dtype=np.int64), node_regret,
        np.ones(shape) if radius is None else np.asarray(radius, dtype=float),
        np.zeros(shape, dtype=np.int64),
    )


@pytest.mark.parametrize("policy", ["disjoint", "shared", "netlinucb", "netsgducb"])
def test_single_round_regret(policy):
    rep = run_replication(cfg(policy, horizon=1), 3)
    expected = sum(r.expected_reward_optimal - r.expected_reward_chosen for r in rep.records)
    assert rep.trace.cum_regret.tolist() == [pytest.approx(expected, abs=0)]
    assert expected >= 0


@pytest.mark.parametrize("policy", ["disjoint", "shared", "netlinucb", "netsgducb"])
def test_replications_are_deterministic(policy):
    a = run_replication(cfg(policy, topology="2x2"), 7).trace
    b = run_replication(cfg(policy, topology="2x2"), 7).trace
    for name in ("arms", "opt_arms", "node_regret", "radius", "comm", "rewards"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_disjoint_never_communicates():
    assert not run_replication(cfg("disjoint", topology="1x4", horizon=50), 0).trace.comm.any()


@settings(max_examples=15)
@given(
    st.sampled_from(["disjoint", "shared", "netlinucb", "netsgducb"]),
    st.sampled_from(preset_names()),
    st.integers(0, 1000),
)
def test_regret_nonnegative_and_cumulative_monotone(policy, name, seed):
    inst = preset(name).with_nodes(3)
    rep = run_replication(cfg(policy, topology="3", horizon=15, instance=inst), seed)
    assert np.all(rep.trace.node_regret >= 0)
    assert np.all(np.diff(rep.trace.cum_regret) >= 0)
    assert all(r.regret >= 0 for r in rep.records)


def test_time_average_curve():
    flat = time_average_curve(np.arange(1, 6) * 0.3)
    np.testing.assert_allclose(flat[:, 1], 0.3)
    assert flat[:, 0].tolist() == [1, 2, 3, 4, 5]
    assert not time_average_curve(np.zeros(4))[:, 1].any()
    t = np.arange(1, 101)
    np.testing.assert_allclose(time_average_curve(np.sqrt(t))[:, 1], 1 / np.sqrt(t), rtol=1e-15)


def test_per_node_average():
    c = 0.25
    assert per_node_average([synthetic(np.full((10, 4), c))]) == [(4, pytest.approx(c))]
    assert per_node_average([synthetic(np.zeros((10, 2)))]) == [(2, 0.0)]
    traces = [
        synthetic(np.full((10, 2), 0.1)),
        synthetic(np.full((10, 2), 0.3)),
        synthetic(np.full((10, 3), 0.6)),
    ]
    out = per_node_average(traces)
    assert out[0] == (2, pytest.approx(0.2))
    assert out[1] == (3, pytest.approx(0.6))
    with pytest.raises(ValueError):
        per_node_average([synthetic(np.zeros((5, 2))), synthetic(np.zeros((6, 2)))])


def test_radius_reduction():
    base = synthetic(np.zeros((5, 2)), radius=np.full((5, 2), 0.8))
    assert radius_reduction(base, base) == 0
    half = synthetic(np.zeros((5, 2)), radius=np.full((5, 2), 0.4))
    assert radius_reduction([half], [base]) == pytest.approx(50.0)


def test_trace_csv_round_trip(tmp_path):
    trace = run_replication(cfg("netsgducb", topology="2x2", horizon=25), 4).trace
    path = write_trace(trace, tmp_path / trace_filename(trace))
    with path.open() as fh:
        assert next(csv.reader(fh)) == TRACE_HEADER
    back = read_trace(path)
    assert (back.policy, back.topology, back.seed) == ("netsgducb", "2x2", 4)
    for name in ("arms", "opt_arms", "node_regret", "radius", "comm"):
        assert np.array_equal(getattr(back, name), getattr(trace, name))
    assert np.array_equal(back.cum_regret, trace.cum_regret)
    assert path.with_suffix(".rewards.csv").exists()


def test_write_curve(tmp_path):
    path = write_curve(np.array([1.0, 3.0]), tmp_path / "c.csv")
    assert path.read_text().splitlines() == ["t,avg_regret", "1,1", "2,1.5"]


def test_one_cell_sweep_gives_one_row(tmp_path):
    results = sweep([cfg(seeds=(0, 1))])
    assert len(results) == 1 and results[0].ok
    path = write_summary(results, tmp_path / "s.csv")
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 1 and list(rows[0]) == SUMMARY_HEADER
    assert rows[0]["n_seeds"] == "2" and rows[0]["status"] == "ok"


def test_full_grid_shape():
    base = cfg(horizon=5, instance=InstanceConfig(Dimensions.uniform(12, 2, 1, 1)))
    cells = expand_grid(base, ["disjoint", "shared", "netlinucb", "netsgducb"], ["3x4", "6x2", "12"])
    assert len(cells) == 12
    assert len(sweep(cells)) == 12
    collapsed = expand_grid(base, ["disjoint", "shared", "netlinucb"], ["3x4", "12"], collapse=True)
    assert [(c.policy, c.topology) for c in collapsed] == [
        ("disjoint", "1x12"), ("shared", "12"), ("netlinucb", "3x4"), ("netlinucb", "12")
    ]


def test_sweep_records_failures_and_continues():
    results = sweep([cfg(topology="3"), cfg(), cfg(policy="bogus")])
    assert [r.ok for r in results] == [False, True, False]
    assert "topology" in results[0].error and "policy" in results[2].error
    assert results[0].summary_row()["status"] == "failed"
    with pytest.raises(ConfigError):
        sweep([])


def test_seed_results_independent_of_order_and_parallelism():
    cells = [cfg("netlinucb", "2x2", seeds=(0, 1)), cfg("disjoint", "1x4", seeds=(2,))]
    serial = sweep(cells)
    reordered = sweep(cells[::-1])[::-1]
    parallel = sweep(cells, jobs=2)
    single = run_replication(cells[0], 1).trace
    for other in (reordered, parallel):
        for a, b in zip(serial, other):
            for x, y in zip(a.traces, b.traces):
                assert np.array_equal(x.node_regret, y.node_regret) and np.array_equal(x.arms, y.arms)
    assert np.array_equal(serial[0].traces[1].node_regret, single.node_regret)


def test_sweep_writes_traces(tmp_path):
    c = replace(cfg(horizon=5, seeds=(0, 1)), output_dir=tmp_path, dump_weights=True)
    assert sweep([c])[0].ok
    assert (tmp_path / "trace_netlinucb_4_seed1.csv").exists()
    assert (tmp_path / "weights_netlinucb_4_seed0.csv").exists()


@pytest.mark.parametrize(
    "bad, field",
    [
        ({"policy": "ucb"}, "policy"),
        ({"horizon": 0}, "horizon"),
        ({"seeds": []}, "seeds"),
        ({"topology": "2x3"}, "topology"),
    ],
)
def test_validation_names_the_field(bad, field):
    with pytest.raises(ConfigError, match=field):
        replace(cfg(), **bad).validate()


def test_make_policy_uses_params():
    c = cfg("netsgducb", alpha0=2.0, eta_sgd=0.3)
    policy = make_policy(c)
    assert policy.hyper.alpha_sgd == pytest.approx(2.0 * (1 + SMALL.noise_sigma**2))
    assert policy.hyper.eta_sgd == 0.3
    assert make_policy(cfg("netsgducb", alpha_sgd=0.7)).hyper.alpha_sgd == 0.7
    assert make_policy(cfg("disjoint", alpha_ridge=0.5)).alpha == 0.5


def test_load_config(tmp_path, monkeypatch):
    path = tmp_path / "run.yaml"
    path.write_text(
        "preset: rich_actions\n"
        "instance: {n_nodes: 6, noise_sigma: 0.2}\n"
        "policy: netsgducb\n"
        "topology: 3x2\n"
        "horizon: 40\n"
        "seeds: '1,2'\n"
        "params: {rho: 0.5}\n"
    )
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "out"))
    c = load_config(path, {"horizon": 10, "params": {"beta": 0.2}})
    assert c.instance.dims.n_nodes == 6 and c.instance.dims.n_arms == 10
    assert c.instance.noise_sigma == 0.2
    assert (c.policy, c.topology, c.horizon, c.seeds) == ("netsgducb", "3x2", 10, [1, 2])
    assert (c.params.rho, c.params.beta) == (0.5, 0.2)
    assert c.output_dir == tmp_path / "out"
    c.validate()
    d = config_to_dict(c)
    assert d["params"]["rho"] == 0.5 and d["seeds"] == [1, 2]


def test_load_config_defaults_and_errors(tmp_path):
    c = load_config()
    assert (c.instance.dims.n_nodes, c.horizon, c.seeds) == (12, 1000, list(range(10)))
    bad = tmp_path / "bad.yaml"
    bad.write_text("colour: red\n")
    with pytest.raises(ConfigError, match="colour"):
        load_config(bad)
    with pytest.raises(ConfigError, match="unknown fields"):
        load_config(None, {"params": {"lr": 1}})
