import math

import numpy as np
import pytest

from hierts import (
    BoundReport,
    ConfigError,
    RunConfig,
    balanced_tree,
    complexity_term,
    constant_prior,
    doubling_prior,
    ratio_experiment,
    regret_bound,
    run_bayes_regret,
    save_tree_json,
    ts_complexity_term,
    write_bound_csv,
    write_ratio_csv,
    write_regret_csv,
)


def _cfg(**kw):
    base = dict(branching=2, height=1, horizon=20, instances=3, seed=0)
    base.update(kw)
    return RunConfig(**base)


@pytest.mark.parametrize(
    "kw",
    [
        dict(branching=None, height=None),  # no tree source
        dict(parents=((2, 1), (3, 1))),  # two sources
        dict(branching=2, height=None),
        dict(prior_scheme="spectral"),
        dict(prior_scheme="explicit"),  # needs node_variance
        dict(prior_scheme="file"),  # needs tree_file
        dict(horizon=-1),
        dict(instances=0),
        dict(agents=()),
        dict(agents=("HierTS", "HierTS")),
        dict(agents=("UCB",)),
        dict(model="bandit"),
        dict(model="linear", dim=0),
        dict(noise_std=0.0),
        dict(seed=-3),
        dict(delta=1.0),
    ],
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        _cfg(**kw)


def test_from_dict_nested_sections():
    cfg = RunConfig.from_dict(
        {
            "tree": {"b": 3, "h": 2},
            "prior": {"scheme": "constant", "value": 2.0},
            "horizon": 10,
            "instances": 2,
            "agents": ["HierTS", "TS"],
        }
    )
    assert cfg.branching == 3 and cfg.height == 2
    assert cfg.prior_value == 2.0
    hierarchy, prior = cfg.resolve()
    assert hierarchy.num_actions == 9
    assert prior.node_variance[1] == 2.0
    with pytest.raises(ConfigError, match="unknown config keys"):
        RunConfig.from_dict({"tree": {"b": 2, "h": 1}, "horizons": 5})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"tree": {"b": 2, "h": 1}, "prior": {"value": 1.0}})


def test_from_dict_explicit_parents_and_prior():
    cfg = RunConfig.from_dict(
        {
            "tree": {"parents": {"2": 1, "3": 1}},
            "prior": {"scheme": "explicit", "node_variance": {"1": 0.5, "2": 1.5, "3": 2.5}},
            "horizon": 5,
            "instances": 1,
        }
    )
    hierarchy, prior = cfg.resolve()
    assert prior.node_variance == {1: 0.5, 2: 1.5, 3: 2.5}
    missing = RunConfig.from_dict(
        {
            "tree": {"parents": {"2": 1, "3": 1}},
            "prior": {"scheme": "explicit", "node_variance": {"1": 0.5}},
            "horizon": 5,
            "instances": 1,
        }
    )
    with pytest.raises(ConfigError, match="missing variances"):
        missing.resolve()


def test_from_json_file_errors(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text('{"tree": {"b": 2,}}')
    with pytest.raises(ConfigError, match="line 1 column"):
        RunConfig.from_json_file(path)
    with pytest.raises(OSError):
        RunConfig.from_json_file(tmp_path / "absent.json")


def test_to_dict_roundtrip():
    cfg = _cfg(parents=((2, 1), (3, 1)), branching=None, height=None,
               prior_scheme="explicit", node_variance=((1, 1.0), (2, 2.0), (3, 3.0)))
    doc = cfg.to_dict()
    again = RunConfig.from_dict(
        {
            "tree": {"parents": doc["parents"]},
            "prior": {"scheme": "explicit", "node_variance": doc["node_variance"]},
            "horizon": doc["horizon"],
            "instances": doc["instances"],
            "agents": doc["agents"],
            "seed": doc["seed"],
        }
    )
    assert again.parents == cfg.parents
    assert again.node_variance == cfg.node_variance


def test_resolve_file_scheme(tmp_path):
    tree = balanced_tree(2, 1)
    prior = constant_prior(tree, 1.25, noise_std=0.5)
    path = tmp_path / "tree.json"
    save_tree_json(path, tree, prior)
    cfg = RunConfig(tree_file=str(path), prior_scheme="file", horizon=4, instances=1)
    hierarchy, got = cfg.resolve()
    assert hierarchy.num_nodes == 3
    assert got.node_variance[2] == 1.25 and got.noise_std == 0.5
    save_tree_json(path, tree)  # no prior section
    with pytest.raises(ConfigError, match="no prior section"):
        RunConfig(tree_file=str(path), prior_scheme="file", horizon=4, instances=1).resolve()


def test_resolve_linear_prior_matrices():
    cfg = _cfg(model="linear", dim=3, prior_scheme="doubling")
    hierarchy, prior = cfg.resolve()
    assert not prior.is_scalar and prior.dim == 3
    assert np.allclose(prior.node_variance[1], 2.0 * np.eye(3))
    assert np.allclose(prior.node_variance[2], np.eye(3))


def test_resolved_delta_default():
    assert _cfg(horizon=500).resolved_delta() == pytest.approx(1 / 500)
    assert _cfg(delta=0.05).resolved_delta() == 0.05
    assert _cfg(horizon=0).resolved_delta() == 1.0


def test_zero_horizon_empty_curve():
    curve = run_bayes_regret(_cfg(horizon=0))
    assert curve.horizon == 0
    for kind in curve.agents:
        assert curve.mean[kind].shape == (0,)
    assert curve.final("HierTS") == (0.0, 0.0)


def test_curves_nonneg_and_nondecreasing():
    curve = run_bayes_regret(_cfg(branching=2, height=2, horizon=40, instances=5))
    for kind in curve.agents:
        m = curve.mean[kind]
        assert m.shape == (40,)
        assert m[0] >= -1e-12
        assert (np.diff(m) >= -1e-9).all()  # mean cumulative regret cannot fall
        assert curve.se[kind].shape == (40,)


def test_single_instance_has_zero_se():
    curve = run_bayes_regret(_cfg(instances=1, horizon=10))
    assert (curve.se["TS"] == 0).all()


def test_degenerate_prior_gives_no_regret():
    cfg = _cfg(prior_scheme="constant", prior_value=1e-9, horizon=50, instances=3)
    curve = run_bayes_regret(cfg)
    for kind in curve.agents:
        assert curve.final(kind)[0] < 0.01


def test_reruns_are_bit_identical():
    cfg = _cfg(branching=3, height=2, horizon=30, instances=4, model="linear", dim=2)
    a = run_bayes_regret(cfg)
    b = run_bayes_regret(cfg)
    for kind in cfg.agents:
        assert np.array_equal(a.mean[kind], b.mean[kind])
        assert np.array_equal(a.se[kind], b.se[kind])


def test_worker_count_does_not_change_results():
    cfg = _cfg(branching=2, height=2, horizon=25, instances=4)
    serial = run_bayes_regret(cfg, jobs=1)
    parallel = run_bayes_regret(cfg, jobs=2)
    for kind in cfg.agents:
        assert np.array_equal(serial.mean[kind], parallel.mean[kind])
        assert np.array_equal(serial.se[kind], parallel.se[kind])


def test_complexity_term_worked_values():
    tree = balanced_tree(2, 1)
    prior = constant_prior(tree, 1.0, noise_std=1.0)
    report = complexity_term(tree, prior, 1)
    weights = {node: w for node, _, _, w in report.nodes}
    assert weights[2] == pytest.approx(1.0)  # (1/log2) * log2 at n=1
    assert weights[1] == pytest.approx(math.log(3) / math.log(2))  # two unit children
    assert report.c == pytest.approx(2.0)
    assert report.sigma_max == pytest.approx(math.sqrt(2.0))
    assert report.num_actions == 2
    # G(n) discounts by c**height
    assert report.total == pytest.approx(2.0 * weights[1] + weights[2] + weights[3])
    with pytest.raises(ValueError):
        complexity_term(tree, prior, 0)


def test_complexity_term_respects_explicit_c():
    tree = balanced_tree(2, 2)
    prior = doubling_prior(tree, noise_std=4.0)  # noise above every prior width
    report = complexity_term(tree, prior, 100)
    assert report.c == pytest.approx(1.0 + 4.0 / 16.0)
    forced = complexity_term(tree, prior, 100, c=2.0)
    assert forced.total > report.total  # larger discount at the root levels


def test_ts_vs_hier_complexity_ratio_trend():
    """Independent-arm complexity exceeds the tree's by roughly log_b K."""
    ratios = []
    for h in (1, 2, 3):
        tree = balanced_tree(2, h)
        prior = constant_prior(tree, 1.0, noise_std=1.0)
        g = complexity_term(tree, prior, 500, c=1.0).total
        ratios.append(ts_complexity_term(tree, prior, 500) / g)
        # coarse agreement: the claim drops all log factors
        assert 0.5 * h <= ratios[-1] <= 2.0 * h
    assert ratios == sorted(ratios)
    tree = balanced_tree(5, 2)
    prior = constant_prior(tree, 1.0, noise_std=1.0)
    r = ts_complexity_term(tree, prior, 500) / complexity_term(tree, prior, 500, c=1.0).total
    assert 1.0 <= r <= 4.0


def test_regret_bound_formula():
    report = BoundReport(n=500, c=2.0, sigma_max=1.5, num_actions=8, nodes=(), total=12.0)
    delta = 1 / 500
    expect = math.sqrt(2 * 500 * 12.0 * math.log(500)) + math.sqrt(2 / math.pi) * 1.5 * 8 * 500 * delta
    assert regret_bound(report, delta) == pytest.approx(expect, rel=1e-12)
    # delta = 1/n collapses the tail term to sqrt(2/pi) sigma_max K
    tail = regret_bound(BoundReport(n=500, c=2.0, sigma_max=1.5, num_actions=8, nodes=(), total=0.0), delta)
    assert tail == pytest.approx(math.sqrt(2 / math.pi) * 1.5 * 8)
    with pytest.raises(ValueError):
        regret_bound(report, 0.0)


def test_ratio_experiment_shapes_and_guards():
    cfg = _cfg(horizon=30, instances=6, agents=("HierTS", "TS"))
    result = ratio_experiment(cfg, heights=(1, 2))
    assert result.heights == (1, 2)
    assert result.agents == ("HierTS",)
    assert result.ratio["HierTS"].shape == (2,)
    assert np.isfinite(result.ratio["HierTS"]).all()
    assert len(result.curves) == 2
    assert result.curves[1].mean["TS"].shape == (30,)
    with pytest.raises(ConfigError, match="requires the TS agent"):
        ratio_experiment(_cfg(agents=("HierTS",)), heights=(1,))
    with pytest.raises(ConfigError, match="non-TS"):
        ratio_experiment(_cfg(agents=("TS",)), heights=(1,))
    with pytest.raises(ConfigError, match="height"):
        ratio_experiment(cfg, heights=())
    with pytest.raises(ConfigError, match="balanced-tree"):
        ratio_experiment(
            _cfg(parents=((2, 1), (3, 1)), branching=None, height=None, agents=("HierTS", "TS")),
            heights=(1,),
        )


def test_csv_writers_golden(tmp_path):
    cfg = _cfg(horizon=2, instances=2, agents=("TS",), seed=1)
    curve = run_bayes_regret(cfg)
    path = tmp_path / "regret.csv"
    write_regret_csv(curve, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "round,agent,mean_regret,se,instances"
    assert len(lines) == 3
    assert lines[1].startswith("1,TS,") and lines[1].endswith(",2")
    write_regret_csv(curve, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()

    tree = balanced_tree(2, 1)
    report = complexity_term(tree, constant_prior(tree, 1.0), 10)
    write_bound_csv(report, tmp_path / "bound.csv")
    blines = (tmp_path / "bound.csv").read_text().splitlines()
    assert blines[0] == "node,height,sigma0_sq,w_i"
    assert len(blines) == 4

    result = ratio_experiment(_cfg(horizon=10, instances=2, agents=("HierTS", "TS")), heights=(1,))
    write_ratio_csv(result, tmp_path / "ratio.csv")
    rlines = (tmp_path / "ratio.csv").read_text().splitlines()
    assert rlines[0] == "h,agent,ratio,se"
    assert rlines[1].startswith("1,HierTS,")
