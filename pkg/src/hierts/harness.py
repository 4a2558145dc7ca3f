"""Bayes-regret experiments, complexity terms and the analytic regret bound.

Every random quantity is drawn from a named stream derived from
(base seed, instance index, stream id), so results are reproducible bit for
bit regardless of worker count: all agents face the same sampled instance
and context sequence, while each agent keeps its own posterior-sampling and
reward-noise streams.
"""
from __future__ import annotations

import concurrent.futures
import dataclasses
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .agents import AGENT_KINDS, make_agent
from .envs import Instance, sample_contexts, sample_instance
from .hierarchy import (
    Hierarchy,
    HierarchyError,
    PriorSpec,
    balanced_tree,
    build_hierarchy,
    constant_prior,
    doubling_prior,
    load_tree_json,
    marginal_prior_variance,
)

__all__ = [
    "ConfigError",
    "RunConfig",
    "RegretCurve",
    "BoundReport",
    "RatioResult",
    "run_bayes_regret",
    "dataset_bandit_curve",
    "complexity_term",
    "ts_complexity_term",
    "regret_bound",
    "ratio_experiment",
    "write_regret_csv",
    "write_bound_csv",
    "write_ratio_csv",
]

# Stream ids for per-instance substreams.
_STREAM_INSTANCE = 0
_STREAM_CONTEXT = 1
_STREAM_AGENT = 10  # + agent position in AGENT_KINDS
_STREAM_NOISE = 20  # + agent position in AGENT_KINDS


class ConfigError(ValueError):
    """An experiment configuration failed validation."""


@dataclass(frozen=True)
class RunConfig:
    """Declarative experiment description; resolve() yields the tree and prior.

    Exactly one tree source must be set: branching/height for a balanced
    tree, parents for an explicit one, or tree_file pointing at a tree JSON.
    prior_scheme is one of constant (prior_value at every node), doubling
    (2**height at every node), explicit (node_variance map) or file (take
    the prior from tree_file).
    """

    branching: int | None = None
    height: int | None = None
    parents: tuple[tuple[int, int], ...] | None = None
    tree_file: str | None = None
    prior_scheme: str = "constant"
    prior_value: float = 1.0
    node_variance: tuple[tuple[int, float], ...] | None = None
    hyper_mean: float = 0.0
    noise_std: float = 1.0
    horizon: int = 500
    instances: int = 100
    agents: tuple[str, ...] = AGENT_KINDS
    seed: int = 0
    model: str = "k-armed"
    dim: int = 1
    delta: float | None = None

    def __post_init__(self) -> None:
        sources = [self.branching is not None or self.height is not None,
                   self.parents is not None,
                   self.tree_file is not None]
        if sum(sources) != 1:
            raise ConfigError("specify exactly one tree source: branching/height, parents or tree_file")
        if (self.branching is None) != (self.height is None):
            raise ConfigError("branching and height must be given together")
        if self.prior_scheme not in ("constant", "doubling", "explicit", "file"):
            raise ConfigError(f"unknown prior scheme {self.prior_scheme!r}")
        if self.prior_scheme == "explicit" and self.node_variance is None:
            raise ConfigError("explicit prior scheme requires node_variance")
        if self.prior_scheme == "file" and self.tree_file is None:
            raise ConfigError("prior scheme 'file' requires tree_file")
        if self.horizon < 0:
            raise ConfigError(f"horizon must be nonnegative, got {self.horizon}")
        if self.instances < 1:
            raise ConfigError(f"instances must be at least 1, got {self.instances}")
        if not self.agents:
            raise ConfigError("at least one agent is required")
        for kind in self.agents:
            if kind not in AGENT_KINDS:
                raise ConfigError(f"unknown agent kind {kind!r}; expected a subset of {AGENT_KINDS}")
        if len(set(self.agents)) != len(self.agents):
            raise ConfigError("agent kinds must not repeat")
        if self.model not in ("k-armed", "linear"):
            raise ConfigError(f"model must be 'k-armed' or 'linear', got {self.model!r}")
        if self.model == "linear" and self.dim < 1:
            raise ConfigError(f"linear model needs dim >= 1, got {self.dim}")
        if self.noise_std <= 0:
            raise ConfigError(f"noise_std must be positive, got {self.noise_std}")
        if self.seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {self.seed}")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError(f"config must be a JSON object, got {type(doc).__name__}")
        unknown = set(doc) - set(cls.__dataclass_fields__) - {"tree", "prior"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        flat = dict(doc)
        tree = flat.pop("tree", None)
        if tree is not None:
            if not isinstance(tree, dict):
                raise ConfigError("'tree' must be an object")
            if "b" in tree or "h" in tree:
                flat["branching"] = tree.get("b")
                flat["height"] = tree.get("h")
            if "parents" in tree:
                try:
                    flat["parents"] = tuple(sorted((int(k), int(v)) for k, v in tree["parents"].items()))
                except (TypeError, ValueError, AttributeError):
                    raise ConfigError("'tree.parents' must map child ids to parent ids") from None
            if "file" in tree:
                flat["tree_file"] = str(tree["file"])
        prior = flat.pop("prior", None)
        if prior is not None:
            if not isinstance(prior, dict) or "scheme" not in prior:
                raise ConfigError("'prior' must be an object with a 'scheme' key")
            flat["prior_scheme"] = prior["scheme"]
            if "value" in prior:
                flat["prior_value"] = float(prior["value"])
            if "node_variance" in prior:
                try:
                    flat["node_variance"] = tuple(
                        sorted((int(k), float(v)) for k, v in prior["node_variance"].items())
                    )
                except (TypeError, ValueError, AttributeError):
                    raise ConfigError("'prior.node_variance' must map node ids to variances") from None
        if "agents" in flat:
            flat["agents"] = tuple(flat["agents"])
        try:
            return cls(**flat)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json_file(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError:
            raise
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["agents"] = list(self.agents)
        if self.parents is not None:
            doc["parents"] = {str(c): p for c, p in self.parents}
        if self.node_variance is not None:
            doc["node_variance"] = {str(k): v for k, v in self.node_variance}
        return doc

    def resolve(self) -> tuple[Hierarchy, PriorSpec]:
        file_prior = None
        if self.tree_file is not None:
            try:
                hierarchy, file_prior, _ = load_tree_json(self.tree_file)
            except HierarchyError as exc:
                raise ConfigError(str(exc)) from None
        elif self.parents is not None:
            try:
                hierarchy = build_hierarchy(dict(self.parents))
            except HierarchyError as exc:
                raise ConfigError(str(exc)) from None
        else:
            try:
                hierarchy = balanced_tree(self.branching, self.height)
            except HierarchyError as exc:
                raise ConfigError(str(exc)) from None
        if self.prior_scheme == "file":
            if file_prior is None:
                raise ConfigError(f"{self.tree_file}: tree file carries no prior section")
            return hierarchy, file_prior
        if self.model == "linear":
            eye = np.eye(self.dim)
            if self.prior_scheme == "constant":
                variances = {n: self.prior_value * eye for n in range(1, hierarchy.num_nodes + 1)}
            elif self.prior_scheme == "doubling":
                variances = {
                    n: float(2.0 ** int(hierarchy.height[n])) * eye
                    for n in range(1, hierarchy.num_nodes + 1)
                }
            else:
                variances = {n: v * eye for n, v in self.node_variance}
            try:
                return hierarchy, PriorSpec(
                    hyper_mean=float(self.hyper_mean),
                    node_variance=variances,
                    noise_std=self.noise_std,
                )
            except HierarchyError as exc:
                raise ConfigError(str(exc)) from None
        try:
            if self.prior_scheme == "constant":
                prior = constant_prior(hierarchy, self.prior_value, self.noise_std, self.hyper_mean)
            elif self.prior_scheme == "doubling":
                prior = doubling_prior(hierarchy, self.noise_std, self.hyper_mean)
            else:
                prior = PriorSpec(
                    hyper_mean=float(self.hyper_mean),
                    node_variance=dict(self.node_variance),
                    noise_std=self.noise_std,
                )
            missing = [
                n for n in range(1, hierarchy.num_nodes + 1) if n not in prior.node_variance
            ]
            if missing:
                raise ConfigError(f"explicit prior is missing variances for nodes {missing}")
        except HierarchyError as exc:
            raise ConfigError(str(exc)) from None
        return hierarchy, prior

    def resolved_delta(self) -> float:
        if self.delta is not None:
            return self.delta
        return 1.0 / max(self.horizon, 1)


@dataclass(frozen=True, eq=False)
class RegretCurve:
    """Mean cumulative Bayes regret per round with standard errors."""

    horizon: int
    instances: int
    agents: tuple[str, ...]
    mean: dict[str, np.ndarray]
    se: dict[str, np.ndarray]

    def final(self, kind: str) -> tuple[float, float]:
        """(mean, se) of cumulative regret at the horizon; (0, 0) when empty."""
        if self.horizon == 0:
            return 0.0, 0.0
        return float(self.mean[kind][-1]), float(self.se[kind][-1])


def _instance_rng(seed: int, run: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run, stream)))


def _simulate_instance(
    run: int,
    config: RunConfig,
    hierarchy: Hierarchy | None = None,
    prior: PriorSpec | None = None,
) -> dict[str, np.ndarray]:
    if hierarchy is None or prior is None:
        hierarchy, prior = config.resolve()
    instance = sample_instance(hierarchy, prior, _instance_rng(config.seed, run, _STREAM_INSTANCE))
    leaves = hierarchy.action_nodes
    theta_leaves = instance.leaf_parameters()
    n = config.horizon
    linear = config.model == "linear"
    if linear:
        contexts = sample_contexts(_instance_rng(config.seed, run, _STREAM_CONTEXT), n, prior.dim)
        mean_table = contexts @ theta_leaves.T  # (n, K)
        best_means = mean_table.max(axis=1) if n else np.empty(0)
    else:
        best_mean = float(theta_leaves.max()) if leaves.size else 0.0
    out: dict[str, np.ndarray] = {}
    for kind in config.agents:
        pos = AGENT_KINDS.index(kind)
        agent = make_agent(
            kind, hierarchy, prior, _instance_rng(config.seed, run, _STREAM_AGENT + pos)
        )
        noise = (
            _instance_rng(config.seed, run, _STREAM_NOISE + pos).standard_normal(n)
            * prior.noise_std
        )
        regret = np.empty(n)
        if linear:
            for t in range(n):
                x = contexts[t]
                action = agent.act(x)
                j = int(hierarchy.action_index[action])
                agent.update(action, mean_table[t, j] + noise[t], x)
                regret[t] = best_means[t] - mean_table[t, j]
        else:
            for t in range(n):
                action = agent.act()
                mean_a = float(instance.theta[action])
                agent.update(action, mean_a + noise[t])
                regret[t] = best_mean - mean_a
        if n and regret.min() < -1e-12:
            raise AssertionError(f"negative per-round regret for {kind} on instance {run}")
        out[kind] = np.cumsum(regret)
    return out


def run_bayes_regret(config: RunConfig, jobs: int = 1) -> RegretCurve:
    """Simulate config.instances sampled environments and average the regret.

    jobs > 1 spreads instances over worker processes; the aggregation is
    order-fixed, so the result does not depend on the worker count.
    """
    hierarchy, prior = config.resolve()
    runs = range(config.instances)
    if jobs > 1 and config.instances > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_simulate_instance, runs, [config] * config.instances))
    else:
        results = [_simulate_instance(r, config, hierarchy, prior) for r in runs]
    mean: dict[str, np.ndarray] = {}
    se: dict[str, np.ndarray] = {}
    for kind in config.agents:
        stacked = np.stack([res[kind] for res in results])
        mean[kind] = stacked.mean(axis=0)
        if config.instances > 1:
            se[kind] = stacked.std(axis=0, ddof=1) / math.sqrt(config.instances)
        else:
            se[kind] = np.zeros(config.horizon)
    return RegretCurve(
        horizon=config.horizon,
        instances=config.instances,
        agents=config.agents,
        mean=mean,
        se=se,
    )


def _simulate_dataset_run(
    run: int, instance: Instance, test_features: np.ndarray, horizon: int, seed: int
) -> dict[str, np.ndarray]:
    hierarchy, prior = instance.hierarchy, instance.prior
    theta_leaves = instance.leaf_parameters()
    ctx_rng = _instance_rng(seed, run, _STREAM_CONTEXT)
    rows = ctx_rng.integers(0, test_features.shape[0], size=horizon)
    contexts = test_features[rows]
    mean_table = contexts @ theta_leaves.T
    best_means = mean_table.max(axis=1)
    out: dict[str, np.ndarray] = {}
    for kind in AGENT_KINDS:
        pos = AGENT_KINDS.index(kind)
        agent = make_agent(kind, hierarchy, prior, _instance_rng(seed, run, _STREAM_AGENT + pos))
        noise = _instance_rng(seed, run, _STREAM_NOISE + pos).standard_normal(horizon) * prior.noise_std
        regret = np.empty(horizon)
        for t in range(horizon):
            x = contexts[t]
            action = agent.act(x)
            j = int(hierarchy.action_index[action])
            agent.update(action, mean_table[t, j] + noise[t], x)
            regret[t] = best_means[t] - mean_table[t, j]
        out[kind] = np.cumsum(regret)
    return out


def dataset_bandit_curve(
    instance: Instance,
    dataset,
    *,
    horizon: int,
    runs: int,
    seed: int,
    jobs: int = 1,
) -> RegretCurve:
    """Contextual bandit on a fixed feature-dataset instance.

    Contexts are test rows drawn uniformly with replacement; the instance is
    the same across runs, so run-to-run spread comes from contexts, reward
    noise and posterior sampling only.
    """
    test_features = dataset.features[~dataset.is_train]
    if test_features.shape[0] == 0:
        raise ValueError("dataset has no test rows to serve as contexts")
    run_ids = range(runs)
    if jobs > 1 and runs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(
                    _simulate_dataset_run,
                    run_ids,
                    [instance] * runs,
                    [test_features] * runs,
                    [horizon] * runs,
                    [seed] * runs,
                )
            )
    else:
        results = [_simulate_dataset_run(r, instance, test_features, horizon, seed) for r in run_ids]
    mean: dict[str, np.ndarray] = {}
    se: dict[str, np.ndarray] = {}
    for kind in AGENT_KINDS:
        stacked = np.stack([res[kind] for res in results])
        mean[kind] = stacked.mean(axis=0)
        se[kind] = stacked.std(axis=0, ddof=1) / math.sqrt(runs) if runs > 1 else np.zeros(horizon)
    return RegretCurve(horizon=horizon, instances=runs, agents=AGENT_KINDS, mean=mean, se=se)


@dataclass(frozen=True)
class BoundReport:
    """Per-node complexity weights and their c-discounted total G(n)."""

    n: int
    c: float
    sigma_max: float
    num_actions: int
    nodes: tuple[tuple[int, int, float, float], ...]  # (node, height, sigma0_sq, w)
    total: float  # G(n)


def _weight(sigma0_sq: float, noise_sq: float, growth: float) -> float:
    return sigma0_sq / math.log1p(sigma0_sq / noise_sq) * math.log1p(growth)


def complexity_term(
    hierarchy: Hierarchy, prior: PriorSpec, n: int, c: float | None = None
) -> BoundReport:
    """G(n): sum over nodes of c**height * w_node.

    Leaf weights grow with the horizon (they absorb up to n observations);
    internal weights only grow with their children's prior precisions. The
    default c = 1 + max_variance / noise_var is the posterior-scaling
    constant; c = 2 suffices when the noise dominates every prior variance.
    """
    if not prior.is_scalar:
        raise HierarchyError("complexity_term requires a scalar prior")
    if n < 1:
        raise ValueError(f"horizon must be at least 1, got {n}")
    noise_sq = prior.noise_std**2
    variances = prior.variance_vector(hierarchy)
    if c is None:
        c = 1.0 + float(np.nanmax(variances)) / noise_sq
    rows = []
    total = 0.0
    for node in range(1, hierarchy.num_nodes + 1):
        s0 = float(variances[node])
        ch = hierarchy.children[node]
        if ch.size == 0:
            w = _weight(s0, noise_sq, s0 * n / noise_sq)
        else:
            w = _weight(s0, noise_sq, s0 * float((1.0 / variances[ch]).sum()))
        h = int(hierarchy.height[node])
        rows.append((node, h, s0, w))
        total += c**h * w
    sigma_max = math.sqrt(
        max(marginal_prior_variance(hierarchy, prior, int(a)) for a in hierarchy.action_nodes)
    )
    return BoundReport(
        n=n,
        c=c,
        sigma_max=sigma_max,
        num_actions=hierarchy.num_actions,
        nodes=tuple(rows),
        total=total,
    )


def ts_complexity_term(hierarchy: Hierarchy, prior: PriorSpec, n: int) -> float:
    """G(n) of the independent-arm agent: leaf weights at marginal variances."""
    noise_sq = prior.noise_std**2
    total = 0.0
    for a in hierarchy.action_nodes:
        s0 = marginal_prior_variance(hierarchy, prior, int(a))
        total += _weight(s0, noise_sq, s0 * n / noise_sq)
    return total


def regret_bound(report: BoundReport, delta: float) -> float:
    """Analytic Bayes-regret bound: sqrt(2 n G log(1/delta)) plus the
    sqrt(2/pi) sigma_max K n delta tail term."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    head = math.sqrt(2.0 * report.n * report.total * math.log(1.0 / delta))
    tail = math.sqrt(2.0 / math.pi) * report.sigma_max * report.num_actions * report.n * delta
    return head + tail


@dataclass(frozen=True, eq=False)
class RatioResult:
    """Final-regret ratios TS / agent per height, with propagated SE."""

    heights: tuple[int, ...]
    agents: tuple[str, ...]
    ratio: dict[str, np.ndarray]
    se: dict[str, np.ndarray]
    curves: tuple[RegretCurve, ...]


def ratio_experiment(config: RunConfig, heights: tuple[int, ...], jobs: int = 1) -> RatioResult:
    """Rerun config at several tree heights and compare agents against TS.

    The ratio at height h is TS final regret / agent final regret; its SE
    propagates the two standard errors to first order. config must include
    the TS agent and at least one other.
    """
    if "TS" not in config.agents:
        raise ConfigError("ratio_experiment requires the TS agent in config.agents")
    others = tuple(k for k in config.agents if k != "TS")
    if not others:
        raise ConfigError("ratio_experiment requires at least one non-TS agent")
    if not heights:
        raise ConfigError("at least one height is required")
    if config.branching is None:
        raise ConfigError("ratio_experiment requires a balanced-tree config (branching + height)")
    curves = []
    ratio: dict[str, list[float]] = {k: [] for k in others}
    se: dict[str, list[float]] = {k: [] for k in others}
    for h in heights:
        cfg = dataclasses.replace(config, height=int(h))
        curve = run_bayes_regret(cfg, jobs=jobs)
        curves.append(curve)
        ts_mean, ts_se = curve.final("TS")
        for kind in others:
            a_mean, a_se = curve.final(kind)
            if a_mean <= 0 or ts_mean <= 0:
                ratio[kind].append(float("nan"))
                se[kind].append(float("nan"))
                continue
            r = ts_mean / a_mean
            ratio[kind].append(r)
            se[kind].append(r * math.hypot(ts_se / ts_mean, a_se / a_mean))
    return RatioResult(
        heights=tuple(int(h) for h in heights),
        agents=others,
        ratio={k: np.array(v) for k, v in ratio.items()},
        se={k: np.array(v) for k, v in se.items()},
        curves=tuple(curves),
    )


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_regret_csv(curve: RegretCurve, path: str | Path) -> None:
    lines = ["round,agent,mean_regret,se,instances"]
    for kind in curve.agents:
        m, s = curve.mean[kind], curve.se[kind]
        for t in range(curve.horizon):
            lines.append(f"{t + 1},{kind},{_fmt(m[t])},{_fmt(s[t])},{curve.instances}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_bound_csv(report: BoundReport, path: str | Path) -> None:
    lines = ["node,height,sigma0_sq,w_i"]
    for node, height, s0, w in report.nodes:
        lines.append(f"{node},{height},{_fmt(s0)},{_fmt(w)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_ratio_csv(result: RatioResult, path: str | Path) -> None:
    lines = ["h,agent,ratio,se"]
    for kind in result.agents:
        for i, h in enumerate(result.heights):
            lines.append(f"{h},{kind},{_fmt(result.ratio[kind][i])},{_fmt(result.se[kind][i])}")
    Path(path).write_text("\n".join(lines) + "\n")
