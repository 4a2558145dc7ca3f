"""Thompson sampling agents: hierarchical, flattened and independent-arm.

All three agents draw the same leaf marginals before any data arrives; they
differ only in how much of the tree's correlation structure they keep.
HierTS samples the full tree top-down (one Gaussian draw per node, so a
round costs a number of scalar draws linear in the node count), FlatTS runs
HierTS on a two-level collapse of the tree, and TS drops all correlations
and tracks each arm independently.
"""
from __future__ import annotations

import numpy as np

from .hierarchy import (
    ROOT,
    Hierarchy,
    HierarchyError,
    PriorSpec,
    flatten_hierarchy,
    marginal_prior_covariance,
    marginal_prior_variance,
)
from .linear import LinearPosteriorState, _solve_checked, _sym
from .posterior import PosteriorState

__all__ = ["AGENT_KINDS", "hierts_sample", "HierTSAgent", "FlatTSAgent", "TSAgent", "make_agent"]

AGENT_KINDS = ("HierTS", "FlatTS", "TS")


def hierts_sample(state, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw node parameters from the exact joint posterior, root downward.

    The root is drawn from its posterior given the hyper-prior, then each
    level conditions on the already-sampled parents. Works for both scalar
    and linear states; returns an array indexed by node id (slot 0 unused),
    of shape (num_nodes + 1,) or (num_nodes + 1, d), with a leading size
    axis when size is given.
    """
    if not isinstance(state, (PosteriorState, LinearPosteriorState)):
        raise TypeError(f"unsupported posterior state {type(state).__name__}")
    hier = state.hierarchy
    n = hier.num_nodes
    m = 1 if size is None else int(size)
    if isinstance(state, PosteriorState):
        lamhat = state.lam0 + state.ev_prec
        mean_root = (state.lam0[ROOT] * state.hyper_mean + state.ev_wmean[ROOT]) / lamhat[ROOT]
        theta = np.empty((m, n + 1))
        theta[:, 0] = np.nan
        theta[:, ROOT] = mean_root + rng.standard_normal(m) / np.sqrt(lamhat[ROOT])
        for nodes in hier.sampling_levels:
            mean = (
                state.lam0[nodes] * theta[:, hier.parent[nodes]] + state.ev_wmean[nodes]
            ) / lamhat[nodes]
            theta[:, nodes] = mean + rng.standard_normal((m, nodes.size)) / np.sqrt(lamhat[nodes])
    else:
        d = state.dim
        theta = np.empty((m, n + 1, d))
        theta[:, 0] = np.nan
        z = rng.standard_normal((m, d))
        theta[:, ROOT] = (
            state.slope[ROOT] @ state.hyper_mean
            + state.intercept[ROOT]
            + np.einsum("ij,mj->mi", state.post_chol[ROOT], z)
        )
        for nodes in hier.sampling_levels:
            z = rng.standard_normal((m, nodes.size, d))
            theta[:, nodes] = (
                np.einsum("kij,mkj->mki", state.slope[nodes], theta[:, hier.parent[nodes]])
                + state.intercept[nodes]
                + np.einsum("kij,mkj->mki", state.post_chol[nodes], z)
            )
    return theta[0] if size is None else theta


class HierTSAgent:
    """Thompson sampling with the full tree posterior."""

    kind = "HierTS"

    def __init__(self, hierarchy: Hierarchy, prior: PriorSpec, rng: np.random.Generator):
        self.hierarchy = hierarchy
        self.rng = rng
        if prior.is_scalar:
            self.state: PosteriorState | LinearPosteriorState = PosteriorState(hierarchy, prior)
        else:
            self.state = LinearPosteriorState(hierarchy, prior)
        self.sample_ops = 0

    def sample_model(self, size: int | None = None) -> np.ndarray:
        self.sample_ops += self.hierarchy.num_nodes * (1 if size is None else int(size))
        return hierts_sample(self.state, self.rng, size)

    def act(self, context: np.ndarray | None = None) -> int:
        theta = self.sample_model()
        leaves = self.hierarchy.action_nodes
        scores = theta[leaves] if context is None else theta[leaves] @ context
        return int(leaves[int(np.argmax(scores))])

    def update(self, action: int, reward: float, context: np.ndarray | None = None) -> None:
        if context is None:
            self.state.update_path(action, reward)
        else:
            self.state.update_path(action, context, reward)

    def marginal_action_moments(self, action: int):
        return self.state.marginal_action_moments(action)


class FlatTSAgent:
    """HierTS on a two-level collapse of the tree.

    Keeps each action's marginal prior and the shared root effect but
    forgets all intermediate structure. Actions are translated between the
    original tree's leaf ids and the flat tree's.
    """

    kind = "FlatTS"

    def __init__(self, hierarchy: Hierarchy, prior: PriorSpec, rng: np.random.Generator):
        self.hierarchy = hierarchy
        flat, flat_prior, to_flat = flatten_hierarchy(hierarchy, prior)
        self._to_flat = to_flat
        self._to_orig = {v: k for k, v in to_flat.items()}
        self._inner = HierTSAgent(flat, flat_prior, rng)

    @property
    def rng(self) -> np.random.Generator:
        return self._inner.rng

    @property
    def state(self):
        return self._inner.state

    @property
    def sample_ops(self) -> int:
        return self._inner.sample_ops

    def act(self, context: np.ndarray | None = None) -> int:
        return self._to_orig[self._inner.act(context)]

    def update(self, action: int, reward: float, context: np.ndarray | None = None) -> None:
        try:
            flat_action = self._to_flat[action]
        except KeyError:
            raise HierarchyError(f"action {action} is not a leaf") from None
        self._inner.update(flat_action, reward, context)

    def marginal_action_moments(self, action: int):
        return self._inner.marginal_action_moments(self._to_flat[action])


class TSAgent:
    """Independent conjugate Gaussian posterior per arm.

    Each arm's prior is its marginal under the tree prior, so all structure
    is discarded but the round-one behavior matches the other agents.
    """

    kind = "TS"

    def __init__(self, hierarchy: Hierarchy, prior: PriorSpec, rng: np.random.Generator):
        self.hierarchy = hierarchy
        self.rng = rng
        self.noise_prec = 1.0 / prior.noise_std**2
        self._scalar = prior.is_scalar
        leaves = [int(a) for a in hierarchy.action_nodes]
        k = len(leaves)
        if self._scalar:
            prior_var = np.array([marginal_prior_variance(hierarchy, prior, a) for a in leaves])
            self.prec = 1.0 / prior_var
            self.wmean = self.prec * float(prior.hyper_mean)
        else:
            d = prior.dim
            self.dim = d
            mean0 = np.asarray(prior.hyper_mean, float)
            self.prec = np.empty((k, d, d))
            self.wmean = np.empty((k, d))
            self.cov = np.empty((k, d, d))
            self.chol = np.empty((k, d, d))
            self.mean = np.empty((k, d))
            for j, a in enumerate(leaves):
                lam = _sym(np.linalg.inv(marginal_prior_covariance(hierarchy, prior, a)))
                self.prec[j] = lam
                self.wmean[j] = lam @ mean0
                self._refresh(j)

    def _refresh(self, j: int) -> None:
        cov = _sym(_solve_checked(self.prec[j], np.eye(self.dim), f"arm {j} covariance"))
        self.cov[j] = cov
        self.chol[j] = np.linalg.cholesky(cov)
        self.mean[j] = cov @ self.wmean[j]

    def arm_moments(self, action: int):
        """Posterior (mean, variance or covariance) of one arm."""
        j = int(self.hierarchy.action_index[action])
        if j < 0:
            raise HierarchyError(f"action {action} is not a leaf")
        if self._scalar:
            return float(self.wmean[j] / self.prec[j]), float(1.0 / self.prec[j])
        return self.mean[j].copy(), self.cov[j].copy()

    def act(self, context: np.ndarray | None = None) -> int:
        leaves = self.hierarchy.action_nodes
        if self._scalar:
            draws = self.wmean / self.prec + self.rng.standard_normal(leaves.size) / np.sqrt(self.prec)
            scores = draws
        else:
            z = self.rng.standard_normal((leaves.size, self.dim))
            draws = self.mean + np.einsum("kij,kj->ki", self.chol, z)
            scores = draws @ context
        return int(leaves[int(np.argmax(scores))])

    def update(self, action: int, reward: float, context: np.ndarray | None = None) -> None:
        j = int(self.hierarchy.action_index[action])
        if j < 0:
            raise HierarchyError(f"action {action} is not a leaf")
        if self._scalar:
            self.prec[j] += self.noise_prec
            self.wmean[j] += reward * self.noise_prec
        else:
            x = np.asarray(context, float)
            self.prec[j] = _sym(self.prec[j] + np.outer(x, x) * self.noise_prec)
            self.wmean[j] += x * (reward * self.noise_prec)
            self._refresh(j)


def make_agent(kind: str, hierarchy: Hierarchy, prior: PriorSpec, rng: np.random.Generator):
    if kind == "HierTS":
        return HierTSAgent(hierarchy, prior, rng)
    if kind == "FlatTS":
        return FlatTSAgent(hierarchy, prior, rng)
    if kind == "TS":
        return TSAgent(hierarchy, prior, rng)
    raise ValueError(f"unknown agent kind {kind!r}; expected one of {AGENT_KINDS}")
