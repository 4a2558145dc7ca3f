"""Exact recursive posterior for the K-armed Gaussian hierarchy.

Upward likelihood messages are kept in precision form (precision,
precision * mean). The mean form breaks down for empty subtrees, while the
precision form extends continuously to zero observations: a node with no
data below it sends the zero message and drops out of every sum.

For a node with conditional prior variance s0 and aggregated below-evidence
(P, W), where P sums child message precisions (or count / noise_var at a
leaf) and W the matching weighted means:

    message to parent:   prec = P * l0 / (P + l0),  wmean = l0 / (P + l0) * W
    posterior | parent:  precision l0 + P, mean (l0 * parent + W) / (l0 + P)

with l0 = 1 / s0. Both follow from completing the square in the product of
the conditional prior and the subtree likelihood.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .hierarchy import ROOT, Hierarchy, HierarchyError, PriorSpec

__all__ = [
    "LeafStats",
    "NodeMessage",
    "PosteriorParams",
    "ZERO_MESSAGE",
    "leaf_message",
    "internal_message",
    "node_posterior",
    "node_posterior_params",
    "PosteriorState",
]


class LeafStats(NamedTuple):
    count: int
    reward_sum: float


class NodeMessage(NamedTuple):
    precision: float
    weighted_mean: float


ZERO_MESSAGE = NodeMessage(0.0, 0.0)


@dataclass(frozen=True)
class PosteriorParams:
    """Conditional posterior of a node given its parent's value.

    The law is N(slope * parent_value + intercept, variance). The slope is
    variance / prior_variance and always lies in (0, 1].
    """

    slope: float
    intercept: float
    variance: float

    def mean(self, parent_value: float) -> float:
        return self.slope * parent_value + self.intercept

    def moments(self, parent_value: float) -> tuple[float, float]:
        return self.mean(parent_value), self.variance


def _check_variance(sigma0_sq: float) -> None:
    if sigma0_sq <= 0:
        raise ValueError(f"prior variance must be positive, got {sigma0_sq}")


def _shrink(prec: float, wmean: float, lam0: float) -> NodeMessage:
    # Shared recursion step: fold below-evidence through one prior edge.
    denom = prec + lam0
    return NodeMessage(prec * lam0 / denom, lam0 / denom * wmean)


def leaf_message(stats: LeafStats, sigma0_sq: float, sigma_sq: float) -> NodeMessage:
    """Upward message of a leaf from its reward tally.

    Equals the density of the data seen as a likelihood for the parent value,
    with variance sigma0_sq + sigma_sq / count; zero message when count is 0.
    """
    _check_variance(sigma0_sq)
    if sigma_sq <= 0:
        raise ValueError(f"noise variance must be positive, got {sigma_sq}")
    if stats.count < 0:
        raise ValueError(f"negative observation count {stats.count}")
    return _shrink(stats.count / sigma_sq, stats.reward_sum / sigma_sq, 1.0 / sigma0_sq)


def internal_message(child_messages: Iterable[NodeMessage], sigma0_sq: float) -> NodeMessage:
    """Upward message of an internal node from its children's messages."""
    _check_variance(sigma0_sq)
    prec = wmean = 0.0
    for msg in child_messages:
        if msg.precision < 0:
            raise ValueError(f"message precision must be nonnegative, got {msg.precision}")
        prec += msg.precision
        wmean += msg.weighted_mean
    return _shrink(prec, wmean, 1.0 / sigma0_sq)


def node_posterior_params(
    child_messages: Iterable[NodeMessage], sigma0_sq: float
) -> PosteriorParams:
    """Affine form of the conditional posterior given the parent's value.

    child_messages carries the node's below-evidence: the children's upward
    messages for an internal node, or the single (count / noise_var,
    reward_sum / noise_var) data message for a leaf.
    """
    _check_variance(sigma0_sq)
    lam0 = 1.0 / sigma0_sq
    prec = lam0
    wmean = 0.0
    for msg in child_messages:
        prec += msg.precision
        wmean += msg.weighted_mean
    return PosteriorParams(slope=lam0 / prec, intercept=wmean / prec, variance=1.0 / prec)


def node_posterior(
    parent_value: float, child_messages: Iterable[NodeMessage], sigma0_sq: float
) -> tuple[float, float]:
    """Concrete (mean, variance) of the conditional posterior at a parent value."""
    return node_posterior_params(child_messages, sigma0_sq).moments(parent_value)


class PosteriorState:
    """Sufficient statistics plus cached upward messages for one agent.

    All caches are flat arrays indexed by node id (slot 0 unused) so that the
    sampling pass can run level by level with vectorized reads. update_path
    refreshes only the acted leaf's root path, recomputing each path node's
    evidence from its children's cached messages; the result is identical to
    a full bottom-up rebuild because the per-node reductions see the same
    operands in the same order.

    Single-writer: update_path mutates in place, reads are safe between
    updates but not during one.
    """

    def __init__(self, hierarchy: Hierarchy, prior: PriorSpec):
        if not prior.is_scalar:
            raise HierarchyError("PosteriorState requires a scalar prior; see LinearPosteriorState")
        self.hierarchy = hierarchy
        self.prior = prior
        self.noise_prec = 1.0 / prior.noise_std**2
        self.hyper_mean = float(prior.hyper_mean)
        self.lam0 = 1.0 / prior.variance_vector(hierarchy)
        n = hierarchy.num_nodes
        self.counts = np.zeros(n + 1)
        self.reward_sums = np.zeros(n + 1)
        self.ev_prec = np.zeros(n + 1)
        self.ev_wmean = np.zeros(n + 1)
        self.msg_prec = np.zeros(n + 1)
        self.msg_wmean = np.zeros(n + 1)

    @property
    def num_nodes(self) -> int:
        return self.hierarchy.num_nodes

    def leaf_stats(self, leaf: int) -> LeafStats:
        if not self.hierarchy.is_leaf(leaf):
            raise HierarchyError(f"node {leaf} is not a leaf")
        return LeafStats(int(self.counts[leaf]), float(self.reward_sums[leaf]))

    def message(self, node: int) -> NodeMessage:
        """Cached upward message of a non-root node."""
        self.hierarchy._check_node(node)
        if node == ROOT:
            raise HierarchyError("the root sends no upward message")
        return NodeMessage(float(self.msg_prec[node]), float(self.msg_wmean[node]))

    def node_params(self, node: int) -> PosteriorParams:
        """Conditional posterior coefficients of a node given its parent.

        For the root the slope applies to the hyper-prior mean.
        """
        self.hierarchy._check_node(node)
        lam0 = self.lam0[node]
        prec = lam0 + self.ev_prec[node]
        return PosteriorParams(
            slope=float(lam0 / prec),
            intercept=float(self.ev_wmean[node] / prec),
            variance=float(1.0 / prec),
        )

    def posterior_precisions(self) -> np.ndarray:
        """Conditional posterior precision of every node, shape (num_nodes + 1,)."""
        out = self.lam0 + self.ev_prec
        out[0] = np.nan
        return out

    def update_path(self, action: int, reward: float) -> None:
        """Record one reward and refresh messages along the leaf's root path."""
        hier = self.hierarchy
        if not hier.is_leaf(action):
            raise HierarchyError(f"action {action} is not a leaf")
        if not np.isfinite(reward):
            raise ValueError(f"reward must be finite, got {reward}")
        self.counts[action] += 1.0
        self.reward_sums[action] += reward
        self.ev_prec[action] = self.counts[action] * self.noise_prec
        self.ev_wmean[action] = self.reward_sums[action] * self.noise_prec
        node = action
        while node != ROOT:
            lam0 = self.lam0[node]
            denom = self.ev_prec[node] + lam0
            self.msg_prec[node] = self.ev_prec[node] * lam0 / denom
            self.msg_wmean[node] = lam0 / denom * self.ev_wmean[node]
            node = int(hier.parent[node])
            ch = hier.children[node]
            self.ev_prec[node] = self.msg_prec[ch].sum()
            self.ev_wmean[node] = self.msg_wmean[ch].sum()

    def marginal_action_moments(self, action: int) -> tuple[float, float]:
        """Marginal posterior (mean, variance) of a leaf's parameter.

        Composes the affine conditionals down the root path: the marginal
        variance accumulates each node's conditional variance scaled by the
        squared slopes below it, and the mean chains slope * mean + intercept.
        """
        hier = self.hierarchy
        if not hier.is_leaf(action):
            raise HierarchyError(f"action {action} is not a leaf")
        lam0 = self.lam0[ROOT]
        prec = lam0 + self.ev_prec[ROOT]
        mean = (lam0 * self.hyper_mean + self.ev_wmean[ROOT]) / prec
        var = 1.0 / prec
        for node in hier.path_to_root(action)[1:]:
            lam0 = self.lam0[node]
            prec = lam0 + self.ev_prec[node]
            slope = lam0 / prec
            mean = slope * mean + self.ev_wmean[node] / prec
            var = slope * slope * var + 1.0 / prec
        return float(mean), float(var)

    def rebuild(self) -> "PosteriorState":
        """Fresh state recomputed bottom-up from the raw tallies."""
        out = PosteriorState(self.hierarchy, self.prior)
        out.counts[:] = self.counts
        out.reward_sums[:] = self.reward_sums
        hier = self.hierarchy
        leaves = hier.action_nodes
        out.ev_prec[leaves] = out.counts[leaves] * out.noise_prec
        out.ev_wmean[leaves] = out.reward_sums[leaves] * out.noise_prec
        order = sorted(range(2, hier.num_nodes + 1), key=lambda i: int(hier.height[i]))
        for node in order:
            ch = hier.children[node]
            if ch.size:
                out.ev_prec[node] = out.msg_prec[ch].sum()
                out.ev_wmean[node] = out.msg_wmean[ch].sum()
            lam0 = out.lam0[node]
            denom = out.ev_prec[node] + lam0
            out.msg_prec[node] = out.ev_prec[node] * lam0 / denom
            out.msg_wmean[node] = lam0 / denom * out.ev_wmean[node]
        ch = hier.children[ROOT]
        out.ev_prec[ROOT] = out.msg_prec[ch].sum()
        out.ev_wmean[ROOT] = out.msg_wmean[ch].sum()
        return out
