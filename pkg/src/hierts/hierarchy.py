"""Rooted trees and Gaussian prior specifications for structured bandits.

A hierarchy is a rooted tree over nodes 1..num_nodes with the root fixed at
index 1. Leaves are the playable actions. Every node carries a conditional
prior variance (scalar) or covariance (d x d), and the model parameter of a
node is drawn around its parent's parameter with that variance.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "HierarchyError",
    "Hierarchy",
    "PriorSpec",
    "build_hierarchy",
    "balanced_tree",
    "constant_prior",
    "doubling_prior",
    "marginal_prior_variance",
    "marginal_prior_covariance",
    "flatten_hierarchy",
    "load_tree_json",
    "tree_to_dict",
    "save_tree_json",
]

ROOT = 1

# Positive definiteness is accepted when the smallest eigenvalue clears this.
_SPD_TOL = 1e-10


class HierarchyError(ValueError):
    """A tree or prior specification violates a structural constraint."""


@dataclass(frozen=True, eq=False)
class Hierarchy:
    """Immutable rooted tree with precomputed traversal structure.

    Attributes:
        num_nodes: total node count |V|; node ids are 1..num_nodes.
        parent: int array of shape (num_nodes + 1,), parent[1] = 0.
        children: per-node int arrays; index 0 unused.
        height: int array; leaves have height 0, root has the tree height.
        tree_height: height of the root.
        branching_factor: largest observed out-degree.
        action_nodes: leaf ids in ascending order; these are the actions.
        paths: per-node root-to-node id arrays (paths[a][0] == 1).
        sampling_levels: non-root node ids grouped by height, descending,
            so parents always appear in an earlier group.
    """

    num_nodes: int
    parent: np.ndarray
    children: tuple[np.ndarray, ...]
    height: np.ndarray
    tree_height: int
    branching_factor: int
    action_nodes: np.ndarray
    paths: tuple[np.ndarray, ...]
    sampling_levels: tuple[np.ndarray, ...]
    action_index: np.ndarray = field(repr=False)

    @property
    def num_actions(self) -> int:
        return int(self.action_nodes.size)

    def is_leaf(self, node: int) -> bool:
        self._check_node(node)
        return self.children[node].size == 0

    def path_to_root(self, node: int) -> np.ndarray:
        """Ids on the root-to-node path, root first, node last."""
        self._check_node(node)
        return self.paths[node]

    def lca(self, a: int, b: int) -> int:
        """Lowest common ancestor of two nodes."""
        pa, pb = self.path_to_root(a), self.path_to_root(b)
        m = min(pa.size, pb.size)
        common = np.nonzero(pa[:m] == pb[:m])[0]
        return int(pa[common[-1]])

    def subtree_leaves(self, node: int) -> np.ndarray:
        """Leaf ids below (or equal to) the given node, ascending."""
        self._check_node(node)
        out, stack = [], [node]
        while stack:
            cur = stack.pop()
            ch = self.children[cur]
            if ch.size == 0:
                out.append(cur)
            else:
                stack.extend(int(c) for c in ch)
        return np.array(sorted(out), dtype=np.int64)

    def _check_node(self, node: int) -> None:
        if not 1 <= node <= self.num_nodes:
            raise HierarchyError(f"unknown node id {node}; valid ids are 1..{self.num_nodes}")


def build_hierarchy(parent_map: dict[int, int]) -> Hierarchy:
    """Build and validate a Hierarchy from a child -> parent map.

    The map must cover nodes 2..N exactly (the root, node 1, has no parent).
    Internal nodes need at least two children; the tree must reach every node
    from the root.
    """
    if not parent_map:
        raise HierarchyError("tree must contain at least two action nodes besides the root")
    try:
        items = {int(k): int(v) for k, v in parent_map.items()}
    except (TypeError, ValueError) as exc:
        raise HierarchyError(f"parent map entries must be integers: {exc}") from None
    if ROOT in items:
        raise HierarchyError("the root (index 1) cannot appear as a child in the parent map")
    n = len(items) + 1
    if sorted(items) != list(range(2, n + 1)):
        missing = sorted(set(range(2, n + 1)) - set(items))
        extra = sorted(set(items) - set(range(2, n + 1)))
        raise HierarchyError(
            f"node ids must be exactly 1..{n}; missing parents for {missing}, out-of-range ids {extra}"
        )
    parent = np.zeros(n + 1, dtype=np.int64)
    for child, par in items.items():
        if not 1 <= par <= n:
            raise HierarchyError(f"node {child} references unknown parent {par}")
        parent[child] = par

    child_lists: list[list[int]] = [[] for _ in range(n + 1)]
    for child in range(2, n + 1):
        child_lists[parent[child]].append(child)
    for node in range(1, n + 1):
        if len(child_lists[node]) == 1:
            raise HierarchyError(f"node {node} has exactly one child; internal nodes need at least two")

    # Reachability from the root; anything unreached sits on a cycle.
    seen = np.zeros(n + 1, dtype=bool)
    seen[ROOT] = True
    frontier = [ROOT]
    order = [ROOT]
    while frontier:
        nxt = []
        for node in frontier:
            for ch in child_lists[node]:
                seen[ch] = True
                nxt.append(ch)
        order.extend(nxt)
        frontier = nxt
    if not seen[1:].all():
        bad = [i for i in range(1, n + 1) if not seen[i]]
        raise HierarchyError(f"nodes {bad} are not reachable from the root (cycle in parent map)")

    height = np.zeros(n + 1, dtype=np.int64)
    for node in reversed(order):
        ch = child_lists[node]
        if ch:
            height[node] = 1 + max(int(height[c]) for c in ch)
    if height[ROOT] == 0:
        raise HierarchyError("tree must contain at least two action nodes besides the root")

    children = tuple(np.array(ch, dtype=np.int64) for ch in child_lists)
    leaves = np.array([i for i in range(1, n + 1) if children[i].size == 0], dtype=np.int64)
    action_index = np.full(n + 1, -1, dtype=np.int64)
    action_index[leaves] = np.arange(leaves.size)

    paths: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * (n + 1)
    for node in order:
        if node == ROOT:
            paths[node] = np.array([ROOT], dtype=np.int64)
        else:
            paths[node] = np.append(paths[parent[node]], node)

    by_height: dict[int, list[int]] = {}
    for node in range(2, n + 1):
        by_height.setdefault(int(height[node]), []).append(node)
    sampling_levels = tuple(
        np.array(sorted(by_height[h]), dtype=np.int64) for h in sorted(by_height, reverse=True)
    )

    for arr in (parent, height, leaves, action_index):
        arr.setflags(write=False)

    return Hierarchy(
        num_nodes=n,
        parent=parent,
        children=children,
        height=height,
        tree_height=int(height[ROOT]),
        branching_factor=max(c.size for c in children),
        action_nodes=leaves,
        paths=tuple(paths),
        sampling_levels=sampling_levels,
        action_index=action_index,
    )


def balanced_tree(branching: int, tree_height: int) -> Hierarchy:
    """Complete b-ary tree of the given height with breadth-first numbering.

    Node 1 is the root, nodes at depth t occupy one contiguous index block,
    and the last branching**tree_height ids are the leaves.
    """
    if branching < 2:
        raise HierarchyError(f"branching factor must be at least 2, got {branching}")
    if tree_height < 1:
        raise HierarchyError(f"tree height must be at least 1, got {tree_height}")
    parents: dict[int, int] = {}
    level_start = 1
    level_size = 1
    for _ in range(tree_height):
        next_start = level_start + level_size
        for j in range(level_size * branching):
            parents[next_start + j] = level_start + j // branching
        level_start, level_size = next_start, level_size * branching
    return build_hierarchy(parents)


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Gaussian prior for a hierarchy.

    node_variance maps every node id to its conditional prior variance, either
    a positive float (K-armed model) or a symmetric positive definite matrix
    (linear model). hyper_mean is the prior mean of the root parameter and
    noise_std the reward noise level.
    """

    hyper_mean: float | np.ndarray
    node_variance: dict[int, float | np.ndarray]
    noise_std: float

    def __post_init__(self) -> None:
        if not self.node_variance:
            raise HierarchyError("node_variance must not be empty")
        if not np.isfinite(self.noise_std) or self.noise_std <= 0:
            raise HierarchyError(f"noise_std must be positive, got {self.noise_std}")
        normalized: dict[int, float | np.ndarray] = {}
        dims = set()
        for node, value in self.node_variance.items():
            arr = np.asarray(value, dtype=np.float64)
            if arr.ndim == 0:
                v = float(arr)
                if not np.isfinite(v) or v <= 0:
                    raise HierarchyError(f"node {node}: prior variance must be positive, got {v}")
                normalized[int(node)] = v
                dims.add(0)
            elif arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
                if not np.isfinite(arr).all():
                    raise HierarchyError(f"node {node}: covariance has non-finite entries")
                if not np.allclose(arr, arr.T, atol=1e-8):
                    raise HierarchyError(f"node {node}: covariance is not symmetric")
                arr = 0.5 * (arr + arr.T)
                if np.linalg.eigvalsh(arr).min() <= _SPD_TOL:
                    raise HierarchyError(f"node {node}: covariance is not positive definite")
                arr.setflags(write=False)
                normalized[int(node)] = arr
                dims.add(arr.shape[0])
            else:
                raise HierarchyError(f"node {node}: variance must be a scalar or a square matrix")
        if len(dims) != 1:
            raise HierarchyError(f"mixed prior dimensions {sorted(dims)}; all nodes must agree")
        d = dims.pop()
        mean = np.asarray(self.hyper_mean, dtype=np.float64)
        if d == 0:
            if mean.ndim != 0:
                raise HierarchyError("scalar priors require a scalar hyper_mean")
            object.__setattr__(self, "hyper_mean", float(mean))
        else:
            if mean.ndim == 0:
                mean = np.full(d, float(mean))
            if mean.shape != (d,):
                raise HierarchyError(f"hyper_mean must have shape ({d},), got {mean.shape}")
            mean.setflags(write=False)
            object.__setattr__(self, "hyper_mean", mean)
        object.__setattr__(self, "node_variance", normalized)

    @property
    def is_scalar(self) -> bool:
        return isinstance(next(iter(self.node_variance.values())), float)

    @property
    def dim(self) -> int:
        value = next(iter(self.node_variance.values()))
        return 1 if isinstance(value, float) else value.shape[0]

    def variance_vector(self, hierarchy: Hierarchy) -> np.ndarray:
        """Scalar conditional variances as a (num_nodes + 1,) array; slot 0 unused."""
        if not self.is_scalar:
            raise HierarchyError("variance_vector requires a scalar prior")
        out = np.full(hierarchy.num_nodes + 1, np.nan)
        for node in range(1, hierarchy.num_nodes + 1):
            out[node] = self._get(node)
        return out

    def covariance_stack(self, hierarchy: Hierarchy) -> np.ndarray:
        """Conditional covariances stacked to (num_nodes + 1, d, d); slot 0 is identity."""
        d = self.dim
        out = np.empty((hierarchy.num_nodes + 1, d, d))
        out[0] = np.eye(d)
        for node in range(1, hierarchy.num_nodes + 1):
            value = self._get(node)
            out[node] = value if not self.is_scalar else np.array([[value]])
        return out

    def _get(self, node: int):
        try:
            return self.node_variance[node]
        except KeyError:
            raise HierarchyError(f"prior is missing a variance for node {node}") from None


def constant_prior(
    hierarchy: Hierarchy, value: float = 1.0, noise_std: float = 1.0, hyper_mean: float = 0.0
) -> PriorSpec:
    """Same conditional variance at every node."""
    variances = {node: float(value) for node in range(1, hierarchy.num_nodes + 1)}
    return PriorSpec(hyper_mean=hyper_mean, node_variance=variances, noise_std=noise_std)


def doubling_prior(
    hierarchy: Hierarchy, noise_std: float = 1.0, hyper_mean: float = 0.0
) -> PriorSpec:
    """Conditional variance 2**height(i), doubling from the leaves upward."""
    variances = {
        node: float(2.0 ** int(hierarchy.height[node])) for node in range(1, hierarchy.num_nodes + 1)
    }
    return PriorSpec(hyper_mean=hyper_mean, node_variance=variances, noise_std=noise_std)


def marginal_prior_variance(hierarchy: Hierarchy, prior: PriorSpec, action: int) -> float:
    """Marginal prior variance of a leaf: the sum of variances on its root path."""
    if not hierarchy.is_leaf(action):
        raise HierarchyError(f"node {action} is not a leaf")
    if not prior.is_scalar:
        raise HierarchyError("marginal_prior_variance requires a scalar prior")
    return float(sum(prior.node_variance[int(i)] for i in hierarchy.path_to_root(action)))


def marginal_prior_covariance(hierarchy: Hierarchy, prior: PriorSpec, action: int) -> np.ndarray:
    """Matrix analog of marginal_prior_variance for linear priors."""
    if not hierarchy.is_leaf(action):
        raise HierarchyError(f"node {action} is not a leaf")
    d = prior.dim
    total = np.zeros((d, d))
    for i in hierarchy.path_to_root(action):
        value = prior.node_variance[int(i)]
        total += value if not prior.is_scalar else np.array([[value]])
    return total


def flatten_hierarchy(
    hierarchy: Hierarchy, prior: PriorSpec
) -> tuple[Hierarchy, PriorSpec, dict[int, int]]:
    """Collapse a tree to two levels while keeping every leaf's marginal prior.

    The flat tree keeps the root variance and gives each leaf the remainder
    of its original marginal (marginal minus root), so the prior over actions
    is unchanged but all structure between root and leaves is discarded.
    Returns (flat_hierarchy, flat_prior, original_leaf -> flat_leaf map).
    """
    leaves = [int(a) for a in hierarchy.action_nodes]
    flat = build_hierarchy({j + 2: 1 for j in range(len(leaves))})
    to_flat = {leaf: j + 2 for j, leaf in enumerate(leaves)}
    root_var = prior.node_variance[ROOT]
    variances: dict[int, float | np.ndarray] = {ROOT: root_var}
    for leaf in leaves:
        if prior.is_scalar:
            variances[to_flat[leaf]] = marginal_prior_variance(hierarchy, prior, leaf) - root_var
        else:
            variances[to_flat[leaf]] = marginal_prior_covariance(hierarchy, prior, leaf) - root_var
    flat_prior = PriorSpec(
        hyper_mean=prior.hyper_mean, node_variance=variances, noise_std=prior.noise_std
    )
    return flat, flat_prior, to_flat


def tree_to_dict(
    hierarchy: Hierarchy,
    prior: PriorSpec | None = None,
    label_map: dict[str, int] | None = None,
) -> dict:
    """JSON-serializable description of a tree, optionally with prior and labels."""
    doc: dict = {
        "parents": {str(i): int(hierarchy.parent[i]) for i in range(2, hierarchy.num_nodes + 1)}
    }
    if prior is not None:
        doc["prior"] = {
            "hyper_mean": prior.hyper_mean
            if prior.is_scalar
            else [float(v) for v in np.asarray(prior.hyper_mean)],
            "noise_std": prior.noise_std,
            "node_variance": {
                str(node): (value if isinstance(value, float) else np.asarray(value).tolist())
                for node, value in prior.node_variance.items()
            },
        }
    if label_map is not None:
        doc["label_map"] = {str(k): int(v) for k, v in label_map.items()}
    return doc


def save_tree_json(
    path: str | Path,
    hierarchy: Hierarchy,
    prior: PriorSpec | None = None,
    label_map: dict[str, int] | None = None,
) -> None:
    Path(path).write_text(json.dumps(tree_to_dict(hierarchy, prior, label_map), indent=2) + "\n")


def load_tree_json(path: str | Path) -> tuple[Hierarchy, PriorSpec | None, dict[str, int] | None]:
    """Load a tree file; returns (hierarchy, prior or None, label_map or None)."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise HierarchyError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict) or "parents" not in doc:
        raise HierarchyError(f"{path}: expected an object with a 'parents' section")
    hierarchy = build_hierarchy(doc["parents"])
    prior = None
    if "prior" in doc:
        spec = doc["prior"]
        for key in ("hyper_mean", "noise_std", "node_variance"):
            if key not in spec:
                raise HierarchyError(f"{path}: prior section is missing '{key}'")
        try:
            variances = {int(k): v for k, v in spec["node_variance"].items()}
        except (TypeError, ValueError, AttributeError):
            raise HierarchyError(f"{path}: node_variance must map node ids to variances") from None
        mean = spec["hyper_mean"]
        prior = PriorSpec(
            hyper_mean=np.asarray(mean, dtype=np.float64) if isinstance(mean, list) else float(mean),
            node_variance=variances,
            noise_std=float(spec["noise_std"]),
        )
        missing = [n for n in range(1, hierarchy.num_nodes + 1) if n not in prior.node_variance]
        if missing:
            raise HierarchyError(f"{path}: prior is missing variances for nodes {missing}")
    label_map = None
    if "label_map" in doc:
        label_map = {str(k): int(v) for k, v in doc["label_map"].items()}
        for label, node in label_map.items():
            if not 1 <= node <= hierarchy.num_nodes or not hierarchy.is_leaf(node):
                raise HierarchyError(f"{path}: label '{label}' maps to non-leaf node {node}")
    return hierarchy, prior, label_map
