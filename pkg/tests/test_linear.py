"""Linear-model posterior: scalar reduction, Woodbury identities, oracle agreement."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hierts import (
    ConditioningError,
    LeafGram,
    LinearPosteriorState,
    PosteriorState,
    PriorSpec,
    action_marginals,
    balanced_tree,
    condition,
    constant_prior,
    internal_message_linear,
    joint_prior,
    leaf_message_linear,
    node_posterior_params_linear,
)
from hierts.hierarchy import HierarchyError
from hierts.linear import NodeMessageVec, _shrink_linear


def _matrix_prior(tree, value=1.0, noise_std=1.0, dim=1, hyper_mean=0.0):
    cov = {node: value * np.eye(dim) for node in range(1, tree.num_nodes + 1)}
    return PriorSpec(hyper_mean=np.full(dim, hyper_mean), node_variance=cov, noise_std=noise_std)


def test_d1_reduces_to_scalar():
    """With d=1 and unit contexts the linear recursion is the scalar one."""
    tree = balanced_tree(2, 2)
    scalar = PosteriorState(tree, constant_prior(tree, 1.3, noise_std=0.7, hyper_mean=0.2))
    linear = LinearPosteriorState(tree, _matrix_prior(tree, 1.3, noise_std=0.7, dim=1, hyper_mean=0.2))
    rng = np.random.default_rng(3)
    one = np.ones(1)
    for _ in range(50):
        leaf = int(rng.choice(tree.action_nodes))
        y = float(rng.standard_normal())
        scalar.update_path(leaf, y)
        linear.update_path(leaf, one, y)
    for leaf in tree.action_nodes:
        ms, vs = scalar.marginal_action_moments(int(leaf))
        mv, cv = linear.marginal_action_moments(int(leaf))
        assert mv[0] == pytest.approx(ms, rel=1e-12, abs=1e-12)
        assert cv[0, 0] == pytest.approx(vs, rel=1e-12)
    for node in range(2, tree.num_nodes + 1):
        assert linear.msg_prec[node][0, 0] == pytest.approx(scalar.msg_prec[node], rel=1e-12, abs=1e-15)
        assert linear.msg_wmean[node][0] == pytest.approx(scalar.msg_wmean[node], rel=1e-12, abs=1e-15)


def test_shrink_matches_textbook_when_invertible():
    """P - P(P+L)^-1 P equals (Sigma0 + P^-1)^-1 whenever P is invertible."""
    rng = np.random.default_rng(1)
    for _ in range(10):
        d = int(rng.integers(1, 5))
        a = rng.standard_normal((d, d + 2))
        prec = a @ a.T / d + 0.1 * np.eye(d)
        b = rng.standard_normal((d, d + 1))
        sigma0 = b @ b.T / d + 0.2 * np.eye(d)
        lam0 = np.linalg.inv(sigma0)
        wmean = rng.standard_normal(d)
        msg = _shrink_linear(prec, wmean, 0.5 * (lam0 + lam0.T))
        textbook = np.linalg.inv(sigma0 + np.linalg.inv(prec))
        assert np.allclose(msg.precision, textbook, rtol=1e-9, atol=1e-11)
        # the weighted mean folds the same shrinkage: Lam0 (P+L)^-1 W
        expect_w = lam0 @ np.linalg.solve(prec + lam0, wmean)
        assert np.allclose(msg.weighted_mean, expect_w, rtol=1e-9, atol=1e-11)


def test_shrink_handles_singular_evidence():
    # rank-1 Gram from a single context: textbook form is undefined, the
    # Woodbury form is not
    x = np.array([1.0, 2.0, 0.0])
    prec = np.outer(x, x)
    msg = _shrink_linear(prec, x * 0.7, np.eye(3))
    assert np.isfinite(msg.precision).all()
    eig = np.linalg.eigvalsh(msg.precision)
    assert eig.min() >= -1e-12  # PSD preserved
    assert eig.max() < 1.0  # bounded by the edge precision


def test_leaf_and_internal_messages_zero_data():
    sigma0 = np.eye(2) * 2.0
    msg = leaf_message_linear(LeafGram(np.zeros((2, 2)), np.zeros(2), 0), sigma0, 1.0)
    assert np.allclose(msg.precision, 0.0) and np.allclose(msg.weighted_mean, 0.0)
    msg2 = internal_message_linear([], sigma0)
    assert np.allclose(msg2.precision, 0.0) and np.allclose(msg2.weighted_mean, 0.0)
    with pytest.raises(ValueError):
        leaf_message_linear(LeafGram(np.zeros((2, 2)), np.zeros(2), 0), sigma0, 0.0)


def test_node_posterior_params_prior_case():
    sigma0 = np.array([[2.0, 0.5], [0.5, 1.0]])
    params = node_posterior_params_linear([], sigma0)
    assert np.allclose(params.covariance, sigma0, rtol=1e-12)
    assert np.allclose(params.slope, np.eye(2), atol=1e-12)
    assert np.allclose(params.intercept, 0.0)


def test_update_path_matches_rebuild(b2h2, linear_prior):
    state = LinearPosteriorState(b2h2, linear_prior)
    rng = np.random.default_rng(9)
    for _ in range(40):
        leaf = int(rng.choice(b2h2.action_nodes))
        x = rng.standard_normal(3)
        state.update_path(leaf, x, float(rng.standard_normal()))
    fresh = state.rebuild()
    assert np.allclose(state.msg_prec, fresh.msg_prec, atol=1e-12)
    assert np.allclose(state.msg_wmean, fresh.msg_wmean, atol=1e-12)
    assert np.allclose(state.post_cov, fresh.post_cov, atol=1e-12)
    assert np.allclose(state.slope, fresh.slope, atol=1e-12)
    assert np.allclose(state.intercept, fresh.intercept, atol=1e-12)


def test_update_path_validates_inputs(b2h2, linear_prior):
    state = LinearPosteriorState(b2h2, linear_prior)
    with pytest.raises(HierarchyError):
        state.update_path(2, np.zeros(3), 1.0)
    with pytest.raises(ValueError):
        state.update_path(4, np.zeros(2), 1.0)
    with pytest.raises(ValueError):
        state.update_path(4, np.array([np.inf, 0, 0]), 1.0)
    with pytest.raises(ValueError):
        state.update_path(4, np.zeros(3), float("nan"))


def test_scalar_prior_rejected(b2h2, b2h2_prior):
    with pytest.raises(HierarchyError):
        LinearPosteriorState(b2h2, b2h2_prior)


def test_marginals_match_dense_oracle(b2h2, linear_prior):
    state = LinearPosteriorState(b2h2, linear_prior)
    joint = joint_prior(b2h2, linear_prior)
    rng = np.random.default_rng(4)
    sigma_sq = linear_prior.noise_std**2
    for _ in range(30):
        leaf = int(rng.choice(b2h2.action_nodes))
        x = rng.standard_normal(3)
        y = float(rng.standard_normal())
        state.update_path(leaf, x, y)
        joint = condition(joint, [(leaf, x, y)], sigma_sq)
    marg = action_marginals(joint)
    for leaf in b2h2.action_nodes:
        mean, cov = state.marginal_action_moments(int(leaf))
        om, oc = marg[int(leaf)]
        assert np.allclose(mean, om, rtol=1e-9, atol=1e-9)
        assert np.allclose(cov, oc, rtol=1e-9, atol=1e-11)


def test_posterior_caches_stay_spd(b2h2, linear_prior):
    state = LinearPosteriorState(b2h2, linear_prior)
    rng = np.random.default_rng(13)
    # repeated identical contexts keep the per-leaf Gram singular for a while
    x = np.array([1.0, -1.0, 0.5])
    for k in range(20):
        leaf = int(b2h2.action_nodes[k % 4])
        state.update_path(leaf, x if k % 3 else rng.standard_normal(3), 0.3)
        for node in range(1, b2h2.num_nodes + 1):
            assert np.linalg.eigvalsh(state.post_cov[node]).min() > 0
            assert np.linalg.eigvalsh(state.msg_prec[node]).min() >= -1e-12
            # chol is kept in sync with the covariance
            assert np.allclose(
                state.post_chol[node] @ state.post_chol[node].T, state.post_cov[node], atol=1e-12
            )


def test_conditioning_error_is_raised():
    a = np.diag([1.0, 1e-14])
    with pytest.raises(ConditioningError):
        _shrink_linear(np.zeros((2, 2)), np.zeros(2), a)


@given(
    seed=st.integers(0, 2**16),
    n_obs=st.integers(0, 12),
    dim=st.integers(1, 3),
)
@settings(max_examples=40, deadline=None)
def test_marginal_covariance_psd_and_shrinking(seed, n_obs, dim):
    """Marginal covariances stay PSD and never grow along any direction."""
    rng = np.random.default_rng(seed)
    tree = balanced_tree(2, 1)
    prior = _matrix_prior(tree, 1.0, noise_std=1.0, dim=dim)
    state = LinearPosteriorState(tree, prior)
    prev = {int(a): state.marginal_action_moments(int(a))[1] for a in tree.action_nodes}
    for _ in range(n_obs):
        leaf = int(rng.choice(tree.action_nodes))
        state.update_path(leaf, rng.standard_normal(dim), float(rng.standard_normal()))
        for a in tree.action_nodes:
            cov = state.marginal_action_moments(int(a))[1]
            assert np.linalg.eigvalsh(cov).min() > -1e-12
            gap = np.linalg.eigvalsh(prev[int(a)] - cov).min()
            assert gap >= -1e-9
            prev[int(a)] = cov
