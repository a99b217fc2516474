import numpy as np
import pytest

from bgcn import learner
from bgcn.distances import RestrictedDistance, knn_pairs, z1

TIGHT = dict(tol=1e-12, max_iter=400_000, check_every=10)


def random_distance(n, rng, scale=2.0):
    z = rng.random((n, n)) * scale
    z = 0.5 * (z + z.T)
    np.fill_diagonal(z, 0.0)
    return z


def naive_objective(a, z, alpha, beta):
    n = a.shape[0]
    total = 0.0
    for i in range(n):
        deg = 0.0
        for j in range(n):
            total += a[i, j] * z[i, j] + beta * a[i, j] ** 2
            deg += a[i, j]
        if deg <= 0:
            return float("inf")
        total -= alpha * np.log(deg)
    return total


# --- objective ---------------------------------------------------------------

def test_objective_hand_value():
    a = np.array([[0.0, 0.5], [0.5, 0.0]])
    z = np.array([[0.0, 1.0], [1.0, 0.0]])
    got = learner.objective(a, z, 1.0, 1.0)
    assert got == pytest.approx(1.5 + 2.0 * np.log(2.0), abs=1e-12)  # 2.8863


def test_objective_isolated_node_is_infinite():
    a = np.zeros((3, 3))
    a[0, 1] = a[1, 0] = 1.0
    assert learner.objective(a, np.zeros((3, 3)), 1.0, 1.0) == float("inf")


def test_objective_matches_naive_oracle():
    rng = np.random.default_rng(0)
    z = random_distance(5, rng)
    a = rng.random((5, 5))
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    got = learner.objective(a, z, 1.7, 0.3)
    assert got == pytest.approx(naive_objective(a, z, 1.7, 0.3), abs=1e-12)


def test_objective_shape_mismatch():
    with pytest.raises(ValueError):
        learner.objective(np.zeros((2, 2)), np.zeros((3, 3)), 1.0, 1.0)


# --- solver closed forms and oracle agreement ---------------------------------

def test_two_node_unit_distance_closed_form():
    z = np.array([[0.0, 1.0], [1.0, 0.0]])
    res = learner.learn_graph(z, learner.GraphLearnConfig(**TIGHT))
    assert res.graph.weights[0] == pytest.approx(0.5, abs=1e-8)
    assert res.converged


def test_two_node_zero_distance_closed_form():
    res = learner.learn_graph(np.zeros((2, 2)), learner.GraphLearnConfig(**TIGHT))
    assert res.graph.weights[0] == pytest.approx(np.sqrt(8.0) / 4.0, abs=1e-8)


def test_oracle_closed_forms():
    z = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert learner.learn_graph_oracle(z, 1, 1).graph.weights[0] == pytest.approx(0.5, abs=1e-8)
    got = learner.learn_graph_oracle(np.zeros((2, 2)), 1, 1).graph.weights[0]
    assert got == pytest.approx(np.sqrt(8.0) / 4.0, abs=1e-8)


def test_solver_matches_oracle_on_random_instances():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n = int(rng.integers(2, 9))
        z = random_distance(n, rng)
        alpha, beta = rng.uniform(0.2, 4.0), rng.uniform(0.2, 4.0)
        res = learner.learn_graph(z, learner.GraphLearnConfig(alpha=alpha, beta=beta, **TIGHT))
        ref = learner.learn_graph_oracle(z, alpha, beta)
        rel = abs(res.objective - ref.objective) / max(1.0, abs(ref.objective))
        assert rel <= 1e-6
        assert np.max(np.abs(res.graph.to_dense() - ref.graph.to_dense())) <= 1e-4


def test_learned_graph_invariants():
    rng = np.random.default_rng(2)
    z = random_distance(7, rng)
    res = learner.learn_graph(z, learner.GraphLearnConfig(alpha=0.8, beta=1.5))
    dense = res.graph.to_dense()
    assert np.array_equal(dense, dense.T)
    assert np.all(dense >= 0.0)
    assert np.all(np.diag(dense) == 0.0)
    assert res.graph.degrees().min() > 0.0


def test_trace_is_non_increasing():
    rng = np.random.default_rng(3)
    z = random_distance(8, rng)
    res = learner.learn_graph(z, learner.GraphLearnConfig())
    vals = [f for _, f in res.trace if np.isfinite(f)]
    assert all(vals[i + 1] <= vals[i] + 1e-12 for i in range(len(vals) - 1))


def test_returned_graph_matches_reported_objective():
    # the solver must hand back the iterate whose objective it reports, even
    # when the run stops at max_iter past the best checkpoint
    rng = np.random.default_rng(13)
    z = random_distance(9, rng)
    res = learner.learn_graph(z, learner.GraphLearnConfig(max_iter=380, check_every=20,
                                                          tol=1e-15))
    assert res.objective == min(f for _, f in res.trace)
    recomputed = learner.objective(res.graph.to_dense(), z, 1.0, 1.0)
    assert recomputed == pytest.approx(res.objective, rel=1e-6)


def test_non_finite_distance_rejected():
    z = np.zeros((3, 3))
    z[0, 1] = z[1, 0] = np.inf
    with pytest.raises(ValueError):
        learner.learn_graph(z)


def test_unconverged_is_reported_not_raised():
    rng = np.random.default_rng(4)
    z = random_distance(10, rng)
    res = learner.learn_graph(z, learner.GraphLearnConfig(max_iter=3, check_every=1, tol=1e-15))
    assert not res.converged
    assert res.iterations == 3


# --- one-parameter reduction ---------------------------------------------------

def test_reduction_identity_at_unit_hyperparams():
    z = np.array([[0.0, 2.0], [2.0, 0.0]])
    zp, scale = learner.reduce_to_one_param(z, 1.0, 1.0)
    assert np.array_equal(zp, z)
    assert scale == 1.0


def test_reduction_two_node_closed_form_both_paths():
    z = np.array([[0.0, 1.0], [1.0, 0.0]])
    direct = learner.learn_graph(z, learner.GraphLearnConfig(alpha=4.0, beta=1.0, **TIGHT))
    assert direct.graph.weights[0] == pytest.approx((-1 + np.sqrt(33)) / 4, abs=1e-7)
    zp, scale = learner.reduce_to_one_param(z, 4.0, 1.0)
    via = learner.learn_graph(zp, learner.GraphLearnConfig(**TIGHT))
    assert scale * via.graph.weights[0] == pytest.approx((-1 + np.sqrt(33)) / 4, abs=1e-7)


def test_scaling_identity_on_random_instances():
    rng = np.random.default_rng(5)
    tight = learner.GraphLearnConfig(tol=1e-11, max_iter=300_000, check_every=10)
    for _ in range(8):
        n = int(rng.integers(2, 6))
        z = random_distance(n, rng, scale=3.0)
        alpha, beta = rng.uniform(0.2, 5.0), rng.uniform(0.2, 5.0)
        direct = learner.learn_graph(
            z, learner.GraphLearnConfig(alpha=alpha, beta=beta,
                                        tol=1e-11, max_iter=300_000, check_every=10))
        zp, scale = learner.reduce_to_one_param(z, alpha, beta)
        via = learner.learn_graph(zp, tight)
        gap = np.max(np.abs(direct.graph.to_dense() - scale * via.graph.to_dense()))
        assert gap <= 1e-6


# --- support restriction --------------------------------------------------------

def test_restricted_full_support_equals_dense():
    rng = np.random.default_rng(6)
    z = random_distance(6, rng)
    i_idx, j_idx = np.triu_indices(6, k=1)
    zr = RestrictedDistance(6, i_idx, j_idx, z[i_idx, j_idx])
    cfg = learner.GraphLearnConfig(**TIGHT)
    a = learner.learn_graph(z, cfg).graph.to_dense()
    b = learner.learn_graph_restricted(zr, cfg).graph.to_dense()
    assert np.max(np.abs(a - b)) <= 1e-8


def test_restricted_knn_close_to_dense_optimum():
    rng = np.random.default_rng(7)
    emb = rng.standard_normal((50, 5))
    z = z1(emb)
    theta = learner.calibrate_sparsity(z, 10.0).theta
    cfg = learner.GraphLearnConfig(theta=theta, tol=1e-9, max_iter=100_000)
    dense = learner.learn_graph(z, cfg)
    ki, kj, _ = knn_pairs(emb, 15)
    restricted = learner.learn_graph_restricted(
        RestrictedDistance(50, ki, kj, z[ki, kj]), cfg)
    gap = abs(restricted.objective - dense.objective) / abs(dense.objective)
    assert gap <= 0.05


def test_restricted_rejects_uncovered_node():
    zr = RestrictedDistance(3, np.array([0]), np.array([1]), np.array([1.0]))
    with pytest.raises(ValueError, match="empty support"):
        learner.learn_graph_restricted(zr)


@pytest.mark.slow
def test_large_restricted_instance_completes_quickly():
    import time
    rng = np.random.default_rng(8)
    n = 20_000
    m = 20 * n
    ri = rng.integers(0, n, size=m)
    rj = rng.integers(0, n, size=m)
    keep = ri != rj
    lo = np.minimum(ri[keep], rj[keep])
    hi = np.maximum(ri[keep], rj[keep])
    ring = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
    pairs = np.unique(np.concatenate([np.stack([lo, hi], axis=1), ring]), axis=0)
    zr = RestrictedDistance(n, pairs[:, 0], pairs[:, 1], rng.random(pairs.shape[0]) * 2)
    start = time.monotonic()
    res = learner.learn_graph_restricted(zr, learner.GraphLearnConfig(theta=1.0))
    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    assert res.graph.degrees().min() > 0


# --- sparsity calibration --------------------------------------------------------

def test_calibration_hits_target_and_sweep_is_monotone():
    rng = np.random.default_rng(9)
    z = z1(rng.standard_normal((40, 4)))
    report = learner.calibrate_sparsity(z, 6.0)
    assert abs(report.achieved_mean_degree - 6.0) <= 0.2 * 6.0
    degrees = [m for _, m in report.sweep]
    assert all(degrees[i] >= degrees[i + 1] - 1e-9 for i in range(len(degrees) - 1))


def test_calibration_saturates_at_full_connectivity():
    rng = np.random.default_rng(10)
    z = z1(rng.standard_normal((6, 2)))
    report = learner.calibrate_sparsity(z, 5.0)
    assert report.achieved_mean_degree == pytest.approx(5.0)


def test_calibration_unattainable_reports_closest():
    rng = np.random.default_rng(11)
    z = z1(rng.standard_normal((5, 2)))
    with pytest.raises(learner.CalibrationError) as exc:
        learner.calibrate_sparsity(z, 50.0)
    assert exc.value.achieved is not None
    assert exc.value.achieved <= 4.0


@pytest.mark.dataset
@pytest.mark.slow
def test_calibration_on_cora_target_ten():
    from conftest import require_dataset
    from bgcn import distances, gcn, gvae
    from bgcn.data import (load_bundle, neighborhoods, normalize_adjacency,
                           subset_train_labels)
    from bgcn.kernels import SeededRng

    g, x, info = load_bundle(require_dataset("cora"))
    xn = x.row_normalized()
    a_obs = normalize_adjacency(g)
    root = SeededRng(0)
    emb = gvae.node_embeddings(
        gvae.train_gvae(a_obs, xn, g, gvae.GvaeConfig(), root.child(0).generator()).params,
        a_obs, xn)
    base = gcn.train_gcn(a_obs, xn, subset_train_labels(info, 20), gcn.TrainConfig(),
                         root.child(1).generator())
    c_hat = gcn.predict_labels(base.params, a_obs, xn)
    z = distances.dense_distance(emb, neighborhoods(g), c_hat, info.num_classes)
    report = learner.calibrate_sparsity(z, 10.0)
    assert 8.0 <= report.achieved_mean_degree <= 12.0


def test_monotone_distance_response():
    rng = np.random.default_rng(12)
    z = random_distance(6, rng, scale=1.0)
    cfg = learner.GraphLearnConfig(tol=1e-11, max_iter=200_000, check_every=10)
    previous = None
    for bump in np.linspace(0.0, 3.0, 7):
        z_mod = z.copy()
        z_mod[1, 2] += bump
        z_mod[2, 1] += bump
        w = learner.learn_graph(z_mod, cfg).graph.to_dense()[1, 2]
        if previous is not None:
            assert w <= previous + 1e-7
        previous = w
