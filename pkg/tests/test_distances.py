import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bgcn import distances
from bgcn.data import SparseGraph, neighborhoods


def naive_z1(emb):
    n = emb.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = float(np.sum((emb[i] - emb[j]) ** 2))
    np.fill_diagonal(out, 0.0)
    return out


def naive_z2(nbhds, labels):
    """Quadruple-loop disagreement fraction, diagonal zeroed."""
    n = len(nbhds)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            count = 0
            for k in nbhds[i]:
                for l in nbhds[j]:
                    if labels[k] != labels[l]:
                        count += 1
            out[i, j] = count / (len(nbhds[i]) * len(nbhds[j]))
    return out


def random_graph(n, seed, p=0.4):
    rng = np.random.default_rng(seed)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return SparseGraph.from_edges(n, [a for a, _ in pairs], [b for _, b in pairs])


def test_z1_hand_case():
    emb = np.array([[0.0, 0.0], [3.0, 4.0]])
    out = distances.z1(emb)
    assert out[0, 1] == pytest.approx(25.0, abs=1e-12)
    assert out[1, 0] == out[0, 1]
    assert out[0, 0] == 0.0


def test_z1_identical_embeddings_zero():
    emb = np.ones((4, 3))
    assert not distances.z1(emb).any()


def test_z1_matches_naive_oracle():
    emb = np.random.default_rng(0).standard_normal((6, 4))
    assert np.max(np.abs(distances.z1(emb) - naive_z1(emb))) <= 1e-12


def test_z1_rejects_non_finite():
    with pytest.raises(ValueError):
        distances.z1(np.array([[np.nan, 0.0]]))


def test_z2_all_labels_equal_is_zero():
    g = random_graph(5, 1)
    nb = neighborhoods(g)
    out = distances.z2(nb, np.zeros(5, dtype=int), 3)
    assert not out.any()


def test_z2_single_edge_hand_count():
    g = SparseGraph.from_edges(2, [0], [1])
    nb = neighborhoods(g)
    out = distances.z2(nb, np.array([0, 1]), 2)
    assert out[0, 1] == pytest.approx(0.5, abs=1e-12)


def test_z2_matches_quadruple_loop_oracle():
    g = random_graph(7, 2)
    nb = neighborhoods(g)
    labels = np.random.default_rng(3).integers(0, 3, size=7)
    got = distances.z2(nb, labels, 3)
    assert np.max(np.abs(got - naive_z2(nb, labels))) <= 1e-12


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=25, deadline=None)
def test_z2_range_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(6, seed)
    nb = neighborhoods(g)
    labels = rng.integers(0, 4, size=6)
    out = distances.z2(nb, labels, 4)
    assert np.all(out >= 0.0) and np.all(out <= 1.0)
    assert np.array_equal(out, out.T)
    assert np.all(np.diag(out) == 0.0)


def test_delta_ratio_and_degenerate_rule():
    z1m = np.array([[0.0, 25.0], [25.0, 0.0]])
    z2m = np.array([[0.0, 0.5], [0.5, 0.0]])
    assert distances.delta(z1m, z2m) == pytest.approx(50.0)
    assert distances.delta(z1m, np.zeros((2, 2))) == 0.0


def test_delta_identity_on_random_instance():
    rng = np.random.default_rng(4)
    emb = rng.standard_normal((8, 3))
    g = random_graph(8, 5)
    labels = rng.integers(0, 3, size=8)
    a = distances.z1(emb)
    b = distances.z2(neighborhoods(g), labels, 3)
    d = distances.delta(a, b)
    if b.max() > 0:
        assert d * b.max() == pytest.approx(a.max(), rel=1e-12)


def test_combine_rules():
    z1m = np.zeros((2, 2))
    z2m = np.array([[0.0, 0.5], [0.5, 0.0]])
    assert distances.combine(z1m, z2m, 2.0)[0, 1] == pytest.approx(1.0)
    rng = np.random.default_rng(6)
    a, b = rng.random((4, 4)), rng.random((4, 4))
    got = distances.combine(a, b, 3.5)
    assert np.max(np.abs(got - (a + 3.5 * b))) <= 1e-12
    with pytest.raises(ValueError):
        distances.combine(np.zeros((2, 2)), np.zeros((3, 3)), 1.0)


def test_combine_linear_in_z2():
    rng = np.random.default_rng(7)
    z1m = rng.random((3, 3))
    z2m = rng.random((3, 3))
    f1 = distances.combine(z1m, z2m, 2.0) - z1m
    f2 = distances.combine(z1m, 2.0 * z2m, 2.0) - z1m
    assert np.allclose(2.0 * f1, f2, atol=1e-12)


def test_embedding_scaling_moves_z1_quadratically():
    emb = np.random.default_rng(8).standard_normal((5, 2))
    base = distances.z1(emb)
    scaled = distances.z1(3.0 * emb)
    assert np.allclose(scaled, 9.0 * base, rtol=1e-10, atol=1e-12)


def test_knn_pairs_saturation_covers_all_pairs():
    emb = np.random.default_rng(9).standard_normal((6, 2))
    i_idx, j_idx, max_d = distances.knn_pairs(emb, k=5)
    assert i_idx.size == 15  # all 6*5/2 pairs
    assert max_d == pytest.approx(distances.z1(emb).max(), rel=1e-12)


def test_restrict_support_keeps_observed_edges():
    rng = np.random.default_rng(10)
    emb = rng.standard_normal((12, 2))
    # make nodes 0 and 11 far apart so their edge is never in any kNN list
    emb[0] = [-100.0, 0.0]
    emb[11] = [100.0, 0.0]
    g = SparseGraph.from_edges(12, [0], [11])
    nb = neighborhoods(g)
    labels = rng.integers(0, 2, size=12)
    rd = distances.restrict_support(emb, nb, labels, 2, k=2, observed=g)
    pairs = set(zip(rd.i_idx.tolist(), rd.j_idx.tolist()))
    assert (0, 11) in pairs


def test_export_tsv_roundtrip(tmp_path):
    z = np.array([[0.0, 1.5, 0.25], [1.5, 0.0, 2.0], [0.25, 2.0, 0.0]])
    distances.export_tsv(z, tmp_path / "z.tsv")
    rows = [l.split("\t") for l in (tmp_path / "z.tsv").read_text().splitlines()]
    assert [(int(a), int(b), float(c)) for a, b, c in rows] == [
        (0, 1, 1.5), (0, 2, 0.25), (1, 2, 2.0)]


def test_restricted_values_match_dense_on_support():
    rng = np.random.default_rng(11)
    emb = rng.standard_normal((10, 3))
    g = random_graph(10, 12)
    nb = neighborhoods(g)
    labels = rng.integers(0, 3, size=10)
    rd = distances.restrict_support(emb, nb, labels, 3, k=9, observed=g)
    dense = distances.dense_distance(emb, nb, labels, 3)
    for i, j, v in zip(rd.i_idx, rd.j_idx, rd.values):
        assert v == pytest.approx(dense[i, j], rel=1e-10, abs=1e-12)
