import numpy as np
import pytest

from pss.data import Dataset, NewsSample
from pss.graph import (
    EdgeRefiner,
    PositionalEncoder,
    build_engagement_matrix,
    build_global_graph,
    gcn_normalize,
    gcn_normalize_backward,
    node_degrees,
    refine,
    row_normalize,
)
from pss.numcore import grad_check, zero_grads
from pss.rng import Rng


def sample_with(engagements, sid="n0"):
    feat = np.zeros((1, 2))
    return NewsSample(sid, 0, feat[0].copy(), feat, [], engagements)


def random_engagement_matrix(rng, n, u, density=0.4):
    e = np.zeros((n, u))
    for i in range(n):
        for j in range(u):
            if rng.uniform() < density:
                e[i, j] = 1 + rng.randint(5)
    return e


# -------------------------------------------------------- engagement matrix


def test_engagement_matrix_counts():
    ds = Dataset.from_samples(2, [sample_with([("u", 1)], "a"), sample_with([("u", 2)], "b")])
    assert np.array_equal(build_engagement_matrix(ds), np.array([[1.0], [2.0]]))


def test_engagement_matrix_no_engagements():
    ds = Dataset.from_samples(2, [sample_with([], "a"), sample_with([], "b")])
    e = build_engagement_matrix(ds)
    assert e.shape == (2, 0)
    assert np.array_equal(build_global_graph(e), np.zeros((2, 2)))


def test_engagement_column_sums_match_totals():
    rng = Rng(1)
    samples = []
    totals = {}
    for i in range(6):
        engs = []
        for u in range(4):
            if rng.uniform() < 0.5:
                c = 1 + rng.randint(4)
                engs.append((f"u{u}", c))
                totals[f"u{u}"] = totals.get(f"u{u}", 0) + c
        samples.append(sample_with(engs, f"n{i}"))
    ds = Dataset.from_samples(2, samples)
    e = build_engagement_matrix(ds)
    for uid, col in ds.user_index.items():
        assert e[:, col].sum() == totals.get(uid, 0)


# ------------------------------------------------------------ global graph


def test_global_graph_hand_product():
    a = build_global_graph(np.array([[1.0, 0.0], [1.0, 2.0]]))
    assert np.array_equal(a, np.array([[1.0, 1.0], [1.0, 5.0]]))


def test_global_graph_symmetric_and_psd():
    rng = Rng(2)
    for _ in range(20):
        e = random_engagement_matrix(rng, 6, 9)
        a = build_global_graph(e)
        assert np.array_equal(a, a.T)
        for _ in range(100):
            x = np.array([rng.uniform(-1, 1) for _ in range(6)])
            assert x @ a @ x >= -1e-9


# ---------------------------------------------------------------- degrees


def test_degrees_exclude_diagonal():
    assert np.array_equal(node_degrees(np.array([[1.0, 1.0], [1.0, 5.0]])), np.array([1.0, 1.0]))
    assert np.array_equal(node_degrees(np.zeros((3, 3))), np.zeros(3))


def test_degrees_permutation_invariant():
    rng = Rng(3)
    e = random_engagement_matrix(rng, 5, 7)
    a = build_global_graph(e)
    d = node_degrees(a)
    perm = [3, 1, 4, 0, 2]
    assert np.allclose(node_degrees(a[np.ix_(perm, perm)]), d[perm], atol=0)


def test_degrees_reject_asymmetry():
    with pytest.raises(ValueError, match="symmetric"):
        node_degrees(np.array([[0.0, 1.0], [0.5, 0.0]]))


# ---------------------------------------------------------- row normalize


def test_row_normalize_with_zero_row_fallback():
    a = np.array([[2.0, 2.0], [0.0, 0.0]])
    out = row_normalize(a)
    assert np.array_equal(out, np.array([[0.5, 0.5], [0.0, 1.0]]))


# ------------------------------------------------------ positional encoder


def test_positional_encoding_gather_plus_bias():
    pe = PositionalEncoder(2, 2, Rng(4))
    pe.w.value[:] = np.array([[1.0, 2.0], [3.0, 4.0]])
    pe.b.value[:] = np.array([[1.0, 1.0]])
    assert np.array_equal(pe.forward([0]), np.array([[2.0, 3.0]]))
    pe.b.value[:] = 0.0
    assert np.array_equal(pe.forward([1, 0]), np.array([[3.0, 4.0], [1.0, 2.0]]))
    with pytest.raises(ValueError, match="range"):
        pe.forward([2])


def test_positional_encoding_gradient_accumulates_duplicates():
    rng = Rng(5)
    pe = PositionalEncoder(4, 3, rng)
    indices = np.array([0, 2, 2, 1])  # row 2 touched twice
    c = np.array([[rng.uniform(-1, 1) for _ in range(3)] for _ in range(4)])

    def loss_and_grad():
        zero_grads(pe.params())
        pe.backward(indices, c)
        return float((pe.forward(indices) * c).sum())

    assert grad_check(loss_and_grad, pe.params()) <= 1e-6
    loss_and_grad()
    assert np.array_equal(pe.w.grad[3], np.zeros(3))  # untouched row stays zero


# ----------------------------------------------------------- edge retention


def test_retention_zero_graph():
    refiner = EdgeRefiner(4, Rng(6))
    m, _ = refiner.retention(np.zeros((3, 3)), np.zeros(3))
    assert np.array_equal(m, np.zeros((3, 3)))


def test_retention_zero_weights_give_half():
    refiner = EdgeRefiner(4, Rng(7))
    for p in refiner.params():
        p.value[:] = 0.0
    a = np.array([[2.0, 1.0, 0.0], [1.0, 0.0, 3.0], [0.0, 3.0, 1.0]])
    m, _ = refiner.retention(a, node_degrees(a))
    offdiag = ~np.eye(3, dtype=bool)
    support = (a != 0) & offdiag
    assert np.all(m[support] == 0.5)
    assert np.all(m[~support] == 0.0)


def test_retention_symmetric_bounded_support():
    rng = Rng(8)
    refiner = EdgeRefiner(5, rng)
    e = random_engagement_matrix(rng, 6, 8)
    a = build_global_graph(e)
    m, _ = refiner.retention(a, node_degrees(a))
    assert np.array_equal(m, m.T)
    assert np.all(m >= 0.0) and np.all(m <= 1.0)
    offdiag = ~np.eye(6, dtype=bool)
    assert np.array_equal((m > 0) & offdiag, (a != 0) & offdiag)
    assert np.all(np.diag(m) == 0.0)


def test_retention_gradient():
    rng = Rng(9)
    refiner = EdgeRefiner(4, rng)
    e = random_engagement_matrix(rng, 5, 7)
    a = build_global_graph(e)
    d = node_degrees(a)
    c = np.array([[rng.uniform(-1, 1) for _ in range(5)] for _ in range(5)])

    def loss_and_grad():
        zero_grads(refiner.params())
        m, cache = refiner.retention(a, d)
        refiner.retention_backward(cache, c)
        return float((m * c).sum())

    assert grad_check(loss_and_grad, refiner.params()) <= 1e-6


# ------------------------------------------------------------------ refine


def test_refine_zero_retention_gives_identity():
    a = np.array([[0.0, 2.0], [2.0, 0.0]])
    assert np.array_equal(refine(a, np.zeros((2, 2))), np.eye(2))


def test_refine_hand_value_and_diagonal():
    a = np.array([[0.0, 2.0], [2.0, 0.0]])
    m = np.array([[0.0, 0.5], [0.5, 0.0]])
    out = refine(a, m)
    assert np.array_equal(out, np.ones((2, 2)))
    assert np.all(np.diag(out) >= 1.0)
    with pytest.raises(ValueError, match="shape"):
        refine(a, np.zeros((3, 3)))


def test_refine_preserves_support():
    rng = Rng(10)
    refiner = EdgeRefiner(4, rng)
    a = build_global_graph(random_engagement_matrix(rng, 6, 6))
    m, _ = refiner.retention(a, node_degrees(a))
    out = refine(a, m)
    offdiag = ~np.eye(6, dtype=bool)
    assert not np.any(out[offdiag & (a == 0)])


# --------------------------------------------------------- gcn normalize


def test_gcn_normalize_hand_values():
    s, _ = gcn_normalize(np.array([[1.0, 1.0], [1.0, 1.0]]))
    assert np.allclose(s, np.full((2, 2), 0.5), atol=1e-15)
    s, _ = gcn_normalize(np.eye(3))
    assert np.array_equal(s, np.eye(3))


def test_gcn_normalize_regular_row_sums():
    a = np.array([[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 3.0]])
    s, _ = gcn_normalize(a)
    assert np.max(s.sum(axis=1)) <= 1.0 + 1e-9  # equal-degree blocks


def test_gcn_normalize_gradient_through_row_sums():
    rng = Rng(11)
    a = build_global_graph(random_engagement_matrix(rng, 5, 6))
    refiner = EdgeRefiner(4, rng)
    c = np.array([[rng.uniform(-1, 1) for _ in range(5)] for _ in range(5)])
    d = node_degrees(a)

    # drive a_hat through the refiner so the whole chain is exercised
    def loss_and_grad():
        zero_grads(refiner.params())
        m, ret_cache = refiner.retention(a, d)
        s, cache = gcn_normalize(refine(a, m))
        d_ahat = gcn_normalize_backward(cache, c)
        refiner.retention_backward(ret_cache, d_ahat * a)
        return float((s * c).sum())

    assert grad_check(loss_and_grad, refiner.params()) <= 1e-6
