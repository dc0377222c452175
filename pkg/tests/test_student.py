import numpy as np
import pytest

from pss.data import Dataset, NewsSample
from pss.numcore import cross_entropy_grad, grad_check, zero_grads
from pss.pipeline import GraphInputs, _relu_margin
from pss.rng import Rng
from pss.student import LocalContext, StudentModel, local_operator, pool_mean
from pss.synth import SynthParams, generate_synthetic


def tree_sample(sid, n_nodes, d=3, edges=None, rng=None, label=0):
    rng = rng or Rng(17)
    feats = np.array([[rng.uniform(-1, 1) for _ in range(d)] for _ in range(n_nodes)])
    return NewsSample(sid, label, feats[0].copy(), feats,
                      edges if edges is not None else [(0, i) for i in range(1, n_nodes)],
                      [])


def micro_dataset(seed=3):
    return generate_synthetic(
        SynthParams(n_news=12, n_users=10, q_in=0.6, q_out=0.05, tree_size_min=2,
                    tree_size_max=4, feature_dim=4, feature_noise_std=0.5, seed=seed)
    )


def test_local_operator_single_node():
    s = tree_sample("a", 1)
    assert np.array_equal(local_operator(s), np.array([[1.0]]))


def test_local_operator_no_zero_rows_after_edge_loss():
    s = tree_sample("a", 5, edges=[(0, 1)])  # nodes 2..4 disconnected
    op = local_operator(s)
    assert np.all(op.sum(axis=1) > 0)
    assert op[2, 2] == 1.0  # isolated node keeps its self-loop


def test_single_node_embedding_is_direct_mlp():
    s = tree_sample("a", 1)
    sm = StudentModel(3, 4, Rng(1))
    emb = sm.local_embeddings(s)
    direct = np.maximum(s.node_features @ sm.w_loc.value + sm.b_loc.value, 0.0)
    assert np.array_equal(emb, direct)


def test_star_tree_identical_leaves_get_identical_embeddings():
    feats = np.vstack([np.array([1.0, -0.5, 2.0])] + [np.array([0.3, 0.7, -0.2])] * 4)
    s = NewsSample("a", 0, feats[0].copy(), feats, [(0, i) for i in range(1, 5)], [])
    emb = StudentModel(3, 4, Rng(2)).local_embeddings(s)
    for i in range(2, 5):
        assert np.array_equal(emb[1], emb[i])


def test_pool_local_values():
    from pss.student import pool_local

    single = np.array([[0.5, -1.0, 2.0]])
    assert np.array_equal(pool_local(single), single[0])
    emb = np.array([[1.0, 3.0], [3.0, 1.0]])
    assert np.array_equal(pool_local(emb), np.array([2.0, 2.0]))
    with pytest.raises(ValueError, match="empty"):
        pool_local(np.zeros((0, 3)))


def test_pool_mean_values_and_permutation():
    emb = np.array([[1.0, 3.0], [3.0, 1.0]])
    pooled = pool_mean(emb, np.array([0]), np.array([2]))
    assert np.array_equal(pooled, np.array([[2.0, 2.0]]))
    rng = Rng(3)
    emb = np.array([[rng.uniform(-1, 1) for _ in range(4)] for _ in range(7)])
    base = pool_mean(emb, np.array([0]), np.array([7]))
    perm = list(range(7))
    rng.shuffle(perm)
    permuted = pool_mean(emb[perm], np.array([0]), np.array([7]))
    assert np.allclose(base, permuted, rtol=0.0, atol=1e-12)


def test_comment_permutation_leaves_pooled_rows_stable():
    ds = micro_dataset()
    s = ds.samples[1]
    assert s.n_nodes >= 3
    # relabel comments with a fixed permutation, remapping edges to match
    perm = [0] + list(range(2, s.n_nodes)) + [1]
    inverse = np.argsort(perm)
    permuted = NewsSample(
        s.id, s.label, s.news_feature.copy(), s.node_features[perm].copy(),
        [(int(inverse[p]), int(inverse[c])) for p, c in s.edges], list(s.engagements),
    )
    sm = StudentModel(4, 6, Rng(4))
    a = sm.local_embeddings(s).mean(axis=0)
    b = sm.local_embeddings(permuted).mean(axis=0)
    assert np.allclose(a, b, rtol=0.0, atol=1e-10)


def test_lgpi_identity_graph_reduces_to_affine():
    ds = micro_dataset()
    ctx = LocalContext.build(ds)
    sm = StudentModel(4, 6, Rng(5))
    out = sm.forward(ctx, np.eye(len(ds.samples)))
    expected = out.h_loc @ sm.w1.value + sm.b1.value
    assert np.allclose(out.h_s, expected, atol=0)


def test_lgpi_identical_rows_identical_outputs():
    ds = micro_dataset()
    ctx = LocalContext.build(ds)
    n = len(ds.samples)
    a = np.full((n, n), 1.0 / n)  # every row mixes identically
    out = StudentModel(4, 6, Rng(6)).forward(ctx, a)
    for i in range(1, n):
        assert np.allclose(out.h_s[0], out.h_s[i], atol=1e-12)


def test_lgpi_gradient_w1_b1():
    ds = micro_dataset()
    inp = GraphInputs.build(ds)
    sm = StudentModel(4, 6, Rng(7))
    rng = Rng(8)
    c = np.array([[rng.uniform(-1, 1) for _ in range(6)] for _ in range(len(ds.samples))])

    def loss_and_grad():
        zero_grads(sm.params())
        out = sm.forward(inp.local, inp.a_rownorm)
        sm.backward(out.cache, np.zeros_like(out.logits), c)
        return float((out.h_s * c).sum())

    assert grad_check(loss_and_grad, [sm.w1, sm.b1]) <= 1e-6


def test_head_zero_weights_and_flag():
    ds = micro_dataset()
    ctx = LocalContext.build(ds)
    sm = StudentModel(4, 6, Rng(9))
    sm.w2.value[:] = 0.0
    sm.b2.value[:] = 0.0
    out = sm.forward(ctx, np.eye(len(ds.samples)))
    assert np.array_equal(out.logits, np.zeros_like(out.logits))
    sm.b2.value[:] = np.array([[-1.0, -2.0]])
    assert np.array_equal(sm.forward(ctx, np.eye(len(ds.samples))).logits,
                          np.zeros((len(ds.samples), 2)))
    sm_off = StudentModel(4, 6, Rng(9), final_relu=False)
    sm_off.w2.value[:] = 0.0
    sm_off.b2.value[:] = np.array([[-1.0, -2.0]])
    out = sm_off.forward(ctx, np.eye(len(ds.samples)))
    assert np.all(out.logits == np.array([-1.0, -2.0]))


def test_forward_shapes_and_single_news():
    ds = micro_dataset()
    inp = GraphInputs.build(ds)
    n, h = len(ds.samples), 6
    out = StudentModel(4, h, Rng(10)).forward(inp.local, inp.a_rownorm)
    assert out.h_loc.shape == (n, h) and out.h_s.shape == (n, h) and out.logits.shape == (n, 2)

    single = Dataset.from_samples(3, [tree_sample("solo", 3)])
    sinp = GraphInputs.build(single)
    sm = StudentModel(3, 4, Rng(11))
    out = sm.forward(sinp.local, sinp.a_rownorm)
    expected = out.h_loc @ sm.w1.value + sm.b1.value  # 1x1 graph row-normalizes to identity
    assert np.allclose(out.h_s, expected, atol=0)


def test_h_s_infinity_bound():
    ds = micro_dataset(seed=12)
    inp = GraphInputs.build(ds)
    sm = StudentModel(4, 6, Rng(12))
    out = sm.forward(inp.local, inp.a_rownorm)
    w1_colsum = np.abs(sm.w1.value).sum(axis=0).max()
    bound = w1_colsum * np.abs(out.h_loc).max() + np.abs(sm.b1.value).max()
    assert np.abs(out.h_s).max() <= bound + 1e-12


def test_root_pooling_uses_root_row():
    ds = micro_dataset()
    ctx = LocalContext.build(ds)
    sm = StudentModel(4, 6, Rng(13), pooling="root")
    out = sm.forward(ctx, np.eye(len(ds.samples)))
    emb0 = sm.local_embeddings(ds.samples[0])
    assert np.array_equal(out.h_loc[0], emb0[0])
    with pytest.raises(ValueError, match="pooling"):
        StudentModel(4, 6, Rng(13), pooling="max")


def test_student_gradient_under_classification_loss():
    ds = micro_dataset()
    inp = GraphInputs.build(ds)
    labels = ds.labels()
    mask = np.arange(len(ds.samples))
    for seed in range(30, 60):
        sm = StudentModel(4, 6, Rng(seed))
        out = sm.forward(inp.local, inp.a_rownorm)
        if _relu_margin([out.cache]) <= 5e-4:
            continue

        def loss_and_grad():
            zero_grads(sm.params())
            out = sm.forward(inp.local, inp.a_rownorm)
            loss, d_logits = cross_entropy_grad(out.logits, labels, mask)
            sm.backward(out.cache, d_logits)
            return loss

        def loss_only():
            out = sm.forward(inp.local, inp.a_rownorm)
            loss, _ = cross_entropy_grad(out.logits, labels, mask)
            return loss

        err = grad_check(loss_and_grad, sm.params(), loss_only=loss_only, min_resolved=3e-7)
        assert err <= 1e-4
        return
    raise RuntimeError("no kink-free seed found")


def test_ratio_one_structural_noise_still_runs():
    ds = micro_dataset()
    edgeless = Dataset.from_samples(
        4, [NewsSample(s.id, s.label, s.news_feature.copy(), s.node_features.copy(), [],
                       list(s.engagements)) for s in ds.samples]
    )
    inp = GraphInputs.build(edgeless)
    out = StudentModel(4, 6, Rng(14)).forward(inp.local, inp.a_rownorm)
    assert np.all(np.isfinite(out.logits))
