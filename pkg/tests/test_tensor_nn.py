"""Autodiff op tests: finite-difference checks, oracles, optimizer behavior."""

import numpy as np
import pytest

from chemfuse.chem import parse_smiles
from chemfuse.features import featurize
from chemfuse.nn import (
    AdamState,
    AttentionParams,
    GcnLayerParams,
    NonFiniteInput,
    NotScalarLoss,
    Parameter,
    ShapeMismatch,
    adam_step,
    add,
    backward,
    concat_rows,
    constant,
    cosine_similarity,
    embedding_lookup,
    gcn_layer,
    gelu,
    layer_norm_rows,
    log_softmax_rows,
    matmul,
    mean_all,
    mean_rows,
    mul,
    multi_head_attention,
    normalize_rows,
    pick,
    relu,
    scale,
    softmax_rows,
    softplus,
    sub,
    sum_all,
    transpose,
)

RNG = np.random.default_rng(42)
EPS = 1e-5
TOL = 1e-4


def rand_param(name, *shape):
    return Parameter(name, RNG.normal(0.0, 1.0, size=shape))


def fd_check(build_loss, params, eps=EPS, tol=TOL):
    """Central finite differences against the tape's analytic gradients."""
    for p in params:
        p.zero_grad()
    backward(build_loss())
    for p in params:
        analytic = p.grad.copy()
        numeric = np.zeros_like(p.data)
        it = np.nditer(p.data, flags=["multi_index"])
        for _ in it:
            ij = it.multi_index
            orig = p.data[ij]
            p.data[ij] = orig + eps
            up = build_loss().item()
            p.data[ij] = orig - eps
            down = build_loss().item()
            p.data[ij] = orig
            numeric[ij] = (up - down) / (2 * eps)
        denom = np.maximum(1e-6, np.abs(analytic) + np.abs(numeric))
        rel = np.abs(analytic - numeric) / denom
        assert rel.max() < tol, f"{p.name}: max rel err {rel.max():.3e}"


# ------------------------------------------------------------ per-op gradients

@pytest.mark.parametrize("trial", range(5))
def test_grad_elementwise_ops(trial):
    w = rand_param(f"w{trial}", 4, 5)
    x = constant(RNG.normal(size=(4, 5)))
    for op in (relu, gelu, softplus, softmax_rows, log_softmax_rows, normalize_rows):
        fd_check(lambda op=op: mean_all(op(mul(w, x))), [w])


@pytest.mark.parametrize("trial", range(5))
def test_grad_matmul_add_scale(trial):
    a = rand_param("a", 3, 4)
    b = rand_param("b", 4, 2)
    bias = rand_param("bias", 1, 2)
    fd_check(lambda: sum_all(add(scale(matmul(a, b), 0.7), bias)), [a, b, bias])


@pytest.mark.parametrize("trial", range(5))
def test_grad_layer_norm(trial):
    x = rand_param("x", 4, 6)
    gamma = rand_param("g", 1, 6)
    beta = rand_param("be", 1, 6)
    fd_check(lambda: mean_all(layer_norm_rows(x, gamma, beta)), [x, gamma, beta])


@pytest.mark.parametrize("trial", range(5))
def test_grad_gather_pick_concat(trial):
    table = rand_param("emb", 7, 4)
    w = rand_param("w", 4, 3)

    def loss():
        rows = embedding_lookup(table, [0, 3, 3, 6])
        h = matmul(rows, w)
        picked = pick(h, [0, 2, 1, 0])
        stacked = concat_rows([picked, picked])
        return mean_all(stacked)

    fd_check(loss, [table, w])


@pytest.mark.parametrize("trial", range(5))
def test_grad_reductions_and_cosine(trial):
    u = rand_param("u", 1, 5)
    v = rand_param("v", 1, 5)
    fd_check(lambda: cosine_similarity(u, v), [u, v])
    x = rand_param("x", 4, 5)
    fd_check(lambda: sum_all(mean_rows(mul(x, x))), [x])
    fd_check(lambda: mean_all(transpose(sub(x, scale(x, 0.3)))), [x])


def test_grad_linear_loss_equals_input():
    x_data = RNG.normal(size=(3, 4))
    w = rand_param("w", 3, 4)
    loss = sum_all(mul(w, constant(x_data)))
    w.zero_grad()
    backward(loss)
    np.testing.assert_allclose(w.grad, x_data, rtol=0, atol=1e-15)


def test_grad_constant_loss_is_zero():
    w = rand_param("w", 2, 2)
    loss = mean_all(constant(np.ones((2, 2))))
    w.zero_grad()
    backward(loss)
    assert np.all(w.grad == 0)


def test_backward_accumulates_until_zeroed():
    w = rand_param("w", 2, 2)
    w.zero_grad()
    backward(sum_all(w))
    backward(sum_all(w))
    np.testing.assert_allclose(w.grad, 2 * np.ones((2, 2)))
    w.zero_grad()
    assert np.all(w.grad == 0)


def test_backward_rejects_nonscalar_and_nonfinite():
    w = rand_param("w", 2, 2)
    with pytest.raises(NotScalarLoss):
        backward(add(w, w))
    with pytest.raises(NonFiniteInput):
        constant(np.array([[np.inf]]))


# ------------------------------------------------------------------ op oracles

def test_matmul_matches_triple_loop():
    a = RNG.normal(size=(3, 4))
    b = RNG.normal(size=(4, 2))
    got = matmul(constant(a), constant(b)).data
    want = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                want[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_softmax_rows_properties():
    x = constant(RNG.normal(size=(5, 7)))
    p = softmax_rows(x).data
    np.testing.assert_allclose(p.sum(axis=1), np.ones(5), atol=1e-12)
    np.testing.assert_allclose(softmax_rows(constant([[0.0, 0.0]])).data,
                               [[0.5, 0.5]], atol=1e-15)


def test_layer_norm_statistics():
    x = constant(RNG.normal(size=(6, 9)))
    gamma = constant(np.ones((1, 9)))
    beta = constant(np.zeros((1, 9)))
    y = layer_norm_rows(x, gamma, beta).data
    assert np.abs(y.mean(axis=1)).max() < 1e-10
    np.testing.assert_allclose(y.var(axis=1), np.ones(6), rtol=1e-4)


def test_cosine_self_is_one():
    v = constant(RNG.normal(size=(1, 8)))
    assert cosine_similarity(v, v).item() == pytest.approx(1.0, abs=1e-12)


def test_shape_mismatch_raised():
    with pytest.raises(ShapeMismatch):
        matmul(constant(np.ones((2, 3))), constant(np.ones((2, 3))))
    with pytest.raises(ShapeMismatch):
        add(constant(np.ones((2, 3))), constant(np.ones((3, 2))))


# ------------------------------------------------------------------- attention

def _attn_params(dim, prefix="a"):
    mk = lambda nm, fi, fo: rand_param(f"{prefix}_{nm}", fi, fo)
    return AttentionParams(
        wq=mk("wq", dim, dim), bq=rand_param(f"{prefix}_bq", 1, dim),
        wk=mk("wk", dim, dim), bk=rand_param(f"{prefix}_bk", 1, dim),
        wv=mk("wv", dim, dim), bv=rand_param(f"{prefix}_bv", 1, dim),
        wo=mk("wo", dim, dim), bo=rand_param(f"{prefix}_bo", 1, dim),
    )


def _naive_attention(x_q, x_kv, p, heads):
    dim = p.wq.data.shape[1]
    hd = dim // heads
    q = x_q @ p.wq.data + p.bq.data
    k = x_kv @ p.wk.data + p.bk.data
    v = x_kv @ p.wv.data + p.bv.data
    outs = []
    for h in range(heads):
        sl = slice(h * hd, (h + 1) * hd)
        scores = q[:, sl] @ k[:, sl].T / np.sqrt(hd)
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        probs = e / e.sum(axis=1, keepdims=True)
        outs.append(probs @ v[:, sl])
    return np.concatenate(outs, axis=1) @ p.wo.data + p.bo.data


def test_attention_matches_naive_oracle():
    p = _attn_params(8)
    x = RNG.normal(size=(5, 8))
    got = multi_head_attention(constant(x), constant(x), 2, p).data
    np.testing.assert_allclose(got, _naive_attention(x, x, p, 2), atol=1e-10)


def test_attention_single_position_weight_is_one():
    p = _attn_params(4)
    x = RNG.normal(size=(1, 4))
    retained = []
    multi_head_attention(constant(x), constant(x), 2, p, retain=retained)
    for mat in retained:
        np.testing.assert_allclose(mat, [[1.0]], atol=1e-15)


def test_attention_key_permutation_permutes_columns():
    p = _attn_params(8)
    q = RNG.normal(size=(3, 8))
    kv = RNG.normal(size=(4, 8))
    perm = [2, 0, 3, 1]
    r1, r2 = [], []
    multi_head_attention(constant(q), constant(kv), 2, p, retain=r1)
    multi_head_attention(constant(q), constant(kv[perm]), 2, p, retain=r2)
    for a, b in zip(r1, r2):
        np.testing.assert_allclose(a[:, perm], b, atol=1e-12)


@pytest.mark.parametrize("trial", range(5))
def test_grad_attention(trial):
    p = _attn_params(4, prefix=f"t{trial}")
    x = constant(RNG.normal(size=(3, 4)))
    params = [p.wq, p.bq, p.wk, p.bk, p.wv, p.bv, p.wo, p.bo]
    fd_check(lambda: mean_all(multi_head_attention(x, x, 2, p)), params)


# ------------------------------------------------------------------------- gcn

def _gcn_params(width, fbond, prefix="g"):
    return GcnLayerParams(
        w=rand_param(f"{prefix}_w", width, width),
        bond_w=rand_param(f"{prefix}_bw", fbond, width),
        ln_gamma=rand_param(f"{prefix}_lg", 1, width),
        ln_beta=rand_param(f"{prefix}_lb", 1, width),
    )


def _naive_gcn(h, graph, bond_feats, p):
    m = graph.m
    width = h.shape[1]
    inner = h.copy()
    for i in range(m):
        for bi in graph.adjacency[i]:
            j = graph.bonds[bi].other(i)
            inner[i] += h[j] + bond_feats[bi] @ p.bond_w.data
    msg = np.maximum(0.0, inner @ p.w.data)
    pre = h + msg
    mu = pre.mean(axis=1, keepdims=True)
    var = pre.var(axis=1, keepdims=True)
    xhat = (pre - mu) / np.sqrt(var + 1e-5)
    return xhat * p.ln_gamma.data + p.ln_beta.data


def test_gcn_matches_naive_oracle():
    graph, _ = parse_smiles("CC(=O)NC1CC1")
    _, bond_feats = featurize(graph)
    p = _gcn_params(6, bond_feats.shape[1])
    h = RNG.normal(size=(graph.m, 6))
    got = gcn_layer(constant(h), graph, bond_feats, p).data
    np.testing.assert_allclose(got, _naive_gcn(h, graph, bond_feats, p), atol=1e-10)


def test_gcn_single_atom_self_term_only():
    graph, _ = parse_smiles("C")
    _, bond_feats = featurize(graph)
    p = _gcn_params(5, bond_feats.shape[1] if bond_feats.size else 6)
    h = RNG.normal(size=(1, 5))
    got = gcn_layer(constant(h), graph, np.zeros((0, p.bond_w.shape[0])), p).data
    msg = np.maximum(0.0, h @ p.w.data)
    pre = h + msg
    xhat = (pre - pre.mean()) / np.sqrt(pre.var() + 1e-5)
    np.testing.assert_allclose(got, xhat * p.ln_gamma.data + p.ln_beta.data, atol=1e-10)


def test_gcn_equivariance_under_relabeling():
    import random as pyrandom
    from conftest import permute_graph

    graph, _ = parse_smiles("NC(=O)c1ccccc1O")
    _, bond_feats = featurize(graph)
    p = _gcn_params(6, bond_feats.shape[1])
    h = RNG.normal(size=(graph.m, 6))
    out = gcn_layer(constant(h), graph, bond_feats, p).data

    rng = pyrandom.Random(5)
    permuted = permute_graph(graph, rng)
    # Recover the atom mapping via source tokens (unique per atom).
    mapping = {}
    for new_idx in range(permuted.m):
        for old_idx in range(graph.m):
            if graph.atoms[old_idx].source_token == permuted.atoms[new_idx].source_token:
                mapping[new_idx] = old_idx
    from chemfuse.features import bond_feature_row
    perm_feats = np.stack([bond_feature_row(b) for b in permuted.bonds])
    h_perm = np.stack([h[mapping[i]] for i in range(permuted.m)])
    out_perm = gcn_layer(constant(h_perm), permuted, perm_feats, p).data
    for i in range(permuted.m):
        np.testing.assert_allclose(out_perm[i], out[mapping[i]], atol=1e-10)


@pytest.mark.parametrize("trial", range(5))
def test_grad_gcn(trial):
    graph, _ = parse_smiles("CC=O")
    _, bond_feats = featurize(graph)
    p = _gcn_params(4, bond_feats.shape[1], prefix=f"gc{trial}")
    h = constant(RNG.normal(size=(graph.m, 4)))
    fd_check(lambda: mean_all(gcn_layer(h, graph, bond_feats, p)),
             [p.w, p.bond_w, p.ln_gamma, p.ln_beta])


# ------------------------------------------------------------------------ adam

def test_adam_zero_grad_no_move():
    w = Parameter("w", np.array([[1.0, -2.0]]))
    w.zero_grad()
    state = AdamState(lr=0.1)
    adam_step([w], state)
    np.testing.assert_allclose(w.data, [[1.0, -2.0]])


def test_adam_descends_quadratic():
    w = Parameter("w", np.array([[1.0]]))
    state = AdamState(lr=0.1)
    w.zero_grad()
    backward(sum_all(mul(w, w)))
    before = w.data[0, 0]
    adam_step([w], state)
    assert abs(w.data[0, 0]) < abs(before)


def test_adam_converges_2d_quadratic():
    w = Parameter("w", np.array([[1.5, -2.0]]))
    state = AdamState(lr=0.05)
    for _ in range(200):
        w.zero_grad()
        backward(sum_all(mul(w, w)))
        adam_step([w], state)
    assert np.abs(w.data).max() < 1e-3


def test_adam_weight_decay_decoupled():
    w = Parameter("w", np.array([[1.0]]))
    state = AdamState(lr=0.1, weight_decay=0.5)
    w.zero_grad()  # zero gradient: only decay moves the weight
    adam_step([w], state)
    assert w.data[0, 0] == pytest.approx(1.0 - 0.1 * 0.5)
