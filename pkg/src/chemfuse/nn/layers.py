"""Neural layers composed from tape ops: attention, residual GCN, affine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..chem.graph import MolecularGraph
from .tensor import (
    ShapeMismatch,
    Tensor,
    add,
    concat_cols,
    constant,
    layer_norm_rows,
    matmul,
    relu,
    scale,
    slice_cols,
    softmax_rows,
    transpose,
)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return add(matmul(x, w), b)


@dataclass
class AttentionParams:
    """Query/key/value/output projections of one attention module."""

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor


def multi_head_attention(q_in: Tensor, kv_in: Tensor, heads: int,
                         params: AttentionParams,
                         attn_bias: np.ndarray | None = None,
                         retain: list | None = None) -> Tensor:
    """Scaled dot-product attention, per head, concatenated and projected.

    ``attn_bias`` (n_q x n_kv) is added to every head's scores before the
    softmax; use large negatives to block positions. When ``retain`` is a
    list, each head's probability matrix is appended to it as plain data.
    """
    width = params.wq.shape[1]
    if width % heads:
        raise ShapeMismatch(f"model width {width} not divisible by {heads} heads")
    head_dim = width // heads
    q = affine(q_in, params.wq, params.bq)
    k = affine(kv_in, params.wk, params.bk)
    v = affine(kv_in, params.wv, params.bv)
    bias_t = constant(attn_bias) if attn_bias is not None else None
    outputs = []
    for h in range(heads):
        lo, hi = h * head_dim, (h + 1) * head_dim
        scores = scale(matmul(slice_cols(q, lo, hi), transpose(slice_cols(k, lo, hi))),
                       1.0 / np.sqrt(head_dim))
        if bias_t is not None:
            scores = add(scores, bias_t)
        probs = softmax_rows(scores)
        if retain is not None:
            retain.append(probs.data.copy())
        outputs.append(matmul(probs, slice_cols(v, lo, hi)))
    return affine(concat_cols(outputs), params.wo, params.bo)


@dataclass
class GcnLayerParams:
    """Weights of one residual message-passing layer."""

    w: Tensor
    bond_w: Tensor
    ln_gamma: Tensor
    ln_beta: Tensor


def _graph_operators(graph: MolecularGraph,
                     bond_features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense neighbor-sum operator and per-atom summed bond features."""
    m = graph.m
    adj = np.zeros((m, m), dtype=np.float64)
    edge_sum = np.zeros((m, bond_features.shape[1]), dtype=np.float64)
    for bi, bond in enumerate(graph.bonds):
        adj[bond.a, bond.b] = 1.0
        adj[bond.b, bond.a] = 1.0
        edge_sum[bond.a] += bond_features[bi]
        edge_sum[bond.b] += bond_features[bi]
    return adj, edge_sum


def gcn_layer(atom_states: Tensor, graph: MolecularGraph,
              bond_features: np.ndarray, params: GcnLayerParams) -> Tensor:
    """h_i' = LayerNorm(h_i + ReLU(W (h_i + sum_j (h_j + proj(e_ij))))).

    Isolated atoms see only the self term. ``bond_features`` rows align
    with ``graph.bonds`` (already masked upstream when applicable).
    """
    if atom_states.shape[0] != graph.m:
        raise ShapeMismatch(
            f"{atom_states.shape[0]} state rows for {graph.m} atoms")
    adj, edge_sum = _graph_operators(graph, bond_features)
    neighbor = add(matmul(constant(adj), atom_states),
                   matmul(constant(edge_sum), params.bond_w))
    inner = add(atom_states, neighbor)
    message = relu(matmul(inner, params.w))
    return layer_norm_rows(add(atom_states, message), params.ln_gamma, params.ln_beta)
