"""Tensor math, autodiff, layers, optimizer, and checkpointing."""

from .checkpoint import load_checkpoint, restore_into, save_checkpoint
from .layers import (
    AttentionParams,
    GcnLayerParams,
    affine,
    gcn_layer,
    multi_head_attention,
)
from .optim import AdamState, adam_step
from .tensor import (
    NonFiniteInput,
    NotScalarLoss,
    Parameter,
    ShapeMismatch,
    Tensor,
    add,
    backward,
    concat_cols,
    concat_rows,
    constant,
    cosine_similarity,
    embedding_lookup,
    gather_rows,
    gelu,
    layer_norm_rows,
    log_softmax_rows,
    matmul,
    mean_all,
    mean_rows,
    mul,
    normalize_rows,
    pick,
    relu,
    scale,
    slice_cols,
    slice_rows,
    softmax_rows,
    softplus,
    sub,
    sum_all,
    transpose,
)
