"""Pretraining objectives: masked prediction, fragment alignment, matching,
and domain-knowledge targets, plus the unit-weight total.

All losses are per-position (or per-sample) means over the batch, so their
magnitudes are batch-size invariant. Each function returns the scalar loss
tensor plus a small dict of plain-number diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import JointEncoding, ModelConfig, ParamFactory
from .masking import MaskedSample, Modality
from .nn.layers import affine
from .nn.tensor import (
    NonFiniteInput,
    Parameter,
    Tensor,
    add,
    concat_rows,
    constant,
    gather_rows,
    log_softmax_rows,
    matmul,
    mean_all,
    mul,
    normalize_rows,
    pick,
    relu,
    scale,
    softplus,
    sub,
    transpose,
)


class NoMaskedPositions(ValueError):
    """A masked-prediction loss got a batch with nothing masked."""


class SingleFragmentBatch(ValueError):
    """Fragment alignment needs at least two fragments for negatives."""


class BatchTooSmall(ValueError):
    """Matching needs at least two molecules to derange."""


class MissingComponent(ValueError):
    """The total loss is missing one of its components."""


@dataclass(frozen=True)
class FlaConfig:
    """Contrastive alignment settings; in-batch negatives are always on."""

    tau: float = 0.05
    in_batch_negatives: bool = True

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("temperature must be positive")


class Heads:
    """The five prediction heads over encoder outputs.

    token/context heads are affine; the matching, fingerprint, and
    functional-group heads are two-layer perceptrons with a relu hidden
    layer of the model width.
    """

    def __init__(self, config: ModelConfig, seed: int = 1,
                 params: dict[str, Parameter] | None = None):
        self.params: dict[str, Parameter] = params if params is not None else {}
        factory = ParamFactory(self.params, np.random.default_rng(seed))
        d = config.dim
        self.token_w, self.token_b = factory.linear("head_token", d, config.vocab_size)
        self.ctx_w, self.ctx_b = factory.linear("head_ctx", d, config.context_vocab_size)
        self.sgm_w1, self.sgm_b1 = factory.linear("head_sgm1", d, d)
        self.sgm_w2, self.sgm_b2 = factory.linear("head_sgm2", d, 2)
        self.fp_w1, self.fp_b1 = factory.linear("head_fp1", d, d)
        self.fp_w2, self.fp_b2 = factory.linear("head_fp2", d, config.fingerprint_width)
        self.fg_w1, self.fg_b1 = factory.linear("head_fg1", d, d)
        self.fg_w2, self.fg_b2 = factory.linear("head_fg2", d, config.n_groups)

    def token_logits(self, rows: Tensor) -> Tensor:
        return affine(rows, self.token_w, self.token_b)

    def context_logits(self, rows: Tensor) -> Tensor:
        return affine(rows, self.ctx_w, self.ctx_b)

    def sgm_logits(self, rows: Tensor) -> Tensor:
        return affine(relu(affine(rows, self.sgm_w1, self.sgm_b1)),
                      self.sgm_w2, self.sgm_b2)

    def fp_output(self, rows: Tensor) -> Tensor:
        return affine(relu(affine(rows, self.fp_w1, self.fp_b1)),
                      self.fp_w2, self.fp_b2)

    def fg_logits(self, rows: Tensor) -> Tensor:
        return affine(relu(affine(rows, self.fg_w1, self.fg_b1)),
                      self.fg_w2, self.fg_b2)


def _nll_and_hits(logits: Tensor, targets: list[int]) -> tuple[Tensor, int]:
    log_probs = log_softmax_rows(logits)
    nll = scale(pick(log_probs, targets), -1.0)
    hits = int((np.argmax(logits.data, axis=1) == np.asarray(targets)).sum())
    return nll, hits


def _masked_prediction_terms(encodings, samples, heads,
                             want_tokens: bool, want_atoms: bool):
    token_nll, atom_nll = [], []
    token_hits = token_total = 0
    for enc, sample in zip(encodings, samples):
        if want_tokens and sample.masked_token_positions:
            positions = list(sample.masked_token_positions)
            rows = gather_rows(enc.x, positions)
            targets = [sample.token_targets[i] for i in positions]
            nll, hits = _nll_and_hits(heads.token_logits(rows), targets)
            token_nll.append(nll)
            token_hits += hits
            token_total += len(positions)
        if want_atoms and sample.masked_atom_positions:
            positions = [enc.n + j for j in sample.masked_atom_positions]
            targets = [sample.atom_context_targets[j]
                       for j in sample.masked_atom_positions]
            rows = gather_rows(enc.x, positions)
            nll, _ = _nll_and_hits(heads.context_logits(rows), targets)
            atom_nll.append(nll)
    return token_nll, atom_nll, token_hits, token_total


def loss_cmm_token(encodings: list[JointEncoding], samples: list[MaskedSample],
                   heads: Heads) -> tuple[Tensor, dict]:
    """Token-level masked prediction: mean token CE plus mean context CE.

    A modality with no masked positions contributes zero; a batch with
    nothing masked at all raises NoMaskedPositions.
    """
    token_nll, atom_nll, hits, total = _masked_prediction_terms(
        encodings, samples, heads, want_tokens=True, want_atoms=True)
    if not token_nll and not atom_nll:
        raise NoMaskedPositions("token-level batch has no masked positions")
    loss = constant(0.0)
    if token_nll:
        loss = add(loss, mean_all(concat_rows(token_nll)))
    if atom_nll:
        loss = add(loss, mean_all(concat_rows(atom_nll)))
    acc = hits / total if total else float("nan")
    return loss, {"mlm_accuracy": acc, "token_positions": total}


def loss_cmm_fragment(encodings: list[JointEncoding], samples: list[MaskedSample],
                      heads: Heads) -> tuple[Tensor, dict]:
    """Fragment-level masked prediction over the masked modality only."""
    token_nll, atom_nll = [], []
    for enc, sample in zip(encodings, samples):
        if sample.masked_modality is Modality.SMILES:
            t_nll, _, _, _ = _masked_prediction_terms(
                [enc], [sample], heads, want_tokens=True, want_atoms=False)
            token_nll.extend(t_nll)
        elif sample.masked_modality is Modality.GRAPH:
            _, a_nll, _, _ = _masked_prediction_terms(
                [enc], [sample], heads, want_tokens=False, want_atoms=True)
            atom_nll.extend(a_nll)
    if not token_nll and not atom_nll:
        raise NoMaskedPositions("fragment-level batch has no masked positions")
    loss = constant(0.0)
    if token_nll:
        loss = add(loss, mean_all(concat_rows(token_nll)))
    if atom_nll:
        loss = add(loss, mean_all(concat_rows(atom_nll)))
    return loss, {}


def loss_fla(f_s: Tensor, f_g: Tensor, offsets: list[int],
             config: FlaConfig) -> tuple[Tensor, dict]:
    """Symmetric temperature-scaled contrastive alignment over fragments.

    Row k of ``f_s``/``f_g`` is the same fragment seen from each modality;
    every other row of the opposite modality in the batch is a negative
    (including fragments of the same molecule). ``offsets`` records where
    each molecule's fragments start; the negative set spans all of them.
    """
    total = f_s.shape[0]
    if total != f_g.shape[0]:
        raise ValueError(f"fragment count mismatch: {f_s.shape} vs {f_g.shape}")
    if total < 2:
        raise SingleFragmentBatch("need at least two fragments in the batch")
    sims = matmul(normalize_rows(f_s), transpose(normalize_rows(f_g)))
    scaled = scale(sims, 1.0 / config.tau)
    diag = list(range(total))
    loss_s = scale(mean_all(pick(log_softmax_rows(scaled), diag)), -1.0)
    loss_g = scale(mean_all(pick(log_softmax_rows(transpose(scaled)), diag)), -1.0)
    matched = float(np.mean(np.diag(sims.data)))
    off_diag = sims.data[~np.eye(total, dtype=bool)]
    return add(loss_s, loss_g), {
        "matched_cosine": matched,
        "mismatched_cosine": float(off_diag.mean()) if off_diag.size else float("nan"),
    }


def loss_sgm(pos_x_cls: list[Tensor], neg_x_cls: list[Tensor],
             heads: Heads) -> tuple[Tensor, dict]:
    """Binary matching loss: label 1 for true pairs, 0 for deranged pairs."""
    if len(pos_x_cls) < 2:
        raise BatchTooSmall("matching needs at least two molecules")
    rows = concat_rows(list(pos_x_cls) + list(neg_x_cls))
    logits = heads.sgm_logits(rows)
    labels = [1] * len(pos_x_cls) + [0] * len(neg_x_cls)
    nll, hits = _nll_and_hits(logits, labels)
    return mean_all(nll), {"sgm_accuracy": hits / len(labels)}


def loss_dkl(x_cls_batch: list[Tensor], fingerprints: list[np.ndarray],
             group_vectors: list[np.ndarray], heads: Heads) -> tuple[Tensor, dict]:
    """Fingerprint regression (MSE on raw outputs) plus functional-group BCE."""
    rows = concat_rows(list(x_cls_batch))
    fp_target = constant(np.stack([np.asarray(fp, dtype=np.float64)
                                   for fp in fingerprints]))
    fg_target = np.stack([np.asarray(gv, dtype=np.float64) for gv in group_vectors])
    diff = sub(heads.fp_output(rows), fp_target)
    mse = mean_all(mul(diff, diff))
    logits = heads.fg_logits(rows)
    # Stable binary cross-entropy with logits: softplus(z) - z * y.
    bce = mean_all(sub(softplus(logits), mul(logits, constant(fg_target))))
    return add(mse, bce), {}


@dataclass
class LossReport:
    """Scalar components of one batch plus their unit-weight total."""

    l_t: float
    l_f: float
    l_cmm: float
    l_fla: float
    l_sgm: float
    l_dkl: float
    total: float
    mlm_accuracy: float = float("nan")
    sgm_accuracy: float = float("nan")


def total_loss(l_t: Tensor | None, l_f: Tensor | None, l_fla: Tensor | None,
               l_sgm: Tensor | None, l_dkl: Tensor | None,
               mlm_accuracy: float = float("nan"),
               sgm_accuracy: float = float("nan")) -> tuple[Tensor, LossReport]:
    """Unit-weight sum of the four objectives (CMM = token + fragment).

    Raises:
        MissingComponent: if any component is absent.
        NonFiniteInput: if any component is NaN or infinite.
    """
    names = ("l_t", "l_f", "l_fla", "l_sgm", "l_dkl")
    parts = (l_t, l_f, l_fla, l_sgm, l_dkl)
    for name, part in zip(names, parts):
        if part is None:
            raise MissingComponent(f"component {name} was not computed")
        if not np.isfinite(part.data[0, 0]):
            raise NonFiniteInput(f"component {name} is not finite: {part.data[0, 0]}")
    l_cmm = add(l_t, l_f)
    total = add(add(l_cmm, l_fla), add(l_sgm, l_dkl))
    report = LossReport(
        l_t=l_t.item(), l_f=l_f.item(), l_cmm=l_cmm.item(), l_fla=l_fla.item(),
        l_sgm=l_sgm.item(), l_dkl=l_dkl.item(), total=total.item(),
        mlm_accuracy=mlm_accuracy, sgm_accuracy=sgm_accuracy,
    )
    return total, report
