"""Corpus ingestion, vocabularies, batching, pretraining, and fine-tuning.

The pretraining step realizes the four-objective sum per batch: every
molecule contributes one token-masked view and one fragment-masked view
(strategy CMM), a clean view (alignment, matching positives, domain
targets), and one mismatched-pair view for matching negatives. One
optimizer step runs per batch under a linear warmup / linear decay
schedule.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .chem import SmilesError, parse_smiles
from .chem.graph import MolecularGraph, TokenSequence
from .encoder import PAD_ID, UNK_ID, ModelConfig, MoleculeEncoder
from .features import (
    EmptyCorpus,
    N_GROUPS,
    detect_functional_groups,
    morgan_fingerprint,
    scaffold_key,
    scaffold_split,
)
from .fragments import FragmentMap, build_fragment_map
from .masking import (
    ContextVocabulary,
    MaskConfig,
    Strategy,
    build_context_vocab,
    sample_ablation_mask,
    sample_fragment_mask,
    sample_token_mask,
)
from .metrics import DegenerateInput, concordance_index, mse, rmse, roc_auc
from .nn import (
    AdamState,
    NonFiniteInput,
    Parameter,
    adam_step,
    add,
    backward,
    concat_rows,
    constant,
    load_checkpoint,
    log_softmax_rows,
    mean_all,
    pick,
    relu,
    restore_into,
    save_checkpoint,
    scale,
    sub,
)
from .nn.layers import affine
from .objectives import (
    BatchTooSmall,
    FlaConfig,
    Heads,
    LossReport,
    SingleFragmentBatch,
    loss_cmm_fragment,
    loss_cmm_token,
    loss_dkl,
    loss_fla,
    loss_sgm,
    total_loss,
)


class FileUnreadable(OSError):
    """The corpus or task file cannot be read."""


class AllLinesFailed(ValueError):
    """Every line of the input failed to parse."""


class EmptySplit(ValueError):
    """A train/valid/test split received zero molecules."""


# ------------------------------------------------------------------ vocabulary

@dataclass(frozen=True)
class Vocabulary:
    """Token-text vocabulary with fixed specials [PAD]=0, [MASK]=1, [UNK]=2."""

    token_to_id: dict[str, int]

    SPECIALS = ("[PAD]", "[MASK]", "[UNK]")

    @property
    def size(self) -> int:
        return len(self.token_to_id) + len(self.SPECIALS)

    def id_for(self, text: str) -> int:
        return self.token_to_id.get(text, UNK_ID)

    def ids_for(self, tokens: TokenSequence) -> list[int]:
        return [self.id_for(t.text) for t in tokens.tokens]

    def texts_in_id_order(self) -> list[str]:
        return sorted(self.token_to_id, key=self.token_to_id.__getitem__)


def build_vocabulary(token_sequences) -> Vocabulary:
    """Ids by first occurrence, after the three reserved specials."""
    token_to_id: dict[str, int] = {}
    count = 0
    for seq in token_sequences:
        count += 1
        for tok in seq.tokens:
            if tok.text not in token_to_id:
                token_to_id[tok.text] = len(Vocabulary.SPECIALS) + len(token_to_id)
    if count == 0:
        raise EmptyCorpus("vocabulary needs at least one molecule")
    return Vocabulary(token_to_id=token_to_id)


# ---------------------------------------------------------------------- corpus

@dataclass
class ParsedMolecule:
    smiles: str
    tokens: TokenSequence
    graph: MolecularGraph
    fragment_map: FragmentMap
    labels: tuple[str, ...] = ()


@dataclass
class Corpus:
    molecules: list[ParsedMolecule]
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.molecules)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for mol in self.molecules:
            h.update(mol.smiles.encode())
            h.update(b"\n")
        return h.hexdigest()


def parse_molecule(smiles: str, labels: tuple[str, ...] = ()) -> ParsedMolecule:
    graph, tokens = parse_smiles(smiles)
    return ParsedMolecule(smiles=smiles, tokens=tokens, graph=graph,
                          fragment_map=build_fragment_map(tokens, graph),
                          labels=labels)


def ingest(path: str | Path) -> Corpus:
    """Read one SMILES per line (optional tab-separated label columns).

    Blank lines and '#' comments are ignored; unparseable lines are skipped
    and counted. Raises FileUnreadable / AllLinesFailed.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileUnreadable(f"cannot read corpus {path}: {exc}") from exc
    molecules: list[ParsedMolecule] = []
    skipped = 0
    saw_data = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        saw_data = True
        fields = line.split("\t")
        try:
            molecules.append(parse_molecule(fields[0], tuple(fields[1:])))
        except SmilesError:
            skipped += 1
    if saw_data and not molecules:
        raise AllLinesFailed(f"no line of {path} parsed as SMILES")
    return Corpus(molecules=molecules, skipped=skipped)


@dataclass
class MoleculeRecord:
    """Training-ready molecule: ids, fragment labels, and target vectors."""

    smiles: str
    tokens: TokenSequence
    graph: MolecularGraph
    fragment_map: FragmentMap
    token_ids: list[int]
    context_ids: list[int]
    fingerprint_bits: np.ndarray
    group_bits: np.ndarray
    labels: tuple[str, ...] = ()


def prepare_records(corpus: Corpus, vocab: Vocabulary,
                    context_vocab: ContextVocabulary,
                    fingerprint_width: int = 2048,
                    fingerprint_radius: int = 2) -> list[MoleculeRecord]:
    records = []
    for mol in corpus.molecules:
        records.append(MoleculeRecord(
            smiles=mol.smiles,
            tokens=mol.tokens,
            graph=mol.graph,
            fragment_map=mol.fragment_map,
            token_ids=vocab.ids_for(mol.tokens),
            context_ids=context_vocab.ids_for_graph(mol.graph),
            fingerprint_bits=morgan_fingerprint(
                mol.graph, radius=fingerprint_radius,
                width=fingerprint_width).bits.astype(np.float64),
            group_bits=detect_functional_groups(mol.graph).astype(np.float64),
            labels=mol.labels,
        ))
    return records


# ---------------------------------------------------------------------- batches

@dataclass
class Batch:
    """Records plus padded id arrays.

    The model consumes each record at its exact length, so padded columns
    never reach attention, pooling, or losses; the arrays exist for
    fixed-shape export and for the padding-neutrality contract.
    """

    records: list[MoleculeRecord]
    max_n: int
    max_m: int
    token_ids: np.ndarray          # B x max_n, PAD_ID-filled
    token_mask: np.ndarray         # B x max_n, 1 on real positions
    atom_mask: np.ndarray          # B x max_m

    @property
    def size(self) -> int:
        return len(self.records)


def make_batch(records: list[MoleculeRecord], pad_n: int | None = None,
               pad_m: int | None = None) -> Batch:
    max_n = max(len(r.token_ids) for r in records)
    max_m = max(r.graph.m for r in records)
    max_n = max(max_n, pad_n or 0)
    max_m = max(max_m, pad_m or 0)
    b = len(records)
    token_ids = np.full((b, max_n), PAD_ID, dtype=np.int64)
    token_mask = np.zeros((b, max_n), dtype=np.int64)
    atom_mask = np.zeros((b, max_m), dtype=np.int64)
    for i, rec in enumerate(records):
        n, m = len(rec.token_ids), rec.graph.m
        token_ids[i, :n] = rec.token_ids
        token_mask[i, :n] = 1
        atom_mask[i, :m] = 1
    return Batch(records=records, max_n=max_n, max_m=max_m,
                 token_ids=token_ids, token_mask=token_mask, atom_mask=atom_mask)


def make_batches(records: list[MoleculeRecord], batch_size: int) -> list[Batch]:
    return [make_batch(records[i:i + batch_size])
            for i in range(0, len(records), batch_size)]


# -------------------------------------------------------------------- schedule

def learning_rate_at(step: int, total_steps: int, warmup_steps: int,
                     lr_max: float) -> float:
    """Linear warmup to ``lr_max`` then linear decay to zero at the end.

    ``step`` is zero-based; the peak sits at the end of warmup and the
    final step runs at zero.
    """
    s = step + 1
    warmup = max(1, warmup_steps)
    if s <= warmup:
        return lr_max * s / warmup
    if total_steps <= warmup:
        return lr_max
    return lr_max * max(0, total_steps - s) / (total_steps - warmup)


# ----------------------------------------------------------------------- model

class PretrainModel:
    """Encoder plus heads sharing one flat parameter dict."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.params: dict[str, Parameter] = {}
        self.encoder = MoleculeEncoder(config, seed=seed, params=self.params)
        self.heads = Heads(config, seed=seed + 1, params=self.params)
        self.seed = seed


def _context_keys_as_json(context_vocab: ContextVocabulary) -> list:
    ordered = sorted(context_vocab.key_to_id, key=context_vocab.key_to_id.__getitem__)
    return [[elem, [list(pair) for pair in neigh]] for elem, neigh in ordered]


def _context_vocab_from_json(payload: list) -> ContextVocabulary:
    key_to_id = {}
    for elem, neigh in payload:
        key = (elem, tuple((int(o), e) for o, e in neigh))
        key_to_id[key] = len(key_to_id)
    return ContextVocabulary(key_to_id=key_to_id)


def save_pretrained(path: str | Path, model: PretrainModel, vocab: Vocabulary,
                    context_vocab: ContextVocabulary, step: int,
                    mask_config: MaskConfig | None = None) -> None:
    config = {
        "model": asdict(model.config),
        "vocab_tokens": vocab.texts_in_id_order(),
        "context_keys": _context_keys_as_json(context_vocab),
        "mask": {
            "r_t": mask_config.r_t, "r_f": mask_config.r_f,
            "strategy": mask_config.strategy.value,
        } if mask_config else None,
    }
    save_checkpoint(path, model.params, config=config, seed=model.seed, step=step)


def load_pretrained(path: str | Path) -> tuple[PretrainModel, Vocabulary,
                                               ContextVocabulary, dict]:
    manifest, tensors = load_checkpoint(path)
    config = manifest["config"]
    model_config = ModelConfig(**config["model"])
    model = PretrainModel(model_config, seed=manifest["seed"])
    restore_into(model.params, tensors)
    vocab = Vocabulary(token_to_id={
        text: i + len(Vocabulary.SPECIALS)
        for i, text in enumerate(config["vocab_tokens"])})
    context_vocab = _context_vocab_from_json(config["context_keys"])
    return model, vocab, context_vocab, manifest


# ------------------------------------------------------------------- pretraining

@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 2e-3
    warmup_steps: int = 40
    weight_decay: float = 0.0
    seed: int = 7


def _record_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, index])


def derangement(n: int) -> list[int]:
    """Rotation pairing for matching negatives: index i gets i+1 mod n."""
    if n < 2:
        raise BatchTooSmall("a derangement needs at least two molecules")
    return [(i + 1) % n for i in range(n)]


def _step_losses(model: PretrainModel, batch: Batch, mask_cfg: MaskConfig,
                 fla_cfg: FlaConfig, epoch: int, base_index: int,
                 train_seed: int) -> tuple:
    """Forward every view of one batch and assemble the total loss."""
    enc = model.encoder
    heads = model.heads
    records = batch.records
    block = mask_cfg.strategy is Strategy.SINGLE_MODALITY

    tok_samples, tok_encodings = [], []
    frag_samples, frag_encodings = [], []
    clean_encodings = []
    for i, rec in enumerate(records):
        rng = _record_rng(train_seed, epoch, base_index + i)
        if mask_cfg.strategy is Strategy.CMM:
            tok_sample = sample_token_mask(rec, mask_cfg, rng)
            frag_sample = sample_fragment_mask(rec, rec.fragment_map, mask_cfg, rng)
        else:
            tok_sample = sample_ablation_mask(rec, mask_cfg, rng)
            frag_sample = None
        tok_samples.append(tok_sample)
        tok_encodings.append(enc.encode_molecule(
            rec.token_ids, rec.graph,
            masked_tokens=tok_sample.masked_token_positions,
            masked_atoms=tok_sample.masked_atom_positions,
            block_cross_modality=block))
        if frag_sample is not None:
            frag_samples.append(frag_sample)
            frag_encodings.append(enc.encode_molecule(
                rec.token_ids, rec.graph,
                masked_tokens=frag_sample.masked_token_positions,
                masked_atoms=frag_sample.masked_atom_positions))
        clean_encodings.append(enc.encode_molecule(rec.token_ids, rec.graph))

    l_t, tok_aux = loss_cmm_token(tok_encodings, tok_samples, heads)
    if frag_encodings:
        l_f, _ = loss_cmm_fragment(frag_encodings, frag_samples, heads)
    else:
        l_f = constant(0.0)

    pooled = [enc.pool_fragments(e, rec.fragment_map)
              for e, rec in zip(clean_encodings, records)]
    offsets = list(np.cumsum([0] + [p.K for p in pooled[:-1]]))
    f_s = concat_rows([p.f_s for p in pooled])
    f_g = concat_rows([p.f_g for p in pooled])
    fla_aux = {}
    try:
        l_fla, fla_aux = loss_fla(f_s, f_g, offsets, fla_cfg)
    except SingleFragmentBatch:
        l_fla = constant(0.0)

    sgm_aux = {}
    try:
        partners = derangement(len(records))
        neg = [enc.joint_encode(
            enc.embed_smiles(records[i].token_ids),
            enc.embed_graph(records[partner].graph)).x_cls
            for i, partner in enumerate(partners)]
        l_sgm, sgm_aux = loss_sgm([e.x_cls for e in clean_encodings], neg, heads)
    except BatchTooSmall:
        l_sgm = constant(0.0)

    l_dkl, _ = loss_dkl([e.x_cls for e in clean_encodings],
                        [rec.fingerprint_bits for rec in records],
                        [rec.group_bits for rec in records], heads)

    total, report = total_loss(
        l_t, l_f, l_fla, l_sgm, l_dkl,
        mlm_accuracy=tok_aux.get("mlm_accuracy", float("nan")),
        sgm_accuracy=sgm_aux.get("sgm_accuracy", float("nan")))
    return total, report, fla_aux


LOG_HEADER = "step\tl_t\tl_f\tl_fla\tl_sgm\tl_dkl\ttotal\tsgm_acc\tmlm_acc"


def format_log_line(step: int, report: LossReport) -> str:
    return (f"{step}\t{report.l_t:.6f}\t{report.l_f:.6f}\t{report.l_fla:.6f}"
            f"\t{report.l_sgm:.6f}\t{report.l_dkl:.6f}\t{report.total:.6f}"
            f"\t{report.sgm_accuracy:.4f}\t{report.mlm_accuracy:.4f}")


def pretrain(corpus: Corpus, mask_config: MaskConfig, train_config: TrainConfig,
             model_kwargs: dict | None = None,
             checkpoint_dir: str | Path | None = None,
             fla_config: FlaConfig | None = None,
             log_sink=None) -> tuple[PretrainModel, Vocabulary,
                                     ContextVocabulary, list[LossReport]]:
    """Run the full pretraining loop and return the trained model.

    Per epoch every molecule contributes one token-masked and one
    fragment-masked view in the same batch (CMM); ablation strategies
    contribute a single view and a zero fragment term. A NaN in any
    component aborts with the offending batch index. When
    ``checkpoint_dir`` is set, a checkpoint is (re)written after each
    epoch.
    """
    if len(corpus) == 0:
        raise EmptyCorpus("cannot pretrain on an empty corpus")
    vocab = build_vocabulary(m.tokens for m in corpus.molecules)
    context_vocab = build_context_vocab(m.graph for m in corpus.molecules)
    model_kwargs = dict(model_kwargs or {})
    fp_width = model_kwargs.pop("fingerprint_width", 1024)
    config = ModelConfig(vocab_size=vocab.size,
                         context_vocab_size=context_vocab.size,
                         fingerprint_width=fp_width,
                         n_groups=N_GROUPS, **model_kwargs)
    model = PretrainModel(config, seed=train_config.seed)
    records = prepare_records(corpus, vocab, context_vocab,
                              fingerprint_width=config.fingerprint_width)
    steps_per_epoch = math.ceil(len(records) / train_config.batch_size)
    total_steps = steps_per_epoch * train_config.epochs
    fla_cfg = fla_config or FlaConfig()
    optimizer = AdamState(lr=train_config.lr,
                          weight_decay=train_config.weight_decay)
    history: list[LossReport] = []
    if log_sink is not None:
        print(LOG_HEADER, file=log_sink)
    step = 0
    params = list(model.params.values())
    for epoch in range(train_config.epochs):
        # Seeded reshuffle per epoch: batch composition (and with it the
        # matching negatives) varies while runs stay reproducible.
        order = np.random.default_rng([train_config.seed, epoch]).permutation(
            len(records))
        shuffled = [records[i] for i in order]
        batches = make_batches(shuffled, train_config.batch_size)
        for batch_index, batch in enumerate(batches):
            try:
                total, report, _ = _step_losses(
                    model, batch, mask_config, fla_cfg, epoch,
                    base_index=batch_index * train_config.batch_size,
                    train_seed=train_config.seed)
                for p in params:
                    p.zero_grad()
                backward(total)
            except NonFiniteInput as exc:
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch} batch {batch_index}: {exc}"
                ) from exc
            optimizer.lr = learning_rate_at(step, total_steps,
                                            train_config.warmup_steps,
                                            train_config.lr)
            adam_step(params, optimizer)
            history.append(report)
            if log_sink is not None:
                print(format_log_line(step, report), file=log_sink)
            step += 1
        if checkpoint_dir is not None:
            save_pretrained(checkpoint_dir, model, vocab, context_vocab,
                            step=step, mask_config=mask_config)
    return model, vocab, context_vocab, history


# -------------------------------------------------------------------- finetuning

class TaskKind(Enum):
    BINARY_CLASSIFICATION = "cls"
    REGRESSION = "reg"
    PAIR_CLASSIFICATION = "pair"


class SplitMode(Enum):
    SCAFFOLD = "scaffold"
    RANDOM = "random"


@dataclass
class FinetuneTask:
    """A downstream dataset: molecules (one or a pair) plus one label column."""

    kind: TaskKind
    molecules: list[tuple[ParsedMolecule, ...]]
    labels: list[float]
    split: SplitMode = SplitMode.SCAFFOLD

    @property
    def n_classes(self) -> int:
        if self.kind is TaskKind.REGRESSION:
            return 1
        return int(max(self.labels)) + 1


def load_task(path: str | Path, kind: TaskKind,
              split: SplitMode = SplitMode.SCAFFOLD) -> FinetuneTask:
    """Parse a task file: smiles[<TAB>smiles_b]<TAB>label per line."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileUnreadable(f"cannot read task {path}: {exc}") from exc
    molecules: list[tuple[ParsedMolecule, ...]] = []
    labels: list[float] = []
    want_pair = kind is TaskKind.PAIR_CLASSIFICATION
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        try:
            if want_pair:
                mols = (parse_molecule(fields[0]), parse_molecule(fields[1]))
                label = float(fields[2])
            else:
                mols = (parse_molecule(fields[0]),)
                label = float(fields[1])
        except (SmilesError, IndexError, ValueError):
            continue
        molecules.append(mols)
        labels.append(label)
    if not molecules:
        raise AllLinesFailed(f"no usable rows in {path}")
    return FinetuneTask(kind=kind, molecules=molecules, labels=labels, split=split)


def split_task(task: FinetuneTask, fractions=(0.8, 0.1, 0.1),
               seed: int = 0) -> tuple[list[int], list[int], list[int]]:
    if task.split is SplitMode.SCAFFOLD:
        keys = [scaffold_key(mols[0].graph) for mols in task.molecules]
        train, valid, test = scaffold_split(keys, fractions)
    else:
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(task.molecules)).tolist()
        n = len(order)
        n_train = int(round(fractions[0] * n))
        n_valid = int(round(fractions[1] * n))
        train = sorted(order[:n_train])
        valid = sorted(order[n_train:n_train + n_valid])
        test = sorted(order[n_train + n_valid:])
    for name, part in (("train", train), ("valid", valid), ("test", test)):
        if not part:
            raise EmptySplit(f"{name} split received zero molecules")
    return train, valid, test


@dataclass
class FinetuneResult:
    metrics: dict[str, float]
    best_epoch: int
    history: list[dict]
    split_sizes: tuple[int, int, int]


def _x_cls_of(model: PretrainModel, vocab: Vocabulary,
              mols: tuple[ParsedMolecule, ...]):
    parts = []
    for mol in mols:
        encoding = model.encoder.encode_molecule(vocab.ids_for(mol.tokens), mol.graph)
        parts.append(encoding.x_cls)
    if len(parts) == 1:
        return parts[0]
    from .nn import concat_cols
    return concat_cols(parts)


def _task_loss(logits, labels_np, kind: TaskKind):
    if kind is TaskKind.REGRESSION:
        diff = sub(logits, constant(labels_np.reshape(-1, 1)))
        return mean_all(add(relu(diff), relu(scale(diff, -1.0))))  # MAE
    targets = [int(v) for v in labels_np]
    return scale(mean_all(pick(log_softmax_rows(logits), targets)), -1.0)


def finetune(model: PretrainModel, vocab: Vocabulary, task: FinetuneTask,
             epochs: int = 20, batch_size: int = 16, lr: float = 1e-3,
             weight_decay: float = 0.0, seed: int = 0,
             tune_encoder: bool = True,
             fractions=(0.8, 0.1, 0.1)) -> FinetuneResult:
    """Train a two-layer head on x_cls (pair tasks concatenate both x_cls).

    Selects the epoch with the best validation loss, then reports test
    metrics; a single-class test split reports ROC-AUC as NaN with a
    warning instead of failing.
    """
    train_idx, valid_idx, test_idx = split_task(task, fractions, seed=seed)
    d = model.config.dim
    in_dim = d * (2 if task.kind is TaskKind.PAIR_CLASSIFICATION else 1)
    out_dim = task.n_classes
    rng = np.random.default_rng(seed + 1)
    head_params: dict[str, Parameter] = {}
    limit1 = 1.0 / np.sqrt(in_dim)
    limit2 = 1.0 / np.sqrt(d)
    w1 = Parameter("ft_w1", rng.uniform(-limit1, limit1, size=(in_dim, d)))
    b1 = Parameter("ft_b1", np.zeros((1, d)))
    w2 = Parameter("ft_w2", rng.uniform(-limit2, limit2, size=(d, out_dim)))
    b2 = Parameter("ft_b2", np.zeros((1, out_dim)))
    for p in (w1, b1, w2, b2):
        head_params[p.name] = p
    trainable = list(head_params.values())
    if tune_encoder:
        trainable += list(model.params.values())

    labels = np.asarray(task.labels, dtype=np.float64)
    frozen_cache: dict[int, np.ndarray] = {}

    def head_forward(indices):
        rows = []
        for i in indices:
            if tune_encoder:
                rows.append(_x_cls_of(model, vocab, task.molecules[i]))
            else:
                if i not in frozen_cache:
                    frozen_cache[i] = _x_cls_of(model, vocab,
                                                task.molecules[i]).data
                rows.append(constant(frozen_cache[i]))
        x = concat_rows(rows)
        return affine(relu(affine(x, w1, b1)), w2, b2)

    def eval_loss(indices):
        return _task_loss(head_forward(indices), labels[indices], task.kind).item()

    def predictions(indices):
        logits = head_forward(indices).data
        if task.kind is TaskKind.REGRESSION:
            return logits[:, 0]
        if task.kind is TaskKind.BINARY_CLASSIFICATION:
            shifted = logits - logits.max(axis=1, keepdims=True)
            probs = np.exp(shifted)
            probs /= probs.sum(axis=1, keepdims=True)
            return probs[:, 1]
        return logits.argmax(axis=1).astype(np.float64)

    optimizer = AdamState(lr=lr, weight_decay=weight_decay)
    order_rng = np.random.default_rng(seed + 2)
    best = (float("inf"), -1, None)
    history = []
    for epoch in range(epochs):
        order = order_rng.permutation(len(train_idx))
        for lo in range(0, len(order), batch_size):
            chunk = [train_idx[i] for i in order[lo:lo + batch_size]]
            loss = _task_loss(head_forward(chunk), labels[chunk], task.kind)
            for p in trainable:
                p.zero_grad()
            backward(loss)
            adam_step(trainable, optimizer)
        val = eval_loss(valid_idx)
        history.append({"epoch": epoch, "valid_loss": val})
        if val < best[0]:
            snapshot = {name: p.data.copy() for name, p in head_params.items()}
            if tune_encoder:
                snapshot.update({name: p.data.copy()
                                 for name, p in model.params.items()})
            best = (val, epoch, snapshot)
    if best[2] is not None:
        for name, data in best[2].items():
            if name in head_params:
                head_params[name].data = data
            else:
                model.params[name].data = data

    preds = predictions(test_idx)
    truth = labels[test_idx]
    metrics: dict[str, float] = {}
    if task.kind is TaskKind.BINARY_CLASSIFICATION:
        try:
            metrics["roc_auc"] = roc_auc(preds, truth.astype(int))
        except DegenerateInput as exc:
            warnings.warn(f"ROC-AUC undefined on the test split: {exc}")
            metrics["roc_auc"] = float("nan")
    elif task.kind is TaskKind.REGRESSION:
        metrics["rmse"] = rmse(preds, truth)
        metrics["mse"] = mse(preds, truth)
        try:
            metrics["ci"] = concordance_index(preds, truth)
        except DegenerateInput:
            metrics["ci"] = float("nan")
    else:
        metrics["accuracy"] = float((preds == truth).mean())
    return FinetuneResult(metrics=metrics, best_epoch=best[1], history=history,
                          split_sizes=(len(train_idx), len(valid_idx), len(test_idx)))


# ------------------------------------------------------------------- embedding

def embed_corpus(model: PretrainModel, vocab: Vocabulary,
                 corpus: Corpus) -> np.ndarray:
    """One x_cls row per molecule, in corpus order."""
    rows = []
    for mol in corpus.molecules:
        encoding = model.encoder.encode_molecule(vocab.ids_for(mol.tokens), mol.graph)
        rows.append(encoding.x_cls.data[0])
    return np.stack(rows) if rows else np.zeros((0, model.config.dim))


def similarity(model: PretrainModel, vocab: Vocabulary,
               smiles_a: str, smiles_b: str) -> float:
    """Cosine similarity of the two molecules' x_cls embeddings."""
    vectors = []
    for s in (smiles_a, smiles_b):
        mol = parse_molecule(s)
        encoding = model.encoder.encode_molecule(vocab.ids_for(mol.tokens), mol.graph)
        vectors.append(encoding.x_cls.data[0])
    a, b = vectors
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / denom) if denom else 0.0


# ---------------------------------------------------------------- configuration

def parse_config_file(path: str | Path) -> dict[str, str]:
    """Read ``key = value`` lines; '#' starts a comment; later keys win."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileUnreadable(f"cannot read config {path}: {exc}") from exc
    out: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line without '=': {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out
