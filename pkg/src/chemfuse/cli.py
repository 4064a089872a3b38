"""Command-line interface: one subcommand per pipeline capability.

All subcommands stream line-oriented data on stdout and keep diagnostics
on stderr, so they compose in shell pipelines. Exit codes: 0 success,
1 input error, 2 internal error. Flags override config-file values.
"""

from __future__ import annotations

import argparse
import sys
from types import SimpleNamespace

import numpy as np

from .chem import SmilesError, parse_smiles, tokenize, write_smiles
from .encoder import dump_attention
from .features import (
    group_names_present,
    morgan_fingerprint,
    murcko_scaffold,
)
from .fragments import build_fragment_map
from .masking import MaskConfig, Strategy, sample_fragment_mask, sample_token_mask
from .metrics import DegenerateInput, concordance_index, mse, rmse, roc_auc
from .pipeline import (
    AllLinesFailed,
    EmptySplit,
    FileUnreadable,
    SplitMode,
    TaskKind,
    TrainConfig,
    build_vocabulary,
    finetune,
    ingest,
    load_pretrained,
    load_task,
    parse_config_file,
    parse_molecule,
    pretrain,
    similarity,
)
from .masking import build_context_vocab


class InputError(ValueError):
    """User-facing input problem: bad flags, files, or molecule lines."""


def _read_smiles_lines(path: str | None):
    stream = open(path) if path else sys.stdin
    try:
        for raw in stream:
            line = raw.strip()
            if line and not line.startswith("#"):
                yield line.split("\t")[0]
    finally:
        if path:
            stream.close()


# ----------------------------------------------------------------- subcommands

def cmd_tokenize(args) -> int:
    for smiles in _read_smiles_lines(args.input):
        seq = tokenize(smiles)
        print(" ".join(t.text for t in seq.tokens))
    return 0


def cmd_parse(args) -> int:
    for smiles in _read_smiles_lines(args.input):
        graph, _ = parse_smiles(smiles)
        atoms = ",".join(a.element.lower() if a.aromatic else a.element
                         for a in graph.atoms)
        bonds = ",".join(f"{b.a}-{b.b}:{b.order.value}" for b in graph.bonds)
        print(f"{graph.m}\t{len(graph.bonds)}\t{atoms}\t{bonds}")
    return 0


def cmd_fragment(args) -> int:
    for smiles in _read_smiles_lines(args.input):
        graph, tokens = parse_smiles(smiles)
        fmap = build_fragment_map(tokens, graph)
        l_g = ",".join(str(x) for x in fmap.l_g)
        l_s = ",".join(str(x) for x in fmap.l_s)
        print(f"{fmap.K}\t{l_g}\t{l_s}")
    return 0


def cmd_fingerprint(args) -> int:
    for smiles in _read_smiles_lines(args.input):
        graph, _ = parse_smiles(smiles)
        fp = morgan_fingerprint(graph, radius=args.radius, width=args.width)
        print(fp.to_hex())
    return 0


def cmd_groups(args) -> int:
    for smiles in _read_smiles_lines(args.input):
        graph, _ = parse_smiles(smiles)
        print(",".join(group_names_present(graph)))
    return 0


def cmd_scaffold(args) -> int:
    for smiles in _read_smiles_lines(args.input):
        graph, _ = parse_smiles(smiles)
        print(write_smiles(murcko_scaffold(graph)))
    return 0


def cmd_mask(args) -> int:
    cfg = MaskConfig(r_t=args.r_t, r_f=args.r_f,
                     strategy=Strategy(args.mask_strategy), seed=args.seed)
    molecules = [parse_molecule(s) for s in _read_smiles_lines(args.input)]
    if not molecules:
        raise InputError("no molecules to mask")
    vocab = build_vocabulary(m.tokens for m in molecules)
    context_vocab = build_context_vocab(m.graph for m in molecules)
    for idx, mol in enumerate(molecules):
        rec = SimpleNamespace(
            token_ids=vocab.ids_for(mol.tokens),
            context_ids=context_vocab.ids_for_graph(mol.graph),
            graph=mol.graph, fragment_map=mol.fragment_map)
        rng = np.random.default_rng([args.seed, idx])
        tok = sample_token_mask(rec, cfg, rng)
        frag = sample_fragment_mask(rec, mol.fragment_map, cfg, rng)
        print(f"{mol.smiles}\ttoken_mask={list(tok.masked_token_positions)}"
              f"\tatom_mask={list(tok.masked_atom_positions)}"
              f"\ttoken_targets={tok.token_targets}"
              f"\tfragment_ids={list(frag.masked_fragment_ids)}"
              f"\tfragment_modality={frag.masked_modality.value}")
    return 0


def _train_config_from(args, cfg: dict) -> TrainConfig:
    def pick(flag, key, cast, default):
        if flag is not None:
            return flag
        if key in cfg:
            return cast(cfg[key])
        return default

    return TrainConfig(
        epochs=pick(args.epochs, "epochs", int, 30),
        batch_size=pick(args.batch_size, "batch_size", int, 16),
        lr=pick(args.lr, "lr", float, 2e-3),
        warmup_steps=pick(args.warmup, "warmup_steps", int, 40),
        weight_decay=pick(None, "weight_decay", float, 0.0),
        seed=pick(args.seed if args.seed != 0 else None, "seed", int, args.seed),
    )


def _model_kwargs_from(cfg: dict) -> dict:
    keys = {
        "dim": int, "transformer_layers": int, "heads": int, "gnn_layers": int,
        "gnn_width": int, "max_positions": int, "fingerprint_width": int,
    }
    return {k: cast(cfg[k]) for k, cast in keys.items() if k in cfg}


def cmd_pretrain(args) -> int:
    cfg = parse_config_file(args.config) if args.config else {}
    train_cfg = _train_config_from(args, cfg)
    mask_cfg = MaskConfig(
        r_t=float(cfg.get("r_t", 0.2)), r_f=float(cfg.get("r_f", 0.6)),
        strategy=Strategy(args.mask_strategy), seed=train_cfg.seed)
    corpus = ingest(args.input)
    print(f"ingested {len(corpus)} molecules ({corpus.skipped} skipped)",
          file=sys.stderr)
    _, _, _, history = pretrain(
        corpus, mask_cfg, train_cfg, model_kwargs=_model_kwargs_from(cfg),
        checkpoint_dir=args.checkpoint, log_sink=sys.stdout)
    print(f"checkpoint written to {args.checkpoint} "
          f"({len(history)} steps)", file=sys.stderr)
    return 0


def cmd_finetune(args) -> int:
    cfg = parse_config_file(args.config) if args.config else {}
    model, vocab, _, _ = load_pretrained(args.checkpoint)
    task = load_task(args.input, TaskKind(args.task), SplitMode(args.split))
    result = finetune(
        model, vocab, task,
        epochs=args.epochs if args.epochs is not None else int(cfg.get("epochs", 20)),
        batch_size=args.batch_size if args.batch_size is not None else int(cfg.get("batch_size", 16)),
        lr=args.lr if args.lr is not None else float(cfg.get("lr", 1e-3)),
        seed=args.seed, tune_encoder=not args.freeze_encoder)
    sizes = result.split_sizes
    print(f"split sizes train/valid/test = {sizes[0]}/{sizes[1]}/{sizes[2]}; "
          f"best epoch {result.best_epoch}", file=sys.stderr)
    for name in sorted(result.metrics):
        print(f"{name}\t{result.metrics[name]:.6f}")
    return 0


def cmd_embed(args) -> int:
    model, vocab, _, _ = load_pretrained(args.checkpoint)
    for smiles in _read_smiles_lines(args.input):
        mol = parse_molecule(smiles)
        enc = model.encoder.encode_molecule(vocab.ids_for(mol.tokens), mol.graph)
        print("\t".join(f"{v:.6f}" for v in enc.x_cls.data[0]))
    return 0


def cmd_similarity(args) -> int:
    model, vocab, _, _ = load_pretrained(args.checkpoint)
    print(f"{similarity(model, vocab, args.smiles_a, args.smiles_b):.6f}")
    return 0


def cmd_attn_dump(args) -> int:
    model, vocab, _, _ = load_pretrained(args.checkpoint)
    for smiles in _read_smiles_lines(args.input):
        mol = parse_molecule(smiles)
        encoding = model.encoder.encode_molecule(
            vocab.ids_for(mol.tokens), mol.graph, retain_attention=True)
        mats = dump_attention(encoding, args.layer)
        n = encoding.n
        names = [t.text for t in mol.tokens.tokens] + \
            [f"atom{i}:{a.element}" for i, a in enumerate(mol.graph.atoms)]
        frag = list(mol.fragment_map.l_s) + list(mol.fragment_map.l_g)
        print(f"# molecule {mol.smiles} layer {args.layer} "
              f"heads {mats.shape[0]} positions {mats.shape[1]}")
        print("# position\tname\tfragment")
        for i, (name, lab) in enumerate(zip(names, frag)):
            print(f"# {i}\t{name}\t{lab}")
        for head in range(mats.shape[0]):
            print(f"# head {head}")
            for row in mats[head]:
                # 12 decimals keep the emitted row sums within 1e-9 of one.
                print("\t".join(f"{v:.12f}" for v in row))
    return 0


def cmd_metrics(args) -> int:
    rows = []
    stream = open(args.input) if args.input else sys.stdin
    try:
        for raw in stream:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            a, b = line.split("\t")[:2]
            rows.append((float(a), float(b)))
    finally:
        if args.input:
            stream.close()
    if not rows:
        raise InputError("no rows for metrics")
    preds = [r[0] for r in rows]
    truths = [r[1] for r in rows]
    try:
        if args.task == "cls":
            print(f"roc_auc\t{roc_auc(preds, [int(t) for t in truths]):.6f}")
        else:
            print(f"rmse\t{rmse(preds, truths):.6f}")
            print(f"mse\t{mse(preds, truths):.6f}")
            print(f"ci\t{concordance_index(preds, truths):.6f}")
    except DegenerateInput as exc:
        raise InputError(str(exc)) from exc
    return 0


# ----------------------------------------------------------------- arg parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chemfuse",
        description="joint SMILES/graph molecular encoder toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        return p

    for name, fn, desc in (
        ("tokenize", cmd_tokenize, "space-joined tokens per molecule"),
        ("parse", cmd_parse, "atom/bond summary per molecule"),
        ("fragment", cmd_fragment, "K, atom labels, token labels per molecule"),
        ("groups", cmd_groups, "functional groups present per molecule"),
        ("scaffold", cmd_scaffold, "scaffold SMILES per molecule"),
    ):
        p = add(name, fn, help=desc)
        p.add_argument("input", nargs="?", help="SMILES file (default stdin)")

    p = add("fingerprint", cmd_fingerprint, help="hex fingerprint per molecule")
    p.add_argument("input", nargs="?")
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--width", type=int, default=2048)

    p = add("mask", cmd_mask, help="readable masked-sample dump")
    p.add_argument("input", nargs="?")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--r-t", dest="r_t", type=float, default=0.2)
    p.add_argument("--r-f", dest="r_f", type=float, default=0.6)
    p.add_argument("--mask-strategy", choices=[s.value for s in Strategy],
                   default="cmm")

    p = add("pretrain", cmd_pretrain, help="run the pretraining loop")
    p.add_argument("input")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--warmup", type=int)
    p.add_argument("--mask-strategy", choices=[s.value for s in Strategy],
                   default="cmm")

    p = add("finetune", cmd_finetune, help="train a task head on x_cls")
    p.add_argument("input")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config")
    p.add_argument("--task", choices=[k.value for k in TaskKind], default="cls")
    p.add_argument("--split", choices=[s.value for s in SplitMode],
                   default="scaffold")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--freeze-encoder", action="store_true")

    p = add("embed", cmd_embed, help="x_cls vector per molecule")
    p.add_argument("input", nargs="?")
    p.add_argument("--checkpoint", required=True)

    p = add("similarity", cmd_similarity, help="cosine of two molecules")
    p.add_argument("smiles_a")
    p.add_argument("smiles_b")
    p.add_argument("--checkpoint", required=True)

    p = add("attn-dump", cmd_attn_dump, help="annotated attention matrices")
    p.add_argument("input", nargs="?")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--layer", type=int, default=0)

    p = add("metrics", cmd_metrics, help="metrics from score/label TSV")
    p.add_argument("input", nargs="?")
    p.add_argument("--task", choices=["cls", "reg"], default="cls")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the contract reserves 2 for
        # internal failures, so bad flags map to 1 (usage already printed).
        return 0 if exc.code == 0 else 1
    try:
        return args.fn(args)
    except (SmilesError, InputError, FileUnreadable, AllLinesFailed,
            EmptySplit, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        # Downstream closed the pipe (e.g. head); silence the final flush.
        import os
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except Exception as exc:  # internal failure contract
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
