"""CLI contract tests: formats, exit codes, stream discipline, idempotence."""

import pytest

from chemfuse.cli import main
from chemfuse.masking import MaskConfig
from chemfuse.pipeline import Corpus, TrainConfig, parse_molecule, pretrain


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    ckpt = tmp_path_factory.mktemp("ckpt") / "model"
    smiles = ["CCO", "CC(=O)OC", "c1ccccc1", "CCN", "CCOCC", "CC(=O)NC"]
    corpus = Corpus(molecules=[parse_molecule(s) for s in smiles])
    pretrain(corpus, MaskConfig(seed=2),
             TrainConfig(epochs=1, batch_size=3, seed=2, warmup_steps=1),
             model_kwargs=dict(dim=16, transformer_layers=1, heads=2,
                               gnn_layers=1, gnn_width=8, fingerprint_width=64),
             checkpoint_dir=ckpt)
    return str(ckpt)


def run(capsys, argv, stdin=None, monkeypatch=None):
    if stdin is not None:
        import io
        monkeypatch.setattr("sys.stdin", io.StringIO(stdin))
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_tokenize_output(tmp_path, capsys):
    f = tmp_path / "in.smi"
    f.write_text("CCO\n")
    code, out, err = run(capsys, ["tokenize", str(f)])
    assert code == 0
    assert out == "C C O\n"
    assert err == ""


def test_fragment_format(tmp_path, capsys):
    f = tmp_path / "in.smi"
    f.write_text("CCO\nc1ccccc1C(=O)NC\n")
    code, out, err = run(capsys, ["fragment", str(f)])
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "1\t0,0,0\t0,0,0"
    assert lines[1].startswith("2\t")


def test_similarity_identical(checkpoint, capsys):
    code, out, _ = run(capsys, ["similarity", "CCO", "CCO",
                                "--checkpoint", checkpoint])
    assert code == 0
    assert out.strip() == "1.000000"


def test_embed_row_width(tmp_path, checkpoint, capsys):
    f = tmp_path / "in.smi"
    f.write_text("CCO\nCCN\n")
    code, out, _ = run(capsys, ["embed", str(f), "--checkpoint", checkpoint])
    assert code == 0
    rows = out.splitlines()
    assert len(rows) == 2
    assert len(rows[0].split("\t")) == 16


def test_attn_dump_rows_sum_to_one(tmp_path, checkpoint, capsys):
    f = tmp_path / "in.smi"
    f.write_text("CCO\n")
    code, out, _ = run(capsys, ["attn-dump", str(f), "--checkpoint", checkpoint,
                                "--layer", "0"])
    assert code == 0
    rows = [line for line in out.splitlines() if not line.startswith("#")]
    for row in rows:
        values = [float(v) for v in row.split("\t")]
        assert abs(sum(values) - 1.0) < 1e-9


def test_metrics_cls(tmp_path, capsys):
    f = tmp_path / "scores.tsv"
    f.write_text("0.9\t1\n0.2\t0\n0.8\t1\n0.1\t0\n")
    code, out, _ = run(capsys, ["metrics", str(f), "--task", "cls"])
    assert code == 0
    assert out == "roc_auc\t1.000000\n"


def test_metrics_reg(tmp_path, capsys):
    f = tmp_path / "preds.tsv"
    f.write_text("1.0\t1.0\n2.0\t2.5\n3.0\t2.0\n")
    code, out, _ = run(capsys, ["metrics", str(f), "--task", "reg"])
    assert code == 0
    names = [line.split("\t")[0] for line in out.splitlines()]
    assert names == ["rmse", "mse", "ci"]


def test_exit_code_input_error(tmp_path, capsys):
    f = tmp_path / "in.smi"
    f.write_text("C1CC\n")      # unclosed ring
    code, out, err = run(capsys, ["parse", str(f)])
    assert code == 1
    assert out == ""
    assert "error" in err


def test_exit_code_bad_flags(capsys):
    code, _, err = run(capsys, ["pretrain"])   # missing required args
    assert code == 1
    code, _, _ = run(capsys, ["not-a-command"])
    assert code == 1


def test_idempotent_output(tmp_path, capsys):
    f = tmp_path / "in.smi"
    f.write_text("CC(=O)OC\nc1ccncc1\n")
    _, out1, _ = run(capsys, ["fragment", str(f)])
    _, out2, _ = run(capsys, ["fragment", str(f)])
    assert out1 == out2


def test_mask_dump_deterministic(tmp_path, capsys):
    f = tmp_path / "in.smi"
    f.write_text("CC(=O)OC\n")
    _, out1, _ = run(capsys, ["mask", str(f), "--seed", "9"])
    _, out2, _ = run(capsys, ["mask", str(f), "--seed", "9"])
    assert out1 == out2
    assert "fragment_modality=" in out1


def test_pretrain_cli_writes_checkpoint(tmp_path, capsys):
    corpus = tmp_path / "c.smi"
    corpus.write_text("CCO\nCCN\nCC(=O)OC\nc1ccccc1\n")
    cfg = tmp_path / "run.cfg"
    cfg.write_text("dim = 16\ntransformer_layers = 1\nheads = 2\n"
                   "gnn_layers = 1\ngnn_width = 8\nfingerprint_width = 64\n")
    ckpt = tmp_path / "ckpt"
    code, out, err = run(capsys, [
        "pretrain", str(corpus), "--checkpoint", str(ckpt),
        "--config", str(cfg), "--epochs", "1", "--batch-size", "2",
        "--seed", "3"])
    assert code == 0
    assert (ckpt / "manifest.json").exists()
    assert out.splitlines()[0].startswith("step\t")     # loss log on stdout
    assert "ingested 4 molecules" in err


def test_finetune_cli(tmp_path, checkpoint, capsys):
    rows = []
    for i, s in enumerate(["CCO", "CCN", "CCC", "CCS", "COC", "CCCC",
                           "CCCO", "CCCN", "CCOC", "CCCS", "CC(C)C", "CCCCC"]):
        rows.append(f"{s}\t{i % 2}")
    f = tmp_path / "task.tsv"
    f.write_text("\n".join(rows))
    code, out, err = run(capsys, [
        "finetune", str(f), "--checkpoint", checkpoint, "--task", "cls",
        "--split", "random", "--epochs", "1", "--freeze-encoder"])
    assert code == 0
    assert out.startswith("roc_auc\t")
