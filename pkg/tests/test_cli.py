"""End-to-end CLI tests on a small synthetic corpus."""

import os

import numpy as np
import pytest

from crnmt.cli import main
from synthetic import synthetic_pairs, write_tsv

FAST = ["--preset", "tiny", "--epochs", "2", "--patience", "0", "--seed", "3",
        "--val-frac", "0.2", "--test-frac", "0.2"]


@pytest.fixture()
def corpus(tmp_path):
    path = tmp_path / "pairs.tsv"
    write_tsv(path, synthetic_pairs(40, seed=1))
    return path


def train_small(tmp_path, corpus, *extra) -> str:
    out = tmp_path / "ck"
    code = main(["train", "--data", str(corpus), "--out", str(out), *FAST, *extra])
    assert code == 0
    return str(out)


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def test_train_writes_checkpoint_and_report(tmp_path, corpus, capsys):
    out = train_small(tmp_path, corpus)
    assert os.path.exists(os.path.join(out, "manifest"))
    assert os.path.exists(os.path.join(out, "params.bin"))
    assert os.path.exists(os.path.join(out, "vocab.src"))
    assert os.path.exists(os.path.join(out, "history.csv"))
    assert os.path.exists(os.path.join(out, "loss_curve.png"))
    err = capsys.readouterr().err
    assert "config: seed = 3" in err
    assert "config: batch_size" in err


def test_train_rejects_conv_layers_out_of_range(tmp_path, corpus, capsys):
    code = main(["train", "--data", str(corpus), "--out", str(tmp_path / "ck"),
                 "--conv-layers", "7", *FAST])
    assert code == 1
    assert "1..5" in capsys.readouterr().err


def test_train_missing_data_is_data_error(tmp_path):
    code = main(["train", "--data", str(tmp_path / "nope.tsv"),
                 "--out", str(tmp_path / "ck"), *FAST])
    assert code == 2


def test_train_without_position_embedding_recorded(tmp_path, corpus):
    out = train_small(tmp_path, corpus, "--no-position-embedding")
    manifest = open(os.path.join(out, "manifest"), encoding="utf-8").read()
    assert "config.position_embedding\tFalse" in manifest
    # the frozen table stays exactly zero
    from crnmt.training import load_checkpoint
    model = load_checkpoint(out)
    assert np.array_equal(model.encoder.pos_emb.data, np.zeros_like(model.encoder.pos_emb.data))


def test_train_config_file_flags_precedence(tmp_path, corpus, capsys):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("epochs = 9\nseed = 11  # comment\n", encoding="utf-8")
    out = tmp_path / "ck"
    code = main(["train", "--data", str(corpus), "--out", str(out), "--preset", "tiny",
                 "--config", str(cfg_file), "--epochs", "1", "--patience", "0",
                 "--val-frac", "0.2"])
    assert code == 0
    err = capsys.readouterr().err
    assert "config: epochs = 1" in err      # flag beats file
    assert "config: seed = 11" in err       # file beats default


# ---------------------------------------------------------------------------
# translate
# ---------------------------------------------------------------------------

def test_translate_line_counts_and_determinism(tmp_path, corpus, capsys):
    ck = train_small(tmp_path, corpus)
    src = tmp_path / "input.txt"
    src.write_text("s1 s2 s3\ns4 s5\n", encoding="utf-8")
    assert main(["translate", "--checkpoint", ck, "--input", str(src)]) == 0
    first = capsys.readouterr().out
    assert len(first.splitlines()) == 2
    assert main(["translate", "--checkpoint", ck, "--input", str(src)]) == 0
    assert capsys.readouterr().out == first


def test_translate_empty_input(tmp_path, corpus, capsys):
    ck = train_small(tmp_path, corpus)
    src = tmp_path / "empty.txt"
    src.write_text("", encoding="utf-8")
    assert main(["translate", "--checkpoint", ck, "--input", str(src)]) == 0
    assert capsys.readouterr().out == ""


def test_translate_missing_checkpoint(tmp_path, capsys):
    code = main(["translate", "--checkpoint", str(tmp_path / "none"),
                 "--input", os.devnull])
    assert code == 2


def test_translate_output_file(tmp_path, corpus):
    ck = train_small(tmp_path, corpus)
    src = tmp_path / "input.txt"
    src.write_text("s1 s2\n", encoding="utf-8")
    dst = tmp_path / "out.txt"
    assert main(["translate", "--checkpoint", ck, "--input", str(src),
                 "--output", str(dst)]) == 0
    assert len(dst.read_text(encoding="utf-8").splitlines()) == 1


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def test_evaluate_reports_full_breakdown(tmp_path, corpus, capsys):
    ck = train_small(tmp_path, corpus)
    assert main(["evaluate", "--checkpoint", ck, "--data", str(corpus)]) == 0
    out = capsys.readouterr().out
    assert "BLEU" in out
    for tag in ("p1=", "p2=", "p3=", "p4=", "BP="):
        assert tag in out


def test_evaluate_csv_row_and_figure(tmp_path, corpus):
    ck = train_small(tmp_path, corpus)
    csv_path = tmp_path / "results.csv"
    assert main(["evaluate", "--checkpoint", ck, "--data", str(corpus),
                 "--csv", str(csv_path)]) == 0
    body = csv_path.read_text(encoding="utf-8").splitlines()
    assert body[0].startswith("checkpoint,")
    assert "p1" in body[0] and "bleu" in body[0]
    assert len(body) == 2
    assert (tmp_path / "results_precisions.png").exists()


def test_evaluate_malformed_data_file(tmp_path, corpus):
    ck = train_small(tmp_path, corpus)
    bad = tmp_path / "bad.tsv"
    bad.write_text("no tabs here at all\n", encoding="utf-8")
    assert main(["evaluate", "--checkpoint", ck, "--data", str(bad)]) == 2


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------

def test_ablate_two_depth_sweep(tmp_path, corpus, capsys):
    out = tmp_path / "sweep"
    code = main(["ablate", "--data", str(corpus), "--out", str(out),
                 "--depths", "1,3", "--pos-emb", "on", *FAST])
    assert code == 0
    table = capsys.readouterr().out
    assert "30.6" in table  # full-scale reference in the header
    rows = (out / "ablation.csv").read_text(encoding="utf-8").splitlines()
    assert len(rows) == 3  # header + 2 configurations
    assert "config.conv_layers" in rows[0]  # full per-run config in the row
    assert (out / "ablation_bleu.png").exists()


def test_ablate_rejects_bad_depths(tmp_path, corpus):
    code = main(["ablate", "--data", str(corpus), "--out", str(tmp_path / "s"),
                 "--depths", "1,9", *FAST])
    assert code == 1


# ---------------------------------------------------------------------------
# usage errors
# ---------------------------------------------------------------------------

def test_unknown_subcommand_exits_one():
    assert main(["frobnicate"]) == 1


def test_missing_required_flag_exits_one():
    assert main(["train", "--out", "x"]) == 1
