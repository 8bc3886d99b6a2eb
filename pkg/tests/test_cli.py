import json

import numpy as np
import pytest

from nadetopic.cli import run
from nadetopic.corpus import load_corpus
from nadetopic.quantizer import DescriptorSet, load_codebook, save_descriptors
from nadetopic.trainer import load_checkpoint


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_synth_train_eval_pipeline(tmp_path, capsys):
    corpus = tmp_path / "corpus.jsonl"
    model = tmp_path / "model.ntck"
    assert run(["synth", "--classes", "3", "--k", "6", "--regions", "2", "--ann", "6",
                "--docs-per-class", "10", "--doc-len", "12", "--ann-len", "2",
                "--seed", "4", "--out", str(corpus)]) == 0
    vocab, docs = load_corpus(corpus)
    assert vocab.J == 18 and len(docs) == 30

    assert run(["train", "--corpus", str(corpus), "--hidden", "8", "--lambda", "0.1",
                "--lr", "0.01", "--epochs", "5", "--seed", "1",
                "--log", str(tmp_path / "log.jsonl"), "--out", str(model)]) == 0
    params = load_checkpoint(model)
    assert params.H == 8 and params.J == 18
    assert 1 <= len(read_jsonl(tmp_path / "log.jsonl")) <= 5

    assert run(["predict", "--model", str(model), "--corpus", str(corpus),
                "--out", str(tmp_path / "pred.jsonl")]) == 0
    preds = read_jsonl(tmp_path / "pred.jsonl")
    assert len(preds) == 30
    assert set(preds[0]) == {"doc", "label", "predicted", "posterior"}
    assert abs(sum(preds[0]["posterior"]) - 1) < 1e-12

    assert run(["annotate", "--model", str(model), "--corpus", str(corpus),
                "--out", str(tmp_path / "ann.jsonl")]) == 0
    anns = read_jsonl(tmp_path / "ann.jsonl")
    assert len(anns[0]["predicted"]) == 5 and len(anns[0]["scores"]) == 5

    assert run(["eval", "--model", str(model), "--corpus", str(corpus),
                "--out", str(tmp_path / "report.json")]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["documents"] == 30 and 0 <= report["accuracy"] <= 1

    capsys.readouterr()
    assert run(["inspect", "--model", str(model), "--class", "1", "--words", "4"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out["topics"]) == 3 and len(out["words"]) == 4


def test_gradcheck_command(capsys):
    assert run(["gradcheck", "--trials", "6", "--hidden", "4", "--vocab", "7",
                "--classes", "3", "--seed", "2"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["attempted"] == 6
    assert report["worst"] <= 1e-5


def test_build_vocab_and_prepare(tmp_path):
    rng = np.random.default_rng(0)
    files = []
    for i in range(4):
        n = 30
        ds = DescriptorSet(data=rng.normal(size=(n, 5)) + 10 * (i % 2),
                           x=rng.integers(0, 64, n).astype(float),
                           y=rng.integers(0, 48, n).astype(float),
                           width=np.full(n, 64.0), height=np.full(n, 48.0))
        path = tmp_path / f"img{i}.ntde"
        save_descriptors(ds, path)
        files.append(str(path))
    book = tmp_path / "book.ntcb"
    assert run(["build-vocab", "--descriptors", *files, "--k", "6", "--seed", "1",
                "--subsample", "100", "--out", str(book)]) == 0
    assert load_codebook(book).K == 6

    (tmp_path / "labels.txt").write_text("0\n1\n0\n1\n")
    (tmp_path / "ann.txt").write_text("0 2\n\n1\n2 2\n")
    out = tmp_path / "corpus.jsonl"
    assert run(["prepare", "--descriptors", *files, "--codebook", str(book),
                "--grid", "2x2", "--labels", str(tmp_path / "labels.txt"),
                "--annotations", str(tmp_path / "ann.txt"), "--out", str(out)]) == 0
    vocab, docs = load_corpus(out)
    assert (vocab.K, vocab.M, vocab.A, vocab.C) == (6, 4, 3, 2)
    assert [d.D for d in docs] == [30] * 4
    assert docs[3].annotations == (2, 2)


def test_usage_errors(tmp_path, capsys):
    assert run(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err
    assert run([]) == 1
    assert run(["train", "--corpus", "x"]) == 1  # missing --out
    assert "--out" in capsys.readouterr().err
    assert run(["synth", "--out", str(tmp_path / "c"), "--concentration", "-1"]) == 1
    assert run(["prepare", "--descriptors", "a", "--codebook", "b", "--labels", "c",
                "--grid", "2by2", "--out", "d"]) == 1


def test_io_errors(tmp_path, capsys):
    assert run(["eval", "--model", str(tmp_path / "missing.ntck"),
                "--corpus", str(tmp_path / "missing.jsonl"),
                "--out", str(tmp_path / "r.json")]) == 2
    assert "missing.ntck" in capsys.readouterr().err
    bad = tmp_path / "bad.ntck"
    bad.write_bytes(b"NTCK\x01\x00\x00\x00garbage")
    assert run(["inspect", "--model", str(bad), "--class", "0"]) == 2


def test_model_corpus_mismatch(tmp_path, capsys):
    small, other, model = tmp_path / "a.jsonl", tmp_path / "b.jsonl", tmp_path / "m.ntck"
    run(["synth", "--classes", "2", "--k", "5", "--ann", "5", "--docs-per-class", "3",
         "--doc-len", "4", "--ann-len", "1", "--out", str(small)])
    run(["synth", "--classes", "2", "--k", "7", "--ann", "5", "--docs-per-class", "3",
         "--doc-len", "4", "--ann-len", "1", "--out", str(other)])
    assert run(["train", "--corpus", str(small), "--epochs", "1", "--out", str(model)]) == 0
    assert run(["predict", "--model", str(model), "--corpus", str(other),
                "--out", str(tmp_path / "p.jsonl")]) == 1
    assert "J=10" in capsys.readouterr().err
