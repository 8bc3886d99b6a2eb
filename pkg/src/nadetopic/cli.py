"""Command-line front end. Every subcommand only wires files to library calls.

Exit status: 0 success, 1 validation error (bad flag, bad value, bad index),
2 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from nadetopic import corpus as corpus_mod
from nadetopic import evaluation, quantizer, trainer, verify
from nadetopic.corpus import Document, JointVocab
from nadetopic.errors import FormatError, NadeTopicError, ValidationError
from nadetopic.model import check_vocab, inspect_class_associations, predict_annotations, predict_class

log = logging.getLogger("nadetopic")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        gx, gy = (int(p) for p in text.lower().split("x"))
    except ValueError:
        raise ValidationError(f"--grid must look like 2x2, got {text!r}") from None
    if gx < 1 or gy < 1:
        raise ValidationError(f"--grid cells must be >= 1, got {text!r}")
    return gx, gy


def _load_model_and_corpus(args):
    params = trainer.load_checkpoint(args.model)
    vocab, docs = corpus_mod.load_corpus(args.corpus)
    check_vocab(params, vocab)
    return params, docs


# -- subcommands ----------------------------------------------------------------

def cmd_build_vocab(args) -> None:
    sets = [quantizer.load_descriptors(p) for p in args.descriptors]
    data = np.concatenate([s.data for s in sets], axis=0)
    if args.subsample is not None and args.subsample < len(data):
        rng = np.random.default_rng(args.seed)
        data = data[np.sort(rng.choice(len(data), size=args.subsample, replace=False))]
    book = quantizer.kmeans_fit(data, args.k, seed=args.seed,
                                max_iters=args.max_iters, rel_tol=args.tol)
    quantizer.save_codebook(book, args.out)
    log.info("codebook K=%d dim=%d objective=%.6g after %d iterations",
             book.K, book.dim, book.objective, len(book.history) - 1)


def _read_labels(path) -> list[int]:
    lines = Path(path).read_text(encoding="utf-8").split()
    try:
        return [int(x) for x in lines]
    except ValueError as exc:
        raise FormatError(f"{path}: labels must be integers ({exc})") from None


def _read_annotations(path) -> list[list[int]]:
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        try:
            rows.append([int(x) for x in line.split()])
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: annotations must be integers") from None
    return rows


def cmd_prepare(args) -> None:
    gx, gy = _parse_grid(args.grid)
    book = quantizer.load_codebook(args.codebook)
    labels = _read_labels(args.labels)
    if len(labels) != len(args.descriptors):
        raise ValidationError(
            f"--labels has {len(labels)} entries for {len(args.descriptors)} descriptor files")
    anns = _read_annotations(args.annotations) if args.annotations else [[] for _ in labels]
    anns += [[] for _ in range(len(labels) - len(anns))]
    if len(anns) != len(labels):
        raise ValidationError(f"--annotations has more lines than images ({len(anns)})")
    C = args.classes if args.classes is not None else max(labels) + 1
    A = args.ann_vocab if args.ann_vocab is not None else max(
        (a for row in anns for a in row), default=-1) + 1
    vocab = JointVocab(K=book.K, M=gx * gy, A=A, C=max(C, 2))
    docs = []
    for path, label, ann in zip(args.descriptors, labels, anns):
        tokens = quantizer.descriptors_to_tokens(book, quantizer.load_descriptors(path), gx, gy)
        docs.append(Document(label=label, tokens=tokens, annotations=ann))
    corpus_mod.save_corpus(vocab, docs, args.out)


def cmd_synth(args) -> None:
    vocab, docs = corpus_mod.gen_synthetic(
        C=args.classes, K=args.k, M=args.regions, A=args.ann,
        docs_per_class=args.docs_per_class, D=args.doc_len, L=args.ann_len,
        concentration=args.concentration, seed=args.seed)
    corpus_mod.save_corpus(vocab, docs, args.out)


def cmd_train(args) -> None:
    config = trainer.TrainConfig(
        lam=args.lam, lr=args.lr, epochs=args.epochs, seed=args.seed,
        hidden=args.hidden, init_scale=args.init_scale, val_frac=args.val_frac,
        patience=args.patience, decay=args.decay)
    vocab, docs = corpus_mod.load_corpus(args.corpus)
    params, history = trainer.train(vocab, docs, config)
    trainer.save_checkpoint(params, args.out, config)
    if args.log:
        _write_jsonl(args.log, history)


def cmd_predict(args) -> None:
    params, docs = _load_model_and_corpus(args)
    records = []
    for i, doc in enumerate(docs):
        cls, post = predict_class(params, doc)
        records.append({"doc": i, "label": doc.label, "predicted": cls,
                        "posterior": [float(p) for p in post]})
    _write_jsonl(args.out, records)


def cmd_annotate(args) -> None:
    params, docs = _load_model_and_corpus(args)
    records = []
    for i, doc in enumerate(docs):
        words, scores = predict_annotations(params, doc, args.top)
        records.append({"doc": i, "predicted": words, "scores": scores})
    _write_jsonl(args.out, records)


def cmd_eval(args) -> None:
    params, docs = _load_model_and_corpus(args)
    _write_json(args.out, evaluation.evaluate(params, docs, args.top).to_dict())


def cmd_gradcheck(args) -> None:
    report = verify.gradcheck(trials=args.trials, hidden=args.hidden, J=args.vocab,
                              classes=args.classes, seed=args.seed)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))


def cmd_inspect(args) -> None:
    params = trainer.load_checkpoint(args.model)
    result = inspect_class_associations(params, args.cls, args.topics, args.words)
    vocab = params.vocab
    words = []
    for j, score, dec in zip(result.words, result.scores, result.decoded):
        entry = {"joint": j, "score": score}
        if dec[0] == "visual":
            entry.update(kind="visual", word=dec[1], region=dec[2])
            if vocab.visual_names:
                entry["name"] = vocab.visual_names[dec[1]]
        else:
            entry.update(kind="annotation", annotation=dec[1])
            if vocab.annotation_names:
                entry["name"] = vocab.annotation_names[dec[1]]
        words.append(entry)
    print(json.dumps({"class": args.cls, "topics": result.topics, "words": words}, indent=2))


# -- argument parsing -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nadetopic", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("build-vocab", help="K-means codebook from descriptor files")
    p.add_argument("--descriptors", nargs="+", required=True)
    p.add_argument("--k", type=int, default=240)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--subsample", type=int, default=None,
                   help="fit on this many randomly chosen descriptors")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("prepare", help="quantize per-image descriptor files into a corpus")
    p.add_argument("--descriptors", nargs="+", required=True,
                   help="one descriptor file per image, in document order")
    p.add_argument("--codebook", required=True)
    p.add_argument("--grid", default="2x2")
    p.add_argument("--labels", required=True, help="one class index per image")
    p.add_argument("--annotations", default=None,
                   help="one line of annotation indices per image")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--ann-vocab", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--regions", type=int, default=1)
    p.add_argument("--ann", type=int, default=10)
    p.add_argument("--docs-per-class", type=int, default=100)
    p.add_argument("--doc-len", type=int, default=50)
    p.add_argument("--ann-len", type=int, default=3)
    p.add_argument("--concentration", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--decay", type=float, default=1.0)
    p.add_argument("--init-scale", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-frac", type=float, default=0.2)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--log", default=None, help="per-epoch training log (JSONL)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("predict", cmd_predict, "class predictions"),
                                 ("annotate", cmd_annotate, "top annotation words"),
                                 ("eval", cmd_eval, "accuracy and F-measure report")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--model", required=True)
        p.add_argument("--corpus", required=True)
        if name != "predict":
            p.add_argument("--top", type=int, default=5)
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("gradcheck", help="backprop vs finite differences")
    p.add_argument("--hidden", type=int, default=6)
    p.add_argument("--vocab", type=int, default=12)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect", help="words tied to a class through its top hidden units")
    p.add_argument("--model", required=True)
    p.add_argument("--class", dest="cls", type=int, required=True)
    p.add_argument("--topics", type=int, default=3)
    p.add_argument("--words", type=int, default=10)
    p.set_defaults(func=cmd_inspect)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    if args.command is None:
        print(parser.format_usage(), file=sys.stderr, end="")
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (FormatError, OSError) as exc:
        print(f"nadetopic {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, NadeTopicError) as exc:
        print(f"nadetopic {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
