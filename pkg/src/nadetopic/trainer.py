"""Exact backpropagation of the hybrid loss, SGD training and checkpoints."""

from __future__ import annotations

import hashlib
import json
import logging
import struct
import zlib
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from nadetopic.corpus import Document, JointVocab
from nadetopic.errors import FormatError, ShapeMismatchError, ValidationError
from nadetopic.model import (
    Forward,
    ModelParams,
    forward,
    init_params,
    predict_class,
    relu,
)
from nadetopic.wordtree import build_balanced, tree_from_permutation

log = logging.getLogger(__name__)


@dataclass
class Gradients:
    """Gradient blocks shaped like the ModelParams they belong to."""

    W: np.ndarray
    c: np.ndarray
    V: np.ndarray
    b: np.ndarray
    U: np.ndarray
    d: np.ndarray

    def blocks(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in ModelParams.BLOCKS}

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "Gradients":
        return cls(**{k: np.zeros_like(v) for k, v in params.blocks().items()})


@dataclass
class TrainConfig:
    lam: float = 0.1
    lr: float = 0.05
    epochs: int = 50
    seed: int = 0
    hidden: int = 16
    init_scale: float = 0.1
    val_frac: float = 0.2
    patience: int = 10
    decay: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lam}")
        if not self.lr > 0:
            raise ValidationError(f"learning rate must be > 0, got {self.lr}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.hidden < 1:
            raise ValidationError(f"hidden must be >= 1, got {self.hidden}")
        if not self.init_scale > 0:
            raise ValidationError(f"init_scale must be > 0, got {self.init_scale}")
        if not 0 <= self.val_frac < 1:
            raise ValidationError(f"val_frac must lie in [0, 1), got {self.val_frac}")
        if self.patience < 0:
            raise ValidationError(f"patience must be >= 0, got {self.patience}")
        if not self.decay > 0:
            raise ValidationError(f"decay must be > 0, got {self.decay}")


# -- gradients ------------------------------------------------------------------

def backward(params: ModelParams, fw: Forward, label: int, lam: float) -> Gradients:
    """Gradients of ``disc + lam * gen`` given a forward pass.

    Vectorized form of the usual reverse sweep over positions. The column
    ``W[:, v_i]`` feeds the hidden layers of positions ``j > i`` and the
    classifier, never ``h_i`` itself, so it receives the classifier term plus
    the hidden-layer terms of later positions only.
    """
    grads = Gradients.zeros_like(params)
    pre, hs = fw.pre, fw.hiddens
    h_y = relu(pre[-1])

    dd = np.exp(fw.log_post)
    dd[label] -= 1.0
    grads.d[:] = dd
    grads.U[:] = np.outer(dd, h_y)
    seed = (params.U.T @ dd) * (pre[-1] > 0)

    n = len(fw.seq)
    if n == 0:
        grads.c[:] = seed
        return grads

    # tree nodes: d(-log Bern(bit; sigm(x)))/dx = sigm(x) - bit
    sig = 0.5 * (1.0 + np.tanh(0.5 * fw.logits))
    dt = lam * (sig - fw.bits) * fw.mask
    np.add.at(grads.b, fw.nodes, dt)
    np.add.at(grads.V, fw.nodes, dt[:, :, None] * hs[:, None, :])
    dh = np.einsum("nk,nkh->nh", dt, params.V[fw.nodes])
    da = dh * (pre[:-1] > 0)

    later = np.zeros_like(da)
    later[:-1] = np.cumsum(da[::-1], axis=0)[::-1][1:]
    np.add.at(grads.W.T, fw.seq, seed + later)
    grads.c[:] = seed + da.sum(axis=0)
    return grads


def compute_gradients(params: ModelParams, doc: Document, lam: float,
                      seq: Optional[np.ndarray] = None) -> tuple[Gradients, float]:
    """Exact gradients of the per-document hybrid loss and the loss itself.

    The tokens are differentiated in ``seq`` order when given (a permutation
    of the document's joint indices), otherwise in stored order.
    """
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    if seq is None:
        doc.validate(params.vocab)
        seq = params.vocab.joint_sequence(doc)
    fw = forward(params, seq, doc.label)
    return backward(params, fw, doc.label, lam), fw.disc + lam * fw.gen


def sgd_step(params: ModelParams, grads: Gradients, lr: float) -> None:
    for name, g in grads.blocks().items():
        p = getattr(params, name)
        if p.shape != g.shape:
            raise ShapeMismatchError(f"gradient {name} {g.shape} vs parameter {p.shape}")
        p -= lr * g


# -- training loop --------------------------------------------------------------

def train_epoch(params: ModelParams, docs: Sequence[Document], config: TrainConfig,
                rng: np.random.Generator, lr: Optional[float] = None,
                sequences: Optional[Sequence[np.ndarray]] = None) -> dict:
    """One pass of SGD over ``docs`` in a shuffled order.

    Each update differentiates a freshly permuted copy of the document's
    tokens. Returns mean discriminative and generative losses.
    """
    if not docs:
        raise ValidationError("cannot train on an empty corpus")
    lr = config.lr if lr is None else lr
    if sequences is None:
        for doc in docs:
            doc.validate(params.vocab)
        sequences = [params.vocab.joint_sequence(doc) for doc in docs]
    disc_sum = gen_sum = 0.0
    for i in rng.permutation(len(docs)):
        seq = sequences[i]
        seq = seq[rng.permutation(len(seq))]
        fw = forward(params, seq, docs[i].label)
        grads = backward(params, fw, docs[i].label, config.lam)
        sgd_step(params, grads, lr)
        disc_sum += fw.disc
        gen_sum += fw.gen
    n = len(docs)
    return {"disc": disc_sum / n, "gen": gen_sum / n}


def classification_accuracy(params: ModelParams, docs: Sequence[Document]) -> float:
    hits = sum(predict_class(params, doc)[0] == doc.label for doc in docs)
    return hits / len(docs)


def _streams(seed: int):
    init, tree, split, shuffle = np.random.SeedSequence(seed).spawn(4)
    return init, tree, split, shuffle


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def train(vocab: JointVocab, docs: Sequence[Document],
          config: TrainConfig) -> tuple[ModelParams, list[dict]]:
    """Train with early stopping; returns the best parameters and a log.

    A seeded ``val_frac`` share of the documents is held out and the model is
    selected on held-out accuracy (first best kept). Without a held-out set
    the lowest mean training loss selects the model. Training stops once
    ``patience`` epochs in a row fail to improve.
    """
    docs = list(docs)
    if not docs:
        raise ValidationError("cannot train on an empty corpus")
    for i, doc in enumerate(docs):
        try:
            doc.validate(vocab)
        except ValidationError as exc:
            raise type(exc)(f"document {i}: {exc}") from None
    init_ss, tree_ss, split_ss, shuffle_ss = _streams(config.seed)
    tree = build_balanced(vocab.J, _seed_int(tree_ss))
    params = init_params(config.hidden, vocab, tree, _seed_int(init_ss),
                         config.init_scale)

    n_val = int(round(config.val_frac * len(docs)))
    if config.val_frac > 0:
        if len(docs) < 2:
            raise ValidationError("a validation split needs at least 2 documents")
        n_val = min(max(n_val, 1), len(docs) - 1)
    order = np.random.default_rng(split_ss).permutation(len(docs))
    val_docs = [docs[i] for i in order[:n_val]]
    train_docs = [docs[i] for i in order[n_val:]]
    sequences = [vocab.joint_sequence(doc) for doc in train_docs]

    rng = np.random.default_rng(shuffle_ss)
    best, best_score, since = params.copy(), None, 0
    history = []
    lr = config.lr
    for epoch in range(1, config.epochs + 1):
        stats = train_epoch(params, train_docs, config, rng, lr=lr, sequences=sequences)
        entry = {"epoch": epoch, "lr": lr, **stats,
                 "total": stats["disc"] + config.lam * stats["gen"]}
        if val_docs:
            entry["val_accuracy"] = classification_accuracy(params, val_docs)
            score = entry["val_accuracy"]
        else:
            score = -entry["total"]
        improved = best_score is None or score > best_score
        if improved:
            best, best_score, since = params.copy(), score, 0
        else:
            since += 1
        entry["improved"] = improved
        history.append(entry)
        log.info("epoch %d %s", epoch, entry)
        if not np.all(np.isfinite(params.W)):
            raise FloatingPointError(f"parameters diverged at epoch {epoch}")
        if since > config.patience:
            break
        lr *= config.decay
    return best, history


# -- checkpoints ----------------------------------------------------------------

CHECKPOINT_MAGIC = b"NTCK"
CHECKPOINT_VERSION = 1


def corpus_header_hash(vocab: JointVocab) -> str:
    blob = json.dumps(vocab.header(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def save_checkpoint(params: ModelParams, path, config: Optional[TrainConfig] = None) -> None:
    """Write ``NTCK | u32 version | u32 len | JSON | f64 blocks | u32 crc32``.

    The CRC covers every byte before it.
    """
    vocab, tree = params.vocab, params.tree
    meta = {
        "H": params.H, "K": vocab.K, "M": vocab.M, "A": vocab.A, "C": vocab.C,
        "J": params.J, "T": params.T,
        "tree_seed": tree.seed,
        "leaf_permutation": [int(v) for v in tree.perm],
        "config": asdict(config) if config is not None else None,
        "corpus_header_hash": corpus_header_hash(vocab),
        "vocab_header": vocab.header(),
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = bytearray(CHECKPOINT_MAGIC)
    body += struct.pack("<II", CHECKPOINT_VERSION, len(meta_bytes))
    body += meta_bytes
    for name in ModelParams.BLOCKS:
        body += np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(body))


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic or too short)")
    version, meta_len = struct.unpack_from("<II", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != crc:
        raise FormatError(f"{path}: corrupt payload (checksum mismatch)")
    try:
        meta = json.loads(blob[12:12 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable metadata ({exc})") from None

    vocab = JointVocab(**{k: v for k, v in meta["vocab_header"].items() if k != "format"})
    if vocab.J != meta["J"] or meta["T"] != meta["J"] - 1:
        raise ShapeMismatchError(f"{path}: inconsistent J/T in metadata")
    tree = tree_from_permutation(meta["J"], meta["tree_seed"], meta["leaf_permutation"])
    H, J, T, C = meta["H"], meta["J"], meta["T"], meta["C"]
    shapes = {"W": (H, J), "c": (H,), "V": (T, H), "b": (T,), "U": (C, H), "d": (C,)}
    offset = 12 + meta_len
    arrays = {}
    for name in ModelParams.BLOCKS:
        count = int(np.prod(shapes[name]))
        end = offset + 8 * count
        if end > len(blob) - 4:
            raise FormatError(f"{path}: payload too short for block {name}")
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=count,
                                     offset=offset).reshape(shapes[name]).astype(np.float64)
        offset = end
    if offset != len(blob) - 4:
        raise FormatError(f"{path}: {len(blob) - 4 - offset} trailing bytes")
    return ModelParams(**arrays, tree=tree, vocab=vocab)


def checkpoint_config(path) -> Optional[dict]:
    """Training configuration stored in a checkpoint, if any."""
    with open(path, "rb") as fh:
        head = fh.read(12)
        if head[:4] != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: not a checkpoint")
        _, meta_len = struct.unpack_from("<II", head, 4)
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
    return meta.get("config")
