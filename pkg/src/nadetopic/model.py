"""SupDocNADE parameters and forward computations.

The hidden layer seen by position ``i`` of a token sequence is
``h_i = relu(c + sum_{k<i} W[:, v_k])``; the word at position ``i`` is
emitted by walking its root-to-leaf path in a balanced binary tree, each
internal node ``t`` taking the right branch with probability
``sigm(b[t] + V[t] @ h_i)``. The class is predicted by a softmax layer on
top of the full-document hidden layer ``h_y``.

Everything is float64 and kept in log space until an API boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from nadetopic.corpus import Document, JointVocab, annotation_index
from nadetopic.errors import BoundsError, ShapeMismatchError, ValidationError
from nadetopic.wordtree import WordTree


@dataclass(eq=False)
class ModelParams:
    """Parameter set {W, c, V, b, U, d} bound to a vocabulary and word tree."""

    W: np.ndarray  # H x J
    c: np.ndarray  # H
    V: np.ndarray  # T x H
    b: np.ndarray  # T
    U: np.ndarray  # C x H
    d: np.ndarray  # C
    tree: WordTree
    vocab: JointVocab

    def __post_init__(self):
        H, J = self.W.shape
        T, C = self.tree.T, self.vocab.C
        expected = {"W": (H, J), "c": (H,), "V": (T, H), "b": (T,),
                    "U": (C, H), "d": (C,)}
        if J != self.vocab.J or J != self.tree.J:
            raise ShapeMismatchError(
                f"W has {J} columns but vocabulary J={self.vocab.J}, "
                f"tree J={self.tree.J}")
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ShapeMismatchError(f"{name} has shape {arr.shape}, expected {shape}")

    @property
    def H(self) -> int:
        return self.W.shape[0]

    @property
    def J(self) -> int:
        return self.W.shape[1]

    @property
    def T(self) -> int:
        return self.tree.T

    @property
    def C(self) -> int:
        return self.vocab.C

    BLOCKS = ("W", "c", "V", "b", "U", "d")

    def blocks(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.BLOCKS}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.blocks().items()},
                           tree=self.tree, vocab=self.vocab)

    @classmethod
    def zeros(cls, H: int, vocab: JointVocab, tree: WordTree) -> "ModelParams":
        J, T, C = vocab.J, tree.T, vocab.C
        return cls(W=np.zeros((H, J)), c=np.zeros(H), V=np.zeros((T, H)),
                   b=np.zeros(T), U=np.zeros((C, H)), d=np.zeros(C),
                   tree=tree, vocab=vocab)


def init_params(H: int, vocab: JointVocab, tree: WordTree, seed: int,
                init_scale: float = 0.1) -> ModelParams:
    """W uniform on +-init_scale/sqrt(H); every other block zero."""
    if H < 1:
        raise ValidationError(f"H must be >= 1, got {H}")
    if not init_scale > 0:
        raise ValidationError(f"init_scale must be > 0, got {init_scale}")
    params = ModelParams.zeros(H, vocab, tree)
    bound = init_scale / np.sqrt(H)
    rng = np.random.default_rng(seed)
    params.W[:] = rng.uniform(-bound, bound, size=params.W.shape)
    return params


def check_vocab(params: ModelParams, vocab: JointVocab) -> None:
    """Raise ShapeMismatchError if a corpus vocabulary does not fit the model."""
    mine, theirs = params.vocab, vocab
    if (mine.K, mine.M, mine.A, mine.C) != (theirs.K, theirs.M, theirs.A, theirs.C):
        raise ShapeMismatchError(
            f"model expects K={mine.K}, M={mine.M}, A={mine.A}, C={mine.C} "
            f"(J={mine.J}) but corpus has K={theirs.K}, M={theirs.M}, "
            f"A={theirs.A}, C={theirs.C} (J={theirs.J})")


# -- elementwise helpers ------------------------------------------------------

def relu(a: np.ndarray) -> np.ndarray:
    return np.maximum(a, 0.0)


def softplus(x):
    return np.logaddexp(0.0, x)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    return z - np.log(np.exp(z).sum())


# -- incremental hidden layer ---------------------------------------------------

@dataclass(frozen=True)
class HiddenState:
    """Running pre-activation ``c + sum of absorbed W columns``."""

    a: np.ndarray
    count: int = 0

    @classmethod
    def start(cls, params: ModelParams) -> "HiddenState":
        return cls(a=params.c.copy(), count=0)


def absorb(state: HiddenState, v: int, params: ModelParams) -> HiddenState:
    if not 0 <= v < params.J:
        raise BoundsError(f"joint index {v} outside [0, {params.J})")
    return HiddenState(a=state.a + params.W[:, v], count=state.count + 1)


def hidden(state: HiddenState) -> np.ndarray:
    return relu(state.a)


def incremental_hiddens(params: ModelParams, seq) -> list[np.ndarray]:
    """h_1 .. h_n for a joint-index sequence, one absorb per token."""
    state = HiddenState.start(params)
    out = []
    for v in seq:
        out.append(hidden(state))
        state = absorb(state, int(v), params)
    return out


def prefix_preactivations(params: ModelParams, seq: np.ndarray) -> np.ndarray:
    """Rows ``c + sum_{k<i} W[:, seq[k]]`` for i = 0..n, shape (n+1, H).

    ``np.cumsum`` accumulates left to right, so each row is bit-identical to
    absorbing the tokens one at a time.
    """
    cols = params.W[:, seq].T
    steps = np.concatenate([params.c[None, :], cols], axis=0)
    return np.cumsum(steps, axis=0)


# -- conditionals -------------------------------------------------------------

def cond_word_logprob(params: ModelParams, h: np.ndarray, v: int) -> float:
    """log p(v | context) for the context summarised by hidden layer ``h``."""
    nodes, bits = params.tree.path(v)
    logits = params.b[nodes] + params.V[nodes] @ h
    signs = 1.0 - 2.0 * np.asarray(bits, dtype=float)
    return float(-softplus(signs * logits).sum())


def word_logprobs(params: ModelParams, h: np.ndarray, words) -> np.ndarray:
    """Vectorized cond_word_logprob over several joint indices."""
    words = np.asarray(words, dtype=np.int64)
    tree = params.tree
    nodes, bits, mask = tree.nodes[words], tree.bits[words], tree.mask[words]
    logits = params.b[nodes] + params.V[nodes] @ h
    nll = softplus((1.0 - 2.0 * bits) * logits)
    return -(nll * mask).sum(axis=1)


def class_posterior(params: ModelParams, h_y: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(params.d + params.U @ h_y))


# -- document likelihood --------------------------------------------------------

class Forward(NamedTuple):
    """Intermediate values of one forward pass, reused by backprop."""

    seq: np.ndarray        # (n,) joint indices in processing order
    pre: np.ndarray        # (n+1, H) pre-activations; row n feeds the classifier
    hiddens: np.ndarray    # (n, H) h_i seen by position i
    nodes: np.ndarray      # (n, depth) tree nodes on each token's path
    bits: np.ndarray       # (n, depth)
    mask: np.ndarray       # (n, depth) valid path entries
    logits: np.ndarray     # (n, depth) node logits
    log_post: np.ndarray   # (C,) log class posterior from h_y
    disc: float
    gen: float


def forward(params: ModelParams, seq: np.ndarray, label: int) -> Forward:
    tree = params.tree
    pre = prefix_preactivations(params, seq)
    hs = relu(pre[:-1])
    nodes, bits, mask = tree.nodes[seq], tree.bits[seq], tree.mask[seq]
    logits = params.b[nodes] + np.einsum("nkh,nh->nk", params.V[nodes], hs)
    gen = float((softplus((1.0 - 2.0 * bits) * logits) * mask).sum())
    log_post = log_softmax(params.d + params.U @ relu(pre[-1]))
    return Forward(seq, pre, hs, nodes, bits, mask, logits, log_post,
                   float(-log_post[label]), gen)


def joint_nll(params: ModelParams, doc: Document, lam: float) -> tuple[float, float, float]:
    """Hybrid loss of one document in its stored token order.

    Returns ``(disc, gen, total)`` with ``disc = -log p(y | v)``,
    ``gen = -sum_i log p(v_i | v_<i)`` over visual and annotation tokens, and
    ``total = disc + lam * gen``.
    """
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    doc.validate(params.vocab)
    fw = forward(params, params.vocab.joint_sequence(doc), doc.label)
    return fw.disc, fw.gen, fw.disc + lam * fw.gen


# -- inference ------------------------------------------------------------------

def extract_representation(params: ModelParams, doc: Document,
                           use_annotations: bool = False) -> np.ndarray:
    """relu(c + sum of W columns of the document's tokens).

    Columns are summed in ascending joint-index order so the result does not
    depend on token order at all, not even in the last bit.
    """
    doc.validate(params.vocab)
    if use_annotations:
        seq = params.vocab.joint_sequence(doc)
    else:
        seq = params.vocab.visual_sequence(doc)
    seq = np.sort(seq)
    a = params.c.copy()
    for v in seq:
        a += params.W[:, v]
    return relu(a)


def predict_class(params: ModelParams, doc: Document) -> tuple[int, np.ndarray]:
    """Class from visual words only; ties go to the lowest class index."""
    post = class_posterior(params, extract_representation(params, doc, False))
    return int(np.argmax(post)), post


def predict_annotations(params: ModelParams, doc: Document,
                        top_n: int = 5) -> tuple[list[int], list[float]]:
    """Top annotation words as the next token after the visual words.

    Scores are the tree log-probabilities of the annotation leaves, not
    renormalised over the annotation subset. Ties go to the lower index.
    """
    A = params.vocab.A
    if top_n < 1 or A < top_n:
        raise ValidationError(f"cannot rank top {top_n} of {A} annotation words")
    h = extract_representation(params, doc, use_annotations=False)
    leaves = [annotation_index(a, params.vocab) for a in range(A)]
    scores = word_logprobs(params, h, leaves)
    order = np.lexsort((np.arange(A), -scores))[:top_n]
    return [int(a) for a in order], [float(scores[a]) for a in order]


@dataclass(frozen=True)
class ClassAssociations:
    topics: list[int]
    words: list[int]        # joint indices, best first
    scores: list[float]
    decoded: list[tuple]    # JointVocab.decode of each word


def inspect_class_associations(params: ModelParams, cls: int, top_topics: int = 3,
                               top_words: int = 10) -> ClassAssociations:
    """Words most tied to a class through its strongest hidden units.

    Picks the ``top_topics`` hidden units with the largest weight in
    ``U[cls]`` and ranks joint words by their mean W weight over those units.
    """
    if not 0 <= cls < params.C:
        raise BoundsError(f"class {cls} outside [0, {params.C})")
    if not 1 <= top_topics <= params.H:
        raise BoundsError(f"top_topics {top_topics} outside [1, {params.H}]")
    top_words = min(top_words, params.J)
    row = params.U[cls]
    topics = np.lexsort((np.arange(params.H), -row))[:top_topics]
    scores = params.W[topics].mean(axis=0)
    words = np.lexsort((np.arange(params.J), -scores))[:top_words]
    return ClassAssociations(
        topics=[int(t) for t in topics],
        words=[int(w) for w in words],
        scores=[float(scores[w]) for w in words],
        decoded=[params.vocab.decode(int(w)) for w in words])
