"""Reference computations used to check the optimized model and trainer.

Nothing here reuses the model's log-space or vectorized code paths: word
distributions are products of plain sigmoids found by walking the tree from
the root, hidden layers are recomputed from scratch at every position, and
gradients come from central differences.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from nadetopic.corpus import Document, JointVocab
from nadetopic.errors import ValidationError
from nadetopic.model import ModelParams, joint_nll, prefix_preactivations
from nadetopic.trainer import Gradients, compute_gradients
from nadetopic.wordtree import build_balanced

MAX_ENUM_J = 2 ** 16
MAX_SEQUENCES = 10 ** 6


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def enumerate_word_distribution(params: ModelParams, h) -> np.ndarray:
    """p(w | h) for every joint word, by pushing probability mass down the tree."""
    tree = params.tree
    if tree.J > MAX_ENUM_J:
        raise ValidationError(f"J={tree.J} exceeds enumeration guard {MAX_ENUM_J}")
    h = np.asarray(h, dtype=float)
    probs = np.zeros(tree.J)
    stack = [(0, 1.0)]
    while stack:
        node, mass = stack.pop()
        right = _sigmoid(float(params.b[node] + np.dot(params.V[node], h)))
        for child, p in ((tree.children[node, 0], 1.0 - right),
                         (tree.children[node, 1], right)):
            if child < 0:
                probs[tree.perm[~child]] = mass * p
            else:
                stack.append((int(child), mass * p))
    return probs


def naive_hiddens(params: ModelParams, seq) -> list[np.ndarray]:
    """h_i recomputed from scratch for each position (quadratic in length)."""
    out = []
    for i in range(len(seq)):
        a = params.c.copy()
        for k in range(i):
            a = a + params.W[:, int(seq[k])]
        out.append(np.maximum(a, 0.0))
    return out


def enumerate_sequence_mass(params: ModelParams, n: int) -> float:
    """Total probability of all J**n token sequences under the chain rule."""
    J = params.J
    if J ** n > MAX_SEQUENCES:
        raise ValidationError(f"J**n = {J ** n} sequences exceeds guard {MAX_SEQUENCES}")
    total = 0.0
    for seq in itertools.product(range(J), repeat=n):
        p = 1.0
        for i, h in enumerate(naive_hiddens(params, seq)):
            p *= enumerate_word_distribution(params, h)[seq[i]]
        total += p
    return total


def flat_softmax_conditional(Wf, bf, h) -> np.ndarray:
    """Flat softmax over J words: ``exp(bf_w + Wf[:, w] @ h)`` normalized.

    ``Wf`` is H x J. Costs O(H J) per position, which is why the tree is used
    in practice.
    """
    Wf = np.asarray(Wf, dtype=float)
    bf = np.asarray(bf, dtype=float)
    if bf.shape[0] > MAX_ENUM_J:
        raise ValidationError(f"J={bf.shape[0]} exceeds guard {MAX_ENUM_J}")
    z = bf + np.asarray(h, dtype=float) @ Wf
    z = np.exp(z - z.max())
    return z / z.sum()


def reference_nll(params: ModelParams, doc: Document, lam: float) -> tuple[float, float, float]:
    """Hybrid loss from naive hidden layers and enumerated word distributions."""
    seq = params.vocab.joint_sequence(doc)
    gen = 0.0
    for i, h in enumerate(naive_hiddens(params, seq)):
        gen -= math.log(enumerate_word_distribution(params, h)[seq[i]])
    a = params.c.copy()
    for v in seq:
        a = a + params.W[:, int(v)]
    z = params.d + params.U @ np.maximum(a, 0.0)
    m = z.max()
    disc = -(z[doc.label] - m - math.log(np.exp(z - m).sum()))
    return disc, gen, disc + lam * gen


# -- finite differences ---------------------------------------------------------

def reachable(params: ModelParams, doc: Document) -> dict[str, np.ndarray]:
    """Boolean masks of the parameters a document's loss can depend on."""
    seq = params.vocab.joint_sequence(doc)
    masks = {k: np.zeros(v.shape, dtype=bool) for k, v in params.blocks().items()}
    masks["W"][:, seq] = True
    for v in seq:
        nodes, _ = params.tree.path(int(v))
        masks["V"][nodes, :] = True
        masks["b"][nodes] = True
    for k in ("c", "U", "d"):
        masks[k][...] = True
    return masks


def finite_diff(params: ModelParams, doc: Document, lam: float,
                eps: float = 1e-5) -> Gradients:
    """Central differences of the total hybrid loss, one coordinate at a time."""
    work = params.copy()
    out = Gradients.zeros_like(params)
    for name, mask in reachable(params, doc).items():
        arr = getattr(work, name)
        grad = getattr(out, name)
        for idx in zip(*np.nonzero(mask)):
            orig = arr[idx]
            arr[idx] = orig + eps
            up = joint_nll(work, doc, lam)[2]
            arr[idx] = orig - eps
            down = joint_nll(work, doc, lam)[2]
            arr[idx] = orig
            grad[idx] = (up - down) / (2 * eps)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-4) -> float:
    """max over entries of |a-b| / max(|a|, |b|, floor).

    Central differences of a loss ``f`` carry rounding noise of order
    ``eps_machine * |f| / eps`` (about 1e-9 for losses near 100), so entries
    smaller than ``floor`` are in effect compared absolutely.
    """
    a, b = np.ravel(a), np.ravel(b)
    if a.size == 0:
        return 0.0
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / scale))


@dataclass
class GradCheckReport:
    max_rel_error: dict = field(default_factory=dict)
    tested: int = 0
    skipped: int = 0
    attempted: int = 0

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["worst"] = self.worst
        return out


def random_case(rng: np.random.Generator, hidden: int, J: int, classes: int,
                scale: float = 1.0, max_visual: int = 8, max_annotations: int = 3):
    """Random vocabulary split, tree, parameters and document for a total size J."""
    A = int(rng.integers(0, J // 2 + 1))
    if J - A < 1:
        A = J - 1
    vocab = JointVocab(K=J - A, M=1, A=A, C=classes)
    tree = build_balanced(J, int(rng.integers(2 ** 31)))
    params = ModelParams.zeros(hidden, vocab, tree)
    for arr in params.blocks().values():
        arr[...] = rng.uniform(-scale, scale, size=arr.shape)
    D = int(rng.integers(0, max_visual + 1))
    L = int(rng.integers(0, max_annotations + 1)) if A else 0
    doc = Document(label=int(rng.integers(classes)),
                   tokens=[(int(rng.integers(vocab.K)), 0) for _ in range(D)],
                   annotations=[int(rng.integers(A)) for _ in range(L)])
    return params, doc


def near_kink(params: ModelParams, doc: Document, kink: float = 1e-3,
              saturation: float = 30.0) -> bool:
    """True if a ReLU input sits within ``kink`` of zero or a tree logit is saturated."""
    seq = params.vocab.joint_sequence(doc)
    pre = prefix_preactivations(params, seq)
    if np.any(np.abs(pre) <= kink):
        return True
    for i, v in enumerate(seq):
        nodes, _ = params.tree.path(int(v))
        logits = params.b[nodes] + params.V[nodes] @ np.maximum(pre[i], 0.0)
        if np.any(np.abs(logits) >= saturation):
            return True
    return False


def gradcheck(trials: int = 100, hidden: int = 6, J: int = 12, classes: int = 4,
              seed: int = 0, lambdas=(0.0, 0.37, 1.0), eps: float = 1e-5) -> GradCheckReport:
    """Compare backprop gradients with finite differences on random cases."""
    if J < 2 or classes < 2 or hidden < 1:
        raise ValidationError("gradcheck needs J >= 2, classes >= 2, hidden >= 1")
    report = GradCheckReport(max_rel_error={k: 0.0 for k in ModelParams.BLOCKS})
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        params, doc = random_case(rng, hidden, J, classes)
        lam = lambdas[t % len(lambdas)]
        report.attempted += 1
        if near_kink(params, doc):
            report.skipped += 1
            continue
        report.tested += 1
        grads, _ = compute_gradients(params, doc, lam)
        numeric = finite_diff(params, doc, lam, eps)
        for name in ModelParams.BLOCKS:
            err = relative_error(getattr(grads, name), getattr(numeric, name))
            report.max_rel_error[name] = max(report.max_rel_error[name], err)
    return report
