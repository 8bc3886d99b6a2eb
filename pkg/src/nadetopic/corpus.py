"""Joint vocabulary, documents, the JSON-lines corpus format and a seeded
synthetic corpus generator.

Visual words are paired with the image region they were extracted from and
each (word, region) pair is one entry of a joint vocabulary. Annotation words
take the tail of the same index space::

    joint index = region * K + word          for 0 <= joint < K*M
    joint index = K*M + annotation           for K*M <= joint < J
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from nadetopic.errors import BoundsError, FormatError, ValidationError

FORMAT_TAG = "nadetopic-corpus/1"


@dataclass(frozen=True)
class JointVocab:
    """Sizes of the visual, spatial, annotation and class vocabularies."""

    K: int
    M: int
    A: int
    C: int
    visual_names: Optional[tuple[str, ...]] = None
    annotation_names: Optional[tuple[str, ...]] = None
    class_names: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.K < 1 or self.M < 1 or self.A < 0 or self.C < 2:
            raise ValidationError(
                f"need K>=1, M>=1, A>=0, C>=2; got K={self.K}, M={self.M}, "
                f"A={self.A}, C={self.C}")
        for field, size in (("visual_names", self.K),
                            ("annotation_names", self.A),
                            ("class_names", self.C)):
            names = getattr(self, field)
            if names is None:
                continue
            object.__setattr__(self, field, tuple(names))
            if len(names) != size:
                raise ValidationError(
                    f"{field} has {len(names)} entries, expected {size}")

    @property
    def n_visual(self) -> int:
        return self.K * self.M

    @property
    def J(self) -> int:
        return self.K * self.M + self.A

    def decode(self, j: int) -> tuple:
        """Invert the joint layout.

        Returns ``("visual", word, region)`` or ``("annotation", a)``.
        """
        j = int(j)
        if not 0 <= j < self.J:
            raise BoundsError(f"joint index {j} outside [0, {self.J})")
        if j < self.n_visual:
            region, word = divmod(j, self.K)
            return ("visual", word, region)
        return ("annotation", j - self.n_visual)

    def header(self) -> dict:
        out = {"format": FORMAT_TAG, "K": self.K, "M": self.M,
               "A": self.A, "C": self.C}
        if self.visual_names is not None:
            out["visual_names"] = list(self.visual_names)
        if self.annotation_names is not None:
            out["annotation_names"] = list(self.annotation_names)
        if self.class_names is not None:
            out["class_names"] = list(self.class_names)
        return out

    def joint_sequence(self, doc: "Document") -> np.ndarray:
        """Joint indices of a document: visual tokens, then annotations."""
        vis = [joint_index(w, r, self) for w, r in doc.tokens]
        ann = [annotation_index(a, self) for a in doc.annotations]
        return np.asarray(vis + ann, dtype=np.int64)

    def visual_sequence(self, doc: "Document") -> np.ndarray:
        return np.asarray([joint_index(w, r, self) for w, r in doc.tokens],
                          dtype=np.int64)


@dataclass(frozen=True)
class Document:
    """A labeled image: (word, region) tokens plus annotation words."""

    label: int
    tokens: tuple[tuple[int, int], ...] = ()
    annotations: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(
            self, "tokens", tuple((int(w), int(r)) for w, r in self.tokens))
        object.__setattr__(
            self, "annotations", tuple(int(a) for a in self.annotations))

    @property
    def D(self) -> int:
        return len(self.tokens)

    @property
    def L(self) -> int:
        return len(self.annotations)

    def validate(self, vocab: JointVocab) -> None:
        if not 0 <= self.label < vocab.C:
            raise BoundsError(f"label {self.label} outside [0, {vocab.C})")
        for w, r in self.tokens:
            if not 0 <= w < vocab.K:
                raise BoundsError(f"word {w} outside [0, {vocab.K})")
            if not 0 <= r < vocab.M:
                raise BoundsError(f"region {r} outside [0, {vocab.M})")
        for a in self.annotations:
            if not 0 <= a < vocab.A:
                raise BoundsError(f"annotation {a} outside [0, {vocab.A})")


def joint_index(word: int, region: int, vocab: JointVocab) -> int:
    if not 0 <= word < vocab.K:
        raise BoundsError(f"word {word} outside [0, {vocab.K})")
    if not 0 <= region < vocab.M:
        raise BoundsError(f"region {region} outside [0, {vocab.M})")
    return region * vocab.K + word


def annotation_index(a: int, vocab: JointVocab) -> int:
    if not 0 <= a < vocab.A:
        raise BoundsError(f"annotation {a} outside [0, {vocab.A})")
    return vocab.n_visual + a


def _vocab_from_header(obj) -> JointVocab:
    if not isinstance(obj, dict) or obj.get("format") != FORMAT_TAG:
        raise FormatError(f"line 1: expected header with format {FORMAT_TAG!r}")
    try:
        return JointVocab(
            K=int(obj["K"]), M=int(obj["M"]), A=int(obj["A"]), C=int(obj["C"]),
            visual_names=obj.get("visual_names"),
            annotation_names=obj.get("annotation_names"),
            class_names=obj.get("class_names"))
    except KeyError as exc:
        raise FormatError(f"line 1: header missing field {exc}") from None


def load_corpus(path) -> tuple[JointVocab, list[Document]]:
    """Read a corpus file; raises FormatError or BoundsError on bad input."""
    docs: list[Document] = []
    vocab = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: {exc.msg}") from None
            if vocab is None:
                vocab = _vocab_from_header(obj)
                continue
            try:
                doc = Document(label=obj["label"],
                               tokens=obj.get("tokens", ()),
                               annotations=obj.get("annotations", ()))
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"line {lineno}: malformed document ({exc})") from None
            try:
                doc.validate(vocab)
            except BoundsError as exc:
                raise BoundsError(f"document {len(docs)}: {exc}") from None
            docs.append(doc)
    if vocab is None:
        raise FormatError(f"{path}: empty file, no header")
    return vocab, docs


def save_corpus(vocab: JointVocab, docs: Sequence[Document], path) -> None:
    lines = [json.dumps(vocab.header(), separators=(",", ":"))]
    for i, doc in enumerate(docs):
        try:
            doc.validate(vocab)
        except BoundsError as exc:
            raise BoundsError(f"document {i}: {exc}") from None
        lines.append(json.dumps(
            {"label": doc.label,
             "tokens": [list(t) for t in doc.tokens],
             "annotations": list(doc.annotations)},
            separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _log_gamma_draws(rng: np.random.Generator, shape: float, n: int) -> np.ndarray:
    # log of Gamma(shape) variates without underflow for tiny shapes:
    # X = G * U**(1/shape) with G ~ Gamma(shape + 1)
    g = rng.gamma(shape + 1.0, 1.0, size=n)
    u = rng.random(n)
    return np.log(g) + np.log1p(-u) / shape


def _normalized(logits: np.ndarray) -> np.ndarray:
    p = np.exp(logits - logits.max())
    return p / p.sum()


def gen_synthetic(C: int, K: int, M: int, A: int, docs_per_class: int, D: int,
                  L: int, concentration: float, seed: int
                  ) -> tuple[JointVocab, list[Document]]:
    """Sample a labeled corpus with class-specific word distributions.

    Each class draws a categorical over the K*M visual joint words and one
    over the A annotation words (normalized Gamma(concentration) draws, i.e.
    a symmetric Dirichlet). Small concentrations make classes easy to tell
    apart. Documents are returned class by class.
    """
    if min(C, K, M, docs_per_class) < 1 or A < 0 or D < 0 or L < 0:
        raise ValidationError("counts must be >= 1 (A, D, L >= 0)")
    if not concentration > 0:
        raise ValidationError(f"concentration must be > 0, got {concentration}")
    if L > 0 and A == 0:
        raise ValidationError("annotation length L > 0 needs A >= 1")
    vocab = JointVocab(K=K, M=M, A=A, C=C)
    docs = []
    for c in range(C):
        rng = np.random.default_rng([seed, c])
        p_vis = _normalized(_log_gamma_draws(rng, concentration, K * M))
        p_ann = _normalized(_log_gamma_draws(rng, concentration, A)) if A else None
        for _ in range(docs_per_class):
            vis = rng.choice(K * M, size=D, p=p_vis) if D else []
            ann = rng.choice(A, size=L, p=p_ann) if L else []
            tokens = tuple((int(j) % K, int(j) // K) for j in vis)
            docs.append(Document(label=c, tokens=tokens,
                                 annotations=tuple(int(a) for a in ann)))
    return vocab, docs
