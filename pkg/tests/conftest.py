import numpy as np
import pytest

from nadetopic.corpus import Document, JointVocab
from nadetopic.model import ModelParams
from nadetopic.wordtree import build_balanced


def random_params(H, vocab, seed=0, scale=1.0, tree_seed=0):
    """Model with every block uniform on [-scale, scale]."""
    tree = build_balanced(vocab.J, tree_seed)
    params = ModelParams.zeros(H, vocab, tree)
    rng = np.random.default_rng(seed)
    for arr in params.blocks().values():
        arr[...] = rng.uniform(-scale, scale, size=arr.shape)
    return params


def random_doc(vocab, rng, D, L=0):
    return Document(label=int(rng.integers(vocab.C)),
                    tokens=[(int(rng.integers(vocab.K)), int(rng.integers(vocab.M)))
                            for _ in range(D)],
                    annotations=[int(rng.integers(vocab.A)) for _ in range(L)])


@pytest.fixture
def small_vocab():
    return JointVocab(K=5, M=2, A=4, C=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
