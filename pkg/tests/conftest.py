import numpy as np
import pytest

from lzmelody.oracle import melody_source, sample_source
from lzmelody.spa import LzTree


@pytest.fixture(scope="session")
def melody():
    return melody_source()


@pytest.fixture(scope="session")
def small_melody_model(melody):
    """Model trained on 2,000 melody sequences plus 500 held-out sequences."""
    corpus = sample_source(melody, 2500, seed=11)
    tree = LzTree(90)
    for row in corpus.tokens[:2000]:
        tree.train_on_sequence(row)
    tree.freeze()
    return tree, corpus.head(2000), corpus.tokens[2000:]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
