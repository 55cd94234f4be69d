import numpy as np
import pytest

from drowsy.datasets import SplitSpec, split, synth_corpus
from drowsy.fdnn import FdnnModel, train
from drowsy.nncore import SgdConfig

# filled by test_acceptance.record(); printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus():
    return synth_corpus(150, seed=7)


@pytest.fixture(scope="session")
def small_model(small_corpus):
    """A quickly trained FD-NN that separates the synthetic glyphs."""
    tr, va = split(small_corpus, SplitSpec((0.7, 0.3), seed=7))
    model = FdnnModel(seed=7)
    train(model, tr, va, SgdConfig(epochs=12, seed=7))
    return model
