import numpy as np
import pytest

from tasjoint import autograd as ag
from tasjoint.dataio import CorpusConfig, generate_toneword_corpus


@pytest.fixture(autouse=True)
def _fresh_graph():
    ag.current_graph().release()
    ag.set_default_dtype("float64")
    yield
    ag.current_graph().release()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A few mixtures per split, rendered once per session."""
    out = tmp_path_factory.mktemp("corpus")
    cfg = CorpusConfig(n_train=8, n_dev=3, n_test=3, seed=7)
    manifests = generate_toneword_corpus(cfg, out)
    return cfg, out, manifests


ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"CRITERION {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
