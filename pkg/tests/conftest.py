import numpy as np
import pytest

from llmcache.transformer import ModelConfig, ModelWeights


@pytest.fixture(scope="session")
def small_weights():
    return ModelWeights.init(ModelConfig(vocab=64, dim=32, layers=3, seed=11))


@pytest.fixture(scope="session")
def default_weights():
    return ModelWeights.init(ModelConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion; returns the verdict."""
    results = request.config.stash[_ACCEPTANCE]
    number = int(request.node.name.split("_")[2])

    def record(passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        results[number] = line
        print(line)
        return passed

    yield record
    if number not in results:
        record(False, "did not complete (see traceback)")


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
