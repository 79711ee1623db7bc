import pytest

from deltagraph import Engine, kernels

BACKENDS = ["python"] + (["cython"] if kernels.compiled_available() else [])

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def k(backend):
    return kernels.get_backend(backend)


@pytest.fixture
def make_engine(backend):
    """Factory for engines on the parametrized backend; closes them afterwards."""
    made = []

    def make(**cfg):
        cfg.setdefault("commit_mode", "inline")
        e = Engine(backend=backend, **cfg)
        made.append(e)
        return e

    yield make
    for e in made:
        e.close()


@pytest.fixture
def engine(make_engine):
    return make_engine()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
