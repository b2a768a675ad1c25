import numpy as np
import pytest

from avgcontain.admm import AdmmConfig, run_admm
from avgcontain.harness import prepare
from avgcontain.io import load_scenario
from avgcontain.weights import SparsityPattern, solve_centralized, wba_weights


@pytest.fixture(scope="session")
def bundled_cfg():
    return load_scenario()


@pytest.fixture(scope="session")
def bundled_follower_graph(bundled_cfg):
    return prepare(bundled_cfg)[1]


@pytest.fixture(scope="session")
def bundled_centralized(bundled_follower_graph):
    return solve_centralized(SparsityPattern.from_graph(bundled_follower_graph))


@pytest.fixture(scope="session")
def bundled_admm(bundled_follower_graph):
    return run_admm(bundled_follower_graph, config=AdmmConfig(rho=5.0, H=20, epsilon=1e-3))


@pytest.fixture(scope="session")
def bundled_wba(bundled_follower_graph):
    return wba_weights(bundled_follower_graph, v0="auto")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting: one PASS/FAIL line per criterion ---------------------

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
    _ACCEPTANCE[number] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, detail = _ACCEPTANCE[number]
        line = f"criterion {number:>2} {status}: {title}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)
