import numpy as np
import pytest

from twrelay.channel import NetworkConfig
from twrelay.rate_model import TupleContext


def random_context(rng: np.random.Generator, u=0, k=0, i=0, j=0) -> TupleContext:
    """Context with gains spread over a few decades, as channel draws are."""
    gains = rng.exponential(size=4) * 10.0 ** rng.uniform(-1.5, 1.5, size=4)
    p_b, p_u = 10.0 ** rng.uniform(-1.5, 1.0, size=2)
    return TupleContext(u=u, k=k, i=i, j=j, gain_fm=gains[0], gain_hm=gains[1],
                        gain_hb=gains[2], gain_fb=gains[3], p_b=p_b, p_u=p_u)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def reference_config():
    return NetworkConfig.from_db(4, 3, 32)


@pytest.fixture
def tiny_config():
    return NetworkConfig.from_db(2, 2, 2)


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        detail = dict(report.user_properties).get("measured", "")
        _ACCEPTANCE[report.nodeid.split("::")[-1]] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n.split("_")[2])):
        outcome, detail = _ACCEPTANCE[name]
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"{status}  {name}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
