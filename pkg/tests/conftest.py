import json

import pytest

from wcmeanfield.config import RunConfig
from wcmeanfield.model import reference_params


def make_run(params=None, T=1.0, dt=0.01, **kw) -> RunConfig:
    return RunConfig(model=params or reference_params(), T=T, dt=dt, **kw)


REFERENCE_MODEL = {
    "group_sizes": [0, 0],
    "tau": 1.0,
    "sigma": [0.2, 0.2],
    "coupling": [[-0.11, -1.1], [0.44, -0.11]],
    "input": [0.2, -0.2],
    "x_ini": [0.2, -0.35],
}


@pytest.fixture
def write_config(tmp_path):
    def write(data, name="run.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path

    return write


ACCEPTANCE = {}


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
