import math

import pytest

from kuramoto_mfg.grid import make_grid

# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict = {}


def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE[number] = (title, bool(passed), detail)
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title} {detail}".rstrip())
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {n:2d}  {title}  {detail}".rstrip())


@pytest.fixture(scope="session")
def grid256():
    return make_grid(math.pi, 256)


@pytest.fixture(scope="session")
def grid1024():
    return make_grid(math.pi, 1024)


@pytest.fixture(scope="session")
def turnpike_run():
    from kuramoto_mfg.turnpike import run_turnpike

    return run_turnpike(kappa=100.0, T=2.0, perturbation=0.05, n_cells=256)
