import functools

import pytest

from heisenlab.scenario import example_scenario


@functools.lru_cache(maxsize=None)
def system(amplitude: float = 0.0, normal: bool = False):
    """The example automorphism on Gamma_2 with the standard perturbation, cached per session."""
    sc = example_scenario(amplitude)
    return sc.normal_form() if normal else sc.system()


@pytest.fixture(params=[0.0, 0.03], ids=["a0", "a003"])
def amplitude(request):
    return request.param


ACCEPTANCE = {}


def record_criterion(number: int, passed: bool, summary: str) -> bool:
    """Store one acceptance line; printed now (visible with -s) and in the terminal summary."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {summary}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("-", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
