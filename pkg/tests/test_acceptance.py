"""Acceptance criteria 1-8, one test each, at the stated tolerances and time limits.

Each test prints a single PASS/FAIL line; the lines are repeated in the
terminal summary (see conftest.py) so they show up without ``-s``.
"""
import numpy as np
import pytest

from polyflow.acceptance import CRITERIA

LINES = {}


@pytest.mark.parametrize("number", range(1, 9))
def test_criterion(number):
    result = CRITERIA[number - 1](rng=np.random.default_rng([42, number]))
    line = result.line()
    LINES[number] = line
    print(line)
    for c in result.checks:
        print(f"    {c.name}: worst={c.worst:.3g} ({'<=' if c.kind == 'max' else '>='} "
              f"{c.threshold:g}) {'ok' if c.passed else 'FAILED'}")
    assert result.passed, line
