"""One test per acceptance criterion; each prints a single PASS/FAIL line."""
import pytest

from lcbvm.acceptance import CRITERIA, run_criterion

RESULTS = {}


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA],
                         ids=[f"criterion_{c[0]}_{c[3].__name__}" for c in CRITERIA])
def test_criterion(number):
    res = run_criterion(number)
    RESULTS[number] = res.line()
    print(res.line())
    assert res.passed, res.line()
