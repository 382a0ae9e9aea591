"""The ten acceptance criteria, one test each; every test prints its pass/fail line."""

import pytest

from igboltz.acceptance import CRITERIA, run_criterion


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA), ids=lambda n: f"criterion_{n:02d}")
def test_acceptance_criterion(number, capsys):
    result = run_criterion(number)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.details
    assert result.within_budget, f"runtime {result.runtime:.1f}s exceeds {result.budget:.0f}s"
