"""Acceptance criteria at their stated tolerances, one test per criterion.

Each test prints the criterion's one-line verdict to the terminal. Two
criteria are not attainable as stated and are strict xfails; see the
decisions ledger for the numbers behind each.
"""

import pytest

from gmclab.acceptance import CRITERIA

UNATTAINABLE = {
    11: "the ratio of means is sqrt(2*pi) in expectation, far outside the 20% band around sqrt(2/pi)",
    13: "the scaled dip probability is not decreasing in k over the admissible parameter range",
}


def _marks(i):
    if i in UNATTAINABLE:
        return [pytest.mark.xfail(strict=True, reason=UNATTAINABLE[i])]
    return []


@pytest.mark.slow
@pytest.mark.parametrize("criterion", [pytest.param(i, id=f"criterion_{i:02d}", marks=_marks(i))
                                       for i in sorted(CRITERIA)])
def test_criterion(criterion, capsys):
    result = CRITERIA[criterion]()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.status == "pass", result.line()
