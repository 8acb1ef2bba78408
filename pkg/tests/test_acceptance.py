"""Acceptance suite at the full path counts.

Each test prints one ``criterion N [PASS|FAIL] ...`` line.  Set ``QMETER_ACCEPTANCE=quick``
for the reduced path counts.  The CSVs land in ``acceptance_out/`` under pytest's tmp dir.
"""

import os

import pytest

from qmeter.acceptance import run_suite

QUICK = os.environ.get("QMETER_ACCEPTANCE", "").lower() == "quick"


@pytest.fixture(scope="module")
def results(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance_out")
    return {r.number: r for r in run_suite(out, quick=QUICK, log=lambda line: None)}


@pytest.mark.slow
@pytest.mark.parametrize("number", range(1, 9))
def test_criterion(results, number, capsys):
    r = results[number]
    with capsys.disabled():
        print(f"\n{r.line()}")
        for f in r.failures[:10]:
            print(f"    {f}")
    passed = r.passed
    assert passed, r.failures
