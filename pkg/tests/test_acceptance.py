"""Acceptance criteria 1 to 10 at their stated sizes and tolerances.

Each test prints one line ``criterion N (name): pass|fail`` to the terminal.
The checks live in :mod:`treemart.acceptance` so ``treemart verify`` runs the
same code.
"""
import pytest

from treemart import acceptance


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number, capsys):
    crit = acceptance.CRITERIA[number]
    report = acceptance.run_criterion(number, seed=0)
    with capsys.disabled():
        print(f"\ncriterion {number} ({crit.name}): {report.verdict}  statistic={float(report.statistic):.6g}")
    assert report.passed, report.to_json()
