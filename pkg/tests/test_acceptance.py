"""Acceptance criteria at their stated tolerances, one test and one PASS/FAIL line each.

Failing criteria are left failing; the detail line says which check missed and by how much.
"""
import pytest

from sfolab import acceptance

LINES = []


def report(result):
    LINES.append(result.line())
    return result


def detail(result):
    return "\n".join(f"{'ok ' if ok else 'BAD'} {lbl}: {info}" for lbl, ok, info in result.checks)


def test_criterion_1_spectral_slopes():
    r = report(acceptance.criterion_1(threads=0))
    assert r.passed, detail(r)


@pytest.mark.slow
def test_criterion_2_empirical_slopes():
    r = report(acceptance.criterion_2(threads=0))
    assert r.passed, detail(r)


def test_criterion_3_momentum_lower_bound():
    r = report(acceptance.criterion_3())
    assert r.passed, detail(r)


def test_criterion_4_closed_forms():
    r = report(acceptance.criterion_4())
    assert r.passed, detail(r)


def test_criterion_5_algorithm_equivalence():
    r = report(acceptance.criterion_5())
    assert r.passed, detail(r)


def test_criterion_6_operator_vs_monte_carlo():
    r = report(acceptance.criterion_6())
    assert r.passed, detail(r)


def test_criterion_7_declared_out_of_scope():
    assert 7 in acceptance.OUT_OF_SCOPE and 7 not in acceptance.CRITERIA
    LINES.append(f"[SKIP] criterion 7: out of scope -- {acceptance.OUT_OF_SCOPE[7]}")
