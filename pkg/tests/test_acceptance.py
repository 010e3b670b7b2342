"""End-to-end acceptance checks: one printed PASS/FAIL line per criterion."""

from __future__ import annotations

import io
import json

import pytest

from zospec.harness.criteria import CRITERIA, run_criterion
from zospec.harness.verify import suite_json, verify_suite


def _report(capsys, result):
    status = "PASS" if result.passed else "FAIL"
    with capsys.disabled():
        print(f"\n[acceptance] criterion {result.number}: {status} "
              f"({result.runtime:.1f}s of {result.budget_s:.0f}s) {result.title}")


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    result = run_criterion(number)
    _report(capsys, result)
    assert result.passed, json.dumps(result.to_dict()["details"], indent=1)[:4000]
    assert result.runtime <= result.budget_s


def test_negative_control_wrong_hydrogen_coefficient():
    # a wrong reference value must make the hydrogen chain fail
    result = run_criterion(1, {"c1.reference_C": 1 / 20, "c1.samples": 1_000_000})
    assert not result.passed
    assert not result.details["checks"]["closed_form_within_0.1pct"]


def test_negative_control_tightened_tolerance():
    # an impossible projector tolerance must fail criterion 5
    assert not run_criterion(5, {"c5.tol": 1e-30}).passed


def test_verify_json_is_deterministic():
    a = verify_suite([5, 8], stream=io.StringIO())[1]
    b = verify_suite([5, 8], stream=io.StringIO())[1]
    assert suite_json(a) == suite_json(b)
    assert "runtime" not in suite_json(a)


def test_verify_reports_failure_status():
    ok, results = verify_suite([8], {"c8.tol": -1.0}, stream=io.StringIO())
    assert not ok and not results[0].passed
