"""Run the acceptance checks and report a pass/fail table plus deterministic JSON."""

from __future__ import annotations

import json
import sys
from pathlib import Path

from .criteria import CRITERIA, CriterionResult, run_criterion


def suite_json(results: list[CriterionResult], overrides: dict | None = None) -> str:
    """JSON without runtimes, so repeated runs with the same seeds are byte-identical."""
    doc = {
        "all_passed": all(r.passed for r in results),
        "criteria": [r.to_dict() for r in results],
        "overrides": dict(sorted((overrides or {}).items())),
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def format_table(results: list[CriterionResult]) -> str:
    lines = [f"{'#':>2}  {'result':6}  {'runtime':>9}  {'budget':>7}  title"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        slow = "  (over budget)" if r.runtime > r.budget_s else ""
        lines.append(f"{r.number:>2}  {status:6}  {r.runtime:8.1f}s  {r.budget_s:6.0f}s  {r.title}{slow}")
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} criteria passed")
    return "\n".join(lines)


def verify_suite(
    only: list[int] | None = None,
    overrides: dict | None = None,
    json_path: str | Path | None = None,
    stream=None,
) -> tuple[bool, list[CriterionResult]]:
    """Run the selected criteria (all by default). Failures are reported, not raised."""
    stream = stream or sys.stdout
    numbers = sorted(only) if only else sorted(CRITERIA)
    results = []
    for k in numbers:
        try:
            r = run_criterion(k, overrides)
        except Exception as exc:  # report, keep going
            title, _, budget = CRITERIA[k]
            r = CriterionResult(k, title, False, {"error": f"{type(exc).__name__}: {exc}"}, budget)
        results.append(r)
        print(f"criterion {k}: {'PASS' if r.passed else 'FAIL'} ({r.runtime:.1f}s) {r.title}", file=stream, flush=True)
    print(format_table(results), file=stream)
    if json_path is not None:
        Path(json_path).write_text(suite_json(results, overrides))
    ok = all(r.passed and r.runtime <= r.budget_s for r in results)
    return ok, results
