"""Prints a one-line verdict per acceptance criterion at the end of the run."""

import re
from collections import defaultdict

_ACCEPTANCE: dict[int, list[str]] = defaultdict(list)

_TITLES = {
    1: "pool algebra identities (1e5 random inputs, 1e-10 relative)",
    2: "closed-form spread value and monotonicity grid",
    3: "position-value drift vs predictable-loss rate (Monte Carlo)",
    4: "policy optimality under perturbations (common random numbers)",
    5: "value surface vs backward ODE and dynamic-programming residual",
    6: "concentration-cost regression recovery",
    7: "gas breakeven wealth reproduction",
    8: "benchmark pairing on a constructed log",
    9: "golden-file replay of the bundled synthetic log",
    10: "byte-exact determinism across worker counts",
}

_NOTES = {
    4: (
        "skew perturbations can beat the tied skew rule by construction of the "
        "wealth dynamics; the three impossible sub-checks are asserted as "
        "expected failures (see the criterion-4 docstring in test_acceptance.py)"
    ),
}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    match = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not match:
        return
    n = int(match.group(1))
    if hasattr(report, "wasxfail") and report.skipped:
        _ACCEPTANCE[n].append("xfail")
    else:
        _ACCEPTANCE[n].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        outcomes = _ACCEPTANCE[n]
        n_pass = sum(1 for o in outcomes if o == "passed")
        n_xfail = sum(1 for o in outcomes if o == "xfail")
        n_fail = len(outcomes) - n_pass - n_xfail
        title = _TITLES.get(n, "")
        if n_fail:
            verdict = f"FAIL ({n_fail} of {len(outcomes)} sub-checks failed)"
        elif n_xfail:
            verdict = (
                f"FAIL as specified ({n_pass} sub-checks pass, {n_xfail} are "
                f"unattainable and fail as predicted)"
            )
        else:
            verdict = "PASS"
        terminalreporter.write_line(f"criterion {n:2d}: {verdict} — {title}")
        if n_xfail and not n_fail and n in _NOTES:
            terminalreporter.write_line(f"              note: {_NOTES[n]}")
