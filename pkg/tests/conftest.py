"""Prints a one-line PASS/FAIL verdict per acceptance criterion."""

import re

CRITERIA = {
    1: "exact capacity matches log-Z curvature within 2% in under 1 s",
    2: "logistic pipeline capacity within [0.5, 1.5] x p/2 at N = 5000",
    3: "sigmoid fit recovers (a, n*) on >= 18/20 noisy curves",
    4: "sigmoid and polynomial capacity estimates agree within stderr",
    5: "PAC-Bayes effective dimension equals brute-force count",
    6: "Langevin energies/capacities match quadratic closed forms",
    7: "volume-scaling RLCT within 10% of p/2 for quadratic wells",
    8: "capacity strictly decreasing in input decay, tau(C, loss) > 0",
    9: "test loss regresses on capacity with positive slope, p < 0.05",
    10: "criteria 2, 6 and 8 pipelines rerun bitwise identical",
}

_NODE_RE = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes = {}
    details = {}
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, ()):
            match = _NODE_RE.search(getattr(report, "nodeid", ""))
            if match is None:
                continue
            number = int(match.group(1))
            # setup/teardown reports only win when they carry a failure
            if getattr(report, "when", "call") != "call" and status == "passed":
                continue
            if outcomes.get(number) != "failed":
                outcomes[number] = "failed" if status == "error" else status
            for key, value in getattr(report, "user_properties", ()):
                if key == "detail":
                    details[number] = value
    if not outcomes:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria")
    for number in sorted(outcomes):
        verdict = "PASS" if outcomes[number] == "passed" else "FAIL"
        line = f"  [{verdict}] criterion {number:2d}: {CRITERIA[number]}"
        if number in details:
            line += f" -- {details[number]}"
        terminalreporter.write_line(line)
