ACCEPTANCE_MODULE = "test_acceptance.py"


def pytest_runtest_logreport(report):
    """One pass/fail line per acceptance criterion."""
    if ACCEPTANCE_MODULE not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        outcome = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        print(f"\nACCEPTANCE {outcome}: {name}", flush=True)
    elif report.when == "setup" and report.skipped:
        print(f"\nACCEPTANCE SKIP: {name}", flush=True)
