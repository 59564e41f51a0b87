import pytest

ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def criterion(request):
    """``criterion(k, passed, detail)`` records and prints one acceptance line."""
    results = request.config.stash[ACCEPTANCE]

    def report(k, passed, detail):
        line = f"criterion {k}: {'PASS' if passed else 'FAIL'}  {detail}"
        results.setdefault(k, []).append((passed, line))
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        passed = all(p for p, _ in results[k])
        details = "; ".join(line.split("  ", 1)[1] for _, line in results[k])
        terminalreporter.write_line(f"criterion {k}: {'PASS' if passed else 'FAIL'}  {details}")
