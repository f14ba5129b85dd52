import pytest

SMALL_CONFIG = {
    "seed": 11,
    "pi": 0.1,
    "replicates": 3,
    "population": {
        "N": 3000,
        "schema": {"attributes": [{"name": "age", "levels": 16}, {"name": "income", "levels": 8}]},
        "law": {"kind": "smooth", "location": [8, 4], "scale": [4, 2], "correlation": 0.3},
    },
    "methods": [
        {"kind": "argus", "strata": ["age"]},
        {"kind": "loglin", "model": "independence"},
        {"kind": "loglin", "model": "two-way"},
        {"kind": "smooth", "t": 2, "c": 2},
    ],
}


@pytest.fixture
def small_config():
    import copy
    return copy.deepcopy(SMALL_CONFIG)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record a pass/fail line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def check(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
