import pytest

_ACCEPTANCE = pytest.StashKey[dict]()


class AcceptanceLog:
    """Collects one pass/fail line per acceptance criterion; parts of a criterion are merged."""

    def __init__(self):
        self.items = {}

    def record(self, number, title, ok, detail):
        prev = self.items.get(number)
        if prev:
            ok = ok and prev[1]
            detail = f"{prev[2]}; {detail}"
        self.items[number] = (title, ok, detail)
        print(self.line(number))

    def line(self, number):
        title, ok, detail = self.items[number]
        return f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"


@pytest.fixture(scope="session")
def acceptance(request):
    return request.config.stash.setdefault(_ACCEPTANCE, AcceptanceLog())


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(_ACCEPTANCE, None)
    if log and log.items:
        terminalreporter.section("acceptance criteria")
        for number in sorted(log.items):
            terminalreporter.write_line(log.line(number))
