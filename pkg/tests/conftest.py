import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from shallowgen import engine
from shallowgen.airquality import load_datasource
from shallowgen.ir import parse_ir
from shallowgen.pack import bundled_data_dir, bundled_pack_dir, load_pack

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default",
    max_examples=1000,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")

DATA = Path(bundled_data_dir()).parent
FIXTURES = DATA / "fixtures"
CORPUS = DATA / "corpus"


# Every successful derivation anywhere in the suite is re-checked.
class ConstraintAudit:
    def __init__(self):
        self.checked = 0
        self.violations: list[str] = []

    def __call__(self, grammar, result):
        self.checked += 1
        self.violations.extend(engine.verify_constraints(result, grammar))


AUDIT = ConstraintAudit()
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_configure(config):
    engine.add_observer(AUDIT)


def pytest_unconfigure(config):
    engine.remove_observer(AUDIT)


def pytest_sessionfinish(session, exitstatus):
    if AUDIT.violations and session.exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    tr = terminalreporter
    tr.section("constraint audit")
    tr.write_line(f"derivations checked: {AUDIT.checked}, violations: {len(AUDIT.violations)}")
    for v in AUDIT.violations[:20]:
        tr.write_line(f"  {v}")
    if ACCEPTANCE:
        tr.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            ok, detail = ACCEPTANCE[n]
            tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def packs():
    return {lang: load_pack(bundled_pack_dir(lang)) for lang in ("fr", "en", "de")}


@pytest.fixture(scope="session")
def datasource():
    return load_datasource(bundled_data_dir())


@pytest.fixture(scope="session")
def fig1():
    return parse_ir((FIXTURES / "figure1.ir").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def corpus_dir():
    return CORPUS


def pytest_collection_modifyitems(session, config, items):
    # acceptance runs last so it sees the audit and property counts of the whole run
    items.sort(key=lambda item: item.path.name == "test_acceptance.py")
