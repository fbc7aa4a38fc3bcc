import json

import pytest

from problemforge.executor import RunnerPool, fake_runner_command
from problemforge.gateway import Gateway, MockBackend, RetryPolicy


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(label): names the acceptance criterion a test certifies"
    )


def pytest_collection_modifyitems(config, items):
    labels = {}
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker:
            labels[item.nodeid] = marker.args[0]
    config._acceptance_labels = labels


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, in criterion order."""
    labels = getattr(config, "_acceptance_labels", {})
    if not labels:
        return
    outcomes = {}
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", None)
            if nodeid in labels:
                duration = getattr(report, "duration", 0.0)
                outcomes.setdefault(nodeid, (status, duration))
    terminalreporter.section("acceptance criteria")
    for nodeid, label in labels.items():
        status, duration = outcomes.get(nodeid, ("notrun", 0.0))
        tag = {"passed": "PASS", "skipped": "SKIP"}.get(status, "FAIL")
        terminalreporter.write_line(f"[{tag}] {label} ({duration:.2f}s)")


@pytest.fixture
def make_gateway():
    """Gateway over an in-memory mock script; retries never sleep."""

    def factory(script: dict, cache_dir=None, max_retries: int = 4, in_flight_limit: int = 8):
        return Gateway(
            MockBackend(script),
            cache_dir=cache_dir,
            retry_policy=RetryPolicy(max_retries=max_retries, base_delay=0.0),
            in_flight_limit=in_flight_limit,
            sleep=lambda _: None,
        )

    return factory


@pytest.fixture
def fake_pool():
    return RunnerPool(command=fake_runner_command(), pool_size=4, time_limit_sec=2.0)


@pytest.fixture
def write_corpus(tmp_path):
    """Write records as a JSONL corpus file and return its path."""

    def writer(records, name="corpus.jsonl"):
        path = tmp_path / name
        path.write_text(
            "".join(json.dumps(r) + "\n" for r in records), encoding="utf-8"
        )
        return path

    return writer
