import inspect

import hypothesis
import numpy as np
import pytest

from iin.core import GroundTruth, SensorDataset

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile("default")

ACCEPTANCE_LINES = []

ALLOWED_TRUTH_READERS = ("iin.evaluation",)


@pytest.fixture(autouse=True)
def truth_access_audit(monkeypatch):
    """Fail any test in which package code outside evaluation reads Holdout truth."""
    violations = []
    original = GroundTruth.reveal

    def audited(self):
        caller = inspect.currentframe().f_back.f_globals.get("__name__", "")
        if caller.startswith("iin") and not caller.startswith(ALLOWED_TRUTH_READERS):
            violations.append(caller)
        return original(self)

    monkeypatch.setattr(GroundTruth, "reveal", audited)
    yield violations
    assert not violations, f"ground truth read outside evaluation by {sorted(set(violations))}"


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion for the summary."""

    def record(name, ok, detail=""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        print(ACCEPTANCE_LINES[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_dataset(values, mask=None, timestamps=None, ids=None, time_kind="index"):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n_t, n_s = values.shape
    return SensorDataset(
        sensor_ids=tuple(ids or [f"s{j}" for j in range(n_s)]),
        timestamps=np.arange(n_t, dtype=float) if timestamps is None else timestamps,
        values=values,
        mask=mask,
        time_kind=time_kind,
    )


@pytest.fixture
def sine_dataset():
    t = np.arange(300)
    vals = np.stack([10 + 3 * np.sin(2 * np.pi * t / 24 + p) for p in (0.0, 0.2, 0.4)], axis=1)
    return make_dataset(vals)
