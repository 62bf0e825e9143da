import numpy as np
import pytest

from roitopo.ingest import ClassRecipe, SyntheticSpec, generate_synthetic_cohort


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_cohort():
    spec = SyntheticSpec(
        (ClassRecipe("A", 20, 1.0, 0.3), ClassRecipe("B", 35, 1.0, 0.3)),
        subjects_per_class=3, timepoints=110, rois_per_network=5,
    )
    return generate_synthetic_cohort(spec, 2024)


def random_diagram(rng, size, scale=1.0):
    births = rng.uniform(0, scale, size)
    return np.column_stack([births, births + rng.uniform(0.01, scale, size)])


# (criterion, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
