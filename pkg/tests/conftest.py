import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA = Path(__file__).resolve().parents[1] / "src" / "momentgmp" / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def example1_path():
    return DATA / "example1.json"


@pytest.fixture(scope="session")
def example2_path():
    return DATA / "example2.json"


@pytest.fixture(scope="session")
def printed_atoms():
    """Atoms as printed for the two worked examples, in original coordinates."""
    import json
    from momentgmp.extract import AtomSet

    with open(Path(__file__).parent / "data" / "printed_atoms.json") as fh:
        raw = json.load(fh)
    e1, e2 = raw["example1"], raw["example2"]
    return {
        "example1": AtomSet(e1["weights"], np.array(e1["points_rescaled"]) * e1["scale"]),
        "example2": AtomSet(e2["weights"], e2["points"]),
    }


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
