import numpy as np
import pytest

from panolayout.synth import cuboid_layout


@pytest.fixture(scope="session")
def cuboid():
    """4 m x 6 m x 3 m room, camera 1.6 m above the floor at the origin."""
    return cuboid_layout(4.0, 6.0, 3.0, 1.6)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def announce(capsys):
    """Print a visible PASS/FAIL line for an acceptance criterion."""

    def _announce(ok: bool, label: str, detail: str = ""):
        tail = f"  ({detail})" if detail else ""
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}{tail}")

    return _announce
