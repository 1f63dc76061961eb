import json
from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


def angle_between(u, v):
    """Angle between the lines spanned by ``u`` and ``v`` (sign-insensitive).

    Uses atan2 of the rejection and projection lengths; arccos of the cosine
    loses half the digits near zero.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    c = u @ v
    return float(np.arctan2(np.linalg.norm(u - c * v), abs(c)))


@pytest.fixture(scope="session")
def mb_equilibria():
    """Newton-polished planar Müller-Brown equilibria (see fixtures/make_muller_brown_equilibria.py)."""
    return json.loads((FIXTURES / "muller_brown_equilibria.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def mb_points(mb_equilibria):
    return [np.array(e["point"]) for e in mb_equilibria]


ACCEPTANCE = {}


def record_acceptance(number, name, ok, detail):
    ACCEPTANCE[number] = (name, ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {number}: {name}: {detail}")
