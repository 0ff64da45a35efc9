from pathlib import Path
import sys

import pytest


PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from geometry import DiskDomain, StripDomain  # noqa: E402


@pytest.fixture
def d1():
    return DiskDomain(center_x=0.3, center_y=-0.25, radius=1.0)


@pytest.fixture
def d2():
    return StripDomain(top=0.6, bottom=-0.4)
