import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def configs_dir() -> Path:
    return ROOT / "configs"


@pytest.fixture
def golden_dir() -> Path:
    return Path(__file__).parent / "golden"
