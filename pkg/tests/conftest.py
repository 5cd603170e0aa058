import itertools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from parmosense.runtime import Engine


@pytest.fixture
def engine(tmp_path):
    counter = itertools.count(1)
    return Engine(
        tmp_path / "engine",
        clock_ms=lambda: 1_767_225_600_000,
        token_factory=lambda: f"tok{next(counter)}",
    )
