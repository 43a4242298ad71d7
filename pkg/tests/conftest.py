import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mpg_lab.games import get_game  # noqa: E402


@pytest.fixture
def g2():
    return get_game("G2")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
