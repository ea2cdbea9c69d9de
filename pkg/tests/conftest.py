import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ddconsensus import collect_data, fixtures


@pytest.fixture
def sec6_plant():
    return fixtures.sec6_plant()


@pytest.fixture
def sec6_graph():
    return fixtures.sec6_graph()


@pytest.fixture
def sec6_record(sec6_plant):
    return collect_data(sec6_plant, 15, np.random.default_rng([7, 101]))


def collect_clean(plant, horizon, seed):
    return collect_data(plant, horizon, np.random.default_rng([seed, 42]))
