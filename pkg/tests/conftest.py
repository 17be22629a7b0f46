import numpy as np
import pytest

import flowlab as fl


@pytest.fixture(scope="session")
def cfg():
    return fl.FlowConfig(dt=1e-3)


@pytest.fixture(scope="session")
def unit_box():
    return fl.Box([-1.0, -1.0], [1.0, 1.0])


@pytest.fixture(scope="session")
def cloud48(unit_box):
    return fl.grid_cloud(unit_box, 48)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
