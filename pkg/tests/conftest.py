import logging

import numpy as np
import pytest

from sloshfree.kinematics import load_model, panda

PLANAR_YAML = """
name: planar
convention: standard_dh
joints:
  - {a: 1.0, d: 0.0, alpha: 0.0}
limits:
  q_min: [-3.0]
  q_max: [3.0]
  qd_min: [-2.0]
  qd_max: [2.0]
  qdd_min: [-10.0]
  qdd_max: [10.0]
  qddd_min: [-1000.0]
  qddd_max: [1000.0]
"""


@pytest.fixture(scope="session")
def panda_model():
    return panda()


@pytest.fixture(scope="session")
def planar_model():
    return load_model(PLANAR_YAML)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_solver_logs():
    logging.getLogger("sloshfree").setLevel(logging.CRITICAL)
    yield
