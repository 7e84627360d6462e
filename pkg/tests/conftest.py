import numpy as np
import pytest

from vmsim.core import SimConfig
from vmsim import engine, manipulator as man, vehicle as veh


@pytest.fixture(scope="session")
def cfg() -> SimConfig:
    return SimConfig()


@pytest.fixture(scope="session")
def runtime(cfg) -> engine.EngineRuntime:
    return engine.EngineRuntime(cfg)


@pytest.fixture(scope="session")
def pm(cfg):
    return man.pack_params(cfg.manipulator_params)


@pytest.fixture(scope="session")
def pv(cfg):
    return veh.pack_params(cfg.vehicle_params, cfg.gravity)


def random_joint_poses(cfg, n, rng, margin=0.05):
    lo = np.asarray(cfg.manipulator_params.joint_lower) + margin
    hi = np.asarray(cfg.manipulator_params.joint_upper) - margin
    return lo + (hi - lo) * rng.random((n, 4))
