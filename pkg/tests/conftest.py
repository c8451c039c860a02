import pathlib

import pytest

from evspin.config import RunConfig
from evspin.harness import GtInterpolator, cmd_simulate

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO_ROOT / "configs"


@pytest.fixture(scope="session")
def orbit_config() -> RunConfig:
    return RunConfig.from_file(CONFIG_DIR / "orbit.json")


@pytest.fixture(scope="session")
def background_config() -> RunConfig:
    return RunConfig.from_file(CONFIG_DIR / "background.json")


@pytest.fixture(scope="session")
def orbit_run(orbit_config, tmp_path_factory):
    """Simulated standard scenario, shared across the whole session."""
    out_dir = tmp_path_factory.mktemp("orbit")
    return cmd_simulate(orbit_config, out_dir)


@pytest.fixture(scope="session")
def background_run(background_config, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("background")
    return cmd_simulate(background_config, out_dir)


@pytest.fixture(scope="session")
def orbit_gt(orbit_run) -> GtInterpolator:
    return GtInterpolator.from_samples(orbit_run.result.ground_truth)


@pytest.fixture(scope="session")
def background_gt(background_run) -> GtInterpolator:
    return GtInterpolator.from_samples(background_run.result.ground_truth)
