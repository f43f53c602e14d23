from pathlib import Path

import numpy as np
import pytest

REPO_ROOT = Path(__file__).resolve().parents[2]


@pytest.fixture
def example_dir():
    return REPO_ROOT / "example"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def scheduler_script_text(example_dir):
    return (example_dir / "scheduler.test.yaml").read_text()


@pytest.fixture
def two_actor_config_text(example_dir):
    return (example_dir / "two_actors.config.yaml").read_text()
