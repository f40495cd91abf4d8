import json

import pytest

from nlstools.continuation.branch import continue_branch
from nlstools.continuation.newton import seed_state
from nlstools.core.config import RunConfig, Symmetry
from nlstools.core.model import NLSModel
from nlstools.spectrum.linear import linear_basis

# Coarse box shared by the solver tests; the defocusing antisymmetric branch of the
# sigma = 1 gaussian kernel breaks its symmetry well below mu = 0.2 on it
SMALL_CONFIG = {
    "grid": {"half_width": 16.0, "spacing": 0.2},
    "continuation": {"mu_max": 0.2, "follow_daughters": False},
}


@pytest.fixture(scope="session")
def small_config():
    return RunConfig.parse_obj(SMALL_CONFIG)


@pytest.fixture(scope="session")
def small_model(small_config):
    return NLSModel.from_config(small_config)


@pytest.fixture(scope="session")
def small_basis(small_config):
    return linear_basis(small_config.build_grid(), small_config.potential)


@pytest.fixture(scope="session")
def antisymmetric_branch(small_config, small_model, small_basis):
    seed = seed_state(small_model, small_basis, Symmetry.antisymmetric, small_config.newton)
    return continue_branch(seed, small_config, small_model, basis=small_basis)


@pytest.fixture
def small_config_file(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL_CONFIG))
    return str(path)
