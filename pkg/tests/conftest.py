import os
import sys

import numpy as np
import pytest

# Zorg dat de main map in sys.path staat
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from dictionary import build_dictionary  # noqa: E402
from kernel_geometry import model_for  # noqa: E402
from measure_model import DiscreteMeasure  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte-Carlo- en acceptatietests op volle schaal")


@pytest.fixture(scope="session")
def gauss_dict():
    # σ = 0.03, rand op 6.7σ van de samplegrens; diameter ≈ 14.1
    return build_dictionary({
        "kind": "gaussian_location", "T": 128, "domain": [0.2, 0.8],
        "params": {"sigma": 0.03, "t_range": [0.0, 1.0]},
    })


@pytest.fixture(scope="session")
def gauss_model(gauss_dict):
    return model_for(gauss_dict)


@pytest.fixture(scope="session")
def fourier_dict():
    return build_dictionary({"kind": "fourier_lowpass", "T": 21, "domain": [0.0, 1.0], "params": {"fc": 10}})


@pytest.fixture(scope="session")
def expo_dict():
    return build_dictionary({
        "kind": "exponential_decay", "T": 64, "domain": [0.5, 3.0], "params": {"t_range": [0.0, 5.0]},
    })


@pytest.fixture
def measure4():
    return DiscreteMeasure.uniform(4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_config(**overrides):
    """Kleine gaussische experimentconfig als dict; secties worden per sleutel overschreven."""
    cfg = {
        "dictionary": {"kind": "gaussian_location", "T": 128, "domain": [0.2, 0.8],
                       "params": {"sigma": 0.03}},
        "limit": {"kind": "gaussian"},
        "measure": {"n": 2},
        "truth": {"s": 1},
        "noise": {"sigma": 0.0, "delta_T": 1.0},
        "solver": {"K_max": 3, "max_outer_iters": 8},
        "certificate": {"r": 0.5, "restarts": 8},
        "study": {"p": 2, "tau": 100, "kappa_constant": 1.0, "seed": 3},
    }
    for section, values in overrides.items():
        cfg.setdefault(section, {}).update(values)
    return cfg


@pytest.fixture(params=["gauss_dict", "fourier_dict", "expo_dict"])
def any_dict(request):
    return request.getfixturevalue(request.param)
