from dataclasses import replace

import pytest

from spsa_dist.config import bundled_config_text, parse_config
from spsa_dist.experiments import run_experiment


@pytest.fixture(scope="session")
def quadratic_config():
    return parse_config(bundled_config_text("quadratic"), source="quadratic")


@pytest.fixture(scope="session")
def quartic_config():
    return parse_config(bundled_config_text("quartic"), source="quartic")


@pytest.fixture(scope="session")
def quadratic_spec(quadratic_config):
    return quadratic_config.experiment


@pytest.fixture(scope="session")
def quartic_spec(quartic_config):
    return quartic_config.experiment


# Heavy shared runs, instantiated lazily so unit-test sessions stay fast.


@pytest.fixture(scope="session")
def table2_small_k_result(quadratic_spec):
    return run_experiment(replace(quadratic_spec, k_values=(1, 5, 10)))


@pytest.fixture(scope="session")
def table2_k1000_result(quadratic_spec):
    return run_experiment(replace(quadratic_spec, k_values=(1000,), n_reps=10_000))


@pytest.fixture(scope="session")
def table3_result(quartic_spec):
    return run_experiment(quartic_spec)
