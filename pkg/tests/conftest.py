import numpy as np
import pytest

from twpakit import cellmodel


@pytest.fixture(scope="session")
def fitted_a():
    """JTWPA-A fitted parameters (the reproduction defaults)."""
    return cellmodel.get_preset("jtwpa-a").fitted


@pytest.fixture(scope="session")
def design_a():
    return cellmodel.get_preset("jtwpa-a").design


@pytest.fixture(scope="session")
def fitted_b():
    return cellmodel.get_preset("jtwpa-b").fitted


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)
