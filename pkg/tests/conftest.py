import numpy as np
import pytest

from ldpcboost import load_code


@pytest.fixture(scope="session")
def wimax():
    return load_code("wimax_576_r34.bm")


@pytest.fixture(scope="session")
def wifi():
    return load_code("wifi_648_r56.bm")


@pytest.fixture(scope="session")
def toy():
    """Tiny 2x4 protograph with z=3: n=12, m=6, 18 edges."""
    return load_code("toy_2x4_z3.bm")


@pytest.fixture(scope="session")
def qc42():
    """(3,6)-regular n=42 code used for fast end-to-end runs."""
    return load_code("qc_42_r12.bm")


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
