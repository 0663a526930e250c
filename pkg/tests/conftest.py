import pytest

from dpdropout.data import load_bundled_digits


@pytest.fixture(scope="session")
def digits():
    return load_bundled_digits()
