import pytest

from hashtrace.dataset import gen_synthetic_dataset


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """8 groups x 3 fakes of short 48px videos; shared across test modules."""
    out = tmp_path_factory.mktemp("ds8")
    return gen_synthetic_dataset(8, 3, 10, 48, seed=11, out=out), out
