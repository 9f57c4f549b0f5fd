import pytest

from dwe.synthetic import make_synthetic_dataset


@pytest.fixture(scope="session")
def synth_data(tmp_path_factory):
    return make_synthetic_dataset(tmp_path_factory.mktemp("synth"), seed=0)
