import pytest

from dalif.network import reference_network


@pytest.fixture
def desk_net():
    return reference_network(seed=7, T=4)
