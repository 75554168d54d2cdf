import numpy as np
import pytest

from relayharq.channel import RelayTopology, TopologyMoments


@pytest.fixture(scope="session")
def topo15():
    return RelayTopology.from_db(15.0, d=0.5, nu=4.0)


@pytest.fixture(scope="session")
def topo5():
    return RelayTopology.from_db(5.0, d=0.5, nu=4.0)


@pytest.fixture(scope="session")
def moments15(topo15):
    return TopologyMoments.from_topology(topo15)


@pytest.fixture(scope="session")
def moments5(topo5):
    return TopologyMoments.from_topology(topo5)


@pytest.fixture
def announce(capsys):
    """Print a line that stays visible despite pytest capture."""

    def _announce(line):
        with capsys.disabled():
            print(line, flush=True)

    return _announce


def rng(seed):
    return np.random.default_rng(seed)
