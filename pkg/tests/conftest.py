import pytest

from atkse.gcn import TrainConfig, train_surrogate
from atkse.graph import generate_sbm


@pytest.fixture(scope="session")
def toy_graph():
    # Two 2-cliques with strongly separable features; 1 train node per class.
    return generate_sbm(4, 2, 1.0, 0.0, 4, 3.0, seed=1)


@pytest.fixture(scope="session")
def sbm20():
    return generate_sbm(20, 2, 0.3, 0.05, 6, 0.8, seed=2)


@pytest.fixture(scope="session")
def sbm30():
    return generate_sbm(30, 2, 0.2, 0.02, 10, 0.5, seed=0)


@pytest.fixture(scope="session")
def sbm40():
    return generate_sbm(40, 2, 0.2, 0.02, 8, 0.8, seed=0)


@pytest.fixture(scope="session")
def sbm100():
    return generate_sbm(100, 2, 0.1, 0.01, 20, 0.5, seed=0)


@pytest.fixture(scope="session")
def sbm20_identity_params(sbm20):
    return train_surrogate(sbm20, TrainConfig(activation="identity", seed=0))


@pytest.fixture(scope="session")
def sbm20_relu_params(sbm20):
    return train_surrogate(sbm20, TrainConfig(seed=0))
