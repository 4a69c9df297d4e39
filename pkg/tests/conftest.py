import numpy as np
import pytest

from gausspaths import LinearSdeModel, ObservationModel, make_rng


def stable_2x2(seed: int) -> LinearSdeModel:
    """Random 2x2 model whose drift has negative-definite symmetric part."""
    rng = make_rng(seed)
    n = rng.standard_normal((2, 2))
    shift = np.linalg.eigvalsh(0.5 * (n + n.T)).max() + 0.3
    a = n - shift * np.eye(2)
    b = rng.standard_normal((2, 2)) + 1.5 * np.eye(2)
    return LinearSdeModel(a, b)


@pytest.fixture
def bm1():
    return LinearSdeModel([[0.0]], [[1.0]])


@pytest.fixture
def bm2():
    return LinearSdeModel(np.zeros((2, 2)), np.eye(2))


@pytest.fixture
def ou():
    # stationary variance 1, covariance e^{-|u-v|} when started at N(0, 1)
    return LinearSdeModel([[-1.0]], [[np.sqrt(2.0)]])


@pytest.fixture
def obs_scalar():
    # the standard scalar observation setup used across the cross-checks
    return ObservationModel(a11=[[0.0]], a21=[[1.0]], b11=[[1.0]], b22=[[1.0]],
                            lam=[[1.0]], x_minus=[0.5])
