import numpy as np
import pytest

from schemelab.schemes import (
    AtomicSignedMeasure,
    CutoffScheme,
    make_function,
    make_scheme,
)


@pytest.fixture
def forward():
    return make_scheme("forward_difference")


@pytest.fixture
def backward():
    return make_scheme("backward_difference")


@pytest.fixture
def central():
    return make_scheme("central_difference")


@pytest.fixture
def quadratic_f_scheme():
    # f(x) = 1 + x^2 grows, so c_f = 0.5 is admissible
    return CutoffScheme(
        f=make_function("one_plus_sq"),
        mu=AtomicSignedMeasure([(1.0, 1.0), (0.0, -1.0)]),
        h=make_function("one"),
        c_f=0.5,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
