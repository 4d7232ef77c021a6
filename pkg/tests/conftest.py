import numpy as np
import pytest

from algebroid_hj.algebroid import AlgebroidSpec


def tangent(m: int) -> AlgebroidSpec:
    return AlgebroidSpec.build([["1" if i == a else "0" for i in range(m)] for a in range(m)], name=f"T R^{m}")


def so3() -> AlgebroidSpec:
    return AlgebroidSpec.build([], {(0, 1): [0, 0, 1], (1, 2): [1, 0, 0], (0, 2): [0, -1, 0]}, rank=3, name="so3")


def heisenberg() -> AlgebroidSpec:
    return AlgebroidSpec.build([], {(0, 1): [0, 0, 1]}, rank=3, name="heisenberg")


def aff1() -> AlgebroidSpec:
    """Action of x -> a x + b on R."""
    return AlgebroidSpec.build([["1"], ["x1"]], {(0, 1): [1, 0]}, name="aff1")


def sl2_on_line() -> AlgebroidSpec:
    """Action algebroid of sl(2) by the vector fields d/dx, x d/dx, x^2 d/dx."""
    return AlgebroidSpec.build([["1"], ["x1"], ["x1^2"]], {(0, 1): [1, 0, 0], (0, 2): [0, 2, 0], (1, 2): [0, 0, 1]},
                               name="sl2")


def rescaled_r2() -> AlgebroidSpec:
    """T R^2 in the frame d/dx1, (1 + x1^2) d/dx2: x-dependent structure functions."""
    return AlgebroidSpec.build([["1", "0"], ["0", "1 + x1^2"]], {(0, 1): ["0", "2*x1 / (1 + x1^2)"]}, name="rescaled")


def corrupted_heisenberg() -> AlgebroidSpec:
    return AlgebroidSpec.build([["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]], {(0, 1): [0, 0, 1]}, name="bad")


ALGEBROIDS = {
    "tangent1": lambda: tangent(1),
    "tangent2": lambda: tangent(2),
    "so3": so3,
    "heisenberg": heisenberg,
    "aff1": aff1,
    "sl2": sl2_on_line,
    "rescaled_r2": rescaled_r2,
}


@pytest.fixture(params=sorted(ALGEBROIDS))
def algebroid(request) -> AlgebroidSpec:
    return ALGEBROIDS[request.param]()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def base_samples(A: AlgebroidSpec, count: int, rng, lo=-1.0, hi=1.0) -> np.ndarray:
    return rng.uniform(lo, hi, size=(count, A.m))
