"""
conftest.py
Shared fixtures: the cached example problems and a few small hand-built ones.
"""

import math

import numpy as np
import pytest

from mis_balance.model import Problem, Technique, example_problem, two_identical_techniques_problem
from mis_balance.quadrature import Interval


@pytest.fixture(scope="session")
def ex1():
    return example_problem(1)


@pytest.fixture(scope="session")
def ex2():
    return example_problem(2)


@pytest.fixture(scope="session")
def ex3():
    return example_problem(3)


@pytest.fixture(scope="session")
def ex4():
    return example_problem(4)


@pytest.fixture(scope="session")
def ex5():
    return example_problem(5)


@pytest.fixture(scope="session")
def identical():
    return two_identical_techniques_problem()


@pytest.fixture(scope="session")
def single():
    """e^x on [0, 1] sampled from (1 + x)/1.5 alone."""
    technique = two_identical_techniques_problem().techniques[0]
    return Problem(np.exp, Interval(0.0, 1.0), (technique,), math.e - 1.0, "single technique")


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def random_alpha(rng, n):
    w = rng.uniform(0.05, 1.0, size=n)
    return tuple((w / w.sum()).tolist())


def uniform_technique(domain):
    width = domain.hi - domain.lo

    def pdf(x):
        return np.full_like(np.asarray(x, dtype=float), 1.0 / width)

    def sampler(u):
        return domain.lo + width * np.asarray(u, dtype=float)

    return Technique(pdf, sampler, 1.0, "uniform")
