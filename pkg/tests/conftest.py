"""Shared fixtures: the two published daily-frequency parameterizations."""

import pytest

from garchhedge import Gaussian, Nig, NgarchParams

DAILY_RATE = 2.8e-5


@pytest.fixture(scope="session")
def gauss_params() -> NgarchParams:
    return NgarchParams(
        alpha0=9.941e-7, alpha1=0.041, beta1=0.917, gamma=0.863, lam=0.041, r=DAILY_RATE
    )


@pytest.fixture(scope="session")
def nig_params() -> NgarchParams:
    return NgarchParams(
        alpha0=8.665e-7, alpha1=0.047, beta1=0.909, gamma=0.860, lam=0.041, r=DAILY_RATE
    )


@pytest.fixture(scope="session")
def gauss_dist() -> Gaussian:
    return Gaussian()


@pytest.fixture(scope="session")
def nig_dist() -> Nig:
    return Nig(k=1.322, a=-0.144)
