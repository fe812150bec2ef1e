import math

import pytest

from satlink.beam_statistics import BeamParams, TurbulenceSpec
from satlink.turbulence_profiles import AfglWk, Exponential


@pytest.fixture(scope="session")
def table_beam():
    return BeamParams(W0=0.02, F=1e5, wavelength=840e-9, aperture_radius_a=0.5)


@pytest.fixture(scope="session")
def table_turbulence():
    return TurbulenceSpec(AfglWk(Cn0_sq_at_h0=1e-17), rho0_zenith=0.13)


@pytest.fixture(scope="session")
def exponential_turbulence():
    return TurbulenceSpec(Exponential(1e-17, 500.0))


def deg(x):
    return math.radians(x)
