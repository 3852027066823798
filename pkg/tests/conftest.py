import numpy as np
import pytest

from models.geometry import IncidentWave, TruncatedDomain, build_profile, samples_for_spacing
from models.mesh import generate_mesh


def make_domain(spec="flat(0)", R=1.5, h=0.3, two_sided=False, **kwargs):
    profile = build_profile(spec, n_samples=samples_for_spacing(h), **kwargs)
    return TruncatedDomain(profile, R, "two-sided" if two_sided else "one-sided")


def make_mesh(spec="flat(0)", R=1.5, h=0.3, two_sided=False, **kwargs):
    return generate_mesh(make_domain(spec, R, h, two_sided, **kwargs), h)


@pytest.fixture
def wave():
    # clear of Wood anomalies
    return IncidentWave.from_degrees(1.5, 20.0)


@pytest.fixture
def normal_wave():
    return IncidentWave.from_degrees(1.5, 0.0)


@pytest.fixture(scope="session")
def flat_mesh():
    return make_mesh("flat(0)", R=1.5, h=0.3)


@pytest.fixture(scope="session")
def sine_mesh():
    return make_mesh("sine(0.3)", R=1.5, h=0.3)


@pytest.fixture(scope="session")
def two_sided_mesh():
    return make_mesh("flat(0)", R=2.0, h=0.3, two_sided=True)


@pytest.fixture
def rng():
    return np.random.default_rng(2718)
