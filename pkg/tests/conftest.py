import json
from importlib import resources

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from smallinc.greens import BoundaryQuadrature
from smallinc.model import DomainGeometry, Inclusion, Medium, Scene, scene_from_dict
from smallinc.probes import build_probe_operator

settings.register_profile(
    "default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def demo_dict():
    return json.loads(resources.files("smallinc").joinpath("data/demo_scene.json").read_text())


@pytest.fixture(scope="session")
def demo_scene(demo_dict):
    return scene_from_dict(demo_dict)


@pytest.fixture(scope="session")
def half_operator(demo_scene):
    return build_probe_operator(demo_scene.geometry, demo_scene.control_radius, demo_scene.k)


@pytest.fixture(scope="session")
def full_operator():
    return build_probe_operator(DomainGeometry.full(), 0.75, 4.0)


@pytest.fixture(scope="session")
def quad256():
    return BoundaryQuadrature.on_circle(256)


def single_disk_scene(k=4.0, center=(0.3, 0.1), scale=0.03, mu=2.0, eps=3.0, geometry=None):
    geometry = DomainGeometry.full() if geometry is None else geometry
    return Scene(Medium.from_wavenumber(k), geometry, (Inclusion(center, scale, mu, eps),), 0.5)


def rel(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))
