import numpy as np
import pytest

from cmcflow.domain import make_domain
from cmcflow.flow import solve_along
from cmcflow.mesh import triangulate


def cap(x, y, a=2.0, R=1.0):
    """Spherical cap of radius ``a`` over the disk of radius ``R``; mean curvature -1/a."""
    return np.sqrt(a * a - x * x - y * y) - np.sqrt(a * a - R * R)


@pytest.fixture(scope="session")
def disk():
    return triangulate(make_domain("disk:1"), 0.1)


@pytest.fixture(scope="session")
def disk_fine():
    return triangulate(make_domain("disk:1"), 0.05)


@pytest.fixture(scope="session")
def ellipse():
    return triangulate(make_domain("ellipse:2,1"), 0.1)


@pytest.fixture(scope="session")
def cap_state(disk_fine):
    return solve_along(disk_fine, -0.5)


@pytest.fixture(scope="session")
def cap_state_coarse(disk):
    return solve_along(disk, -0.5)


@pytest.fixture(scope="session")
def ellipse_state(ellipse):
    return solve_along(ellipse, -0.3)
