import math

import numpy as np
import pytest
from hypothesis import settings

from bloch_hs.fem import assemble, default_space, make_space, PERIODIC
from bloch_hs.geometry import CoefficientField, DiskInclusion, LaminateCell, PeriodicSquare
from bloch_hs.mesh import generate_cell_mesh

settings.register_profile("default", max_examples=30, deadline=None)
settings.load_profile("default")

R_HALF = math.sqrt(0.5)


def _forms(geometry, h, alpha=1.0, beta=2.0, space=None):
    field = CoefficientField.two_phase(geometry, alpha, beta)
    mesh = generate_cell_mesh(geometry, h)
    return assemble(field, mesh, space(mesh) if space else default_space(geometry, mesh))


@pytest.fixture(scope="session")
def disk_forms():
    return _forms(DiskInclusion(R_HALF), 0.05)


@pytest.fixture(scope="session")
def laminate_forms():
    return _forms(LaminateCell(0.5, 1), 0.1)


@pytest.fixture(scope="session")
def homogeneous_disk_forms():
    return _forms(DiskInclusion(R_HALF), 0.08, alpha=2.0, beta=2.0)


@pytest.fixture(scope="session")
def homogeneous_periodic_forms():
    geom = PeriodicSquare("disk", 0.3)
    return _forms(geom, 0.08, alpha=1.5, beta=1.5, space=lambda m: make_space(m, PERIODIC))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
