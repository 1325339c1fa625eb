import math

import numpy as np
import pytest

from bloch_hs.errors import GeometryError
from bloch_hs.geometry import CORE, ConfocalEllipse, DiskInclusion, LaminateCell, PeriodicSquare
from bloch_hs.mesh import generate_cell_mesh, read_mesh, write_mesh

GEOMETRIES = [
    (DiskInclusion(math.sqrt(0.5)), 0.05, math.pi),
    (LaminateCell(0.5, 1), 0.1, 4.0),
    (LaminateCell(0.3, 2), 0.05, 4.0),
    (PeriodicSquare("disk", 0.3), 0.05, 1.0),
    (PeriodicSquare("slab", 0.2), 0.05, 1.0),
    (ConfocalEllipse(0.3, 1.0, (0.0, 0.4)), 0.05, math.pi * math.sqrt(1.4)),
]


@pytest.mark.parametrize("geom,h,area", GEOMETRIES, ids=lambda v: getattr(v, "kind", None))
def test_mesh_covers_the_cell(geom, h, area):
    mesh = generate_cell_mesh(geom, h)
    assert np.all(mesh.signed_areas() > 0)
    # inscribed polygons lose O(h^2) of a curved boundary
    assert mesh.area == pytest.approx(area, rel=2 * h ** 2)
    assert mesh.max_diameter <= 2.0 * h


@pytest.mark.parametrize("geom,h,area", GEOMETRIES, ids=lambda v: getattr(v, "kind", None))
def test_core_area_matches_theta(geom, h, area):
    mesh = generate_cell_mesh(geom, h)
    core = np.sum(mesh.signed_areas()[mesh.regions == CORE])
    assert core / mesh.area == pytest.approx(geom.theta, rel=3 * h ** 2)


def test_regions_conform_to_interface():
    geom = DiskInclusion(0.6)
    mesh = generate_cell_mesh(geom, 0.05)
    c = mesh.centroids()
    assert np.array_equal(mesh.regions == CORE, np.hypot(c[:, 0], c[:, 1]) < 0.6)


def test_each_edge_shared_by_at_most_two_triangles():
    mesh = generate_cell_mesh(DiskInclusion(0.5), 0.08)
    t = mesh.triangles
    e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    assert counts.max() == 2
    boundary = np.sum(counts == 1)
    assert boundary == len(mesh.boundary_edges())


def test_boundary_vertices_lie_on_the_unit_circle():
    mesh = generate_cell_mesh(DiskInclusion(0.5), 0.05)
    b = mesh.boundary
    assert np.allclose(np.hypot(*mesh.vertices[b].T), 1.0)


def test_mesh_round_trip(tmp_path):
    mesh = generate_cell_mesh(LaminateCell(0.5, 1), 0.2)
    write_mesh(mesh, tmp_path / "m.txt")
    back = read_mesh(tmp_path / "m.txt")
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.regions, mesh.regions)
    assert np.array_equal(back.markers, mesh.markers)


def test_unresolved_mesh_rejected():
    with pytest.raises(GeometryError):
        generate_cell_mesh(DiskInclusion(0.95), 0.1)
    with pytest.raises(GeometryError):
        generate_cell_mesh(DiskInclusion(0.5), 0.0)


def test_mesh_is_deterministic():
    a = generate_cell_mesh(ConfocalEllipse(0.3, 1.0, (0.0, 0.4)), 0.05)
    b = generate_cell_mesh(ConfocalEllipse(0.3, 1.0, (0.0, 0.4)), 0.05)
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.triangles, b.triangles)
