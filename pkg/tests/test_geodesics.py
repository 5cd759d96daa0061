import numpy as np
import pytest

from wardrobe.geodesics import dijkstra_distance, geodesic_distance
from wardrobe.mesh import concatenate
from wardrobe.primitives import grid_patch, icosphere


def test_all_sources_zero():
    mesh = icosphere(1)
    d = geodesic_distance(mesh, np.arange(mesh.n_vertices))
    assert np.array_equal(d, np.zeros(mesh.n_vertices))


def test_zero_on_sources_nonnegative():
    mesh = icosphere(2)
    d = geodesic_distance(mesh, [0, 5])
    assert d[0] == 0.0 and d[5] == 0.0
    assert d.min() >= 0.0
    assert np.isfinite(d).all()


def test_sphere_antipode():
    # pole-to-antipode geodesic on the unit sphere has length pi
    mesh = icosphere(4)
    top = int(np.argmax(mesh.vertices[:, 1]))
    bottom = int(np.argmin(mesh.vertices[:, 1]))
    d = geodesic_distance(mesh, [top])
    assert d[bottom] == pytest.approx(np.pi, rel=0.05)


def test_heat_below_dijkstra_plus_slack():
    mesh = icosphere(3)
    src = [0]
    heat = geodesic_distance(mesh, src)
    graph = dijkstra_distance(mesh, src)
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    diameter = np.linalg.norm(hi - lo)
    assert np.all(heat <= graph + 0.1 * diameter)


def test_planar_patch_accuracy():
    # on a flat grid geodesic distance is Euclidean
    mesh = grid_patch(20, 20)
    d = geodesic_distance(mesh, [0])
    truth = np.linalg.norm(mesh.vertices - mesh.vertices[0], axis=1)
    err = np.abs(d - truth)
    assert err.max() < 0.08 * truth.max()


def test_source_swap_triangle_inequality():
    # convex fixture: d(a->b) roughly equals d(b->a)
    mesh = icosphere(3)
    a, b = 0, mesh.n_vertices // 2
    d_ab = geodesic_distance(mesh, [a])[b]
    d_ba = geodesic_distance(mesh, [b])[a]
    assert d_ab == pytest.approx(d_ba, rel=0.02)


def test_disconnected_component_inf():
    a = icosphere(1)
    b = icosphere(1)
    b = b.with_vertices(b.vertices + np.array([5.0, 0.0, 0.0]))
    both = concatenate([a, b])
    d = geodesic_distance(both, [0])
    assert np.isfinite(d[:a.n_vertices]).all()
    assert np.isinf(d[a.n_vertices:]).all()


def test_empty_sources_rejected():
    with pytest.raises(ValueError, match="empty"):
        geodesic_distance(icosphere(1), [])
