import numpy as np
import pytest

from wardrobe.body import make_synthetic_body
from wardrobe.mesh import TriMesh, graph_laplacian
from wardrobe.primitives import cube, grid_patch
from wardrobe.registration import (BoundaryCorrespondence, RegistrationConfig,
                                   interpenetration_energy, laplacian_init,
                                   match_boundaries, register_garment,
                                   unpose_energy)
from wardrobe.spatial import SurfaceBVH
from wardrobe.synthesis import carve_garment_template


@pytest.fixture(scope="module")
def model():
    return make_synthetic_body(seed=0, n_betas=6, n_joints=16)


@pytest.fixture(scope="module")
def tshirt(model):
    return carve_garment_template(model, "t-shirt")


# ----------------------------------------------------------------------
# match_boundaries


def test_match_identical_loops(tshirt):
    posed = tshirt.mesh.vertices
    loops = [posed[loop] for loop in tshirt.boundary_loops]
    corr = match_boundaries(tshirt, posed, loops)
    dist = np.linalg.norm(corr.scan_points - posed[corr.template_indices],
                          axis=1)
    assert dist.max() == 0.0


def test_match_translated_loop(tshirt):
    # shift below half the closest intra-loop vertex spacing keeps pairings
    posed = tshirt.mesh.vertices
    spacing = np.inf
    for loop in tshirt.boundary_loops:
        ring = posed[loop]
        d = np.linalg.norm(ring[:, None, :] - ring[None, :, :], axis=2)
        d[d == 0] = np.inf
        spacing = min(spacing, d.min())
    shift = np.array([0.0, 0.0, 0.4 * spacing])
    loops = [posed[loop] + shift for loop in tshirt.boundary_loops]
    corr = match_boundaries(tshirt, posed, loops)
    offs = corr.scan_points - posed[corr.template_indices]
    assert np.allclose(offs, shift, atol=1e-12)


def test_match_brute_force_oracle(tshirt):
    rng = np.random.default_rng(0)
    posed = tshirt.mesh.vertices
    loops = [posed[loop] + rng.normal(0, 0.02, (len(loop), 3))
             for loop in tshirt.boundary_loops]
    corr = match_boundaries(tshirt, posed, loops)
    # exhaustive nearest template-boundary vertex, loop by loop
    c = 0
    for loop, samples in zip(tshirt.boundary_loops, loops):
        for s in samples:
            d = np.linalg.norm(posed[loop] - s, axis=1)
            expect = loop[int(np.argmin(d))]
            got = corr.template_indices[c]
            assert np.linalg.norm(posed[got] - s) == pytest.approx(d.min())
            c += 1
    assert c == len(corr.scan_points)


def test_match_loop_count_mismatch(tshirt):
    with pytest.raises(ValueError, match="loop count mismatch"):
        match_boundaries(tshirt, tshirt.mesh.vertices,
                         [np.zeros((4, 3))])


# ----------------------------------------------------------------------
# laplacian_init


def test_laplacian_init_consistent_system(tshirt):
    G_init = tshirt.mesh.vertices
    L = graph_laplacian(tshirt.mesh)
    loop = tshirt.boundary_loops[0]
    corr = BoundaryCorrespondence(G_init[loop], loop, weight=5.0)
    G = laplacian_init(G_init, L, corr)
    assert np.abs(G - G_init).max() < 1e-8


def test_laplacian_init_translation(tshirt):
    rng = np.random.default_rng(1)
    G_init = tshirt.mesh.vertices
    L = graph_laplacian(tshirt.mesh)
    loop = tshirt.boundary_loops[0]
    q = G_init[loop] + rng.normal(0, 0.01, (len(loop), 3))
    corr = BoundaryCorrespondence(q, loop, weight=3.0)
    G = laplacian_init(G_init, L, corr)
    u = np.array([0.2, -0.1, 0.4])
    G_shifted = laplacian_init(G_init, L,
                               BoundaryCorrespondence(q + u, loop, weight=3.0))
    assert np.abs(G_shifted - (G + u)).max() < 1e-8


def test_laplacian_init_full_equivariance(tshirt):
    # translating / rotating both the differential-coordinate source and the
    # constraints transforms the solution the same way
    rng = np.random.default_rng(2)
    G_init = tshirt.mesh.vertices
    L = graph_laplacian(tshirt.mesh)
    loop = tshirt.boundary_loops[0]
    q = G_init[loop] + rng.normal(0, 0.01, (len(loop), 3))
    corr = BoundaryCorrespondence(q, loop, weight=3.0)
    G = laplacian_init(G_init, L, corr)

    from wardrobe.body import rodrigues
    R = rodrigues(np.array([0.4, -0.3, 0.9]))
    t = np.array([0.5, 0.25, -1.0])
    G2 = laplacian_init(G_init @ R.T + t, L,
                        BoundaryCorrespondence(q @ R.T + t, loop, weight=3.0))
    assert np.abs(G2 - (G @ R.T + t)).max() < 1e-8


def test_laplacian_init_large_weight_planar_limit():
    patch = grid_patch(8, 8)
    L = graph_laplacian(patch)
    loop = patch.boundary_loops()[0]
    rng = np.random.default_rng(3)
    q = patch.vertices[loop] + rng.normal(0, 0.05, (len(loop), 3))
    corr = BoundaryCorrespondence(q, loop, weight=1e6)
    G = laplacian_init(patch.vertices, L, corr)
    assert np.abs(G[loop] - q).max() < 1e-6


def test_laplacian_init_underconstrained(tshirt):
    with pytest.raises(ValueError):
        BoundaryCorrespondence(np.zeros((0, 3)), np.zeros(0, dtype=int))


def test_laplacian_init_smoother_than_snapping(tshirt):
    # a coherent boundary pull (ring shrunk toward its centroid) distributes
    # over the surface instead of kinking the boundary ring
    G_init = tshirt.mesh.vertices
    L = graph_laplacian(tshirt.mesh)
    loop = tshirt.boundary_loops[0]
    ring = G_init[loop]
    q = ring + 0.25 * (ring.mean(axis=0) - ring)
    corr = BoundaryCorrespondence(q, loop, weight=10.0)
    G = laplacian_init(G_init, L, corr)
    G_snap = G_init.copy()
    G_snap[loop] = q
    res_lap = np.linalg.norm(L @ (G - G_init))
    res_snap = np.linalg.norm(L @ (G_snap - G_init))
    assert res_lap <= 0.5 * res_snap


# ----------------------------------------------------------------------
# energies


def test_interp_energy_outside_zero():
    bvh = SurfaceBVH(cube())
    pts = np.array([[1.0, 0, 0], [0, 2.0, 0], [0.5, 0.5, 0.5]])
    energy, count = interpenetration_energy(pts, bvh)
    assert energy == 0.0 and count == 0


def test_interp_energy_hand_case_exact():
    # one vertex exactly 2 mm inside a face-center vertex, w = 25 -> 0.05
    body = cube(center=(0.5, 0.5, 0.5), size=1.0, face_centers=True)
    bvh = SurfaceBVH(body)
    p = np.array([[0.002, 0.5, 0.5]])
    energy, count = interpenetration_energy(p, bvh, weight=25.0)
    assert count == 1
    assert energy == 0.05


def test_interp_energy_on_surface_zero():
    body = cube(face_centers=True)
    bvh = SurfaceBVH(body)
    energy, count = interpenetration_energy(body.vertices, bvh)
    assert energy == 0.0 and count == 0


def test_unpose_energy_identical_states():
    bvh = SurfaceBVH(cube())
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1, 1, (30, 3))
    assert unpose_energy(pts, bvh, pts, bvh) == 0.0


def test_unpose_energy_rigid_invariance():
    from wardrobe.body import rodrigues
    body = cube()
    bvh = SurfaceBVH(body)
    R = rodrigues(np.array([0.2, 0.7, -0.1]))
    t = np.array([3.0, -1.0, 0.5])
    moved = TriMesh(body.vertices @ R.T + t, body.faces)
    bvh_moved = SurfaceBVH(moved)
    rng = np.random.default_rng(6)
    pts = rng.uniform(-1, 1, (30, 3))
    e = unpose_energy(pts @ R.T + t, bvh_moved, pts, bvh)
    assert e < 1e-18


def test_unpose_energy_known_distances():
    # one vertex at 1 cm now vs 2 cm unposed -> (0.01)^2 = 1e-4
    body = cube(center=(0.5, 0.5, 0.5), size=1.0, face_centers=True)
    bvh = SurfaceBVH(body)
    now = np.array([[-0.01, 0.5, 0.5]])
    unposed = np.array([[-0.02, 0.5, 0.5]])
    e = unpose_energy(now, bvh, unposed, bvh)
    assert e == pytest.approx(1e-4, rel=1e-9)


def test_unpose_energy_count_mismatch():
    bvh = SurfaceBVH(cube())
    with pytest.raises(ValueError, match="differ"):
        unpose_energy(np.zeros((3, 3)), bvh, np.zeros((4, 3)), bvh)


# ----------------------------------------------------------------------
# full registration


from helpers import registration_fixtures as fixture_registrations  # noqa: E402


def test_register_fixed_point(model, tshirt):
    name, fit, scan, labels, base_disp = fixture_registrations(model, tshirt)[0]
    result = register_garment(tshirt, model, fit, scan, labels, 1)
    assert result.diagnostics["converged"]
    assert np.abs(result.displacements - base_disp).max() < 1e-4
    assert result.diagnostics["final_interpenetration_count"] == 0


def test_register_trimmed_boundary_residual(model, tshirt):
    _, fit, scan, labels, _ = fixture_registrations(model, tshirt)[1]
    result = register_garment(tshirt, model, fit, scan, labels, 1)
    assert result.diagnostics["boundary_residual_post_init"] < 0.005
    assert result.diagnostics["final_interpenetration_count"] == 0


def test_register_energy_monotone(model, tshirt):
    for name, fit, scan, labels, _ in fixture_registrations(model, tshirt):
        result = register_garment(tshirt, model, fit, scan, labels, 1)
        totals = [h["total"] for h in result.diagnostics["history"]]
        assert all(b <= a + 1e-12 for a, b in zip(totals, totals[1:])), name


def test_register_posed_result_near_target(model, tshirt):
    _, fit, scan, labels, _ = fixture_registrations(model, tshirt)[1]
    result = register_garment(tshirt, model, fit, scan, labels, 1)
    target_sub, _ = scan.submesh(np.asarray(labels) == 1)
    d = SurfaceBVH(target_sub).distances(result.vertices)
    assert d.mean() < 0.01


def test_config_validation():
    with pytest.raises(ValueError):
        RegistrationConfig(data_weight=-1.0)
    with pytest.raises(ValueError):
        RegistrationConfig.from_mapping({"no_such_key": 1.0})
    cfg = RegistrationConfig.from_mapping({"boundary_weight": 2.5})
    assert cfg.boundary_weight == 2.5
