import numpy as np
import pytest

from wardrobe.body import make_synthetic_body
from wardrobe.geodesics import geodesic_distance
from wardrobe.mesh import TriMesh
from wardrobe.primitives import grid_patch, icosphere
from wardrobe.segmentation import (MrfProblem, build_prior, solve_mrf,
                                   transfer_labels)
from wardrobe.synthesis import garment_region


# ----------------------------------------------------------------------
# priors


def test_prior_zero_on_boundary():
    mesh = icosphere(2)
    region = np.nonzero(mesh.vertices[:, 1] > 0.2)[0]
    prior = build_prior(mesh, region, kappa=2.0)
    assert np.all(prior.cost_in[prior.boundary] == 0.0)
    assert np.all(prior.cost_out[prior.boundary] == 0.0)
    assert prior.cost_in.min() >= 0.0
    assert prior.cost_out.min() >= 0.0


def test_prior_zero_inside_for_out_cost():
    mesh = icosphere(2)
    region = np.nonzero(mesh.vertices[:, 1] > 0.0)[0]
    prior = build_prior(mesh, region)
    assert np.all(prior.cost_out[prior.region_mask] == 0.0)
    assert np.all(prior.cost_in[~prior.region_mask] == 0.0)


def test_prior_kappa_zero_all_zeros():
    mesh = icosphere(1)
    region = np.nonzero(mesh.vertices[:, 1] > 0.0)[0]
    prior = build_prior(mesh, region, kappa=0.0)
    assert np.all(prior.cost_in == 0.0)
    assert np.all(prior.cost_out == 0.0)


def test_prior_monotone_with_geodesic_depth():
    # costs match kappa * geodesic distance from the boundary everywhere
    mesh = icosphere(3)
    region = np.nonzero(mesh.vertices[:, 1] > 0.3)[0]
    kappa = 1.7
    prior = build_prior(mesh, region, kappa=kappa)
    dist = geodesic_distance(mesh, prior.boundary)
    outside = ~prior.region_mask
    assert np.allclose(prior.cost_out[outside], kappa * dist[outside])
    assert np.allclose(prior.cost_in[prior.region_mask],
                       kappa * dist[prior.region_mask])


def test_prior_whole_mesh_rejected():
    mesh = icosphere(1)
    with pytest.raises(ValueError, match="boundary"):
        build_prior(mesh, np.arange(mesh.n_vertices))


def test_prior_regions_on_body():
    model = make_synthetic_body(seed=0, n_betas=4)
    region = np.nonzero(garment_region(model, "t-shirt"))[0]
    prior = build_prior(model.template, region)
    assert prior.region_mask.sum() == len(region)
    assert prior.cost_out[~prior.region_mask].max() > 0


# ----------------------------------------------------------------------
# MRF


from helpers import (MRF_FIXTURES, exhaustive_mrf_minimum as
                     exhaustive_minimum, tiny_mrf_problem as _tiny_problem)


@pytest.mark.parametrize("fixture", MRF_FIXTURES)
def test_icm_matches_exhaustive(fixture):
    problem = _tiny_problem(**fixture)
    labels, energy = solve_mrf(problem)
    oracle_labels, oracle_energy = exhaustive_minimum(problem)
    assert energy == pytest.approx(oracle_energy, abs=1e-12)
    assert problem.energy(labels) == pytest.approx(oracle_energy, abs=1e-12)


def test_icm_quality_bound_on_random_problems():
    # on arbitrary draws ICM stays a strong local method: it reaches the
    # exhaustive minimum on most problems and never loses to an init
    exact = 0
    for seed in range(30):
        problem = _tiny_problem(seed=seed)
        labels, energy = solve_mrf(problem)
        _, oracle_energy = exhaustive_minimum(problem)
        assert energy >= oracle_energy - 1e-12
        if energy <= oracle_energy + 1e-12:
            exact += 1
    assert exact >= 21  # >= 70 % of draws solved exactly


def test_no_smoothness_no_prior_is_unary_argmin():
    rng = np.random.default_rng(42)
    mesh = icosphere(1)
    unary = rng.uniform(0, 1, (mesh.n_vertices, 3))
    problem = MrfProblem(mesh, unary, lambda_prior=0.0, lambda_pair=0.0)
    labels, energy = solve_mrf(problem)
    assert np.array_equal(labels, np.argmin(unary, axis=1))
    assert energy == pytest.approx(unary.min(axis=1).sum())


def test_huge_smoothness_single_label():
    # strong Potts coupling on a connected graph collapses to one label,
    # verified against exhaustive search
    rng = np.random.default_rng(7)
    mesh = grid_patch(4, 1)   # 10 vertices
    unary = rng.uniform(0, 1, (10, 3))
    problem = MrfProblem(mesh, unary, lambda_prior=0.0, lambda_pair=50.0)
    labels, energy = solve_mrf(problem)
    oracle_labels, oracle_energy = exhaustive_minimum(problem)
    assert len(np.unique(labels)) == 1
    assert energy == pytest.approx(oracle_energy, abs=1e-12)
    # the winner is the label with smallest total unary cost
    assert labels[0] == int(np.argmin(unary.sum(axis=0)))


def test_prior_dominated_labels_follow_region():
    mesh = icosphere(2)
    region = np.nonzero(mesh.vertices[:, 1] > 0.2)[0]
    prior = build_prior(mesh, region, kappa=5.0)
    rng = np.random.default_rng(1)
    unary = rng.uniform(0, 0.01, (mesh.n_vertices, 2))
    problem = MrfProblem(mesh, unary, priors={1: prior},
                         lambda_prior=100.0, lambda_pair=0.0)
    labels, _ = solve_mrf(problem)
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    mask[region] = True
    interior = mask & (prior.cost_in > 0)
    exterior = (~mask) & (prior.cost_out > 0)
    assert np.all(labels[interior] == 1)
    assert np.all(labels[exterior] == 0)


def test_solution_energy_not_above_initializations():
    problem = _tiny_problem(seed=3)
    labels, energy = solve_mrf(problem)
    n = problem.mesh.n_vertices
    inits = [np.zeros(n, dtype=int),
             np.argmin(problem.unary, axis=1),
             np.argmin(problem.prior_cost, axis=1)]
    for init in inits:
        assert energy <= problem.energy(init) + 1e-12


# ----------------------------------------------------------------------
# label transfer


def test_transfer_identity():
    mesh = icosphere(2)
    rng = np.random.default_rng(2)
    labels = rng.integers(0, 3, mesh.n_vertices)
    out, far = transfer_labels(mesh, labels, mesh)
    assert np.array_equal(out, labels)
    assert not far.any()


def test_transfer_normal_offset():
    mesh = icosphere(3)
    rng = np.random.default_rng(3)
    labels = rng.integers(0, 3, mesh.n_vertices)
    offset = mesh.with_vertices(mesh.vertices + 0.001 * mesh.vertex_normals())
    out, far = transfer_labels(mesh, labels, offset)
    assert np.array_equal(out, labels)
    assert not far.any()


def test_transfer_far_outlier_flagged():
    mesh = icosphere(1)
    labels = np.zeros(mesh.n_vertices, dtype=int)
    labels[0] = 2
    scan = TriMesh(np.array([mesh.vertices[0] * 5.0,
                             mesh.vertices[1] * 1.01,
                             mesh.vertices[2] * 1.01]),
                   np.array([[0, 1, 2]]), validate=False)
    out, far = transfer_labels(mesh, labels, scan)
    assert out[0] == 2          # nearest label still assigned
    assert far[0]
    assert not far[1] and not far[2]


def test_transfer_empty_scan_rejected():
    mesh = icosphere(1)
    with pytest.raises(ValueError, match="empty"):
        transfer_labels(mesh, np.zeros(mesh.n_vertices, dtype=int),
                        TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int)))
