import numpy as np
import pytest

from wardrobe.body import BodyParams, make_synthetic_body, pose_points, shaped_template
from wardrobe.garment import (DressedFigure, Garment, dress,
                              garment_displacements, pose_garment,
                              transfer_texture, unpose_garment,
                              unposed_garment_shape)
from wardrobe.synthesis import carve_garment_template, instance_displacements


@pytest.fixture(scope="module")
def model():
    return make_synthetic_body(seed=0, n_betas=6, n_joints=16)


@pytest.fixture(scope="module")
def tshirt(model):
    return carve_garment_template(model, "t-shirt")


def rand_params(model, rng, angle=0.5):
    return BodyParams(rng.standard_normal(model.n_betas) * 0.5,
                      rng.uniform(-angle, angle, (model.n_joints, 3)),
                      rng.standard_normal(3) * 0.05)


def test_displacements_zero_on_body(model, tshirt):
    body = shaped_template(model, np.zeros(model.n_betas))
    verts = body[tshirt.indicator]
    D = garment_displacements(verts, model, np.zeros(model.n_betas),
                              tshirt.indicator)
    assert np.abs(D).max() == 0.0


def test_displacements_constant_normal_offset(model, tshirt):
    # vertices pushed 1 cm along body normals yield ~1 cm rows
    D = instance_displacements(model, tshirt, np.zeros(model.n_betas),
                               base_offset=0.01)
    norms = np.linalg.norm(D, axis=1)
    assert np.allclose(norms, 0.01, atol=1e-9)


def test_displacement_shape_inverse_round_trip(model, tshirt):
    rng = np.random.default_rng(0)
    beta = rng.standard_normal(model.n_betas)
    verts = shaped_template(model, beta)[tshirt.indicator] \
        + rng.standard_normal((tshirt.n_vertices, 3)) * 0.01
    D = garment_displacements(verts, model, beta, tshirt.indicator)
    back = unposed_garment_shape(model, beta, np.zeros((model.n_joints, 3)),
                                 D, tshirt)
    assert np.abs(back - verts).max() < 1e-12


def test_unposed_shape_matrix_oracle(model, tshirt):
    # dense indicator-matrix product oracle
    rng = np.random.default_rng(1)
    beta = rng.standard_normal(model.n_betas)
    theta = rng.uniform(-0.4, 0.4, (model.n_joints, 3))
    D = rng.standard_normal((tshirt.n_vertices, 3)) * 0.01
    got = unposed_garment_shape(model, beta, theta, D, tshirt)
    I = np.zeros((tshirt.n_vertices, model.n_vertices))
    I[np.arange(tshirt.n_vertices), tshirt.indicator] = 1.0
    expect = I @ shaped_template(model, beta, theta) + D
    assert np.abs(got - expect).max() < 1e-12


def test_unposed_shape_beta_linearity(model, tshirt):
    rng = np.random.default_rng(2)
    D = np.zeros((tshirt.n_vertices, 3))
    z = np.zeros((model.n_joints, 3))
    b1 = rng.standard_normal(model.n_betas)
    b2 = rng.standard_normal(model.n_betas)
    base = unposed_garment_shape(model, np.zeros(model.n_betas), z, D, tshirt)
    g1 = unposed_garment_shape(model, b1, z, D, tshirt) - base
    g2 = unposed_garment_shape(model, b2, z, D, tshirt) - base
    g12 = unposed_garment_shape(model, b1 + b2, z, D, tshirt) - base
    assert np.abs(g12 - (g1 + g2)).max() < 1e-12


def test_pose_garment_zero_pose(model, tshirt):
    rng = np.random.default_rng(3)
    beta = rng.standard_normal(model.n_betas)
    D = instance_displacements(model, tshirt, beta)
    trans = np.array([0.1, 0.2, 0.3])
    params = BodyParams(beta, np.zeros((model.n_joints, 3)), trans)
    posed = pose_garment(model, params, D, tshirt)
    unposed = unposed_garment_shape(model, beta, params.theta, D, tshirt)
    assert np.abs(posed - (unposed + trans)).max() < 1e-12


def test_zero_displacement_tracks_body(model, tshirt):
    # garment vertices with D=0 coincide with their posed body vertices
    rng = np.random.default_rng(4)
    params = rand_params(model, rng)
    from wardrobe.body import pose_mesh
    body_posed = pose_mesh(model, params)
    garment_posed = pose_garment(model, params,
                                 np.zeros((tshirt.n_vertices, 3)), tshirt)
    assert np.abs(garment_posed - body_posed[tshirt.indicator]).max() < 1e-12


def test_pose_garment_stacked_oracle(model, tshirt):
    # oracle: gather weights, then skin the stacked unposed points directly
    rng = np.random.default_rng(5)
    params = rand_params(model, rng)
    D = instance_displacements(model, tshirt, params.beta)
    got = pose_garment(model, params, D, tshirt)
    unposed = unposed_garment_shape(model, params.beta, params.theta, D, tshirt)
    expect = pose_points(model, params, unposed, model.weights[tshirt.indicator])
    assert np.abs(got - expect).max() < 1e-12


def test_pose_unpose_garment_round_trip(model, tshirt):
    rng = np.random.default_rng(6)
    for _ in range(3):
        params = rand_params(model, rng, angle=0.8)
        D = instance_displacements(model, tshirt, params.beta, rng,
                                   wrinkle_amplitude=0.01)
        posed = pose_garment(model, params, D, tshirt)
        back = unpose_garment(model, params, posed, tshirt)
        expect = unposed_garment_shape(model, params.beta,
                                       np.zeros((model.n_joints, 3)), D, tshirt)
        assert np.abs(back - expect).max() < 1e-8


def test_dress_stacking(model, tshirt):
    rng = np.random.default_rng(7)
    pants = carve_garment_template(model, "short-pants")
    beta = rng.standard_normal(model.n_betas) * 0.3
    frames = rng.uniform(-0.2, 0.2, (2, model.n_joints, 3))
    fig = DressedFigure(model, beta, frames, garments=[
        (tshirt, instance_displacements(model, tshirt, beta)),
        (pants, instance_displacements(model, pants, beta)),
    ])
    layers = dress(model, fig, frame=1)
    assert [l.label for l in layers] == [0, 1, 2]
    assert layers[0].name == "skin"
    total = sum(l.mesh.n_vertices for l in layers)
    assert total == model.n_vertices + tshirt.n_vertices + pants.n_vertices


def test_dress_body_only(model):
    fig = DressedFigure(model, np.zeros(model.n_betas),
                        np.zeros((1, model.n_joints, 3)))
    layers = dress(model, fig)
    assert len(layers) == 1
    assert layers[0].label == 0


def test_dress_zero_displacement_subset(model, tshirt):
    fig = DressedFigure(model, np.zeros(model.n_betas),
                        np.zeros((1, model.n_joints, 3)),
                        garments=[(tshirt, np.zeros((tshirt.n_vertices, 3)))])
    layers = dress(model, fig)
    skin = layers[0].mesh.vertices
    garment = layers[1].mesh.vertices
    assert np.abs(garment - skin[tshirt.indicator]).max() < 1e-12


def test_texture_transfer(model, tshirt):
    src = Garment(tshirt.name, tshirt.mesh, tshirt.indicator,
                  tshirt.boundary_loops, texture="source_tex.png")
    out = transfer_texture(src, tshirt)
    assert out.texture == "source_tex.png"
    assert np.array_equal(out.mesh.vertices, tshirt.mesh.vertices)
    # self transfer is identity
    self_out = transfer_texture(src, src)
    assert self_out.texture == src.texture
    # transfer back restores the original handle
    back = transfer_texture(Garment(tshirt.name, tshirt.mesh, tshirt.indicator,
                                    tshirt.boundary_loops, texture=None), out)
    assert back.texture is None


def test_texture_transfer_class_mismatch(model, tshirt):
    other = carve_garment_template(model, "shirt")
    with pytest.raises(ValueError, match="mismatch"):
        transfer_texture(tshirt, other)


def test_garment_json_round_trip(tmp_path, model, tshirt):
    path = tmp_path / "t-shirt.json"
    tshirt.to_json(path)
    back = Garment.from_json(path)
    assert back.name == tshirt.name
    assert np.allclose(back.mesh.vertices, tshirt.mesh.vertices, atol=1e-6)
    assert np.array_equal(back.mesh.faces, tshirt.mesh.faces)
    assert np.array_equal(back.indicator, tshirt.indicator)
    assert len(back.boundary_loops) == len(tshirt.boundary_loops)
    for a, b in zip(back.boundary_loops, tshirt.boundary_loops):
        assert np.array_equal(a, b)


def test_figure_json_round_trip(tmp_path, model, tshirt):
    rng = np.random.default_rng(8)
    beta = rng.standard_normal(model.n_betas) * 0.4
    D = instance_displacements(model, tshirt, beta)
    fig = DressedFigure(model, beta, rng.uniform(-0.2, 0.2, (2, model.n_joints, 3)),
                        trans=[0.0, 0.1, 0.0], garments=[(tshirt, D)])
    model_path = tmp_path / "body.json"
    model.to_json(model_path)
    gpath = tmp_path / "t-shirt.json"
    tshirt.to_json(gpath)
    fpath = tmp_path / "fig.json"
    fig.to_json(fpath, model_path, [gpath])
    back = DressedFigure.from_json(fpath)
    assert np.array_equal(back.beta, fig.beta)
    assert np.array_equal(back.frames, fig.frames)
    assert np.array_equal(back.garments[0][1], D)
