"""Synthetic wardrobe generation: garment templates carved from the body.

Garment templates are regions of the body surface, lifted 3 mm along the
vertex normals so each garment forms a distinct layer. Instances for a
wardrobe vary body shape and add smooth offset fields, producing figures
with known ground-truth displacements and labels.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .body import (BodyModel, joint_locations, make_synthetic_body,
                   shaped_template)
from .garment import GARMENT_CLASSES, DressedFigure, Garment, dress
from .mesh import TriMesh, concatenate, save_obj

LAYER_OFFSET = 0.003  # meters between body surface and garment template

_JOINT_INDEX = {
    "pelvis": 0, "chest": 1, "neck": 2, "head": 3,
    "l_shoulder": 4, "l_elbow": 5, "l_wrist": 6,
    "r_shoulder": 7, "r_elbow": 8, "r_wrist": 9,
    "l_hip": 10, "l_knee": 11, "l_ankle": 12,
    "r_hip": 13, "r_knee": 14, "r_ankle": 15,
}

# region bands per class: (joint_a, joint_b, t_lo, t_hi, radius)
_REGION_BANDS = {
    "t-shirt": [
        ("pelvis", "chest", 0.35, 1.0, 0.26),
        ("chest", "neck", 0.0, 0.55, 0.26),
        ("l_shoulder", "l_elbow", 0.0, 0.50, 0.13),
        ("r_shoulder", "r_elbow", 0.0, 0.50, 0.13),
    ],
    "shirt": [
        ("pelvis", "chest", 0.30, 1.0, 0.26),
        ("chest", "neck", 0.0, 0.55, 0.26),
        ("l_shoulder", "l_elbow", 0.0, 1.0, 0.13),
        ("r_shoulder", "r_elbow", 0.0, 1.0, 0.13),
        ("l_elbow", "l_wrist", 0.0, 0.85, 0.105),
        ("r_elbow", "r_wrist", 0.0, 0.85, 0.105),
    ],
    "coat": [
        ("pelvis", "chest", -0.35, 1.0, 0.27),
        ("chest", "neck", 0.0, 0.55, 0.27),
        ("l_shoulder", "l_elbow", 0.0, 1.0, 0.14),
        ("r_shoulder", "r_elbow", 0.0, 1.0, 0.14),
        ("l_elbow", "l_wrist", 0.0, 0.75, 0.11),
        ("r_elbow", "r_wrist", 0.0, 0.75, 0.11),
    ],
    "short-pants": [
        ("pelvis", "chest", 0.0, 0.12, 0.24),
        ("l_hip", "l_knee", -0.15, 0.50, 0.15),
        ("r_hip", "r_knee", -0.15, 0.50, 0.15),
    ],
    "long-pants": [
        ("pelvis", "chest", 0.0, 0.12, 0.24),
        ("l_hip", "l_knee", -0.15, 1.0, 0.15),
        ("r_hip", "r_knee", -0.15, 1.0, 0.15),
        ("l_knee", "l_ankle", 0.0, 0.80, 0.13),
        ("r_knee", "r_ankle", 0.0, 0.80, 0.13),
    ],
}


def garment_region(model: BodyModel, name: str) -> np.ndarray:
    """Boolean mask of template-body vertices covered by a garment class."""
    if name not in _REGION_BANDS:
        raise ValueError(f"unknown garment class '{name}' "
                         f"(have {sorted(_REGION_BANDS)})")
    if model.n_joints < 16:
        raise ValueError("garment regions need the full 16-joint humanoid "
                         f"skeleton (model has {model.n_joints} joints)")
    joints = joint_locations(model, np.zeros(model.n_betas))
    v = model.template.vertices
    mask = np.zeros(model.n_vertices, dtype=bool)
    for a_name, b_name, t_lo, t_hi, radius in _REGION_BANDS[name]:
        a = joints[_JOINT_INDEX[a_name]]
        b = joints[_JOINT_INDEX[b_name]]
        ab = b - a
        denom = float(ab @ ab)
        t = (v - a) @ ab / denom
        proj = a + np.clip(t, t_lo, t_hi)[:, None] * ab
        close = np.linalg.norm(v - proj, axis=1) <= radius
        mask |= close & (t >= t_lo - 1e-9) & (t <= t_hi + 1e-9)
    return mask


def _largest_face_component(faces: np.ndarray) -> np.ndarray:
    """Mask of faces in the largest edge-connected face component."""
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components
    edge_map: dict[tuple[int, int], list[int]] = {}
    for fi, (a, b, c) in enumerate(faces):
        for e in ((a, b), (b, c), (c, a)):
            key = (min(e), max(e))
            edge_map.setdefault(key, []).append(fi)
    rows, cols = [], []
    for flist in edge_map.values():
        for i in range(len(flist) - 1):
            rows.append(flist[i])
            cols.append(flist[i + 1])
    n = len(faces)
    g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    n_comp, comp = connected_components(g, directed=False)
    counts = np.bincount(comp, minlength=n_comp)
    return comp == int(np.argmax(counts))


def _drop_bowtie_fans(faces: np.ndarray) -> np.ndarray:
    """Remove smaller fans at vertices whose incident faces split into
    multiple edge-connected groups; returns a face mask."""
    keep = np.ones(len(faces), dtype=bool)
    changed = True
    while changed:
        changed = False
        incident: dict[int, list[int]] = {}
        for fi in np.nonzero(keep)[0]:
            for vid in faces[fi]:
                incident.setdefault(int(vid), []).append(int(fi))
        for vid, flist in sorted(incident.items()):
            if len(flist) < 2:
                continue
            # group the faces around vid by shared edges through vid
            groups: list[set[int]] = []
            for fi in flist:
                edges = {tuple(sorted((vid, int(u))))
                         for u in faces[fi] if u != vid}
                merged = [g for g in groups if g & edges]
                for g in merged:
                    groups.remove(g)
                    edges |= g
                groups.append(edges)
            if len(groups) <= 1:
                continue
            # map edge groups back to faces, keep the largest fan
            fan_of: list[list[int]] = [[] for _ in groups]
            for fi in flist:
                edges = {tuple(sorted((vid, int(u))))
                         for u in faces[fi] if u != vid}
                for gi, g in enumerate(groups):
                    if edges & g:
                        fan_of[gi].append(fi)
                        break
            fan_of.sort(key=lambda fl: (-len(fl), min(fl)))
            for fl in fan_of[1:]:
                keep[fl] = False
                changed = True
    return keep


def carve_garment_template(model: BodyModel, name: str,
                           offset: float = LAYER_OFFSET) -> Garment:
    """Cut a garment template out of the body surface.

    Selects the class region, keeps the largest clean manifold patch,
    lifts it along the body vertex normals, and records the source body
    vertex of every garment vertex as the indicator.
    """
    mask = garment_region(model, name)
    faces_all = model.template.faces
    selected = mask[faces_all].all(axis=1)
    faces = faces_all[selected]
    if len(faces) == 0:
        raise ValueError(f"garment region '{name}' selects no faces")
    faces = faces[_drop_bowtie_fans(faces)]
    faces = faces[_largest_face_component(faces)]

    used = np.unique(faces)
    remap = np.full(model.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    normals = model.template.vertex_normals()
    verts = model.template.vertices[used] + offset * normals[used]
    # planar UVs from the vertical/lateral bounding box
    lo = verts.min(axis=0)
    hi = verts.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    uvs = np.stack([(verts[:, 0] - lo[0]) / span[0],
                    (verts[:, 1] - lo[1]) / span[1]], axis=1)
    mesh = TriMesh(verts, remap[faces], uvs=uvs)
    return Garment(name, mesh, indicator=used)


def instance_displacements(model: BodyModel, garment: Garment, beta,
                           rng=None, base_offset=LAYER_OFFSET,
                           wrinkle_amplitude=0.0) -> np.ndarray:
    """Displacement field for one garment instance on a beta-shaped body.

    Offsets run along the shaped body's vertex normals: a constant layer
    gap plus an optional smooth wave that varies per instance.
    """
    shaped = model.template.with_vertices(shaped_template(model, beta))
    normals = shaped.vertex_normals()[garment.indicator]
    amounts = np.full(garment.n_vertices, float(base_offset))
    if wrinkle_amplitude > 0.0:
        if rng is None:
            raise ValueError("wrinkle fields need an rng")
        wave = rng.uniform(2.0, 7.0, size=3)
        phase = rng.uniform(0.0, 2 * np.pi)
        pts = shaped.vertices[garment.indicator]
        amounts = amounts + wrinkle_amplitude * (1.0 + np.sin(pts @ wave + phase)) / 2.0
    return amounts[:, None] * normals


def body_labels_for_figure(figure: DressedFigure) -> np.ndarray:
    """Ground-truth semantic label per body vertex: 0 skin, then garment
    layers in listed order (later layers win where regions overlap)."""
    labels = np.zeros(figure.model.n_vertices, dtype=np.int64)
    for g, (garment, _) in enumerate(figure.garments, start=1):
        labels[np.unique(garment.indicator)] = g
    return labels


def scan_from_figure(figure: DressedFigure, frame=0
                     ) -> tuple[TriMesh, np.ndarray]:
    """Stack the dressed layers into a single labeled scan mesh."""
    layers = dress(figure.model, figure, frame)
    scan = concatenate([layer.mesh for layer in layers])
    labels = np.concatenate([np.full(layer.mesh.n_vertices, layer.label)
                             for layer in layers])
    return scan, labels


# ----------------------------------------------------------------------
# wardrobe fixture tree


def generate_wardrobe(out_dir, seed=0, n_figures=4, n_betas=8, n_joints=16,
                      frames_per_figure=2, beta_scale=0.6, pose_scale=0.18,
                      classes=GARMENT_CLASSES) -> dict:
    """Write a complete synthetic wardrobe fixture tree.

    Produces the body model, one garment template per class, dressed
    figures with ground-truth displacement fields, stacked labeled scans,
    per-class body regions, noisy unary costs for segmentation, and a
    default camera. Returns the manifest (also written as JSON).
    """
    rng = np.random.default_rng(seed)
    os.makedirs(out_dir, exist_ok=True)
    for sub in ("garments", "figures", "scans"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    model = make_synthetic_body(seed=seed, n_betas=n_betas, n_joints=n_joints)
    model_path = os.path.join(out_dir, "body_model.json")
    model.to_json(model_path)

    templates = {}
    garment_paths = {}
    for name in classes:
        g = carve_garment_template(model, name)
        templates[name] = g
        path = os.path.join(out_dir, "garments", f"{name}.json")
        g.to_json(path)
        garment_paths[name] = path

    uppers = [c for c in classes if c in ("shirt", "t-shirt", "coat")]
    lowers = [c for c in classes if c in ("short-pants", "long-pants")]

    manifest = {
        "seed": seed,
        "model": "body_model.json",
        "garments": {n: os.path.relpath(p, out_dir)
                     for n, p in garment_paths.items()},
        "figures": [],
        "scans": [],
    }

    for i in range(n_figures):
        beta = beta_scale * rng.standard_normal(n_betas)
        frames = rng.uniform(-pose_scale, pose_scale,
                             size=(frames_per_figure, n_joints, 3))
        frames[:, 0, :] = 0.0  # keep the root unrotated for stable scans
        worn = []
        if uppers:
            worn.append(uppers[i % len(uppers)])
        if lowers:
            worn.append(lowers[i % len(lowers)])
        garments = []
        for name in worn:
            disp = instance_displacements(
                model, templates[name], beta, rng,
                base_offset=LAYER_OFFSET + 0.002 * (i % 3),
                wrinkle_amplitude=0.004)
            garments.append((templates[name], disp))
        figure = DressedFigure(model, beta, frames, garments=garments)
        fig_path = os.path.join(out_dir, "figures", f"figure_{i:03d}.json")
        figure.to_json(fig_path, model_path,
                       [garment_paths[n] for n in worn])
        scan, labels = scan_from_figure(figure, frame=0)
        scan_path = os.path.join(out_dir, "scans", f"scan_{i:03d}.obj")
        save_obj(scan, scan_path)
        labels_path = os.path.join(out_dir, "scans", f"scan_{i:03d}_labels.txt")
        with open(labels_path, "w") as fh:
            fh.write("\n".join(str(int(x)) for x in labels) + "\n")
        manifest["figures"].append({
            "path": os.path.relpath(fig_path, out_dir),
            "beta_seed_index": i,
            "garments": worn,
        })
        manifest["scans"].append({
            "mesh": os.path.relpath(scan_path, out_dir),
            "labels": os.path.relpath(labels_path, out_dir),
            "figure": os.path.relpath(fig_path, out_dir),
        })

    # body-vertex regions and noisy unaries keyed to figure 0's outfit
    first = manifest["figures"][0]["garments"] if n_figures else []
    regions = {}
    gt = np.zeros(model.n_vertices, dtype=np.int64)
    for label, name in enumerate(first, start=1):
        ids = np.unique(templates[name].indicator)
        regions[str(label)] = ids.tolist()
        gt[ids] = label
    with open(os.path.join(out_dir, "regions.json"), "w") as fh:
        json.dump({"labels": ["skin"] + first, "regions": regions}, fh)
    n_labels = len(first) + 1
    unaries = np.ones((model.n_vertices, n_labels))
    unaries[np.arange(model.n_vertices), gt] = 0.0
    noise = rng.uniform(0.0, 1.6, size=unaries.shape)
    unaries = unaries + noise
    with open(os.path.join(out_dir, "unaries.txt"), "w") as fh:
        for row in unaries:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")

    camera = {
        "focal": None,  # defaults to image height at render time
        "principal": None,
        "world_to_camera": {
            "rotation": np.eye(3).tolist(),
            "translation": [0.0, -0.9, 2.2],
        },
    }
    with open(os.path.join(out_dir, "camera.json"), "w") as fh:
        json.dump(camera, fh)

    manifest["regions"] = "regions.json"
    manifest["unaries"] = "unaries.txt"
    manifest["camera"] = "camera.json"
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest
