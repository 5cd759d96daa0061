"""Parametric body model: blend shapes, linear blend skinning and unposing.

A :class:`BodyModel` carries a T-pose template plus linear displacement
bases for identity shape and pose-dependent corrections, a joint regressor,
skinning weights and a kinematic tree. A built-in synthetic generator
produces a watertight capsule-limb humanoid so the package needs no
external model assets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .mesh import TriMesh


@dataclass(frozen=True)
class BodyParams:
    """Pose/shape/translation parameters.

    beta: shape coefficients (n_beta,); theta: per-joint axis-angle (K, 3)
    in radians; trans: global translation in meters, applied after skinning.
    """

    beta: np.ndarray
    theta: np.ndarray
    trans: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=np.float64))
        object.__setattr__(self, "theta",
                           np.asarray(self.theta, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "trans", np.asarray(self.trans, dtype=np.float64))
        if not (np.isfinite(self.beta).all() and np.isfinite(self.theta).all()
                and np.isfinite(self.trans).all()):
            raise ValueError("non-finite body parameters")
        # normalize axis-angle magnitude into [0, 2*pi)
        angles = np.linalg.norm(self.theta, axis=1)
        big = angles >= 2 * np.pi
        if big.any():
            theta = self.theta.copy()
            scale = np.mod(angles[big], 2 * np.pi) / angles[big]
            theta[big] *= scale[:, None]
            object.__setattr__(self, "theta", theta)

    @classmethod
    def zero(cls, n_beta, n_joints):
        return cls(np.zeros(n_beta), np.zeros((n_joints, 3)), np.zeros(3))

    def to_dict(self):
        return {"beta": self.beta.tolist(), "theta": self.theta.tolist(),
                "trans": self.trans.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["beta"], d["theta"], d["trans"])


class BodyModel:
    """Template mesh plus the linear machinery that shapes and poses it.

    Attributes
    ----------
    template : TriMesh
        T-pose base mesh with n vertices.
    shape_basis : (n, 3, n_beta) array
        Meters of displacement per unit shape coefficient.
    pose_basis : (n, 3, 9*(K-1)) array
        Meters per element of vec(R_j - I) over non-root joints.
    joint_regressor : (K, n) array
        Rows map shaped vertices to joint locations.
    weights : (n, K) array
        Skinning weights; rows are nonnegative and sum to one.
    parents : (K,) int array
        Kinematic tree, parents[0] == -1.
    """

    def __init__(self, template: TriMesh, shape_basis, pose_basis,
                 joint_regressor, weights, parents):
        self.template = template
        self.shape_basis = np.asarray(shape_basis, dtype=np.float64)
        self.pose_basis = np.asarray(pose_basis, dtype=np.float64)
        self.joint_regressor = np.asarray(joint_regressor, dtype=np.float64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.parents = np.asarray(parents, dtype=np.int64)
        n = template.n_vertices
        K = len(self.parents)
        if self.shape_basis.shape[:2] != (n, 3):
            raise ValueError("shape_basis must be (n, 3, n_beta)")
        if self.pose_basis.shape != (n, 3, 9 * (K - 1)):
            raise ValueError("pose_basis must be (n, 3, 9*(K-1))")
        if self.joint_regressor.shape != (K, n):
            raise ValueError("joint_regressor must be (K, n)")
        if self.weights.shape != (n, K):
            raise ValueError("weights must be (n, K)")
        if self.parents[0] != -1 or np.any(self.parents[1:] >= np.arange(1, K)):
            raise ValueError("kinematic tree must be topologically ordered "
                             "with root first")
        row_sums = self.weights.sum(axis=1)
        if np.abs(row_sums - 1.0).max() > 1e-9:
            raise ValueError("skinning weight rows must sum to 1")
        if self.weights.min() < 0:
            raise ValueError("skinning weights must be nonnegative")

    @property
    def n_vertices(self) -> int:
        return self.template.n_vertices

    @property
    def n_joints(self) -> int:
        return len(self.parents)

    @property
    def n_betas(self) -> int:
        return self.shape_basis.shape[2]

    # ------------------------------------------------------------------
    # serialization (single JSON document, explicit shapes)

    def to_json(self, path) -> None:
        doc = {
            "template": {"vertices": self.template.vertices.tolist(),
                         "faces": self.template.faces.tolist()},
            "shape_basis": self.shape_basis.tolist(),
            "pose_basis": self.pose_basis.tolist(),
            "joint_regressor": self.joint_regressor.tolist(),
            "weights": self.weights.tolist(),
            "parents": self.parents.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def from_json(cls, path) -> "BodyModel":
        with open(path) as fh:
            doc = json.load(fh)
        template = TriMesh(doc["template"]["vertices"], doc["template"]["faces"])
        return cls(template, doc["shape_basis"], doc["pose_basis"],
                   doc["joint_regressor"], doc["weights"], doc["parents"])


# ----------------------------------------------------------------------
# rotations


def rodrigues(axis_angle: np.ndarray) -> np.ndarray:
    """Axis-angle vectors (..., 3) to rotation matrices (..., 3, 3)."""
    aa = np.asarray(axis_angle, dtype=np.float64)
    flat = aa.reshape(-1, 3)
    angle = np.linalg.norm(flat, axis=1)
    out = np.zeros((len(flat), 3, 3))
    out[:] = np.eye(3)
    nz = angle > 0
    if nz.any():
        k = flat[nz] / angle[nz, None]
        K = np.zeros((nz.sum(), 3, 3))
        K[:, 0, 1], K[:, 0, 2] = -k[:, 2], k[:, 1]
        K[:, 1, 0], K[:, 1, 2] = k[:, 2], -k[:, 0]
        K[:, 2, 0], K[:, 2, 1] = -k[:, 1], k[:, 0]
        s = np.sin(angle[nz])[:, None, None]
        c = np.cos(angle[nz])[:, None, None]
        out[nz] = np.eye(3) + s * K + (1 - c) * (K @ K)
    return out.reshape(aa.shape[:-1] + (3, 3))


def pose_feature(theta: np.ndarray) -> np.ndarray:
    """vec(R_j - I) stacked over non-root joints; drives the pose basis."""
    R = rodrigues(np.asarray(theta, dtype=np.float64).reshape(-1, 3)[1:])
    return (R - np.eye(3)).reshape(-1)


# ----------------------------------------------------------------------
# core operations


def shaped_template(model: BodyModel, beta, theta=None, displacements=None
                    ) -> np.ndarray:
    """Template plus shape, pose-corrective, and free-form displacements.

    Returns the unposed vertex positions: T + Bs*beta + Bp*vec(R-I) + D.
    With all-zero inputs this is exactly the template.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (model.n_betas,):
        raise ValueError(f"beta must have length {model.n_betas}")
    v = model.template.vertices.copy()
    if beta.any():
        v += model.shape_basis @ beta
    if theta is not None:
        feat = pose_feature(theta)
        if feat.shape != (model.pose_basis.shape[2],):
            raise ValueError("theta has wrong number of joints")
        if feat.any():
            v += model.pose_basis @ feat
    if displacements is not None:
        displacements = np.asarray(displacements, dtype=np.float64)
        if displacements.shape != v.shape:
            raise ValueError("displacements must be (n, 3)")
        v = v + displacements
    return v


def joint_locations(model: BodyModel, beta) -> np.ndarray:
    """Joints regressed from the beta-shaped template (K, 3).

    Free-form displacements never move the skeleton, so only beta enters.
    """
    return model.joint_regressor @ shaped_template(model, beta)


def skinning_transforms(model: BodyModel, params: BodyParams) -> np.ndarray:
    """World transform per joint (K, 4, 4) relative to the rest pose."""
    if params.theta.shape != (model.n_joints, 3):
        raise ValueError("theta must be (K, 3)")
    if not np.isfinite(params.theta).all():
        raise ValueError("non-finite rotation")
    joints = joint_locations(model, params.beta)
    R = rodrigues(params.theta)
    K = model.n_joints
    world = np.zeros((K, 4, 4))
    for k in range(K):
        local = np.eye(4)
        local[:3, :3] = R[k]
        parent = model.parents[k]
        local[:3, 3] = joints[k] - (joints[parent] if parent >= 0 else 0.0)
        world[k] = local if parent < 0 else world[parent] @ local
    # subtract rest joint positions so vertices transform in place
    rel = world.copy()
    for k in range(K):
        rel[k, :3, 3] -= world[k, :3, :3] @ joints[k]
    return rel


def blend_transforms(transforms: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-point blended skinning matrices (m, 4, 4)."""
    return np.einsum("mk,kij->mij", weights, transforms)


def pose_points(model: BodyModel, params: BodyParams, points, weights
                ) -> np.ndarray:
    """Skin arbitrary points with given per-point weights, add translation."""
    A = blend_transforms(skinning_transforms(model, params), weights)
    pts = np.asarray(points, dtype=np.float64)
    out = np.einsum("mij,mj->mi", A[:, :3, :3], pts) + A[:, :3, 3]
    return out + params.trans


def pose_mesh(model: BodyModel, params: BodyParams, displacements=None
              ) -> np.ndarray:
    """Posed body vertices: blend-skinned shaped template plus translation."""
    v = shaped_template(model, params.beta, params.theta, displacements)
    return pose_points(model, params, v, model.weights)


def unpose_vertices(model: BodyModel, params: BodyParams, posed_points,
                    per_point_weights, associated_vertices=None) -> np.ndarray:
    """Invert skinning (and pose correctives) to recover zero-pose points.

    ``associated_vertices`` names the body vertex whose pose-corrective
    displacement each point inherited (the identity for body vertices, the
    garment indicator for garment points); pass None to skip the corrective
    subtraction. Raises when a blended transform is numerically singular.
    """
    posed = np.asarray(posed_points, dtype=np.float64)
    weights = np.asarray(per_point_weights, dtype=np.float64)
    if weights.shape != (len(posed), model.n_joints):
        raise ValueError("per_point_weights must be (m, K)")
    A = blend_transforms(skinning_transforms(model, params), weights)
    dets = np.linalg.det(A[:, :3, :3])
    bad = np.abs(dets) <= 1e-8
    if bad.any():
        raise ValueError(f"singular blended transform at point index "
                         f"{int(np.nonzero(bad)[0][0])}")
    local = posed - params.trans - A[:, :3, 3]
    inv = np.linalg.inv(A[:, :3, :3])
    out = np.einsum("mij,mj->mi", inv, local)
    if associated_vertices is not None:
        feat = pose_feature(params.theta)
        if feat.any():
            assoc = np.asarray(associated_vertices, dtype=np.int64)
            out = out - model.pose_basis[assoc] @ feat
    return out


# ----------------------------------------------------------------------
# synthetic model generator

_CANONICAL_JOINTS = [
    # name, parent, position (T-pose, y up, meters)
    ("pelvis", -1, (0.00, 0.95, 0.00)),
    ("chest", 0, (0.00, 1.25, 0.00)),
    ("neck", 1, (0.00, 1.46, 0.00)),
    ("head", 2, (0.00, 1.60, 0.00)),
    ("l_shoulder", 1, (0.20, 1.40, 0.00)),
    ("l_elbow", 4, (0.48, 1.40, 0.00)),
    ("l_wrist", 5, (0.74, 1.40, 0.00)),
    ("r_shoulder", 1, (-0.20, 1.40, 0.00)),
    ("r_elbow", 7, (-0.48, 1.40, 0.00)),
    ("r_wrist", 8, (-0.74, 1.40, 0.00)),
    ("l_hip", 0, (0.11, 0.88, 0.00)),
    ("l_knee", 10, (0.13, 0.48, 0.00)),
    ("l_ankle", 11, (0.14, 0.09, 0.00)),
    ("r_hip", 0, (-0.11, 0.88, 0.00)),
    ("r_knee", 13, (-0.13, 0.48, 0.00)),
    ("r_ankle", 14, (-0.14, 0.09, 0.00)),
]

# capsule radius per bone, keyed by child joint name
_BONE_RADII = {
    "chest": 0.14, "neck": 0.09, "head": 0.075,
    "l_shoulder": 0.07, "l_elbow": 0.052, "l_wrist": 0.042,
    "r_shoulder": 0.07, "r_elbow": 0.052, "r_wrist": 0.042,
    "l_hip": 0.095, "l_knee": 0.078, "l_ankle": 0.058,
    "r_hip": 0.095, "r_knee": 0.078, "r_ankle": 0.058,
}
# extension capsules past leaf joints, keyed by joint name
_TIP_OFFSETS = {
    "head": ((0.0, 0.11, 0.0), 0.085),
    "l_wrist": ((0.07, 0.0, 0.0), 0.038),
    "r_wrist": ((-0.07, 0.0, 0.0), 0.038),
    "l_ankle": ((0.0, -0.04, 0.07), 0.045),
    "r_ankle": ((0.0, -0.04, 0.07), 0.045),
}


def _skeleton(n_joints: int):
    """Joint names, parents, rest positions for a K-joint humanoid.

    The canonical 16-joint layout is prefix-closed; beyond 16 extra joints
    continue as a short chain above the head.
    """
    if n_joints < 2:
        raise ValueError("need at least 2 joints")
    names, parents, pos = [], [], []
    for name, parent, p in _CANONICAL_JOINTS[:n_joints]:
        names.append(name)
        parents.append(parent)
        pos.append(p)
    for k in range(len(_CANONICAL_JOINTS), n_joints):
        prev = pos[-1]
        names.append(f"extra_{k}")
        parents.append(k - 1)
        pos.append((prev[0], prev[1] + 0.05, prev[2]))
    return names, np.asarray(parents, dtype=np.int64), np.array(pos)


def _segment_distances(points, a, b):
    """Distance from each point to segment a-b."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def _signed_volume(mesh: TriMesh) -> float:
    v, f = mesh.vertices, mesh.faces
    return float(np.einsum("ij,ij->i", v[f[:, 0]],
                           np.cross(v[f[:, 1]], v[f[:, 2]])).sum() / 6.0)


def _capsules(names, parents, joints):
    """(a, b, radius, owner_joint) per capsule; owners drive skinning."""
    caps = []
    name_radius = dict(_BONE_RADII)
    for k in range(1, len(names)):
        r = name_radius.get(names[k], 0.035)
        caps.append((joints[parents[k]], joints[k], r, int(parents[k])))
    for k, name in enumerate(names):
        if name in _TIP_OFFSETS:
            off, r = _TIP_OFFSETS[name]
            caps.append((joints[k], joints[k] + np.asarray(off), r, k))
    if len(names) > len(_CANONICAL_JOINTS):
        last = len(names) - 1
        tip = joints[last] + np.array([0.0, 0.05, 0.0])
        caps.append((joints[last], tip, 0.03, last))
    return caps


def make_synthetic_body(seed=0, n_betas=10, n_joints=16, resolution=0.034
                        ) -> BodyModel:
    """Deterministic capsule-limb humanoid body model.

    The surface is the zero level set of a union-of-capsules distance field
    extracted by marching cubes (watertight, genus zero). Skinning weights
    fall off smoothly with distance to each joint's bones; shape basis
    columns are random orthogonal smooth fields scaled to at most 5 cm per
    unit coefficient, pose-corrective columns at most 1 cm. The same seed
    reproduces the model bit for bit.
    """
    from skimage import measure

    rng = np.random.default_rng(seed)
    names, parents, joints = _skeleton(n_joints)
    caps = _capsules(names, parents, joints)

    lo = joints.min(axis=0) - 0.30
    hi = joints.max(axis=0) + 0.30
    hi[2] += 0.05  # feet extend forward
    nx, ny, nz = [max(8, int(np.ceil((hi[i] - lo[i]) / resolution))) for i in range(3)]
    xs = np.linspace(lo[0], hi[0], nx)
    ys = np.linspace(lo[1], hi[1], ny)
    zs = np.linspace(lo[2], hi[2], nz)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    sdf = np.full(len(pts), np.inf)
    for a, b, r, _ in caps:
        np.minimum(sdf, _segment_distances(pts, a, b) - r, out=sdf)
    vol = sdf.reshape(nx, ny, nz)
    spacing = (xs[1] - xs[0], ys[1] - ys[0], zs[1] - zs[0])
    verts, faces, _, _ = measure.marching_cubes(vol, level=0.0, spacing=spacing)
    verts = verts + lo
    template = TriMesh(verts, faces.astype(np.int64))
    if _signed_volume(template) < 0:  # enforce outward orientation
        template = TriMesh(verts, faces[:, ::-1].astype(np.int64))

    n = template.n_vertices
    v = template.vertices

    # skinning: smooth falloff of distance to each joint's own bones
    sigma = 0.055
    dist = np.full((n, n_joints), np.inf)
    for a, b, r, owner in caps:
        d = np.maximum(_segment_distances(v, a, b) - r, 0.0)
        np.minimum(dist[:, owner], d, out=dist[:, owner])
    no_bone = ~np.isfinite(dist)
    dist[no_bone] = 1e3  # joints that own no capsule get negligible weight
    w = np.exp(-((dist / sigma) ** 2))
    w[w < 1e-12] = 0.0
    rows = w.sum(axis=1)
    zero = rows == 0.0
    if zero.any():  # fall back to nearest joint
        nearest = np.argmin(dist[zero], axis=1)
        w[zero, nearest] = 1.0
        rows = w.sum(axis=1)
    w /= rows[:, None]

    # joint regressor: gaussian neighborhood around each rest joint; the
    # regressed locations (not the capsule scaffold) are the model skeleton
    jr = np.exp(-(np.linalg.norm(v[None, :, :] - joints[:, None, :], axis=2)
                  / 0.09) ** 2)
    jr /= jr.sum(axis=1)[:, None]
    joints = jr @ v

    # smooth random shape basis, orthogonal columns, <= 5 cm per unit beta
    n_feat = max(12, 2 * n_betas)
    waves = rng.uniform(1.0, 5.0, size=(n_feat, 3)) * rng.choice([-1, 1], size=(n_feat, 3))
    phases = rng.uniform(0, 2 * np.pi, size=n_feat)
    feats = np.sin(v @ waves.T + phases)          # (n, n_feat)
    coefs = rng.standard_normal((n_feat, 3, n_betas))
    raw = np.einsum("nf,fck->nck", feats, coefs).reshape(n * 3, n_betas)
    q, _ = np.linalg.qr(raw)
    shape_basis = q.reshape(n, 3, n_betas)
    row_norms = np.linalg.norm(shape_basis, axis=1)  # (n, n_betas)
    scale = 0.05 / row_norms.max(axis=0)
    shape_basis = shape_basis * scale[None, None, :]

    # pose-corrective basis: local bumps near each non-root joint, <= 1 cm
    n_pose = 9 * (n_joints - 1)
    pose_basis = np.zeros((n, 3, n_pose))
    for j in range(1, n_joints):
        locality = np.exp(-(np.linalg.norm(v - joints[j], axis=1) / 0.12) ** 2)
        for e in range(9):
            col = 9 * (j - 1) + e
            direction = rng.standard_normal(3)
            direction /= np.linalg.norm(direction)
            wave = np.sin(v @ rng.uniform(2.0, 6.0, size=3) + rng.uniform(0, 2 * np.pi))
            field = (locality * wave)[:, None] * direction
            peak = np.linalg.norm(field, axis=1).max()
            if peak > 0:
                field *= 0.01 / peak
            pose_basis[:, :, col] = field

    return BodyModel(template, shape_basis, pose_basis, jr, w, parents)
