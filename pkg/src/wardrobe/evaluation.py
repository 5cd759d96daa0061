"""Evaluation metrics and the semantic label rasterizer.

The symmetric surface error sums the two directed mean vertex-to-surface
distances inside the per-instance mean (the formula sums, not averages,
the directions). Vertex losses compare stacked dressing outputs. The
rasterizer produces deterministic z-buffered label images with pinhole
projection and pixel-center sampling; there are no gradients and no
anti-aliasing by design.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .body import BodyParams
from .garment import DressedFigure, dress
from .mesh import TriMesh
from .spatial import SurfaceBVH


@dataclass
class Camera:
    """Pinhole camera: focal length in pixels, principal point, rigid
    world-to-camera transform (camera looks along +z)."""

    focal: float
    principal: tuple[float, float]
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.focal <= 0:
            raise ValueError("focal length must be positive")
        if self.rotation.shape != (3, 3):
            raise ValueError("rotation must be 3x3")

    @classmethod
    def default_for(cls, width, height, rotation=None, translation=None
                    ) -> "Camera":
        """Fixed intrinsics: focal = image height, principal point = center."""
        return cls(float(height), (width / 2.0, height / 2.0),
                   np.eye(3) if rotation is None else rotation,
                   np.zeros(3) if translation is None else translation)

    def project(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates (u, v) and camera-space depth per point."""
        p = np.asarray(points, dtype=np.float64) @ self.rotation.T \
            + self.translation
        z = p[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.focal * p[:, 0] / z + self.principal[0]
            v = self.focal * p[:, 1] / z + self.principal[1]
        return np.stack([u, v], axis=1), z

    def to_dict(self):
        return {"focal": self.focal, "principal": list(self.principal),
                "world_to_camera": {"rotation": self.rotation.tolist(),
                                    "translation": self.translation.tolist()}}

    @classmethod
    def from_dict(cls, doc, width=None, height=None) -> "Camera":
        ext = doc.get("world_to_camera", {})
        rotation = np.asarray(ext.get("rotation", np.eye(3).tolist()))
        translation = np.asarray(ext.get("translation", [0.0, 0.0, 0.0]))
        focal = doc.get("focal")
        principal = doc.get("principal")
        if focal is None or principal is None:
            if width is None or height is None:
                raise ValueError("camera without intrinsics needs image size")
            cam = cls.default_for(width, height, rotation, translation)
            if focal is not None:
                cam.focal = float(focal)
            if principal is not None:
                cam.principal = tuple(principal)
            return cam
        return cls(float(focal), tuple(principal), rotation, translation)


class LabelImage:
    """Integer label raster: 0 background, 1 skin, 2+ garment layers."""

    def __init__(self, labels, camera: Camera | None = None, legend=None):
        self.labels = np.asarray(labels, dtype=np.uint8)
        if self.labels.ndim != 2 or min(self.labels.shape) < 1:
            raise ValueError("labels must be a (height, width) raster")
        self.camera = camera
        self.legend = legend or {}

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def save_png(self, path) -> None:
        """8-bit grayscale PNG (pixel value = label) plus a JSON sidecar."""
        from PIL import Image
        Image.fromarray(self.labels, mode="L").save(path, format="PNG")
        sidecar = {"legend": self.legend}
        if self.camera is not None:
            sidecar["camera"] = self.camera.to_dict()
        with open(str(path) + ".json", "w") as fh:
            json.dump(sidecar, fh)

    @classmethod
    def load_png(cls, path) -> "LabelImage":
        from PIL import Image
        labels = np.asarray(Image.open(path).convert("L"))
        camera = None
        legend = {}
        try:
            with open(str(path) + ".json") as fh:
                sidecar = json.load(fh)
            legend = sidecar.get("legend", {})
            if "camera" in sidecar:
                camera = Camera.from_dict(sidecar["camera"])
        except FileNotFoundError:
            pass
        return cls(labels, camera, legend)


# ----------------------------------------------------------------------
# surface error


def directed_surface_distance(vertices, surface: TriMesh) -> float:
    """Mean unsigned distance from a vertex set to a surface."""
    return float(SurfaceBVH(surface).distances(vertices).mean())


def symmetric_error(pred_instances, gt_instances, garment_label: int) -> float:
    """Symmetric vertex-to-surface error for one garment over instances.

    Every instance is a mapping from semantic label to mesh. Per instance
    the two directed mean distances (prediction to ground truth and back)
    are summed; the result is the mean over instances. Skin never enters.
    """
    if len(pred_instances) != len(gt_instances):
        raise ValueError("instance counts differ")
    if len(pred_instances) == 0:
        raise ValueError("no instances")
    total = 0.0
    for pred, gt in zip(pred_instances, gt_instances):
        if garment_label not in pred or garment_label not in gt:
            raise ValueError(f"garment label {garment_label} missing from "
                             "an instance")
        p = pred[garment_label]
        g = gt[garment_label]
        total += directed_surface_distance(p.vertices, g) \
            + directed_surface_distance(g.vertices, p)
    return total / len(pred_instances)


def overall_error(pred_instances, gt_instances, garment_labels) -> float:
    """Mean of the per-garment symmetric errors."""
    errors = [symmetric_error(pred_instances, gt_instances, g)
              for g in garment_labels]
    return float(np.mean(errors))


def layers_by_label(layers) -> dict[int, TriMesh]:
    return {layer.label: layer.mesh for layer in layers}


# ----------------------------------------------------------------------
# vertex losses


def _stacked(model, figure, params) -> np.ndarray:
    from .body import pose_mesh
    from .garment import pose_garment
    parts = [pose_mesh(model, params, figure.skin_displacements)]
    for garment, disp in figure.garments:
        parts.append(pose_garment(model, params, disp, garment))
    return np.concatenate(parts, axis=0)


def _check_same_wardrobe(a: DressedFigure, b: DressedFigure):
    if len(a.garments) != len(b.garments):
        raise ValueError("figures carry different garment counts")
    for (ga, _), (gb, _) in zip(a.garments, b.garments):
        if ga.n_vertices != gb.n_vertices:
            raise ValueError("garment topologies differ between figures")


def loss_3d_tpose(pred: DressedFigure, gt: DressedFigure) -> float:
    """Squared stacked-vertex difference with the pose zeroed out."""
    _check_same_wardrobe(pred, gt)
    zero_p = BodyParams(pred.beta, np.zeros((pred.model.n_joints, 3)))
    zero_g = BodyParams(gt.beta, np.zeros((gt.model.n_joints, 3)))
    diff = _stacked(pred.model, pred, zero_p) - _stacked(gt.model, gt, zero_g)
    return float((diff ** 2).sum())


def loss_3d_posed(pred: DressedFigure, gt: DressedFigure, frames=None) -> float:
    """Squared stacked-vertex difference summed over posed frames."""
    _check_same_wardrobe(pred, gt)
    if frames is None:
        if pred.n_frames != gt.n_frames:
            raise ValueError("figures carry different frame counts")
        frames = range(pred.n_frames)
    total = 0.0
    for f in frames:
        diff = _stacked(pred.model, pred, pred.params(f)) \
            - _stacked(gt.model, gt, gt.params(f))
        total += float((diff ** 2).sum())
    return total


def intermediate_losses(pred_params, gt_params, pred_coeffs=None,
                        gt_coeffs=None) -> dict:
    """Squared-difference losses on pose, shape and garment coefficients.

    Pose loss sums over frames; the garment term sums over per-garment
    coefficient vectors when provided.
    """
    pred_theta = np.asarray(pred_params["theta"], dtype=np.float64)
    gt_theta = np.asarray(gt_params["theta"], dtype=np.float64)
    if pred_theta.shape != gt_theta.shape:
        raise ValueError("pose shapes differ")
    pred_beta = np.asarray(pred_params["beta"], dtype=np.float64)
    gt_beta = np.asarray(gt_params["beta"], dtype=np.float64)
    out = {
        "pose": float(((pred_theta - gt_theta) ** 2).sum()),
        "shape": float(((pred_beta - gt_beta) ** 2).sum()),
    }
    if pred_coeffs is not None or gt_coeffs is not None:
        pred_coeffs = pred_coeffs or []
        gt_coeffs = gt_coeffs or []
        if len(pred_coeffs) != len(gt_coeffs):
            raise ValueError("garment coefficient counts differ")
        total = 0.0
        for zp, zg in zip(pred_coeffs, gt_coeffs):
            zp = np.asarray(zp, dtype=np.float64)
            zg = np.asarray(zg, dtype=np.float64)
            total += float(((zp - zg) ** 2).sum())
        out["garment"] = total
    return out


# ----------------------------------------------------------------------
# rasterizer


def rasterize_mesh_labels(meshes_with_labels, camera: Camera, width, height
                          ) -> LabelImage:
    """Z-buffered label rasterization of labeled meshes.

    Faces are sampled at pixel centers with inclusive barycentric edges;
    depth interpolates perspective-correctly (linear in 1/z). On exact
    depth ties the later layer wins, which puts outer garments over skin.
    Output depends only on per-pixel depth minima, so permuting faces
    within a layer cannot change it.
    """
    if width < 1 or height < 1:
        raise ValueError("image size must be positive")
    labels = np.zeros((height, width), dtype=np.uint8)
    depth = np.full((height, width), np.inf)
    layer_of = np.full((height, width), -1, dtype=np.int64)
    for layer_index, (mesh, label) in enumerate(meshes_with_labels):
        if mesh.n_faces == 0:
            continue
        uv, z = camera.project(mesh.vertices)
        for face in mesh.faces:
            if np.any(z[face] <= 1e-9):
                continue          # behind the camera: skipped, not clipped
            tri = uv[face]
            zs = z[face]
            lo = np.floor(tri.min(axis=0) - 0.5).astype(int)
            hi = np.ceil(tri.max(axis=0) + 0.5).astype(int)
            x0, y0 = max(lo[0], 0), max(lo[1], 0)
            x1, y1 = min(hi[0] + 1, width), min(hi[1] + 1, height)
            if x0 >= x1 or y0 >= y1:
                continue
            xs = np.arange(x0, x1) + 0.5
            ys = np.arange(y0, y1) + 0.5
            px, py = np.meshgrid(xs, ys)
            w0, w1, w2 = _bary_2d(tri, px, py)
            inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
            if not inside.any():
                continue
            inv_z = w0 / zs[0] + w1 / zs[1] + w2 / zs[2]
            with np.errstate(divide="ignore"):
                z_pix = 1.0 / inv_z
            win = inside & ((z_pix < depth[y0:y1, x0:x1])
                            | ((z_pix == depth[y0:y1, x0:x1])
                               & (layer_index >= layer_of[y0:y1, x0:x1])))
            depth[y0:y1, x0:x1][win] = z_pix[win]
            labels[y0:y1, x0:x1][win] = label
            layer_of[y0:y1, x0:x1][win] = layer_index
    return LabelImage(labels, camera)


def _bary_2d(tri, px, py):
    (x0, y0), (x1, y1), (x2, y2) = tri
    denom = (y1 - y2) * (x0 - x2) + (x2 - x1) * (y0 - y2)
    if denom == 0.0:
        bad = np.full(px.shape, -1.0)
        return bad, bad, bad
    w0 = ((y1 - y2) * (px - x2) + (x2 - x1) * (py - y2)) / denom
    w1 = ((y2 - y0) * (px - x2) + (x0 - x2) * (py - y2)) / denom
    w2 = 1.0 - w0 - w1
    return w0, w1, w2


def rasterize_labels(figure: DressedFigure, frame: int, camera: Camera,
                     width, height) -> LabelImage:
    """Render a dressed figure's semantic labels for one frame.

    Mesh labels shift by one in image space: background 0, skin 1,
    garments 2 and up.
    """
    layers = dress(figure.model, figure, frame)
    pairs = [(layer.mesh, layer.label + 1) for layer in layers]
    image = rasterize_mesh_labels(pairs, camera, width, height)
    image.legend = {"0": "background", "1": "skin"}
    for layer in layers[1:]:
        image.legend[str(layer.label + 1)] = layer.name
    return image


def segmentation_loss(rendered: LabelImage, reference: LabelImage) -> dict:
    """Squared one-hot label difference plus per-label IoU diagnostics.

    A mismatched pixel costs 2 (two one-hot planes disagree); identical
    images cost 0.
    """
    if rendered.labels.shape != reference.labels.shape:
        raise ValueError("label image dimensions differ")
    a = rendered.labels
    b = reference.labels
    mismatch = a != b
    loss = 2.0 * float(mismatch.sum())
    ious = {}
    for label in np.union1d(np.unique(a), np.unique(b)):
        in_a = a == label
        in_b = b == label
        union = np.logical_or(in_a, in_b).sum()
        inter = np.logical_and(in_a, in_b).sum()
        ious[int(label)] = float(inter / union) if union else 1.0
    return {"loss": loss, "iou": ious}
