"""Garment templates as body-associated submeshes, and dressed figures.

Each garment vertex is tied to exactly one body vertex (the indicator),
from which it inherits shape/pose displacements and skinning weights.
A garment instance on a concrete body is stored as a displacement field
on top of the associated body vertices.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .body import BodyModel, BodyParams, pose_points, shaped_template, unpose_vertices
from .mesh import TriMesh, load_obj, save_obj

GARMENT_CLASSES = ("shirt", "t-shirt", "coat", "short-pants", "long-pants")


class Garment:
    """Fixed-topology garment template tied to body vertices.

    Parameters
    ----------
    name : str
        Garment class (one of the built-in classes or user-defined).
    mesh : TriMesh
        Template geometry in the unposed space, m_g vertices.
    indicator : (m_g,) int array
        Associated body vertex per garment vertex.
    boundary_loops : list of int arrays, optional
        Ordered boundary rings; defaults to the mesh's canonical loops.
        The stored order defines the pairing contract for registration.
    texture : str or None
        Handle (image path); geometry carries the UV set.
    """

    def __init__(self, name, mesh: TriMesh, indicator, boundary_loops=None,
                 texture=None):
        self.name = str(name)
        self.mesh = mesh
        self.indicator = np.asarray(indicator, dtype=np.int64)
        if self.indicator.shape != (mesh.n_vertices,):
            raise ValueError("indicator must assign one body vertex per "
                             "garment vertex")
        if boundary_loops is None:
            boundary_loops = mesh.boundary_loops()
        self.boundary_loops = [np.asarray(l, dtype=np.int64) for l in boundary_loops]
        loop_vertices = set()
        for loop in self.boundary_loops:
            loop_vertices.update(loop.tolist())
        mesh_boundary = set()
        for loop in mesh.boundary_loops():
            mesh_boundary.update(loop.tolist())
        if loop_vertices != mesh_boundary:
            raise ValueError("boundary_loops do not match the mesh boundary")
        self.texture = texture

    @property
    def n_vertices(self) -> int:
        return self.mesh.n_vertices

    def validate_against(self, model: BodyModel) -> None:
        if self.indicator.max() >= model.n_vertices or self.indicator.min() < 0:
            raise ValueError("indicator references nonexistent body vertex")

    def gathered_weights(self, model: BodyModel) -> np.ndarray:
        return model.weights[self.indicator]

    def with_mesh(self, mesh: TriMesh) -> "Garment":
        return Garment(self.name, mesh, self.indicator,
                       self.boundary_loops, self.texture)

    # ------------------------------------------------------------------

    def to_json(self, path, obj_path=None) -> None:
        """Write the garment descriptor plus its OBJ geometry."""
        base = os.path.dirname(os.path.abspath(path))
        if obj_path is None:
            obj_path = os.path.splitext(path)[0] + ".obj"
        save_obj(self.mesh, obj_path)
        doc = {
            "class": self.name,
            "mesh": os.path.relpath(obj_path, base),
            "indicator": self.indicator.tolist(),
            "boundary_loops": [l.tolist() for l in self.boundary_loops],
            "texture": self.texture,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def from_json(cls, path) -> "Garment":
        with open(path) as fh:
            doc = json.load(fh)
        base = os.path.dirname(os.path.abspath(path))
        mesh = load_obj(os.path.join(base, doc["mesh"]))
        return cls(doc["class"], mesh, doc["indicator"],
                   [np.asarray(l) for l in doc["boundary_loops"]],
                   doc.get("texture"))


class DressedLayer:
    """One output mesh of the dressing function with its semantic label."""

    __slots__ = ("label", "name", "mesh")

    def __init__(self, label: int, name: str, mesh: TriMesh):
        self.label = label
        self.name = name
        self.mesh = mesh


class DressedFigure:
    """Body parameters plus displacement fields for skin and garments.

    ``frames`` holds one pose (K, 3) per animation frame; ``garments`` is a
    list of (Garment, displacement field) pairs in layering order.
    """

    def __init__(self, model: BodyModel, beta, frames, trans=None,
                 skin_displacements=None, garments=()):
        self.model = model
        self.beta = np.asarray(beta, dtype=np.float64)
        self.frames = np.asarray(frames, dtype=np.float64)
        if self.frames.ndim == 2:
            self.frames = self.frames[None]
        if self.frames.ndim != 3 or self.frames.shape[1:] != (model.n_joints, 3):
            raise ValueError("frames must be (F, K, 3)")
        self.trans = (np.zeros(3) if trans is None
                      else np.asarray(trans, dtype=np.float64))
        self.skin_displacements = (np.zeros((model.n_vertices, 3))
                                   if skin_displacements is None
                                   else np.asarray(skin_displacements, dtype=np.float64))
        if self.skin_displacements.shape != (model.n_vertices, 3):
            raise ValueError("skin displacements must be (n, 3)")
        self.garments = []
        for garment, disp in garments:
            disp = np.asarray(disp, dtype=np.float64)
            if disp.shape != (garment.n_vertices, 3):
                raise ValueError(f"garment '{garment.name}' displacement "
                                 "shape mismatch")
            if not np.isfinite(disp).all():
                raise ValueError(f"garment '{garment.name}' has non-finite "
                                 "displacements")
            garment.validate_against(model)
            self.garments.append((garment, disp))

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def params(self, frame=0) -> BodyParams:
        return BodyParams(self.beta, self.frames[frame], self.trans)

    # ------------------------------------------------------------------

    def to_json(self, path, model_path=None, garment_paths=None) -> None:
        """Write the figure referencing the model and garments by path.

        Paths default to the ones the figure was loaded from.
        """
        model_path = model_path or getattr(self, "model_path", None)
        garment_paths = garment_paths or getattr(self, "garment_paths", None)
        if model_path is None:
            raise ValueError("figure was not loaded from disk; pass model_path")
        if garment_paths is None:
            garment_paths = []
        if len(garment_paths) != len(self.garments):
            raise ValueError("need one garment path per garment")
        base = os.path.dirname(os.path.abspath(path))
        entries = []
        for (garment, disp), gpath in zip(self.garments, garment_paths):
            entries.append({"garment": os.path.relpath(gpath, base),
                            "displacements": disp.tolist()})
        doc = {
            "model": os.path.relpath(model_path, base),
            "beta": self.beta.tolist(),
            "frames": self.frames.tolist(),
            "trans": self.trans.tolist(),
            "skin_displacements": self.skin_displacements.tolist(),
            "garments": entries,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def from_json(cls, path, model: BodyModel | None = None) -> "DressedFigure":
        with open(path) as fh:
            doc = json.load(fh)
        base = os.path.dirname(os.path.abspath(path))
        model_path = os.path.join(base, doc["model"])
        if model is None:
            model = BodyModel.from_json(model_path)
        garments = []
        garment_paths = []
        for entry in doc["garments"]:
            gpath = os.path.join(base, entry["garment"])
            garment_paths.append(gpath)
            g = Garment.from_json(gpath)
            garments.append((g, np.asarray(entry["displacements"])))
        fig = cls(model, doc["beta"], doc["frames"], doc["trans"],
                  doc.get("skin_displacements"), garments)
        fig.model_path = model_path
        fig.garment_paths = garment_paths
        return fig


# ----------------------------------------------------------------------
# operations


def garment_displacements(garment_vertices, model: BodyModel, beta,
                          indicator) -> np.ndarray:
    """Offsets of unposed garment vertices from their associated body vertices.

    D = G - I * shaped_template(beta); the inverse of
    :func:`unposed_garment_shape` at zero pose.
    """
    verts = np.asarray(garment_vertices, dtype=np.float64)
    indicator = np.asarray(indicator, dtype=np.int64)
    if verts.shape != (len(indicator), 3):
        raise ValueError("garment vertices must be (m_g, 3)")
    body = shaped_template(model, beta)
    return verts - body[indicator]


def unposed_garment_shape(model: BodyModel, beta, theta, displacements,
                          garment: Garment) -> np.ndarray:
    """Garment vertices in unposed space for a new body shape and pose.

    The garment inherits the shape and pose-corrective displacements of its
    associated body vertices, then adds its own offsets.
    """
    displacements = np.asarray(displacements, dtype=np.float64)
    if displacements.shape != (garment.n_vertices, 3):
        raise ValueError("displacements must be (m_g, 3)")
    body = shaped_template(model, beta, theta)
    return body[garment.indicator] + displacements


def pose_garment(model: BodyModel, params: BodyParams, displacements,
                 garment: Garment) -> np.ndarray:
    """Posed garment vertices, skinned with the associated body weights."""
    unposed = unposed_garment_shape(model, params.beta, params.theta,
                                    displacements, garment)
    return pose_points(model, params, unposed, garment.gathered_weights(model))


def unpose_garment(model: BodyModel, params: BodyParams, posed_vertices,
                   garment: Garment) -> np.ndarray:
    """Invert :func:`pose_garment` back to the zero-pose garment shape."""
    return unpose_vertices(model, params, posed_vertices,
                           garment.gathered_weights(model), garment.indicator)


def dress(model: BodyModel, figure: DressedFigure, frame=0) -> list[DressedLayer]:
    """Posed skin and garment meshes, skin first, labels 0..L."""
    params = figure.params(frame)
    from .body import pose_mesh
    skin_vertices = pose_mesh(model, params, figure.skin_displacements)
    layers = [DressedLayer(0, "skin", model.template.with_vertices(skin_vertices))]
    for g, (garment, disp) in enumerate(figure.garments, start=1):
        posed = pose_garment(model, params, disp, garment)
        layers.append(DressedLayer(g, garment.name,
                                   garment.mesh.with_vertices(posed)))
    return layers


def transfer_texture(source: Garment, target: Garment) -> Garment:
    """Move a texture handle between registered garments of one class.

    Fixed topology makes this a reassignment; geometry is untouched.
    """
    if source.name != target.name:
        raise ValueError(f"garment class mismatch: "
                         f"'{source.name}' vs '{target.name}'")
    if not np.array_equal(source.mesh.faces, target.mesh.faces):
        raise ValueError("garment topology mismatch")
    su, tu = source.mesh.uvs, target.mesh.uvs
    if (su is None) != (tu is None) or \
            (su is not None and not np.array_equal(su, tu)):
        raise ValueError("garment UV layout mismatch")
    return Garment(target.name, target.mesh, target.indicator,
                   target.boundary_loops, source.texture)
