"""Layered garment meshes on a parametric body.

Dress a synthetic parametric body with registered garment templates,
register templates to segmented scans, learn per-class PCA shape spaces,
retarget garments (geometry and texture) between bodies, and evaluate
with surface metrics and a label-image rasterizer.
"""

from .body import (BodyModel, BodyParams, joint_locations,
                   make_synthetic_body, pose_mesh, shaped_template,
                   unpose_vertices)
from .garment import (GARMENT_CLASSES, DressedFigure, DressedLayer, Garment,
                      dress, garment_displacements, pose_garment,
                      transfer_texture, unpose_garment, unposed_garment_shape)
from .geodesics import geodesic_distance
from .mesh import TriMesh, graph_laplacian, load_obj, save_obj
from .registration import (BoundaryCorrespondence, RegistrationConfig,
                           RegistrationResult, interpenetration_energy,
                           laplacian_init, match_boundaries, register_garment,
                           unpose_energy)
from .retarget import retarget_body_aware, retarget_naive, retarget_pipeline
from .segmentation import (GarmentPrior, MrfProblem, build_prior, solve_mrf,
                           transfer_labels)
from .shapespace import PcaShapeSpace, decode, encode, fit_pca
from .spatial import SurfaceBVH
from .evaluation import (Camera, LabelImage, intermediate_losses,
                         loss_3d_posed, loss_3d_tpose, overall_error,
                         rasterize_labels, segmentation_loss, symmetric_error)
from .synthesis import carve_garment_template, garment_region, generate_wardrobe

__version__ = "0.1.0"

__all__ = [
    "BodyModel", "BodyParams", "BoundaryCorrespondence", "Camera",
    "DressedFigure", "DressedLayer", "GARMENT_CLASSES", "Garment",
    "GarmentPrior", "LabelImage", "MrfProblem", "PcaShapeSpace",
    "RegistrationConfig", "RegistrationResult", "SurfaceBVH", "TriMesh",
    "build_prior", "carve_garment_template", "decode", "dress", "encode",
    "fit_pca", "garment_displacements", "garment_region", "generate_wardrobe",
    "geodesic_distance", "graph_laplacian", "interpenetration_energy",
    "intermediate_losses", "joint_locations", "laplacian_init", "load_obj",
    "loss_3d_posed", "loss_3d_tpose", "make_synthetic_body",
    "match_boundaries", "overall_error", "pose_garment", "pose_mesh",
    "rasterize_labels", "register_garment", "retarget_body_aware",
    "retarget_naive", "retarget_pipeline", "save_obj", "segmentation_loss",
    "shaped_template", "solve_mrf", "symmetric_error", "transfer_labels",
    "transfer_texture", "unpose_energy", "unpose_garment", "unpose_vertices",
    "unposed_garment_shape",
]
