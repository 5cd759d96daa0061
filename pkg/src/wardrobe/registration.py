"""Garment-to-scan registration.

A garment template posed by the body fit rarely matches a scan's clothing
boundaries, so registration starts with a single linear solve that
stretches the template globally: keep the template's differential
coordinates while pinning matched boundary points. Non-rigid refinement
then descends a composite energy (data, Laplacian, interpenetration,
unpose-preservation) with a backtracking line search. The true energy is
re-evaluated at every trial step, so accepted iterations never increase it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .body import (BodyModel, BodyParams, blend_transforms, pose_feature,
                   pose_mesh, shaped_template, skinning_transforms)
from .garment import (Garment, garment_displacements, pose_garment,
                      unpose_garment)
from .mesh import TriMesh, graph_laplacian
from .spatial import SurfaceBVH


@dataclass(frozen=True)
class BoundaryCorrespondence:
    """Matched scan boundary samples and their template vertex ids."""

    scan_points: np.ndarray       # (C, 3)
    template_indices: np.ndarray  # (C,)
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "scan_points",
                           np.asarray(self.scan_points, dtype=np.float64))
        object.__setattr__(self, "template_indices",
                           np.asarray(self.template_indices, dtype=np.int64))
        if len(self.scan_points) != len(self.template_indices):
            raise ValueError("correspondence arrays differ in length")
        if len(self.scan_points) < 3:
            raise ValueError("need at least 3 boundary correspondences")


@dataclass
class RegistrationConfig:
    """Weights and stopping rules for garment registration."""

    boundary_weight: float = 10.0
    data_weight: float = 1.0
    laplacian_weight: float = 0.5
    interp_weight: float = 25.0
    unpose_weight: float = 0.1
    max_iterations: int = 30
    rel_tolerance: float = 1e-6
    abs_tolerance: float = 1e-10   # per-vertex energy floor: converged below it
    max_backtracks: int = 24

    def __post_init__(self):
        for name in ("boundary_weight", "data_weight", "laplacian_weight",
                     "interp_weight", "unpose_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    @classmethod
    def from_mapping(cls, mapping) -> "RegistrationConfig":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(mapping) - known
        if bad:
            raise ValueError(f"unknown registration config keys: {sorted(bad)}")
        return cls(**mapping)


# ----------------------------------------------------------------------


def match_boundaries(garment: Garment, posed_vertices, target_boundaries,
                     weight=1.0) -> BoundaryCorrespondence:
    """Pair every target boundary sample with its nearest template
    boundary vertex.

    Loops pair with ``garment.boundary_loops`` by declared order; a
    mismatch in loop count is an error. Duplicate template indices are
    expected wherever the target samples a loop more densely.
    """
    posed = np.asarray(posed_vertices, dtype=np.float64)
    loops = garment.boundary_loops
    if len(target_boundaries) != len(loops):
        raise ValueError(f"boundary loop count mismatch: template has "
                         f"{len(loops)}, target has {len(target_boundaries)}")
    points, indices = [], []
    for loop, samples in zip(loops, target_boundaries):
        samples = np.asarray(samples, dtype=np.float64).reshape(-1, 3)
        ring = posed[loop]
        d2 = ((samples[:, None, :] - ring[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argmin(d2, axis=1)
        points.append(samples)
        indices.append(loop[nearest])
    return BoundaryCorrespondence(np.concatenate(points),
                                  np.concatenate(indices), float(weight))


def laplacian_init(template_init, laplacian: sparse.spmatrix,
                   corr: BoundaryCorrespondence) -> np.ndarray:
    """Single-shot global deformation matching boundaries.

    Solves the stacked least-squares system [L; w*S] G = [L G_init; w*q]
    via its normal equations with a deterministic sparse factorization.
    The Laplacian block keeps the local surface structure while the
    selector block pulls matched boundary vertices onto the scan points.
    """
    G_init = np.asarray(template_init, dtype=np.float64)
    m = len(G_init)
    L = laplacian.tocsr()
    if L.shape != (m, m):
        raise ValueError("Laplacian shape does not match template")
    C = len(corr.scan_points)
    if C == 0:
        raise ValueError("underconstrained: no boundary constraints")
    w = corr.weight
    S = sparse.csr_matrix((np.ones(C), (np.arange(C), corr.template_indices)),
                          shape=(C, m))
    delta = L @ G_init
    AtA = (L.T @ L + (w * w) * (S.T @ S)).tocsc()
    Atb = L.T @ delta + (w * w) * (S.T @ corr.scan_points)
    try:
        solve = splu(AtA).solve
    except RuntimeError as exc:
        raise ValueError(f"underconstrained boundary system: {exc}") from exc
    G = np.column_stack([solve(Atb[:, c]) for c in range(3)])
    if not np.isfinite(G).all():
        raise ValueError("underconstrained boundary system (singular solve)")
    residual = np.linalg.norm(AtA @ G - Atb)
    if residual > 1e-8 * max(np.linalg.norm(Atb), 1e-30):
        raise ValueError(f"normal-equation residual too large: {residual:.3e}")
    return G


def interpenetration_energy(garment_vertices, body_bvh: SurfaceBVH,
                            weight=25.0) -> tuple[float, int]:
    """Penalty for garment vertices sunk inside the body surface.

    Vertices outside or exactly on the surface contribute nothing; strictly
    inside ones contribute ``weight`` times their distance to the surface.
    Returns the energy and the count of strictly-inside vertices.
    """
    pts = np.asarray(garment_vertices, dtype=np.float64)
    nearest, _, inside = body_bvh.query(pts)
    dist = np.linalg.norm(pts - nearest, axis=1)
    return float(weight * dist[inside].sum()), int(inside.sum())


def unpose_energy(garment_now, body_now: SurfaceBVH, garment_unposed,
                  body_unposed: SurfaceBVH) -> float:
    """Sum of squared changes in body distance caused by unposing.

    Distances are unsigned point-to-surface lengths; correspondences run
    by vertex index, so the two garment arrays must align.
    """
    now = np.asarray(garment_now, dtype=np.float64)
    unposed = np.asarray(garment_unposed, dtype=np.float64)
    if now.shape != unposed.shape:
        raise ValueError("posed/unposed vertex counts differ")
    d_now = body_now.distances(now)
    d_unposed = body_unposed.distances(unposed)
    return float(((d_now - d_unposed) ** 2).sum())


# ----------------------------------------------------------------------


@dataclass
class RegistrationResult:
    """Registered garment plus the extracted displacement field."""

    vertices: np.ndarray          # (m_g, 3) posed, fitted to the scan
    displacements: np.ndarray     # (m_g, 3) unposed offsets against the fit body
    diagnostics: dict = field(default_factory=dict)


class _UnposeMap:
    """Affine per-vertex inverse of the garment skinning for fixed params."""

    def __init__(self, model: BodyModel, params: BodyParams, garment: Garment):
        transforms = skinning_transforms(model, params)
        A = blend_transforms(transforms, garment.gathered_weights(model))
        self.rot_inv = np.linalg.inv(A[:, :3, :3])
        feat = pose_feature(params.theta)
        corrective = model.pose_basis[garment.indicator] @ feat \
            if feat.any() else 0.0
        self.offset = -np.einsum("mij,mj->mi", self.rot_inv,
                                 A[:, :3, 3] + params.trans) - corrective

    def apply(self, posed):
        return np.einsum("mij,mj->mi", self.rot_inv, posed) + self.offset

    def pull_back_gradient(self, grad_unposed):
        return np.einsum("mji,mj->mi", self.rot_inv, grad_unposed)


def extract_garment_surface(target: TriMesh, labels, garment_label: int
                            ) -> tuple[TriMesh, np.ndarray]:
    """Sub-surface of a labeled scan carrying one garment's label."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (target.n_vertices,):
        raise ValueError("labels must assign one integer per scan vertex")
    sub, used = target.submesh(labels == garment_label)
    if sub.n_faces == 0:
        raise ValueError(f"no target faces carry label {garment_label}")
    return sub, used


def register_garment(template: Garment, model: BodyModel, fit: BodyParams,
                     target: TriMesh, target_labels, garment_label: int,
                     config: RegistrationConfig | None = None,
                     skin_displacements=None) -> RegistrationResult:
    """Fit a garment template to a labeled scan surface.

    Pipeline: pose the template with the body fit, match clothing
    boundaries and solve the global Laplacian system, then refine with
    first-order descent on the composite energy. The result carries the
    unposed displacement field ready for dressing and retargeting.

    Non-convergence is reported in the diagnostics (and as a warning),
    never silently.
    """
    config = config or RegistrationConfig()
    template.validate_against(model)

    # template worn by the fitted body
    base_disp = garment_displacements(template.mesh.vertices, model,
                                      np.zeros(model.n_betas),
                                      template.indicator)
    G_init = pose_garment(model, fit, base_disp, template)

    # target garment sub-surface and its boundary rings
    target_surface, used = extract_garment_surface(target, target_labels,
                                                   garment_label)
    target_loops = [target_surface.vertices[loop]
                    for loop in target_surface.boundary_loops()]
    corr = match_boundaries(template, G_init, target_loops,
                            weight=config.boundary_weight)
    L = graph_laplacian(template.mesh)
    G = laplacian_init(G_init, L, corr)
    boundary_residual = float(np.linalg.norm(
        G[corr.template_indices] - corr.scan_points, axis=1).mean())

    # fixed surfaces for the refinement energies
    body_posed = model.template.with_vertices(
        pose_mesh(model, fit, skin_displacements))
    body_bvh = SurfaceBVH(body_posed)
    body_unposed = model.template.with_vertices(
        shaped_template(model, fit.beta, None, skin_displacements))
    body0_bvh = SurfaceBVH(body_unposed)
    target_bvh = SurfaceBVH(target_surface)
    unpose_map = _UnposeMap(model, fit, template)

    LtL = (L.T @ L).tocsr()
    delta_init = L @ G_init

    def energy_terms(Gx):
        near_t = target_bvh.query(Gx)[0]
        e_data = config.data_weight * ((Gx - near_t) ** 2).sum()
        lap_res = L @ Gx - delta_init
        e_lap = config.laplacian_weight * (lap_res ** 2).sum()
        near_b, _, inside = body_bvh.query(Gx)
        d_body = np.linalg.norm(Gx - near_b, axis=1)
        e_interp = config.interp_weight * d_body[inside].sum()
        G0x = unpose_map.apply(Gx)
        near_b0 = body0_bvh.query(G0x)[0]
        d0 = np.linalg.norm(G0x - near_b0, axis=1)
        e_unpose = config.unpose_weight * ((d_body - d0) ** 2).sum()
        cache = dict(near_t=near_t, near_b=near_b, inside=inside,
                     d_body=d_body, G0=G0x, near_b0=near_b0, d0=d0)
        terms = dict(data=float(e_data), laplacian=float(e_lap),
                     interpenetration=float(e_interp),
                     unpose=float(e_unpose),
                     inside_count=int(inside.sum()))
        return float(e_data + e_lap + e_interp + e_unpose), terms, cache

    def gradient(Gx, cache):
        grad = 2.0 * config.data_weight * (Gx - cache["near_t"])
        grad += 2.0 * config.laplacian_weight * (LtL @ Gx - L.T @ delta_init)
        inside = cache["inside"]
        if inside.any():
            diff = Gx[inside] - cache["near_b"][inside]
            dist = cache["d_body"][inside]
            safe = dist > 1e-12
            unit = np.zeros_like(diff)
            unit[safe] = diff[safe] / dist[safe, None]
            g = np.zeros_like(Gx)
            g[inside] = config.interp_weight * unit
            grad += g
        # unpose term: d(v) and d(v0(v)) both depend on v
        mismatch = cache["d_body"] - cache["d0"]
        diff_b = Gx - cache["near_b"]
        safe_b = cache["d_body"] > 1e-12
        unit_b = np.zeros_like(diff_b)
        unit_b[safe_b] = diff_b[safe_b] / cache["d_body"][safe_b, None]
        diff_0 = cache["G0"] - cache["near_b0"]
        safe_0 = cache["d0"] > 1e-12
        unit_0 = np.zeros_like(diff_0)
        unit_0[safe_0] = diff_0[safe_0] / cache["d0"][safe_0, None]
        grad += 2.0 * config.unpose_weight * mismatch[:, None] \
            * (unit_b - unpose_map.pull_back_gradient(unit_0))
        return grad

    energy, terms, cache = energy_terms(G)
    history = [dict(iteration=0, total=energy, **terms)]
    step = 0.5 * template.mesh.mean_edge_length()
    floor = config.abs_tolerance * template.n_vertices
    converged = energy <= floor
    for it in range(1, config.max_iterations + 1):
        if converged:
            break
        grad = gradient(G, cache)
        gmax = np.linalg.norm(grad, axis=1).max()
        if gmax == 0.0:
            converged = True
            break
        direction = -grad / gmax            # largest vertex moves one step unit
        accepted = False
        trial_step = step
        for _ in range(config.max_backtracks):
            G_try = G + trial_step * direction
            e_try, terms_try, cache_try = energy_terms(G_try)
            if e_try < energy:
                accepted = True
                break
            trial_step *= 0.5
        if not accepted:
            converged = True    # no descent direction at resolvable step size
            break
        rel_drop = (energy - e_try) / max(energy, 1e-30)
        G, energy, terms, cache = G_try, e_try, terms_try, cache_try
        step = min(2.0 * trial_step, 4.0 * step)
        history.append(dict(iteration=it, total=energy, step=trial_step,
                            **terms))
        if rel_drop < config.rel_tolerance or energy <= floor:
            converged = True
            break
    if not converged:
        warnings.warn("garment registration stopped at the iteration limit "
                      "before reaching the energy tolerance", RuntimeWarning)

    # unpose the fitted garment and extract its displacement field
    G_unposed = unpose_garment(model, fit, G, template)
    displacements = garment_displacements(G_unposed, model, fit.beta,
                                          template.indicator)
    final_interp, final_count = interpenetration_energy(
        G, body_bvh, config.interp_weight)
    diagnostics = dict(
        converged=converged,
        iterations=len(history) - 1,
        energy=energy,
        history=history,
        boundary_residual_post_init=boundary_residual,
        final_interpenetration_energy=final_interp,
        final_interpenetration_count=final_count,
    )
    return RegistrationResult(G, displacements, diagnostics)
