"""Geodesic distance on triangle meshes via the heat method.

Three linear solves: diffuse heat from the sources for a short time
t = h^2 (h = mean edge length), normalize the gradient field, then recover
the distance as the potential whose gradient best matches it. Components
that contain no source get an infinite distance sentinel.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.sparse.linalg import splu

from .mesh import TriMesh, cotangent_laplacian, lumped_mass_matrix


def geodesic_distance(mesh: TriMesh, source_set) -> np.ndarray:
    """Per-vertex geodesic distance (meters) from a set of source vertices.

    Distances are exactly zero on the sources and nonnegative everywhere.
    Vertices in connected components with no source get ``np.inf``.
    """
    sources = np.unique(np.asarray(source_set, dtype=np.int64))
    if sources.size == 0:
        raise ValueError("empty source set")
    if sources.min() < 0 or sources.max() >= mesh.n_vertices:
        raise ValueError("source vertex id out of range")
    if sources.size == mesh.n_vertices:
        return np.zeros(mesh.n_vertices)

    adj = mesh.vertex_adjacency()
    n_comp, comp = connected_components(adj, directed=False)
    dist = np.full(mesh.n_vertices, np.inf)
    dist[sources] = 0.0
    live = np.isin(comp, np.unique(comp[sources]))
    if not live.all():
        sub, used = mesh.submesh(live)
        src_mask = np.zeros(mesh.n_vertices, dtype=bool)
        src_mask[sources] = True
        dist[used] = _heat_distance(sub, np.nonzero(src_mask[used])[0])
        dist[sources] = 0.0
        return dist
    dist = _heat_distance(mesh, sources)
    return dist


def _heat_distance(mesh: TriMesh, sources: np.ndarray) -> np.ndarray:
    v, f = mesh.vertices, mesh.faces
    n = mesh.n_vertices
    Lc = cotangent_laplacian(mesh)
    M = lumped_mass_matrix(mesh)
    h = mesh.mean_edge_length()
    t = h * h

    u0 = np.zeros(n)
    u0[sources] = 1.0
    heat_op = (M + t * Lc).tocsc()
    u = splu(heat_op).solve(u0)

    # normalized negative heat gradient per face
    fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    double_area = np.linalg.norm(fn, axis=1)
    unit_n = np.divide(fn, double_area[:, None], out=np.zeros_like(fn),
                       where=double_area[:, None] > 0)
    grad = np.zeros((len(f), 3))
    for c in range(3):
        # edge opposite corner c, rotated into the face plane
        e = v[f[:, (c + 2) % 3]] - v[f[:, (c + 1) % 3]]
        grad += u[f[:, c], None] * np.cross(unit_n, e)
    grad = np.divide(grad, double_area[:, None], out=np.zeros_like(grad),
                     where=double_area[:, None] > 0)
    norms = np.linalg.norm(grad, axis=1)
    X = -np.divide(grad, norms[:, None], out=np.zeros_like(grad),
                   where=norms[:, None] > 0)

    # integrated divergence of X at vertices
    div = np.zeros(n)
    for c in range(3):
        i = f[:, c]
        j = f[:, (c + 1) % 3]
        k = f[:, (c + 2) % 3]
        e1 = v[j] - v[i]
        e2 = v[k] - v[i]
        cot1 = _cotangent(v[i] - v[k], v[j] - v[k])   # angle at k, opposite e1
        cot2 = _cotangent(v[i] - v[j], v[k] - v[j])   # angle at j, opposite e2
        np.add.at(div, i, 0.5 * (cot1 * np.einsum("ij,ij->i", e1, X)
                                 + cot2 * np.einsum("ij,ij->i", e2, X)))

    # Poisson solve (PSD stiffness convention flips the divergence sign);
    # tiny shift removes the constant nullspace
    eps = 1e-10 * (abs(Lc.diagonal()).mean() + 1.0)
    phi = splu((Lc + eps * sparse.identity(n)).tocsc()).solve(-div)
    phi -= phi[sources].min()
    np.maximum(phi, 0.0, out=phi)
    phi[sources] = 0.0
    return phi


def _cotangent(a, b):
    cross = np.linalg.norm(np.cross(a, b), axis=1)
    dot = np.einsum("ij,ij->i", a, b)
    return np.divide(dot, cross, out=np.zeros(len(a)), where=cross > 1e-300)


def dijkstra_distance(mesh: TriMesh, source_set) -> np.ndarray:
    """Edge-graph shortest-path distances; an upper bound on true geodesics."""
    sources = np.unique(np.asarray(source_set, dtype=np.int64))
    e = mesh.edges()
    w = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    n = mesh.n_vertices
    g = sparse.csr_matrix(
        (np.concatenate([w, w]),
         (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))),
        shape=(n, n))
    d = dijkstra(g, directed=False, indices=sources)
    return d.min(axis=0) if d.ndim == 2 else d
