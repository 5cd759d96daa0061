"""Indexed triangle meshes: construction, validation, OBJ I/O and Laplacians.

Every other module builds on :class:`TriMesh`. Meshes are immutable after
construction (vertex/face arrays are write-protected) so they can be shared
freely across threads.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse


class TriMesh:
    """Immutable indexed triangle mesh.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
        Vertex positions in meters.
    faces : array_like, shape (f, 3)
        Vertex-index triples. Counter-clockwise orientation seen from
        outside is assumed for normal computations.
    uvs : array_like, shape (n, 2), optional
        Per-vertex texture coordinates in [0, 1]^2.
    validate : bool
        When True (default) reject out-of-range indices, degenerate faces
        and non-manifold or inconsistently oriented connectivity.
    """

    def __init__(self, vertices, faces, uvs=None, validate=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError("vertices must have shape (n, 3)")
        if self.faces.size == 0:
            self.faces = self.faces.reshape(0, 3)
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError("faces must have shape (f, 3)")
        self.uvs = None
        if uvs is not None:
            self.uvs = np.ascontiguousarray(uvs, dtype=np.float64)
            if self.uvs.shape != (len(self.vertices), 2):
                raise ValueError("uvs must have shape (n_vertices, 2)")
        if validate:
            self._validate()
        for arr in (self.vertices, self.faces, self.uvs):
            if arr is not None:
                arr.flags.writeable = False
        self._cache = {}

    # ------------------------------------------------------------------
    # construction-time checks

    def _validate(self):
        n = len(self.vertices)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= n:
                raise ValueError("face index out of range")
            f = self.faces
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise ValueError("face repeats a vertex")
            # Orientable manifold (with boundary): every directed halfedge is
            # unique and every undirected edge has at most two incident faces.
            he = self.halfedges()
            he_keys = he[:, 0] * n + he[:, 1]
            if len(np.unique(he_keys)) != len(he_keys):
                raise ValueError("non-manifold or inconsistently oriented mesh "
                                 "(duplicate directed edge)")
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("non-finite vertex coordinates")

    # ------------------------------------------------------------------
    # basic quantities

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def halfedges(self) -> np.ndarray:
        """Directed edges (3f, 2), one per face corner, in face order."""
        f = self.faces
        return np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)

    def edges(self) -> np.ndarray:
        """Unique undirected edges (e, 2), each row sorted, lexicographic order."""
        if "edges" not in self._cache:
            he = np.sort(self.halfedges(), axis=1)
            self._cache["edges"] = np.unique(he, axis=0)
        return self._cache["edges"]

    def boundary_edges(self) -> np.ndarray:
        """Directed boundary halfedges (b, 2): edges with a single incident face."""
        if "boundary_edges" not in self._cache:
            he = self.halfedges()
            keys = np.sort(he, axis=1)
            _, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                           return_counts=True)
            self._cache["boundary_edges"] = he[counts[inverse] == 1]
        return self._cache["boundary_edges"]

    def boundary_loops(self) -> list[np.ndarray]:
        """Closed boundary rings as ordered vertex-id arrays.

        Loops follow the boundary halfedge direction. The list is in canonical
        order (longest loop first, ties by lexicographically smallest centroid)
        and each loop starts at its smallest vertex id, so the result is
        deterministic for a given mesh.
        """
        if "boundary_loops" in self._cache:
            return self._cache["boundary_loops"]
        be = self.boundary_edges()
        nxt = dict(zip(be[:, 0].tolist(), be[:, 1].tolist()))
        if len(nxt) != len(be):
            raise ValueError("non-manifold boundary (vertex on multiple loops)")
        loops = []
        seen = set()
        for start in sorted(nxt):
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            v = nxt[start]
            while v != start:
                if v in seen or v not in nxt:
                    raise ValueError("open boundary chain (mesh not manifold)")
                loop.append(v)
                seen.add(v)
                v = nxt[v]
            k = int(np.argmin(loop))
            loops.append(np.array(loop[k:] + loop[:k], dtype=np.int64))

        def key(loop):
            c = self.vertices[loop].mean(axis=0)
            return (-len(loop), c[0], c[1], c[2])

        loops.sort(key=key)
        self._cache["boundary_loops"] = loops
        return loops

    def vertex_adjacency(self) -> sparse.csr_matrix:
        """Symmetric 0/1 vertex adjacency matrix."""
        if "adj" not in self._cache:
            e = self.edges()
            n = self.n_vertices
            data = np.ones(2 * len(e))
            rows = np.concatenate([e[:, 0], e[:, 1]])
            cols = np.concatenate([e[:, 1], e[:, 0]])
            self._cache["adj"] = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
        return self._cache["adj"]

    def face_normals(self) -> np.ndarray:
        """Unit face normals (f, 3); zero for degenerate faces."""
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        lens = np.linalg.norm(n, axis=1)
        return np.divide(n, lens[:, None], out=np.zeros_like(n), where=lens[:, None] > 0)

    def face_areas(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return 0.5 * np.linalg.norm(n, axis=1)

    def vertex_normals(self) -> np.ndarray:
        """Angle-weighted unit vertex normals (n, 3)."""
        if "vnormals" in self._cache:
            return self._cache["vnormals"]
        v, f = self.vertices, self.faces
        fn = self.face_normals()
        out = np.zeros_like(v)
        for c in range(3):
            a = v[f[:, (c + 1) % 3]] - v[f[:, c]]
            b = v[f[:, (c + 2) % 3]] - v[f[:, c]]
            la = np.linalg.norm(a, axis=1)
            lb = np.linalg.norm(b, axis=1)
            ok = (la > 0) & (lb > 0)
            cosang = np.zeros(len(f))
            cosang[ok] = np.einsum("ij,ij->i", a[ok], b[ok]) / (la[ok] * lb[ok])
            ang = np.arccos(np.clip(cosang, -1.0, 1.0))
            np.add.at(out, f[:, c], fn * ang[:, None])
        lens = np.linalg.norm(out, axis=1)
        out = np.divide(out, lens[:, None], out=np.zeros_like(out),
                        where=lens[:, None] > 0)
        self._cache["vnormals"] = out
        return out

    def mean_edge_length(self) -> float:
        e = self.edges()
        if len(e) == 0:
            return 0.0
        d = self.vertices[e[:, 0]] - self.vertices[e[:, 1]]
        return float(np.mean(np.linalg.norm(d, axis=1)))

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + self.n_faces

    def is_watertight(self) -> bool:
        return len(self.boundary_edges()) == 0

    def submesh(self, vertex_mask) -> tuple["TriMesh", np.ndarray]:
        """Faces whose three corners all lie in ``vertex_mask``.

        Returns the sub-mesh and the array mapping new vertex ids to
        original ids. Unreferenced vertices are dropped.
        """
        vertex_mask = np.asarray(vertex_mask, dtype=bool)
        keep = vertex_mask[self.faces].all(axis=1)
        faces = self.faces[keep]
        used = np.unique(faces)
        remap = np.full(self.n_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        uvs = self.uvs[used] if self.uvs is not None else None
        return TriMesh(self.vertices[used], remap[faces], uvs=uvs), used

    def with_vertices(self, vertices) -> "TriMesh":
        """Same connectivity with replaced vertex positions (skips validation)."""
        return TriMesh(vertices, self.faces, uvs=self.uvs, validate=False)


def concatenate(meshes) -> TriMesh:
    """Stack meshes into one (disjoint components, indices offset)."""
    verts, faces = [], []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += m.n_vertices
    return TriMesh(np.concatenate(verts), np.concatenate(faces), validate=False)


# ----------------------------------------------------------------------
# Wavefront OBJ


def load_obj(path) -> TriMesh:
    """Load a triangle mesh from a Wavefront OBJ file.

    Supports v/vt/f records with 1-based indices. Texture coordinates are
    mapped per vertex; conflicting vt assignments for one vertex are an
    error. Normals are ignored. Non-triangle faces are rejected.
    """
    vertices, uvs_raw = [], []
    faces, face_uv_ids = [], []
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ValueError(f"{path}:{lineno}: malformed vertex line")
                vertices.append([float(x) for x in parts[1:4]])
            elif tag == "vt":
                if len(parts) < 3:
                    raise ValueError(f"{path}:{lineno}: malformed vt line")
                uvs_raw.append([float(parts[1]), float(parts[2])])
            elif tag == "f":
                if len(parts) != 4:
                    raise ValueError(
                        f"{path}:{lineno}: malformed face line "
                        f"(expected 3 corners, got {len(parts) - 1})")
                vid, tid = [], []
                for corner in parts[1:]:
                    fields = corner.split("/")
                    iv = int(fields[0])
                    if iv < 1:
                        raise ValueError(
                            f"{path}:{lineno}: face index out of range "
                            f"(OBJ indices are 1-based, got {iv})")
                    vid.append(iv - 1)
                    if len(fields) > 1 and fields[1]:
                        it = int(fields[1])
                        if it < 1:
                            raise ValueError(
                                f"{path}:{lineno}: face index out of range "
                                f"(OBJ indices are 1-based, got {it})")
                        tid.append(it - 1)
                    else:
                        tid.append(-1)
                faces.append(vid)
                face_uv_ids.append(tid)
            # ignore vn, o, g, s, usemtl, mtllib
    vertices = np.array(vertices, dtype=np.float64).reshape(-1, 3)
    faces_arr = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if faces_arr.size and faces_arr.max() >= len(vertices):
        raise ValueError(f"{path}: face index out of range")

    uvs = None
    tids = np.array(face_uv_ids, dtype=np.int64).reshape(-1, 3)
    if uvs_raw and np.any(tids >= 0):
        uvs_raw = np.array(uvs_raw, dtype=np.float64)
        if tids.max() >= len(uvs_raw):
            raise ValueError(f"{path}: face index out of range (vt)")
        uvs = np.zeros((len(vertices), 2))
        assigned = np.full(len(vertices), -1, dtype=np.int64)
        flat_v = faces_arr.ravel()
        flat_t = tids.ravel()
        for v, t in zip(flat_v, flat_t):
            if t < 0:
                continue
            if assigned[v] >= 0 and assigned[v] != t:
                raise ValueError(f"{path}: inconsistent per-vertex UVs "
                                 f"(vertex {v + 1})")
            assigned[v] = t
        has = assigned >= 0
        uvs[has] = uvs_raw[assigned[has]]
    return TriMesh(vertices, faces_arr, uvs=uvs)


def save_obj(mesh: TriMesh, path) -> None:
    """Write a mesh as OBJ (v/vt/f records, full float precision)."""
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        if mesh.uvs is not None:
            for t in mesh.uvs:
                fh.write(f"vt {t[0]:.17g} {t[1]:.17g}\n")
            for f in mesh.faces:
                fh.write(f"f {f[0] + 1}/{f[0] + 1} {f[1] + 1}/{f[1] + 1} "
                         f"{f[2] + 1}/{f[2] + 1}\n")
        else:
            for f in mesh.faces:
                fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# ----------------------------------------------------------------------
# Laplacians


def graph_laplacian(mesh: TriMesh) -> sparse.csr_matrix:
    """Uniform graph Laplacian L = D - A.

    A is the 0/1 vertex adjacency and D the diagonal degree matrix; row sums
    are exactly zero and isolated vertices yield zero rows.
    """
    adj = mesh.vertex_adjacency()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    return (sparse.diags(deg) - adj).tocsr()


def cotangent_laplacian(mesh: TriMesh) -> sparse.csr_matrix:
    """Cotangent stiffness matrix (positive semi-definite convention).

    L[i,j] = -(cot a + cot b)/2 for edge (i,j), diagonal makes rows sum to
    zero. Used by the heat-method geodesics, where cotangent weights are
    required.
    """
    v, f = mesh.vertices, mesh.faces
    n = mesh.n_vertices
    rows, cols, vals = [], [], []
    for c in range(3):
        i = f[:, (c + 1) % 3]
        j = f[:, (c + 2) % 3]
        k = f[:, c]
        a = v[i] - v[k]
        b = v[j] - v[k]
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        dot = np.einsum("ij,ij->i", a, b)
        cot = np.divide(dot, cross, out=np.zeros(len(f)), where=cross > 1e-300)
        w = 0.5 * cot
        rows.extend([i, j])
        cols.extend([j, i])
        vals.extend([-w, -w])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    L = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    L = L - sparse.diags(np.asarray(L.sum(axis=1)).ravel())
    return L.tocsr()


def lumped_mass_matrix(mesh: TriMesh) -> sparse.dia_matrix:
    """Diagonal barycentric mass matrix: a third of incident face area."""
    areas = mesh.face_areas()
    m = np.zeros(mesh.n_vertices)
    for c in range(3):
        np.add.at(m, mesh.faces[:, c], areas / 3.0)
    return sparse.diags(m)
