"""Procedural fixture meshes: tetrahedron, cube, icosphere, planar grid."""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh


def unit_tetrahedron() -> TriMesh:
    v = np.array([[0.0, 0.0, 0.0],
                  [1.0, 0.0, 0.0],
                  [0.0, 1.0, 0.0],
                  [0.0, 0.0, 1.0]])
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriMesh(v, f)


def cube(center=(0.0, 0.0, 0.0), size=1.0, face_centers=False) -> TriMesh:
    """Axis-aligned cube of edge length ``size``.

    With ``face_centers`` each face is a 4-triangle fan around an added
    center vertex, which puts an exactly-representable vertex at every face
    midpoint (useful for closed-form distance fixtures).
    """
    c = np.asarray(center, dtype=np.float64)
    h = size / 2.0
    corners = np.array([[x, y, z] for x in (-h, h) for y in (-h, h) for z in (-h, h)])
    # quads with outward CCW orientation, indexing the corner table above
    quads = np.array([
        [0, 1, 3, 2],   # -x
        [4, 6, 7, 5],   # +x
        [0, 4, 5, 1],   # -y
        [2, 3, 7, 6],   # +y
        [0, 2, 6, 4],   # -z
        [1, 5, 7, 3],   # +z
    ])
    if not face_centers:
        faces = []
        for q in quads:
            faces.append([q[0], q[1], q[2]])
            faces.append([q[0], q[2], q[3]])
        return TriMesh(corners + c, np.array(faces))
    verts = list(corners)
    faces = []
    for q in quads:
        mid = corners[q].mean(axis=0)
        m = len(verts)
        verts.append(mid)
        for k in range(4):
            faces.append([q[k], q[(k + 1) % 4], m])
    return TriMesh(np.array(verts) + c, np.array(faces))


def icosphere(subdivisions=2, radius=1.0) -> TriMesh:
    """Geodesic sphere from a subdivided icosahedron, vertices on the sphere."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    v /= np.linalg.norm(v, axis=1)[:, None]
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}
        verts = list(v)

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(m)
            return cache[key]

        new_f = []
        for a, b, c in f:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            new_f += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        v = np.array(verts)
        f = np.array(new_f, dtype=np.int64)
    return TriMesh(v * radius, f)


def grid_patch(nx=10, ny=10, size=1.0, origin=(0.0, 0.0, 0.0)) -> TriMesh:
    """Planar triangulated grid in the xy plane, (nx+1)(ny+1) vertices."""
    xs = np.linspace(0, size, nx + 1)
    ys = np.linspace(0, size, ny + 1)
    verts = np.array([[x, y, 0.0] for y in ys for x in xs]) + np.asarray(origin)
    faces = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b = a + 1
            c = a + nx + 1
            d = c + 1
            faces.append([a, b, d])
            faces.append([a, d, c])
    return TriMesh(verts, np.array(faces))
