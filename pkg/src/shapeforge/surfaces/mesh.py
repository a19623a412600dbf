"""Triangle meshes and their per-face / per-vertex geometry."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from ..geometry import GeometryError

AREA_EPSILON = 1e-12

# gradients of the three hat functions in the (u, v) parameter triangle
HAT_GRADIENTS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def validate_faces(faces, n_vertices):
    faces = np.asarray(faces)
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise GeometryError(f"faces must be an m x 3 index array, got shape {faces.shape}")
    if not np.issubdtype(faces.dtype, np.integer):
        if not np.all(faces == np.round(faces)):
            raise GeometryError("face indices must be integers")
        faces = faces.astype(np.int64)
    bad = np.flatnonzero((faces < 0).any(axis=1) | (faces >= n_vertices).any(axis=1))
    if bad.size:
        raise GeometryError(f"face {int(bad[0])} has an index outside [0, {n_vertices})")
    repeated = np.flatnonzero(
        (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
    )
    if repeated.size:
        raise GeometryError(f"face {int(repeated[0])} repeats a vertex")
    return faces.astype(np.int64)


def edge_frames(vertices, faces):
    """Edge vectors e1 = q1 - q0, e2 = q2 - q0 stacked as m x 3 x 2 arrays."""
    q = np.asarray(vertices, dtype=float)[..., faces, :]
    return np.stack([q[..., 1, :] - q[..., 0, :], q[..., 2, :] - q[..., 0, :]], axis=-1)


def check_face_areas(vertices, faces, eps=AREA_EPSILON):
    frames = edge_frames(vertices, faces)
    doubled = np.linalg.norm(np.cross(frames[..., 0], frames[..., 1]), axis=-1)
    bad = np.flatnonzero(np.atleast_1d(doubled <= eps).reshape(-1, len(faces)).any(axis=0))
    if bad.size:
        raise GeometryError(f"degenerate face {int(bad[0])}: area below {eps}")
    return 0.5 * doubled


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Vertices (n x 3) and faces (m x 3 vertex indices)."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise GeometryError(f"vertices must be n x 3, got shape {vertices.shape}")
        if not np.all(np.isfinite(vertices)):
            raise GeometryError("vertices contain NaN or inf")
        faces = validate_faces(self.faces, len(vertices))
        vertices.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)
        check_face_areas(vertices, faces)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def with_vertices(self, vertices):
        return TriangleMesh(vertices, self.faces)

    @cached_property
    def geometry(self):
        return compute_mesh_geometry(self)


@dataclass(frozen=True, eq=False)
class MeshGeometry:
    face_areas: np.ndarray
    face_normals: np.ndarray
    vertex_areas: np.ndarray
    face_metric: np.ndarray
    laplacian: sparse.csr_matrix


def face_areas_normals(vertices, faces):
    frames = edge_frames(vertices, faces)
    cross = np.cross(frames[..., 0], frames[..., 1])
    doubled = np.linalg.norm(cross, axis=-1)
    return 0.5 * doubled, cross / doubled[..., None]


def vertex_areas(face_areas, faces, n_vertices):
    return np.bincount(faces.ravel(), np.repeat(face_areas / 3.0, 3), minlength=n_vertices)


def stiffness_matrix(vertices, faces):
    """Cotangent stiffness matrix K (symmetric positive semi-definite).

    The Laplace-Beltrami operator is M^{-1} K with M the diagonal of vertex
    areas (up to sign convention)."""
    frames = edge_frames(vertices, faces)
    g = np.einsum("fki,fkj->fij", frames, frames)
    areas = 0.5 * np.sqrt(np.linalg.det(g))
    local = areas[:, None, None] * (HAT_GRADIENTS @ np.linalg.inv(g) @ HAT_GRADIENTS.T)
    rows = np.repeat(faces, 3, axis=1).ravel()
    cols = np.tile(faces, (1, 3)).ravel()
    n = len(vertices)
    return sparse.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def compute_mesh_geometry(mesh):
    vertices, faces = mesh.vertices, mesh.faces
    areas, normals = face_areas_normals(vertices, faces)
    frames = edge_frames(vertices, faces)
    return MeshGeometry(
        face_areas=areas,
        face_normals=normals,
        vertex_areas=vertex_areas(areas, faces, len(vertices)),
        face_metric=np.einsum("fki,fkj->fij", frames, frames),
        laplacian=stiffness_matrix(vertices, faces),
    )


def laplace_beltrami(mesh, field):
    """Discrete Laplacian M^{-1} K applied to a vertex field (n or n x c)."""
    geom = mesh.geometry
    field = np.asarray(field, dtype=float)
    out = geom.laplacian @ field
    return out / (geom.vertex_areas[:, None] if out.ndim == 2 else geom.vertex_areas)


def vertex_normals(vertices, faces):
    """Area-weighted vertex normals (unit length)."""
    frames = edge_frames(vertices, faces)
    cross = np.cross(frames[:, :, 0], frames[:, :, 1])
    normals = np.zeros((len(vertices), 3))
    for j in range(3):
        np.add.at(normals, faces[:, j], cross)
    return normals / np.linalg.norm(normals, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# mesh construction


def icosahedron():
    t = (1.0 + np.sqrt(5.0)) / 2.0
    vertices = np.array(
        [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
         [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
         [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], dtype=float)
    faces = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    return vertices / np.linalg.norm(vertices, axis=1, keepdims=True), faces


def subdivide(vertices, faces):
    """Split every triangle into four coplanar children (edge midpoints)."""
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces)
    edges = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
    unique, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    mids = 0.5 * (vertices[unique[:, 0]] + vertices[unique[:, 1]])
    n, m = len(vertices), len(faces)
    a, b, c = (inverse[i * m:(i + 1) * m] + n for i in range(3))
    v0, v1, v2 = faces.T
    new_faces = np.concatenate([
        np.stack([v0, a, c], axis=1),
        np.stack([v1, b, a], axis=1),
        np.stack([v2, c, b], axis=1),
        np.stack([a, b, c], axis=1),
    ])
    return np.vstack([vertices, mids]), new_faces


def icosphere(level=1, radius=1.0):
    """Icosahedron subdivided ``level`` times and projected onto a sphere."""
    vertices, faces = icosahedron()
    for _ in range(level):
        vertices, faces = subdivide(vertices, faces)
        vertices = vertices / np.linalg.norm(vertices, axis=1, keepdims=True)
    return TriangleMesh(radius * vertices, faces)


def permute_vertices(mesh, permutation):
    """Same geometry with vertex indices relabelled by ``permutation``."""
    permutation = np.asarray(permutation)
    inverse = np.empty_like(permutation)
    inverse[permutation] = np.arange(len(permutation))
    return TriangleMesh(mesh.vertices[permutation], inverse[mesh.faces])


def rotation_about_axis(axis, angle):
    from scipy.spatial.transform import Rotation

    axis = np.asarray(axis, dtype=float)
    return Rotation.from_rotvec(angle * axis / np.linalg.norm(axis)).as_matrix()
