"""Discrete surfaces (triangle meshes with fixed connectivity), their
elastic Sobolev metric and the quotient by reparametrizations."""

import numpy as np

from ..geometry import GeodesicPath, GeometryError, Manifold, RiemannianMetric
from ..quotient import (
    AlignerAlgorithm,
    AlignmentResult,
    FiberBundle,
    GroupAction,
    QuotientRecord,
    QuotientSpace,
    register_quotient,
)
from .geodesics import (
    DEFAULT_N_TIMES,
    PathResult,
    geodesic_bvp,
    geodesic_ivp,
    linear_path,
    path_energy,
    path_energy_and_grad,
    path_length,
    stencil_residual,
)
from .mesh import (
    AREA_EPSILON,
    MeshGeometry,
    TriangleMesh,
    compute_mesh_geometry,
    icosphere,
    laplace_beltrami,
    permute_vertices,
    rotation_about_axis,
    stiffness_matrix,
    subdivide,
    vertex_normals,
)
from .metric import (
    SurfaceMetricParams,
    one_form_decomposition,
    squared_norm_and_grads,
    surface_inner_product,
)
from .varifold import (
    RelaxationParams,
    VarifoldParams,
    mean_edge_length,
    relaxed_geodesic_bvp,
    varifold_distance,
    varifold_distance_and_grad,
)


class DiscreteSurfaces(Manifold):
    """Vertex positions (n x 3) of meshes sharing one face array."""

    kind = "discrete_surfaces"

    def __init__(self, faces, n_vertices=None, params=None):
        faces = np.asarray(faces)
        n_vertices = int(faces.max()) + 1 if n_vertices is None else n_vertices
        super().__init__(3 * n_vertices, (n_vertices, 3))
        self.faces = faces
        self.n_vertices = n_vertices
        self.equip_with_metric(ElasticSurfaceMetric(self, params))

    @classmethod
    def from_mesh(cls, mesh, params=None):
        return cls(mesh.faces, mesh.n_vertices, params)

    def mesh(self, point):
        return TriangleMesh(point, self.faces)

    def belongs(self, point, atol=None):
        try:
            self.mesh(point)
        except GeometryError:
            return False
        return np.shape(point) == self.shape

    def random_point(self, n_samples=1, seed=None):
        """Random smooth perturbations of the unit icosphere with these faces
        when the connectivity matches one; otherwise not available."""
        raise NotImplementedError("no canonical random surface for arbitrary connectivity")


class ElasticSurfaceMetric(RiemannianMetric):
    kind = "elastic_surfaces"

    def __init__(self, space, params=None, n_times=DEFAULT_N_TIMES, gtol=1e-8, max_iter=500):
        super().__init__(space)
        self.params = params or SurfaceMetricParams()
        self.n_times = n_times
        self.gtol = gtol
        self.max_iter = max_iter

    @property
    def faces(self):
        return self.space.faces

    def inner_product(self, tangent_vec_a, tangent_vec_b, base_point):
        return surface_inner_product(self.params, base_point, self.faces, tangent_vec_a, tangent_vec_b)

    def path_energy(self, path):
        return path_energy(self.params, path, self.faces)

    def geodesic_bvp(self, initial_point, end_point, n_times=None):
        return geodesic_bvp(self.params, initial_point, end_point, self.faces,
                            n_times or self.n_times, self.gtol, self.max_iter)

    def exp_path(self, tangent_vec, base_point, n_times=None):
        return geodesic_ivp(self.params, base_point, tangent_vec, self.faces, n_times or self.n_times)

    def exp(self, tangent_vec, base_point):
        return self.exp_path(tangent_vec, base_point)[-1]

    def log(self, point, base_point):
        result = self.geodesic_bvp(base_point, point)
        return (result.path.shape[0] - 1) * (result.path[1] - result.path[0])

    def dist(self, point_a, point_b):
        if np.array_equal(point_a, point_b):
            return 0.0
        result = self.geodesic_bvp(point_a, point_b)
        return path_length(self.params, result.path, self.faces)

    def geodesic(self, initial_point, end_point=None, initial_tangent_vec=None):
        """Piecewise-linear interpolation of the discrete geodesic."""
        if (end_point is None) == (initial_tangent_vec is None):
            raise ValueError("give exactly one of end_point or initial_tangent_vec")
        if end_point is not None:
            frames = self.geodesic_bvp(initial_point, end_point).path
        else:
            frames = self.exp_path(initial_tangent_vec, initial_point)
        grid = np.linspace(0.0, 1.0, len(frames))

        def evaluate(t):
            t = min(max(float(t), 0.0), 1.0)
            i = min(int(np.searchsorted(grid, t, side="right")) - 1, len(frames) - 2)
            s = (t - grid[i]) / (grid[i + 1] - grid[i])
            return (1 - s) * frames[i] + s * frames[i + 1]

        return GeodesicPath(evaluate, np.asarray(initial_point, dtype=float), end_point=end_point)


class SurfaceReparametrizationAction(GroupAction):
    """Reparametrizations of a mesh, represented infinitesimally by
    tangential vertex fields. Finite elements are not materialized; alignment
    goes through varifold-relaxed matching."""

    tag = "reparametrization"

    def __init__(self, space):
        self.space = space

    def vertical_basis(self, point):
        normals = vertex_normals(point, self.space.faces)
        basis = []
        helper = np.where(np.abs(normals[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
        t1 = np.cross(normals, helper)
        t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
        t2 = np.cross(normals, t1)
        for v in range(len(point)):
            for t in (t1, t2):
                vec = np.zeros_like(point)
                vec[v] = t[v]
                basis.append(vec)
        return basis

    def apply(self, element, point):
        raise NotImplementedError("surface reparametrizations act only through alignment")


class VarifoldAligner(AlignerAlgorithm):
    """Representative of ``point``'s shape in the base point's connectivity:
    endpoint of the varifold-relaxed geodesic from ``base_point``."""

    kind = "varifold_relaxed"

    def __init__(self, varifold_params=None, relaxation=None, target_faces=None):
        self.varifold_params = varifold_params or VarifoldParams()
        self.relaxation = relaxation or RelaxationParams(0.0, 100.0, 5)
        self.target_faces = target_faces

    def align_with_info(self, bundle, point, base_point):
        space = bundle.total_space
        target_faces = space.faces if self.target_faces is None else self.target_faces
        result = relaxed_geodesic_bvp(space.metric.params, self.varifold_params, self.relaxation,
                                      base_point, space.faces, point, target_faces)
        aligned = result.path[-1]
        return AlignmentResult(aligned, space.metric.dist(base_point, aligned),
                               [result.discrepancy], result.converged, len(result.energies))


def _surfaces_factory(space):
    bundle = FiberBundle(space, SurfaceReparametrizationAction(space), VarifoldAligner())
    quotient = QuotientSpace(space, bundle)
    return QuotientRecord(quotient, bundle, quotient.metric)


register_quotient("discrete_surfaces", "elastic_surfaces", ("reparametrization",), _surfaces_factory)
