"""Landmark sets, the pre-shape sphere and Kendall shape spaces.

Pre-shapes are k x d matrices with zero column barycenter and unit Frobenius
norm. The Kendall shape space is the quotient of the pre-shape sphere by
SO(d) acting on the rows.
"""

from functools import lru_cache

import numpy as np

from .geometry import GeometryError, HypersphereMetric, Manifold, RiemannianMetric
from .quotient import (
    AlignerAlgorithm,
    AlignmentResult,
    FiberBundle,
    GroupElement,
    QuotientRecord,
    QuotientSpace,
    RotationAction,
    register_quotient,
)

PRESHAPE_ATOL = 1e-10
SINGULAR_EIGEN_TOL = 1e-10
ALIGN_AMBIGUITY_TOL = 1e-12


def validate_configuration(points):
    """Check a k x d landmark matrix (k >= 2, d >= 1, finite)."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] < 2 or points.shape[1] < 1:
        raise GeometryError(f"landmark configuration must be k x d with k >= 2, got {points.shape}")
    if not np.all(np.isfinite(points)):
        raise GeometryError("landmark configuration contains NaN or inf")
    return points


class Landmarks(Manifold):
    """k landmarks in R^d with the flat Frobenius metric."""

    kind = "n_fold"

    def __init__(self, k_landmarks, ambient_dim):
        super().__init__(k_landmarks * ambient_dim, (k_landmarks, ambient_dim))
        self.k_landmarks = k_landmarks
        self.ambient_dim = ambient_dim
        from .geometry import EuclideanMetric

        self.equip_with_metric(EuclideanMetric)

    def random_point(self, n_samples=1, seed=None):
        rng = np.random.default_rng(seed)
        out = rng.standard_normal((n_samples,) + self.shape)
        return out[0] if n_samples == 1 else out


def project_to_preshape(points):
    """Center a configuration and scale it to unit Frobenius norm."""
    points = validate_configuration(points)
    centered = points - points.mean(axis=0)
    norm = np.linalg.norm(centered)
    if norm < 1e-300 or norm <= 1e-14 * max(1.0, np.abs(points).max()):
        raise GeometryError("degenerate configuration: all landmarks coincide")
    return centered / norm


class PreShapeSpace(Manifold):
    """Centered unit-norm k x d matrices, isometric to a round sphere."""

    kind = "pre_shape"

    def __init__(self, k_landmarks, ambient_dim):
        super().__init__(ambient_dim * (k_landmarks - 1) - 1, (k_landmarks, ambient_dim))
        self.k_landmarks = k_landmarks
        self.ambient_dim = ambient_dim
        self.equip_with_metric(PreShapeMetric)

    def belongs(self, point, atol=PRESHAPE_ATOL):
        point = np.asarray(point, dtype=float)
        if point.shape != self.shape or not np.all(np.isfinite(point)):
            return False
        centered = np.all(np.abs(point.sum(axis=0)) <= atol)
        return bool(centered and abs(np.linalg.norm(point) - 1.0) <= atol)

    def projection(self, point):
        return project_to_preshape(point)

    def to_tangent(self, vector, base_point):
        vector = np.asarray(vector, dtype=float)
        base_point = np.asarray(base_point, dtype=float)
        vector = vector - vector.mean(axis=0)
        return vector - np.sum(vector * base_point) * base_point

    def random_point(self, n_samples=1, seed=None):
        rng = np.random.default_rng(seed)
        out = np.stack(
            [project_to_preshape(x) for x in rng.standard_normal((n_samples,) + self.shape)]
        )
        return out[0] if n_samples == 1 else out


class PreShapeMetric(RiemannianMetric):
    """Spherical Procrustes metric: the round metric on flattened pre-shapes."""

    kind = "pre_shape"

    def __init__(self, space):
        super().__init__(space)
        self._sphere = HypersphereMetric(None)

    def inner_product(self, tangent_vec_a, tangent_vec_b, base_point=None):
        return float(np.sum(np.asarray(tangent_vec_a) * np.asarray(tangent_vec_b)))

    def exp(self, tangent_vec, base_point):
        base_point = np.asarray(base_point, dtype=float)
        out = self._sphere.exp(np.ravel(tangent_vec), base_point.ravel()).reshape(base_point.shape)
        # re-center against round-off drift; exp of a centered pair is centered
        out = out - out.mean(axis=0)
        return out / np.linalg.norm(out)

    def log(self, point, base_point):
        base_point = np.asarray(base_point, dtype=float)
        out = self._sphere.log(np.ravel(point), base_point.ravel()).reshape(base_point.shape)
        return out - out.mean(axis=0)

    def dist(self, point_a, point_b):
        return self._sphere.dist(np.ravel(point_a), np.ravel(point_b))


def optimal_rotation(point, base_point):
    """Rotation R in SO(d) minimising ||base_point - point R^T||_F.

    Raises when the optimum is not unique (Kendall singularity).
    """
    cross = np.asarray(base_point, dtype=float).T @ np.asarray(point, dtype=float)
    u, s, vt = np.linalg.svd(cross)
    d = cross.shape[0]
    sign = np.sign(np.linalg.det(u @ vt)) or 1.0
    signed = s.copy()
    signed[-1] *= sign
    # the optimum is unique unless the two smallest signed singular values cancel
    if d == 1:
        return np.eye(1)
    scale = max(s[0], 1e-300)
    if signed[-2] + signed[-1] <= ALIGN_AMBIGUITY_TOL * max(scale, 1.0):
        raise GeometryError("alignment at Kendall singularity: optimal rotation is not unique")
    fix = np.ones(d)
    fix[-1] = sign
    return (u * fix) @ vt


def kendall_rotation_align(point, base_point):
    """Rotate ``point`` onto ``base_point`` (SVD-based Procrustes in SO(d))."""
    point = np.asarray(point, dtype=float)
    rotation = optimal_rotation(point, base_point)
    return point @ rotation.T


def solve_sylvester(base_point, tangent_vec):
    """Skew matrix A with A S + S A = w^T p - p^T w, S = p^T p."""
    p = np.asarray(base_point, dtype=float)
    w = np.asarray(tangent_vec, dtype=float)
    d = p.shape[1]
    eigvals, eigvecs = np.linalg.eigh(p.T @ p)
    if d >= 3 and eigvals[0] < SINGULAR_EIGEN_TOL:
        raise GeometryError("Sylvester system singular at degenerate shape")
    rhs = w.T @ p - p.T @ w
    rhs_eig = eigvecs.T @ rhs @ eigvecs
    denom = eigvals[:, None] + eigvals[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        a_eig = np.where(denom > 0, rhs_eig / denom, 0.0)
    return eigvecs @ a_eig @ eigvecs.T


def kendall_vertical_projection(tangent_vec, base_point):
    a = solve_sylvester(base_point, tangent_vec)
    return np.asarray(base_point, dtype=float) @ a.T


class SVDRotationAligner(AlignerAlgorithm):
    kind = "closed_form_svd"

    def align_with_info(self, bundle, point, base_point):
        point = np.asarray(point, dtype=float)
        metric = bundle.total_space.metric
        rotation = optimal_rotation(point, base_point)
        aligned = point @ rotation.T
        initial = metric.dist(base_point, point)
        distance = metric.dist(base_point, aligned)
        return AlignmentResult(
            aligned, distance, [initial, distance], True, 1, GroupElement.rotation(rotation)
        )


class PreShapeBundle(FiberBundle):
    """Pre-shape sphere fibred over Kendall shape space by SO(d)."""

    def __init__(self, total_space):
        super().__init__(total_space, RotationAction(total_space.ambient_dim), SVDRotationAligner())

    def vertical_projection(self, tangent_vec, base_point):
        return kendall_vertical_projection(tangent_vec, base_point)


class KendallShapeSpace(QuotientSpace):
    kind = "kendall"

    def __init__(self, preshape, bundle=None):
        bundle = bundle or PreShapeBundle(preshape)
        d = preshape.ambient_dim
        super().__init__(preshape, bundle, preshape.dim - d * (d - 1) // 2)
        self.k_landmarks = preshape.k_landmarks
        self.ambient_dim = d


def _kendall_factory(space):
    bundle = PreShapeBundle(space)
    quotient = KendallShapeSpace(space, bundle)
    return QuotientRecord(quotient, bundle, quotient.metric)


register_quotient("pre_shape", "pre_shape", ("rotation",), _kendall_factory)


@lru_cache(maxsize=None)
def kendall_space(k_landmarks, ambient_dim):
    preshape = PreShapeSpace(k_landmarks, ambient_dim)
    preshape.equip_with_group_action("rotations")
    preshape.equip_with_quotient()
    return preshape.quotient


def _space_for(point):
    k, d = np.shape(point)
    return kendall_space(k, d)


def preshape_exp(tangent_vec, base_point):
    return _space_for(base_point).total_space.metric.exp(tangent_vec, base_point)


def preshape_log(point, base_point):
    return _space_for(base_point).total_space.metric.log(point, base_point)


def preshape_dist(point_a, point_b):
    return _space_for(point_a).total_space.metric.dist(point_a, point_b)


def kendall_dist(point_a, point_b):
    return _space_for(point_a).metric.dist(point_a, point_b)


def kendall_exp(tangent_vec, base_point):
    return _space_for(base_point).metric.exp(tangent_vec, base_point)


def kendall_log(point, base_point):
    return _space_for(base_point).metric.log(point, base_point)
