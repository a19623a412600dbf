"""Manifolds, Riemannian metrics and the basic Riemannian operations.

Points and tangent vectors are plain numpy arrays whose shape is the
manifold's ``shape``. Metrics take the base point as an explicit argument;
:class:`TangentVector` and the module-level functions (:func:`exp`,
:func:`log`, ...) bundle a vector with its base point and validate it.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import root

MEMBERSHIP_ATOL = 1e-9
SPHERE_CUT_LOCUS_EPS = 1e-12


class GeometryError(ValueError):
    """Input does not satisfy the geometric preconditions of an operation."""


class CutLocusError(GeometryError):
    """The logarithm is undefined because the point lies on the cut locus."""


class ConvergenceError(RuntimeError):
    """A numerical solver failed; ``residual`` holds its final residual."""

    def __init__(self, message, residual=None, best=None):
        super().__init__(message)
        self.residual = residual
        self.best = best


class ConvergenceWarning(UserWarning):
    """An iterative method stopped before reaching its tolerance."""


def fd_step(x):
    """Central-difference step used throughout: 1e-6 * max(1, |x|)."""
    return 1e-6 * max(1.0, float(np.max(np.abs(x))) if np.size(x) else 1.0)


class Manifold:
    """Base class for a manifold whose points are arrays of shape ``shape``."""

    kind = None

    def __init__(self, dim, shape):
        shape = tuple(int(s) for s in shape)
        if dim < 0 or int(np.prod(shape)) < dim:
            raise ValueError(f"inconsistent dimension {dim} for point shape {shape}")
        self.dim = int(dim)
        self.shape = shape
        self.metric = None

    def equip_with_metric(self, metric):
        """Attach ``metric`` (an instance or a class taking the space)."""
        if isinstance(metric, type):
            metric = metric(self)
        self.metric = metric
        return self

    def equip_with_group_action(self, group_action):
        """Record the group(s) acting on this space, by name."""
        if isinstance(group_action, str):
            group_action = (group_action,)
        self.group_action_tags = tuple(group_action)
        return self

    def equip_with_quotient(self):
        """Build the fiber bundle and quotient space from the registry."""
        from .quotient import equip_with_quotient

        equip_with_quotient(self)
        return self

    def belongs(self, point, atol=MEMBERSHIP_ATOL):
        point = np.asarray(point)
        return point.shape == self.shape and bool(np.all(np.isfinite(point)))

    def projection(self, point):
        """Closest point of the manifold (identity for vector spaces)."""
        return np.asarray(point, dtype=float)

    def to_tangent(self, vector, base_point):
        """Project an ambient vector onto the tangent space at base_point."""
        return np.asarray(vector, dtype=float)

    def tangent_residual(self, vector, base_point):
        vector = np.asarray(vector, dtype=float)
        return float(np.linalg.norm(vector - self.to_tangent(vector, base_point)))

    def is_tangent(self, vector, base_point, atol=MEMBERSHIP_ATOL):
        vector = np.asarray(vector, dtype=float)
        if vector.shape != self.shape:
            return False
        scale = max(1.0, float(np.linalg.norm(vector)))
        return self.tangent_residual(vector, base_point) <= atol * scale

    def random_point(self, n_samples=1, seed=None):
        raise NotImplementedError

    def random_tangent_vec(self, base_point, n_samples=1, seed=None):
        rng = np.random.default_rng(seed)
        vecs = rng.standard_normal((n_samples,) + self.shape)
        out = np.stack([self.to_tangent(v, base_point) for v in vecs])
        return out[0] if n_samples == 1 else out


class Euclidean(Manifold):
    kind = "euclidean"

    def __init__(self, dim):
        super().__init__(dim, (dim,))
        self.equip_with_metric(EuclideanMetric)

    def random_point(self, n_samples=1, seed=None):
        rng = np.random.default_rng(seed)
        out = rng.uniform(-1.0, 1.0, (n_samples, self.dim))
        return out[0] if n_samples == 1 else out


class Hypersphere(Manifold):
    """Unit sphere S^dim embedded in R^(dim + 1)."""

    kind = "hypersphere"

    def __init__(self, dim):
        super().__init__(dim, (dim + 1,))
        self.equip_with_metric(HypersphereMetric)

    def belongs(self, point, atol=MEMBERSHIP_ATOL):
        if not super().belongs(point):
            return False
        return abs(np.linalg.norm(point) - 1.0) <= atol

    def projection(self, point):
        point = np.asarray(point, dtype=float)
        norm = np.linalg.norm(point)
        if norm == 0.0:
            raise GeometryError("cannot project the origin onto the sphere")
        return point / norm

    def to_tangent(self, vector, base_point):
        vector = np.asarray(vector, dtype=float)
        base_point = np.asarray(base_point, dtype=float)
        return vector - np.dot(vector, base_point) * base_point

    def random_point(self, n_samples=1, seed=None):
        rng = np.random.default_rng(seed)
        out = rng.standard_normal((n_samples, self.dim + 1))
        out /= np.linalg.norm(out, axis=1, keepdims=True)
        return out[0] if n_samples == 1 else out


class GeodesicPath:
    """Callable t -> point. Arrays of times give stacked points.

    t = 0 returns ``initial_point`` exactly, and t = 1 returns ``end_point``
    exactly when one is given."""

    def __init__(self, evaluator, initial_point, n_default_samples=10, end_point=None):
        self._evaluator = evaluator
        self.initial_point = np.asarray(initial_point, dtype=float)
        self.end_point = None if end_point is None else np.asarray(end_point, dtype=float)
        self.n_default_samples = n_default_samples

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if t_arr.ndim == 0:
            return self._eval(float(t_arr))
        return np.stack([self._eval(float(s)) for s in t_arr])

    def _eval(self, t):
        if t == 0.0:
            return self.initial_point.copy()
        if t == 1.0 and self.end_point is not None:
            return self.end_point.copy()
        return self._evaluator(t)

    def sample(self, n_samples=None):
        n_samples = n_samples or self.n_default_samples
        return self(np.linspace(0.0, 1.0, n_samples))


class RiemannianMetric:
    """Base Riemannian metric on ``space``.

    Subclasses provide at least :meth:`inner_product`; closed-form metrics
    also override :meth:`exp` and :meth:`log`.
    """

    kind = None

    def __init__(self, space):
        self.space = space

    def inner_product(self, tangent_vec_a, tangent_vec_b, base_point):
        raise NotImplementedError

    def squared_norm(self, vector, base_point):
        return self.inner_product(vector, vector, base_point)

    def norm(self, vector, base_point):
        return float(np.sqrt(max(self.squared_norm(vector, base_point), 0.0)))

    def exp(self, tangent_vec, base_point):
        raise NotImplementedError(f"{type(self).__name__} has no exponential map")

    def log(self, point, base_point):
        raise NotImplementedError(f"{type(self).__name__} has no logarithm map")

    def squared_dist(self, point_a, point_b):
        return self.dist(point_a, point_b) ** 2

    def dist(self, point_a, point_b):
        return self.norm(self.log(point_b, point_a), point_a)

    def geodesic(self, initial_point, end_point=None, initial_tangent_vec=None):
        if (end_point is None) == (initial_tangent_vec is None):
            raise ValueError("give exactly one of end_point or initial_tangent_vec")
        initial_point = np.asarray(initial_point, dtype=float)
        if end_point is not None:
            initial_tangent_vec = self.log(end_point, initial_point)
        initial_tangent_vec = np.asarray(initial_tangent_vec, dtype=float)
        return GeodesicPath(
            lambda t: self.exp(t * initial_tangent_vec, initial_point), initial_point,
            end_point=end_point,
        )

    def orthonormal_basis(self, base_point, atol=1e-10):
        """Orthonormal basis of the tangent space (Gram-Schmidt on projected
        canonical vectors)."""
        basis = []
        for idx in range(int(np.prod(self.space.shape))):
            vec = np.zeros(self.space.shape)
            vec.flat[idx] = 1.0
            vec = self.space.to_tangent(vec, base_point)
            for b in basis:
                vec = vec - self.inner_product(vec, b, base_point) * b
            norm = self.norm(vec, base_point)
            if norm > atol:
                basis.append(vec / norm)
            if len(basis) == self.space.dim:
                break
        return basis


class EuclideanMetric(RiemannianMetric):
    kind = "euclidean"

    def inner_product(self, tangent_vec_a, tangent_vec_b, base_point=None):
        return float(np.sum(np.asarray(tangent_vec_a) * np.asarray(tangent_vec_b)))

    def exp(self, tangent_vec, base_point):
        return np.asarray(base_point, dtype=float) + tangent_vec

    def log(self, point, base_point):
        return np.asarray(point, dtype=float) - base_point

    def dist(self, point_a, point_b):
        return float(np.linalg.norm(np.asarray(point_a, dtype=float) - point_b))


class HypersphereMetric(RiemannianMetric):
    """Round metric induced by the ambient Euclidean inner product."""

    kind = "round_sphere"

    def inner_product(self, tangent_vec_a, tangent_vec_b, base_point=None):
        return float(np.sum(np.asarray(tangent_vec_a) * np.asarray(tangent_vec_b)))

    def exp(self, tangent_vec, base_point):
        base_point = np.asarray(base_point, dtype=float)
        tangent_vec = np.asarray(tangent_vec, dtype=float)
        theta = np.linalg.norm(tangent_vec)
        if theta == 0.0:
            return base_point.copy()
        out = np.cos(theta) * base_point + np.sin(theta) / theta * tangent_vec
        return out / np.linalg.norm(out)

    def log(self, point, base_point):
        point = np.asarray(point, dtype=float)
        base_point = np.asarray(base_point, dtype=float)
        cos = float(np.dot(point, base_point))
        if cos < -1.0 + SPHERE_CUT_LOCUS_EPS:
            raise CutLocusError("log undefined at cut locus (antipodal points)")
        perp = point - cos * base_point
        sin = np.linalg.norm(perp)
        if sin == 0.0:
            return np.zeros_like(base_point)
        return np.arctan2(sin, cos) / sin * perp

    def dist(self, point_a, point_b):
        point_a = np.asarray(point_a, dtype=float)
        point_b = np.asarray(point_b, dtype=float)
        cos = float(np.dot(point_a, point_b))
        sin = np.linalg.norm(point_b - cos * point_a)
        return float(np.arctan2(sin, cos))


def christoffels(metric_matrix, chart_point, step=None):
    """Christoffel symbols Gamma[k, i, j] of a coordinate metric.

    ``metric_matrix`` maps a chart point (1d array) to the symmetric metric
    matrix there; derivatives are central finite differences.
    """
    x = np.asarray(chart_point, dtype=float)
    dim = x.size
    g = np.asarray(metric_matrix(x), dtype=float)
    if np.linalg.cond(g) > 1e12:
        raise GeometryError(f"metric matrix is singular at chart point {x}")
    g_inv = np.linalg.inv(g)
    h = fd_step(x) if step is None else step
    dg = np.empty((dim, dim, dim))  # dg[l, i, j] = d g_ij / d x^l
    for l in range(dim):
        e = np.zeros(dim)
        e[l] = h
        dg[l] = (np.asarray(metric_matrix(x + e)) - np.asarray(metric_matrix(x - e))) / (2 * h)
    # first kind: Gamma_{lij} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    first = 0.5 * (
        np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg
    )
    gamma = np.einsum("kl,lij->kij", g_inv, first)
    return 0.5 * (gamma + np.swapaxes(gamma, 1, 2))


class ChartMetric(RiemannianMetric):
    """Metric given by a matrix-valued function on a single coordinate chart.

    Geodesics are integrated from the geodesic equation with numerically
    differentiated Christoffel symbols; the log map is computed by shooting.
    """

    kind = "chart"

    def __init__(self, metric_matrix, dim):
        super().__init__(Euclidean(dim))
        self.metric_matrix = metric_matrix
        self.dim = dim

    def inner_product(self, tangent_vec_a, tangent_vec_b, base_point):
        g = np.asarray(self.metric_matrix(np.asarray(base_point, dtype=float)))
        return float(tangent_vec_a @ g @ tangent_vec_b)

    def christoffels(self, base_point):
        return christoffels(self.metric_matrix, base_point)

    def geodesic_equation(self, state):
        position, velocity = state[: self.dim], state[self.dim :]
        gamma = self.christoffels(position)
        accel = -np.einsum("kij,i,j->k", gamma, velocity, velocity)
        return np.concatenate([velocity, accel])

    def exp(self, tangent_vec, base_point):
        base_point = np.asarray(base_point, dtype=float)
        tangent_vec = np.asarray(tangent_vec, dtype=float)
        if not np.any(tangent_vec):
            return base_point.copy()
        sol = solve_ivp(
            lambda t, y: self.geodesic_equation(y),
            (0.0, 1.0),
            np.concatenate([base_point, tangent_vec]),
            rtol=1e-10,
            atol=1e-12,
        )
        if not sol.success:
            raise ConvergenceError(f"geodesic integration failed: {sol.message}")
        return sol.y[: self.dim, -1]

    def log(self, point, base_point):
        point = np.asarray(point, dtype=float)
        base_point = np.asarray(base_point, dtype=float)
        if np.array_equal(point, base_point):
            return np.zeros_like(base_point)
        sol = root(lambda v: self.exp(v, base_point) - point, point - base_point, tol=1e-12)
        residual = float(np.linalg.norm(self.exp(sol.x, base_point) - point))
        if residual > 1e-8:
            raise ConvergenceError("geodesic shooting did not converge", residual=residual)
        return sol.x


@dataclass(frozen=True)
class TangentVector:
    """A tangent vector tagged with its base point."""

    base_point: np.ndarray
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base_point", np.asarray(self.base_point, dtype=float))
        object.__setattr__(self, "components", np.asarray(self.components, dtype=float))
        if self.base_point.shape != self.components.shape:
            raise GeometryError(
                f"tangent vector shape {self.components.shape} does not match "
                f"base point shape {self.base_point.shape}"
            )


def _check_tangent(metric, vector):
    space = metric.space
    residual = space.tangent_residual(vector.components, vector.base_point)
    scale = max(1.0, float(np.linalg.norm(vector.components)))
    if residual > MEMBERSHIP_ATOL * scale:
        raise GeometryError(f"vector is not tangent at its base point (residual {residual:.3e})")


def inner_product(metric, v, w):
    """Inner product of two tangent vectors sharing a base point."""
    if not np.array_equal(v.base_point, w.base_point):
        raise GeometryError("tangent vectors have different base points")
    _check_tangent(metric, v)
    _check_tangent(metric, w)
    return metric.inner_product(v.components, w.components, v.base_point)


def exp(metric, v):
    _check_tangent(metric, v)
    if not np.any(v.components):
        return v.base_point.copy()
    return metric.exp(v.components, v.base_point)


def log(metric, point, base_point):
    base_point = np.asarray(base_point, dtype=float)
    return TangentVector(base_point, metric.log(point, base_point))


def dist(metric, point_a, point_b):
    return metric.dist(point_a, point_b)


def geodesic(metric, initial_point, initial_tangent=None, end_point=None):
    if isinstance(initial_tangent, TangentVector):
        _check_tangent(metric, initial_tangent)
        initial_tangent = initial_tangent.components
    return metric.geodesic(initial_point, end_point=end_point, initial_tangent_vec=initial_tangent)
