"""Group actions, fiber bundles, aligners and quotient metrics.

Points of a quotient space are represented by representatives in the total
space, so a quotient metric is a thin layer over the total-space metric:
distances align one representative onto the other, the exponential shoots
along horizontal vectors and the logarithm aligns before taking the
total-space logarithm.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation as _ScipyRotation

from .geometry import ConvergenceWarning, GeometryError, RiemannianMetric

ORTHO_ATOL = 1e-10

_TAG_ALIASES = {
    "rotation": "rotation",
    "rotations": "rotation",
    "translation": "translation",
    "translations": "translation",
    "scaling": "scaling",
    "scalings": "scaling",
    "reparametrization": "reparametrization",
    "reparametrizations": "reparametrization",
}


def normalize_tag(tag):
    try:
        return _TAG_ALIASES[tag]
    except KeyError:
        raise ValueError(f"unknown group {tag!r}") from None


@dataclass(frozen=True, eq=False)
class GroupElement:
    """Element of one of the shape groups.

    ``payload`` is a d x d rotation matrix, a translation vector, a positive
    scale, or the grid values of a discrete reparametrization.
    """

    tag: str
    payload: object

    def __post_init__(self):
        tag = normalize_tag(self.tag)
        object.__setattr__(self, "tag", tag)
        if tag == "scaling":
            value = float(self.payload)
            if not value > 0:
                raise GeometryError(f"scaling must be positive, got {value}")
            object.__setattr__(self, "payload", value)
            return
        payload = np.asarray(self.payload, dtype=float)
        object.__setattr__(self, "payload", payload)
        if tag == "rotation":
            d = payload.shape[0]
            if payload.shape != (d, d):
                raise GeometryError("rotation payload must be square")
            if not np.allclose(payload.T @ payload, np.eye(d), atol=ORTHO_ATOL, rtol=0):
                raise GeometryError("rotation payload is not orthogonal")
            if abs(np.linalg.det(payload) - 1.0) > ORTHO_ATOL:
                raise GeometryError("rotation payload has determinant != 1")
        elif tag == "reparametrization":
            if payload.ndim != 1 or payload.size < 2:
                raise GeometryError("reparametrization payload must be a 1d grid")
            if payload[0] != 0.0 or payload[-1] != 1.0:
                raise GeometryError("reparametrization must fix the endpoints 0 and 1")
            if np.any(np.diff(payload) <= 0):
                raise GeometryError("reparametrization must be strictly increasing")

    @classmethod
    def rotation(cls, matrix):
        return cls("rotation", matrix)

    @classmethod
    def translation(cls, vector):
        return cls("translation", vector)

    @classmethod
    def scaling(cls, factor):
        return cls("scaling", factor)

    @classmethod
    def reparametrization(cls, grid_values):
        return cls("reparametrization", grid_values)


def rotation_2d(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def skew_basis(d):
    basis = []
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros((d, d))
            e[i, j], e[j, i] = -1.0, 1.0
            basis.append(e)
    return basis


class GroupAction:
    """Action of a group on arrays of row points (k x d)."""

    tag = None

    def apply(self, element, point):
        raise NotImplementedError

    def compose(self, element_a, element_b):
        """Element acting as ``element_a`` after ``element_b``."""
        raise NotImplementedError

    def identity(self, point):
        raise NotImplementedError

    def vertical_basis(self, point):
        """Infinitesimal generators of the orbit through ``point``."""
        raise NotImplementedError

    # chart used by gradient-based alignment
    chart_dim = 0

    def chart(self, params, point):
        raise NotImplementedError

    def chart_starts(self):
        return [np.zeros(self.chart_dim)]


class RotationAction(GroupAction):
    """SO(d) acting by left multiplication on each row point."""

    tag = "rotation"

    def __init__(self, dim):
        self.dim = dim
        self.chart_dim = dim * (dim - 1) // 2

    def apply(self, element, point):
        return np.asarray(point, dtype=float) @ element.payload.T

    def compose(self, element_a, element_b):
        return GroupElement.rotation(element_a.payload @ element_b.payload)

    def identity(self, point=None):
        return GroupElement.rotation(np.eye(self.dim))

    def random_element(self, seed=None):
        rng = np.random.default_rng(seed)
        q, r = np.linalg.qr(rng.standard_normal((self.dim, self.dim)))
        q = q * np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        return GroupElement.rotation(q)

    def vertical_basis(self, point):
        point = np.asarray(point, dtype=float)
        return [point @ e.T for e in skew_basis(self.dim)]

    def chart(self, params, point=None):
        if self.dim == 2:
            return GroupElement.rotation(rotation_2d(params[0]))
        if self.dim == 3:
            return GroupElement.rotation(_ScipyRotation.from_rotvec(params).as_matrix())
        raise NotImplementedError("rotation chart only for d = 2, 3")

    def chart_starts(self):
        if self.dim == 2:
            return [np.array([a]) for a in np.linspace(-np.pi, np.pi, 12, endpoint=False)]
        if self.dim == 3:
            starts = [np.zeros(3)]
            for axis in np.eye(3):
                starts += [0.5 * np.pi * axis, np.pi * axis]
            return starts
        return super().chart_starts()


class TranslationAction(GroupAction):
    tag = "translation"

    def __init__(self, dim):
        self.dim = dim
        self.chart_dim = dim

    def apply(self, element, point):
        return np.asarray(point, dtype=float) + element.payload

    def compose(self, element_a, element_b):
        return GroupElement.translation(element_a.payload + element_b.payload)

    def identity(self, point=None):
        return GroupElement.translation(np.zeros(self.dim))

    def random_element(self, seed=None):
        return GroupElement.translation(np.random.default_rng(seed).standard_normal(self.dim))

    def vertical_basis(self, point):
        point = np.asarray(point, dtype=float)
        basis = []
        for i in range(self.dim):
            v = np.zeros_like(point)
            v[..., i] = 1.0
            basis.append(v)
        return basis

    def chart(self, params, point=None):
        return GroupElement.translation(np.asarray(params, dtype=float))


class ScalingAction(GroupAction):
    tag = "scaling"
    chart_dim = 1

    def apply(self, element, point):
        return element.payload * np.asarray(point, dtype=float)

    def compose(self, element_a, element_b):
        return GroupElement.scaling(element_a.payload * element_b.payload)

    def identity(self, point=None):
        return GroupElement.scaling(1.0)

    def random_element(self, seed=None):
        return GroupElement.scaling(np.exp(np.random.default_rng(seed).standard_normal()))

    def vertical_basis(self, point):
        return [np.asarray(point, dtype=float).copy()]

    def chart(self, params, point=None):
        return GroupElement.scaling(np.exp(params[0]))


@dataclass
class AlignmentResult:
    point: np.ndarray
    distance: float
    distances: list = field(default_factory=list)
    converged: bool = True
    n_iter: int = 0
    element: object = None


class AlignerAlgorithm:
    """Strategy computing the best orbit representative for a bundle."""

    kind = None

    def align(self, bundle, point, base_point):
        return self.align_with_info(bundle, point, base_point).point

    def align_with_info(self, bundle, point, base_point):
        raise NotImplementedError


class GradientAligner(AlignerAlgorithm):
    """Quasi-Newton minimisation of the squared total-space distance over a
    chart of a finite-dimensional group (angle for SO(2), rotation vector for
    SO(3))."""

    kind = "gradient"

    def __init__(self, tol=1e-10, max_iter=200):
        self.tol = tol
        self.max_iter = max_iter

    def align_with_info(self, bundle, point, base_point):
        action = bundle.group_action
        metric = bundle.total_space.metric
        point = np.asarray(point, dtype=float)

        def objective(params):
            moved = action.apply(action.chart(params, point), point)
            return metric.squared_dist(base_point, moved)

        best = None
        for start in action.chart_starts():
            res = minimize(objective, start, method="BFGS", options={"gtol": self.tol, "maxiter": self.max_iter})
            if best is None or res.fun < best.fun:
                best = res
        initial = metric.dist(base_point, point)
        element = action.chart(best.x, point)
        aligned = action.apply(element, point)
        distance = metric.dist(base_point, aligned)
        if distance > initial:
            aligned, distance, element = point.copy(), initial, action.identity(point)
        return AlignmentResult(aligned, distance, [initial, distance], True, best.nit, element)


class AlternatingAligner(AlignerAlgorithm):
    """Cycles through single-group aligners until the distance to the base
    point stops decreasing."""

    kind = "alternating"

    def __init__(self, max_iter=20, tol=1e-8):
        self.max_iter = max_iter
        self.tol = tol

    def align_with_info(self, bundle, point, base_point):
        metric = bundle.total_space.metric
        current = np.asarray(point, dtype=float)
        distance = metric.dist(base_point, current)
        distances = [distance]
        converged = False
        n_iter = 0
        for n_iter in range(1, self.max_iter + 1):
            previous = distance
            for sub in bundle.sub_bundles:
                candidate = sub.align(current, base_point)
                cand_dist = metric.dist(base_point, candidate)
                if cand_dist < distance:
                    current, distance = candidate, cand_dist
            distances.append(distance)
            if previous - distance <= self.tol * max(previous, 1e-300):
                converged = True
                break
        if not converged:
            warnings.warn(
                f"alternating alignment stopped after {self.max_iter} sweeps "
                f"(distance {distance:.3e})",
                ConvergenceWarning,
            )
        return AlignmentResult(current, distance, distances, converged, n_iter)


class FiberBundle:
    """Total space equipped with a group action (or a tuple of actions)."""

    def __init__(self, total_space, group_action, aligner=None):
        self.total_space = total_space
        if isinstance(group_action, (tuple, list)):
            actions = tuple(group_action)
            if len(actions) == 0:
                raise ValueError("need at least one group action")
        else:
            actions = (group_action,)
        self.group_actions = actions
        self.group_action = actions[0] if len(actions) == 1 else actions
        self.sub_bundles = ()
        if len(actions) > 1:
            aligners = aligner if isinstance(aligner, (tuple, list)) else (None,) * len(actions)
            self.sub_bundles = tuple(
                type(self)._sub_bundle(total_space, act, al) for act, al in zip(actions, aligners)
            )
            aligner = AlternatingAligner()
        self.aligner = aligner if aligner is not None else GradientAligner()

    @staticmethod
    def _sub_bundle(total_space, action, aligner):
        return FiberBundle(total_space, action, aligner)

    @property
    def metric(self):
        return self.total_space.metric

    def riemannian_submersion(self, point):
        return np.asarray(point, dtype=float)

    def lift(self, point):
        return np.asarray(point, dtype=float)

    def align(self, point, base_point):
        return self.aligner.align(self, point, base_point)

    def align_with_info(self, point, base_point):
        return self.aligner.align_with_info(self, point, base_point)

    def vertical_basis(self, base_point):
        basis = []
        for action in self.group_actions:
            basis.extend(action.vertical_basis(base_point))
        return [self.total_space.to_tangent(v, base_point) for v in basis]

    def vertical_projection(self, tangent_vec, base_point):
        basis = self.vertical_basis(base_point)
        metric = self.metric
        gram = np.array([[metric.inner_product(a, b, base_point) for b in basis] for a in basis])
        rhs = np.array([metric.inner_product(a, tangent_vec, base_point) for a in basis])
        coefs = np.linalg.lstsq(gram, rhs, rcond=1e-12)[0]
        return sum(c * b for c, b in zip(coefs, basis))

    def horizontal_projection(self, tangent_vec, base_point):
        tangent_vec = np.asarray(tangent_vec, dtype=float)
        return tangent_vec - self.vertical_projection(tangent_vec, base_point)

    def is_vertical(self, tangent_vec, base_point, atol=1e-9):
        residual = self.horizontal_projection(tangent_vec, base_point)
        return self.metric.norm(residual, base_point) <= atol

    def is_horizontal(self, tangent_vec, base_point, atol=1e-9):
        residual = self.vertical_projection(tangent_vec, base_point)
        return self.metric.norm(residual, base_point) <= atol

    def horizontal_lift(self, tangent_vec, base_point):
        return self.horizontal_projection(tangent_vec, base_point)

    def tangent_riemannian_submersion(self, tangent_vec, base_point):
        return self.horizontal_projection(tangent_vec, base_point)


class QuotientMetric(RiemannianMetric):
    """Quotient metric computed through a fiber bundle on representatives."""

    kind = "quotient"

    def __init__(self, space, fiber_bundle):
        super().__init__(space)
        self.fiber_bundle = fiber_bundle

    @property
    def total_metric(self):
        return self.fiber_bundle.total_space.metric

    def inner_product(self, tangent_vec_a, tangent_vec_b, base_point):
        bundle = self.fiber_bundle
        h_a = bundle.horizontal_projection(tangent_vec_a, base_point)
        h_b = bundle.horizontal_projection(tangent_vec_b, base_point)
        return self.total_metric.inner_product(h_a, h_b, base_point)

    def exp(self, tangent_vec, base_point):
        horizontal = self.fiber_bundle.horizontal_projection(tangent_vec, base_point)
        return self.total_metric.exp(horizontal, base_point)

    def log(self, point, base_point):
        aligned = self.fiber_bundle.align(point, base_point)
        return self.total_metric.log(aligned, base_point)

    def dist(self, point_a, point_b):
        aligned = self.fiber_bundle.align(point_b, point_a)
        return self.total_metric.dist(point_a, aligned)

    def squared_dist(self, point_a, point_b):
        return self.dist(point_a, point_b) ** 2

    def geodesic(self, initial_point, end_point=None, initial_tangent_vec=None):
        """Horizontal geodesic of the total space; with an end point, it ends
        at the representative of ``end_point`` aligned to ``initial_point``."""
        if (end_point is None) == (initial_tangent_vec is None):
            raise ValueError("give exactly one of end_point or initial_tangent_vec")
        if end_point is not None:
            aligned = self.fiber_bundle.align(end_point, initial_point)
            return self.total_metric.geodesic(initial_point, end_point=aligned)
        horizontal = self.fiber_bundle.horizontal_projection(initial_tangent_vec, initial_point)
        return self.total_metric.geodesic(initial_point, initial_tangent_vec=horizontal)

    def orthonormal_basis(self, base_point, atol=1e-10):
        total = self.total_metric.orthonormal_basis(base_point, atol)
        basis = []
        for vec in total:
            vec = self.fiber_bundle.horizontal_projection(vec, base_point)
            for b in basis:
                vec = vec - self.total_metric.inner_product(vec, b, base_point) * b
            norm = self.total_metric.norm(vec, base_point)
            if norm > 1e-8:
                basis.append(vec / norm)
        return basis


class QuotientSpace:
    """Quotient manifold whose points are total-space representatives."""

    kind = "quotient"

    def __init__(self, total_space, fiber_bundle, dim=None):
        self.total_space = total_space
        self.fiber_bundle = fiber_bundle
        self.shape = total_space.shape
        self.dim = total_space.dim if dim is None else dim
        self.metric = QuotientMetric(self, fiber_bundle)

    def belongs(self, point, atol=1e-9):
        return self.total_space.belongs(point, atol)

    def projection(self, point):
        return self.total_space.projection(point)

    def to_tangent(self, vector, base_point):
        vector = self.total_space.to_tangent(vector, base_point)
        return self.fiber_bundle.horizontal_projection(vector, base_point)

    def tangent_residual(self, vector, base_point):
        vector = np.asarray(vector, dtype=float)
        return float(np.linalg.norm(vector - self.to_tangent(vector, base_point)))

    def random_point(self, n_samples=1, seed=None):
        return self.total_space.random_point(n_samples, seed)


@dataclass
class QuotientRecord:
    base_space: object
    fiber_bundle: FiberBundle
    metric: QuotientMetric


_REGISTRY = {}


def _key(space_kind, metric_kind, group_tags):
    if isinstance(group_tags, str):
        group_tags = (group_tags,)
    return (space_kind, metric_kind, tuple(sorted(normalize_tag(t) for t in group_tags)))


def register_quotient(space_kind, metric_kind, group_tags, factory):
    """Register ``factory(space) -> QuotientRecord`` for a structure triple."""
    key = _key(space_kind, metric_kind, group_tags)
    if key in _REGISTRY:
        raise ValueError(f"quotient structure already registered for {key}")
    _REGISTRY[key] = factory


def registered_quotients():
    return sorted(_REGISTRY)


def lookup_quotient(space_kind, metric_kind, group_tags):
    key = _key(space_kind, metric_kind, group_tags)
    try:
        return _REGISTRY[key]
    except KeyError:
        known = ", ".join(str(k) for k in registered_quotients())
        raise LookupError(f"no quotient registered for {key}; registered: {known}") from None


def equip_with_quotient(space):
    """Resolve the space's (kind, metric kind, group actions) triple and attach
    ``fiber_bundle`` and ``quotient`` to the space."""
    tags = getattr(space, "group_action_tags", None)
    if not tags:
        raise GeometryError("space has no group action; call equip_with_group_action first")
    factory = lookup_quotient(space.kind, space.metric.kind, tags)
    record = factory(space)
    space.fiber_bundle = record.fiber_bundle
    space.quotient = record.base_space
    return record
