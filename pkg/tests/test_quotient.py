import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shapeforge.geometry import EuclideanMetric, GeometryError, Manifold
from shapeforge.landmarks import PreShapeSpace, kendall_space, kendall_vertical_projection, project_to_preshape
from shapeforge.quotient import (
    AlternatingAligner,
    FiberBundle,
    GradientAligner,
    GroupElement,
    QuotientRecord,
    QuotientSpace,
    RotationAction,
    ScalingAction,
    TranslationAction,
    lookup_quotient,
    register_quotient,
    registered_quotients,
    rotation_2d,
)

from oracles import so2_grid_min_euclidean

seeds = st.integers(0, 2**32 - 1)


class Matrices(Manifold):
    """k x d arrays with the Frobenius metric."""

    kind = "toy_matrices"

    def __init__(self, k, d):
        super().__init__(k * d, (k, d))
        self.equip_with_metric(EuclideanMetric)

    def random_point(self, n_samples=1, seed=None):
        out = np.random.default_rng(seed).standard_normal((n_samples,) + self.shape)
        return out[0] if n_samples == 1 else out


# -- group elements


def test_group_element_validation():
    with pytest.raises(GeometryError, match="orthogonal"):
        GroupElement.rotation([[1.0, 0.1], [0.0, 1.0]])
    with pytest.raises(GeometryError, match="determinant"):
        GroupElement.rotation(np.diag([1.0, -1.0]))
    with pytest.raises(GeometryError, match="positive"):
        GroupElement.scaling(0.0)
    with pytest.raises(GeometryError, match="endpoints"):
        GroupElement.reparametrization([0.1, 0.5, 1.0])
    with pytest.raises(GeometryError, match="increasing"):
        GroupElement.reparametrization([0.0, 0.6, 0.5, 1.0])
    with pytest.raises(ValueError, match="unknown group"):
        GroupElement("shear", np.eye(2))


def test_group_tags_accept_plurals():
    assert GroupElement("rotations", np.eye(3)).tag == "rotation"
    assert GroupElement("scalings", 2.0).tag == "scaling"


@given(seeds)
def test_group_axioms(seed):
    rng = np.random.default_rng(seed)
    point = rng.standard_normal((4, 3))
    for action in (RotationAction(3), TranslationAction(3), ScalingAction()):
        a = action.random_element(seed=rng.integers(2**31))
        b = action.random_element(seed=rng.integers(2**31))
        e = action.identity(point)
        assert np.allclose(action.apply(e, point), point, atol=1e-14)
        ab = action.compose(a, b)
        assert np.allclose(action.apply(ab, point), action.apply(a, action.apply(b, point)), atol=1e-12)


# -- registry


_TOY_FACTORY_CALLS = []


def _toy_factory(space):
    _TOY_FACTORY_CALLS.append(space)
    bundle = FiberBundle(space, RotationAction(space.shape[1]))
    quotient = QuotientSpace(space, bundle)
    return QuotientRecord(quotient, bundle, quotient.metric)


register_quotient("toy_matrices", "euclidean", ("rotations",), _toy_factory)


def test_registry_roundtrip_and_equip():
    assert lookup_quotient("toy_matrices", "euclidean", "rotation") is _toy_factory
    space = Matrices(4, 2)
    space.equip_with_group_action("rotations").equip_with_quotient()
    assert _TOY_FACTORY_CALLS[-1] is space
    assert isinstance(space.quotient, QuotientSpace)
    assert space.fiber_bundle.total_space is space


def test_registry_order_of_tags_does_not_matter():
    assert ("discrete_curves", "srv", ("reparametrization", "rotation")) in registered_quotients()
    a = lookup_quotient("discrete_curves", "srv", ("rotations", "reparametrizations"))
    b = lookup_quotient("discrete_curves", "srv", ("reparametrizations", "rotations"))
    assert a is b


def test_unknown_structure_raises_lookup_error():
    with pytest.raises(LookupError, match="no quotient registered"):
        lookup_quotient("toy_matrices", "euclidean", ("scaling",))
    with pytest.raises(ValueError, match="already registered"):
        register_quotient("toy_matrices", "euclidean", ("rotation",), _toy_factory)


def test_equip_without_group_is_an_error():
    with pytest.raises(GeometryError, match="group action"):
        Matrices(3, 2).equip_with_quotient()


# -- generic alignment


@pytest.mark.parametrize("seed", range(4))
def test_gradient_aligner_matches_angle_grid(seed):
    space = Matrices(5, 2)
    bundle = FiberBundle(space, RotationAction(2), GradientAligner())
    point, base = space.random_point(2, seed=seed)
    result = bundle.align_with_info(point, base)
    assert abs(result.distance - so2_grid_min_euclidean(point, base, 10**5)) < 1e-6
    assert np.allclose(result.point, RotationAction(2).apply(result.element, point), atol=1e-12)


def test_gradient_aligner_recovers_rotated_copy(rng):
    space = Matrices(6, 3)
    bundle = FiberBundle(space, RotationAction(3))
    base = space.random_point(seed=7)
    rot = RotationAction(3).random_element(seed=3)
    moved = RotationAction(3).apply(rot, base)
    assert np.linalg.norm(bundle.align(moved, base) - base) < 1e-6


def test_single_action_tuple_is_plain_bundle():
    space = Matrices(4, 2)
    bundle = FiberBundle(space, (RotationAction(2),))
    assert isinstance(bundle.group_action, RotationAction)
    assert isinstance(bundle.aligner, GradientAligner)
    with pytest.raises(ValueError):
        FiberBundle(space, ())


@pytest.mark.parametrize("seed", range(3))
def test_alternating_aligner_is_monotone_and_beats_each_group(seed):
    space = Matrices(5, 2)
    bundle = FiberBundle(space, (RotationAction(2), ScalingAction()))
    assert isinstance(bundle.aligner, AlternatingAligner)
    point, base = space.random_point(2, seed=seed)
    result = bundle.align_with_info(point, base)
    assert np.all(np.diff(result.distances) <= 1e-12)
    rot_only = FiberBundle(space, RotationAction(2)).align_with_info(point, base).distance
    scale_only = FiberBundle(space, ScalingAction()).align_with_info(point, base).distance
    assert result.distance <= min(rot_only, scale_only) + 1e-9


def test_translation_alignment_matches_centroid_shift(rng):
    space = Matrices(5, 3)
    bundle = FiberBundle(space, TranslationAction(3))
    point, base = space.random_point(2, seed=11)
    expected = point - point.mean(axis=0) + base.mean(axis=0)
    assert np.allclose(bundle.align(point, base), expected, atol=1e-6)


# -- projections


@given(seeds)
def test_vertical_horizontal_decomposition(seed):
    rng = np.random.default_rng(seed)
    space = Matrices(5, 3)
    bundle = FiberBundle(space, (RotationAction(3), TranslationAction(3)))
    p = rng.standard_normal((5, 3))
    w = rng.standard_normal((5, 3))
    ver = bundle.vertical_projection(w, p)
    hor = bundle.horizontal_projection(w, p)
    assert np.allclose(ver + hor, w, atol=1e-12)
    assert abs(np.sum(ver * hor)) < 1e-9
    assert np.allclose(bundle.vertical_projection(ver, p), ver, atol=1e-9)
    assert np.allclose(bundle.horizontal_projection(hor, p), hor, atol=1e-9)
    assert bundle.is_vertical(ver, p) and bundle.is_horizontal(hor, p)


@given(seeds)
def test_generic_projection_agrees_with_sylvester(seed):
    rng = np.random.default_rng(seed)
    space = PreShapeSpace(6, 3)
    p = project_to_preshape(rng.standard_normal((6, 3)))
    w = space.to_tangent(rng.standard_normal((6, 3)), p)
    generic = FiberBundle(space, RotationAction(3)).vertical_projection(w, p)
    assert np.linalg.norm(generic - kendall_vertical_projection(w, p)) < 1e-9


# -- quotient metric on Kendall shapes


@given(seeds)
def test_quotient_orbit_invariance(seed):
    rng = np.random.default_rng(seed)
    space = kendall_space(4, 2)
    p, q = (project_to_preshape(rng.standard_normal((4, 2))) for _ in range(2))
    ref = space.metric.dist(p, q)
    for _ in range(3):
        r = rotation_2d(rng.uniform(0, 2 * np.pi))
        assert abs(space.metric.dist(p, q @ r.T) - ref) < 1e-9
        assert abs(space.metric.dist(p @ r.T, q) - ref) < 1e-9


def test_quotient_triangle_inequality(rng):
    space = kendall_space(5, 3)
    for _ in range(50):
        a, b, c = (project_to_preshape(rng.standard_normal((5, 3))) for _ in range(3))
        m = space.metric
        assert m.dist(a, c) <= m.dist(a, b) + m.dist(b, c) + 1e-9


def test_quotient_inner_product_ignores_vertical_part(rng):
    space = kendall_space(5, 2)
    p = project_to_preshape(rng.standard_normal((5, 2)))
    v = space.to_tangent(rng.standard_normal((5, 2)), p)
    vertical = p @ np.array([[0.0, -1.0], [1.0, 0.0]]).T
    assert abs(space.metric.inner_product(v + vertical, v, p) - space.metric.inner_product(v, v, p)) < 1e-12


def test_quotient_orthonormal_basis_has_quotient_dimension(rng):
    space = kendall_space(5, 3)
    p = project_to_preshape(rng.standard_normal((5, 3)))
    basis = space.metric.orthonormal_basis(p)
    assert len(basis) == space.dim
    gram = np.array([[np.sum(a * b) for b in basis] for a in basis])
    assert np.allclose(gram, np.eye(space.dim), atol=1e-10)


def test_quotient_geodesic_endpoints(rng):
    space = kendall_space(5, 2)
    p, q = (project_to_preshape(rng.standard_normal((5, 2))) for _ in range(2))
    path = space.metric.geodesic(p, end_point=q)
    assert np.allclose(path(0.0), p)
    assert space.metric.dist(path(1.0), q) < 1e-8
    mid = path(0.5)
    assert abs(space.metric.dist(p, mid) - 0.5 * space.metric.dist(p, q)) < 1e-8
