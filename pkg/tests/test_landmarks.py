import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from shapeforge.geometry import GeometryError
from shapeforge.landmarks import (
    PreShapeSpace,
    kendall_dist,
    kendall_exp,
    kendall_log,
    kendall_rotation_align,
    kendall_space,
    kendall_vertical_projection,
    optimal_rotation,
    preshape_dist,
    preshape_exp,
    preshape_log,
    project_to_preshape,
    solve_sylvester,
)
from shapeforge.quotient import rotation_2d

from oracles import so2_grid_min_dist

seeds = st.integers(0, 2**32 - 1)


def random_preshape(rng, k=5, d=2):
    return project_to_preshape(rng.standard_normal((k, d)))


def random_rotation(rng, d):
    if d == 2:
        return rotation_2d(rng.uniform(0, 2 * np.pi))
    return Rotation.random(random_state=rng.integers(2**31)).as_matrix()


def assert_preshape(p):
    assert np.all(np.abs(p.sum(axis=0)) < 1e-10)
    assert abs(np.linalg.norm(p) - 1) < 1e-10


# -- pre-shapes


def test_project_triangle():
    p = project_to_preshape([[0, 0], [1, 0], [0, 1]])
    assert p.shape == (3, 2)
    assert_preshape(p)


def test_project_idempotent(rng):
    p = random_preshape(rng)
    assert np.allclose(project_to_preshape(p), p, atol=1e-12)


@given(seeds, st.floats(0.01, 100.0))
def test_project_similarity_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((4, 3))
    shift = rng.standard_normal(3) * 10
    assert np.allclose(project_to_preshape(scale * x + shift), project_to_preshape(x), atol=1e-10)


def test_project_rejects_coincident_and_bad_shapes():
    with pytest.raises(GeometryError, match="coincide"):
        project_to_preshape(np.ones((4, 2)))
    with pytest.raises(GeometryError, match="NaN"):
        project_to_preshape([[0, 0], [np.nan, 1]])
    with pytest.raises(GeometryError, match="k x d"):
        project_to_preshape([1.0, 2.0])


def test_preshape_metric_examples(rng):
    p, q = random_preshape(rng), random_preshape(rng)
    assert preshape_dist(p, p) == 0.0
    assert abs(preshape_dist(p, q) - np.arccos(np.clip(np.sum(p * q), -1, 1))) < 1e-10


@given(seeds)
def test_preshape_exp_log_roundtrip(seed):
    rng = np.random.default_rng(seed)
    space = PreShapeSpace(5, 2)
    p = random_preshape(rng)
    v = space.to_tangent(rng.standard_normal((5, 2)), p)
    v *= 0.5 / np.linalg.norm(v)
    q = preshape_exp(v, p)
    assert_preshape(q)
    assert np.linalg.norm(preshape_log(q, p) - v) < 1e-9


# -- rotation alignment


@pytest.mark.parametrize("d", [2, 3])
def test_align_recovers_rotated_copy(rng, d):
    base = random_preshape(rng, 6, d)
    rot = random_rotation(rng, d)
    point = base @ rot      # rows rotated by R^T
    assert np.allclose(kendall_rotation_align(point, base), base, atol=1e-10)


def test_align_identity(rng):
    p = random_preshape(rng, 5, 3)
    assert np.allclose(optimal_rotation(p, p), np.eye(3), atol=1e-12)
    assert np.allclose(kendall_rotation_align(p, p), p, atol=1e-12)


def test_align_rotation_is_proper(rng):
    p, q = random_preshape(rng, 6, 3), random_preshape(rng, 6, 3)
    rot = optimal_rotation(p, q)
    assert np.allclose(rot.T @ rot, np.eye(3), atol=1e-12)
    assert np.isclose(np.linalg.det(rot), 1.0)


@pytest.mark.parametrize("seed", range(3))
def test_align_matches_angle_grid(seed):
    rng = np.random.default_rng(seed)
    p, q = random_preshape(rng, 4), random_preshape(rng, 4)
    aligned = kendall_rotation_align(q, p)
    assert abs(preshape_dist(p, aligned) - so2_grid_min_dist(q, p, 10**6)) < 1e-5


# -- vertical and horizontal parts


def test_horizontal_vector_has_no_vertical_part(rng):
    space = PreShapeSpace(5, 3)
    p = random_preshape(rng, 5, 3)
    sym = rng.standard_normal((3, 3))
    sym = sym + sym.T
    w = space.to_tangent(p @ sym, p)        # p^T w symmetric
    w = w - kendall_vertical_projection(w, p)
    assert np.allclose(p.T @ w, (p.T @ w).T, atol=1e-12)
    assert np.linalg.norm(kendall_vertical_projection(w, p)) < 1e-10


def test_vertical_vector_is_fixed(rng):
    p = random_preshape(rng, 5, 3)
    a = rng.standard_normal((3, 3))
    a = a - a.T
    w = p @ a.T
    assert np.linalg.norm(kendall_vertical_projection(w, p) - w) < 1e-9


@given(seeds)
def test_sylvester_residual_and_orthogonality(seed):
    rng = np.random.default_rng(seed)
    space = PreShapeSpace(6, 3)
    p = random_preshape(rng, 6, 3)
    w = space.to_tangent(rng.standard_normal((6, 3)), p)
    a = solve_sylvester(p, w)
    s = p.T @ p
    assert np.linalg.norm(a @ s + s @ a - (w.T @ p - p.T @ w)) < 1e-10
    assert np.allclose(a, -a.T, atol=1e-12)
    vertical = kendall_vertical_projection(w, p)
    assert abs(np.sum(vertical * (w - vertical))) < 1e-9


def test_singular_shape_in_3d_is_an_error(rng):
    flat = np.column_stack([rng.standard_normal((5, 2)), np.zeros(5)])
    p = project_to_preshape(flat)
    w = PreShapeSpace(5, 3).to_tangent(rng.standard_normal((5, 3)), p)
    with pytest.raises(GeometryError, match="singular"):
        solve_sylvester(p, w)


# -- Kendall distance, exp and log


@pytest.mark.parametrize("d", [2, 3])
def test_kendall_dist_zero_on_orbit(rng, d):
    p = random_preshape(rng, 5, d)
    assert kendall_dist(p, p @ random_rotation(rng, d).T) < 1e-8


@given(seeds)
def test_kendall_dist_invariant_under_rotating_both(seed):
    rng = np.random.default_rng(seed)
    p, q = random_preshape(rng, 5, 3), random_preshape(rng, 5, 3)
    r1, r2 = random_rotation(rng, 3), random_rotation(rng, 3)
    assert abs(kendall_dist(p @ r1.T, q @ r2.T) - kendall_dist(p, q)) < 1e-8


@given(seeds, st.floats(0.1, 10), st.floats(0.1, 10))
def test_kendall_dist_similarity_invariant(seed, s1, s2):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
    t1, t2 = rng.standard_normal(2), rng.standard_normal(2)
    ref = kendall_dist(project_to_preshape(x), project_to_preshape(y))
    moved = kendall_dist(project_to_preshape(s1 * x + t1), project_to_preshape(s2 * y + t2))
    assert abs(moved - ref) < 1e-8


@pytest.mark.parametrize("seed", range(3))
def test_kendall_triangles_match_grid(seed):
    rng = np.random.default_rng(seed)
    p, q = random_preshape(rng, 3), random_preshape(rng, 3)
    assert abs(kendall_dist(p, q) - so2_grid_min_dist(q, p, 10**6)) < 1e-4


def test_horizontal_shooting_is_a_quotient_geodesic(rng):
    space = kendall_space(5, 3)
    p = random_preshape(rng, 5, 3)
    v = space.to_tangent(rng.standard_normal((5, 3)), p)
    v /= np.linalg.norm(v)
    for t in (0.1, 0.2, 0.3):
        assert abs(kendall_dist(p, kendall_exp(t * v, p)) - t) < 1e-5


def test_kendall_log_is_horizontal_and_lands_in_orbit(rng):
    space = kendall_space(6, 3)
    p, q = random_preshape(rng, 6, 3), random_preshape(rng, 6, 3)
    v = kendall_log(q, p)
    assert np.linalg.norm(kendall_vertical_projection(v, p)) < 1e-8
    assert kendall_dist(kendall_exp(v, p), q) < 1e-6
    assert np.allclose(kendall_log(p, p), 0.0, atol=1e-12)
    assert_preshape(kendall_exp(v, p))
    assert space.fiber_bundle.is_horizontal(v, p)


def test_kendall_space_dimension():
    assert kendall_space(5, 2).dim == 2 * 4 - 1 - 1
    assert kendall_space(5, 3).dim == 3 * 4 - 1 - 3
