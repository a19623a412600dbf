import warnings

import numpy as np
import pytest

from shapeforge.geometry import ConvergenceWarning, CutLocusError, Euclidean, GeometryError, Hypersphere
from shapeforge.landmarks import kendall_space, project_to_preshape
from shapeforge.learning import (
    FrechetMean,
    FrechetMeanConfig,
    GeodesicRegression,
    frechet_mean,
    frechet_mean_with_info,
    geodesic_regression_fit,
    geodesic_regression_predict,
)

from oracles import ols_line

SPHERE = Hypersphere(2)


def sphere_geodesic_data(n=8, seed=0, speed=0.3):
    rng = np.random.default_rng([seed, 1])
    theta = SPHERE.random_point(seed=seed)
    phi = SPHERE.to_tangent(rng.standard_normal(3), theta)
    phi *= speed / np.linalg.norm(phi)
    X = np.sort(rng.uniform(-1.0, 1.0, n))
    y = np.stack([SPHERE.metric.exp(x * phi, theta) for x in X])
    return theta, phi, X, y


# -- Fréchet mean


def test_euclidean_mean_is_arithmetic_mean(rng):
    points = rng.standard_normal((30, 4))
    mean = frechet_mean(Euclidean(4).metric, points)
    assert np.max(np.abs(mean - points.mean(axis=0))) < 1e-12


def test_two_sphere_points_give_midpoint():
    p, q = np.eye(3)[:2]
    mean = frechet_mean(SPHERE.metric, [p, q])
    assert np.linalg.norm(mean - (p + q) / np.sqrt(2)) < 1e-8


def test_single_point_is_its_own_mean():
    p = SPHERE.random_point(seed=3)
    assert np.array_equal(frechet_mean(SPHERE.metric, [p]), p)


def test_kendall_triangle_mean_satisfies_gradient_condition(rng):
    space = kendall_space(3, 2)
    base = project_to_preshape(rng.standard_normal((3, 2)))
    shapes = [project_to_preshape(base + 0.2 * rng.standard_normal((3, 2))) for _ in range(20)]
    result = frechet_mean_with_info(space.metric, shapes)
    total = sum(space.metric.log(s, result.mean) for s in shapes)
    assert result.converged
    assert np.linalg.norm(total) < 1e-6


def sphere_cloud(rng, n, spread, center):
    return np.stack([SPHERE.metric.exp(spread * SPHERE.to_tangent(rng.standard_normal(3), center), center)
                     for _ in range(n)])


def test_mean_is_permutation_invariant(rng):
    points = sphere_cloud(rng, 12, 0.4, np.eye(3)[2])
    config = FrechetMeanConfig()
    first = frechet_mean(SPHERE.metric, points, config)
    second = frechet_mean(SPHERE.metric, points[rng.permutation(12)], config)
    assert np.linalg.norm(first - second) < config.tolerance


def test_output_gradient_below_ten_tolerances(rng):
    config = FrechetMeanConfig(tolerance=1e-9)
    points = sphere_cloud(rng, 10, 0.5, np.eye(3)[0])
    result = frechet_mean_with_info(SPHERE.metric, points, config)
    total = sum(SPHERE.metric.log(p, result.mean) for p in points)
    assert np.linalg.norm(total) < 10 * config.tolerance
    assert result.gradient_norm == result.history[-1]


def test_mean_config_validation():
    with pytest.raises(ValueError):
        FrechetMeanConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        FrechetMeanConfig(step_size=2.5)
    with pytest.raises(ValueError):
        frechet_mean(SPHERE.metric, np.zeros((0, 3)))


def test_non_convergence_warns_with_last_iterate(rng):
    points = sphere_cloud(rng, 6, 0.5, np.eye(3)[0])
    with pytest.warns(ConvergenceWarning, match="gradient norm"):
        result = frechet_mean_with_info(SPHERE.metric, points, FrechetMeanConfig(max_iterations=1, step_size=0.1))
    assert not result.converged
    assert SPHERE.belongs(result.mean)


def test_cut_locus_is_an_error():
    p = np.eye(3)[0]
    with pytest.raises(CutLocusError):
        frechet_mean(SPHERE.metric, [p, -p])


def test_estimator_wrapper(rng):
    points = rng.standard_normal((5, 2))
    est = FrechetMean(Euclidean(2).metric).fit(points)
    assert np.allclose(est.estimate_, points.mean(axis=0), atol=1e-12)
    assert est.converged_


# -- geodesic regression


def test_euclidean_line_recovers_ols(rng):
    X = rng.uniform(-2, 3, 10)
    a, b = rng.standard_normal(3), rng.standard_normal(3)
    y = a + X[:, None] * b
    model = geodesic_regression_fit(Euclidean(3).metric, X, y)
    oa, ob = ols_line(X, y)
    assert np.max(np.abs(model.intercept - oa)) < 1e-8
    assert np.max(np.abs(model.coef - ob)) < 1e-8


def test_noisy_euclidean_data_recovers_ols(rng):
    X = rng.uniform(0, 4, 15)
    y = 1.0 + X[:, None] * np.array([0.5, -1.0]) + 0.1 * rng.standard_normal((15, 2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = geodesic_regression_fit(Euclidean(2).metric, X, y)
    oa, ob = ols_line(X, y)
    assert np.max(np.abs(model.intercept - oa)) < 1e-8
    assert np.max(np.abs(model.coef - ob)) < 1e-8


def test_noiseless_sphere_geodesic_is_fitted():
    theta, phi, X, y = sphere_geodesic_data()
    reg = GeodesicRegression(SPHERE.metric).fit(X, y)
    assert reg.loss_ < 1e-10
    assert SPHERE.metric.dist(reg.intercept_, theta) < 1e-4
    assert abs(np.dot(reg.coef_, reg.intercept_)) < 1e-9
    assert np.all(np.diff(reg.losses_) <= 0)


def test_random_initialization_also_descends():
    _, _, X, y = sphere_geodesic_data(seed=4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        reg = GeodesicRegression(SPHERE.metric, initialization="random", seed=1, max_iter=50).fit(X, y)
    assert np.all(np.diff(reg.losses_) <= 0)
    assert reg.losses_[-1] < reg.losses_[0]


def test_predict_examples(rng):
    theta, phi, X, y = sphere_geodesic_data(seed=2)
    reg = GeodesicRegression(SPHERE.metric).fit(X, y)
    model = reg.model_
    assert np.array_equal(reg.predict(0.0)[0], model.intercept)
    at_train = reg.predict(X)
    for x, p in zip(X, at_train):
        assert np.array_equal(p, SPHERE.metric.exp(x * model.coef, model.intercept))
    flat = geodesic_regression_fit(Euclidean(2).metric, [0.0, 1.0, 2.0], [[0, 0], [1, 2], [2, 4]])
    assert np.allclose(geodesic_regression_predict(Euclidean(2).metric, flat, [1.0])[0],
                       flat.intercept + flat.coef, atol=0)


def test_predictions_are_arc_length_proportional():
    _, _, X, y = sphere_geodesic_data(seed=5)
    reg = GeodesicRegression(SPHERE.metric).fit(X, y)
    grid = np.linspace(-1, 1, 9)
    pts = reg.predict(grid)
    speed = np.linalg.norm(reg.coef_)
    for i in range(len(grid)):
        for j in range(i + 1, len(grid)):
            expected = abs(grid[j] - grid[i]) * speed
            assert abs(SPHERE.metric.dist(pts[i], pts[j]) - expected) < 1e-6


def test_centered_fit_predicts_the_same_curve():
    _, _, X, y = sphere_geodesic_data(seed=6)
    plain = GeodesicRegression(SPHERE.metric).fit(X, y)
    centered = GeodesicRegression(SPHERE.metric, center_X=True).fit(X + 5.0, y)
    assert centered.model_.mean_X == pytest.approx(np.mean(X + 5.0))
    assert np.allclose(centered.predict(X + 5.0), plain.predict(X), atol=1e-5)


def test_regression_input_errors():
    with pytest.raises(GeometryError, match="degenerate X"):
        geodesic_regression_fit(Euclidean(2).metric, [1.0, 1.0], [[0, 0], [1, 1]])
    with pytest.raises(ValueError):
        geodesic_regression_fit(Euclidean(2).metric, [1.0], [[0, 0]])
    with pytest.raises(ValueError):
        GeodesicRegression(Euclidean(2).metric, initialization="zero")
