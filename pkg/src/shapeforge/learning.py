"""Fréchet mean and geodesic regression on any space with a metric that
provides ``exp``, ``log`` and ``dist``."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import ConvergenceWarning, GeometryError


@dataclass(frozen=True)
class FrechetMeanConfig:
    max_iterations: int = 100
    step_size: float = 1.0
    tolerance: float = 1e-7

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.step_size <= 2:
            raise ValueError("step_size must lie in (0, 2]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class FrechetMeanResult:
    mean: np.ndarray
    gradient_norm: float
    n_iter: int
    converged: bool
    history: list = field(default_factory=list)


def frechet_mean_with_info(metric, points, config=None, initial_point=None):
    """Karcher flow m <- exp_m(step * mean_i log_m(x_i)).

    Stops once the norm of sum_i log_m(x_i) falls below the tolerance."""
    config = config or FrechetMeanConfig()
    points = np.asarray(points, dtype=float)
    if points.ndim < 1 or len(points) == 0:
        raise ValueError("need at least one point")
    if len(points) == 1:
        return FrechetMeanResult(points[0].copy(), 0.0, 0, True, [0.0])
    mean = points[0].copy() if initial_point is None else np.asarray(initial_point, dtype=float)
    history = []
    converged = False
    grad_norm = np.inf
    n_iter = 0
    for n_iter in range(1, config.max_iterations + 1):
        logs = np.stack([metric.log(x, mean) for x in points])
        total = logs.sum(axis=0)
        grad_norm = metric.norm(total, mean)
        history.append(grad_norm)
        if grad_norm < config.tolerance:
            converged = True
            n_iter -= 1
            break
        mean = metric.exp(config.step_size * total / len(points), mean)
    else:
        logs = np.stack([metric.log(x, mean) for x in points])
        grad_norm = metric.norm(logs.sum(axis=0), mean)
        history.append(grad_norm)
        converged = grad_norm < config.tolerance
    if not converged:
        warnings.warn(
            f"Fréchet mean stopped after {config.max_iterations} iterations "
            f"(gradient norm {grad_norm:.3e})",
            ConvergenceWarning,
        )
    return FrechetMeanResult(mean, float(grad_norm), n_iter, converged, history)


def frechet_mean(metric, points, config=None):
    return frechet_mean_with_info(metric, points, config).mean


class FrechetMean:
    """Estimator wrapper: ``FrechetMean(metric).fit(points).estimate_``."""

    def __init__(self, metric, config=None):
        self.metric = metric
        self.config = config or FrechetMeanConfig()

    def fit(self, points):
        result = frechet_mean_with_info(self.metric, points, self.config)
        self.estimate_ = result.mean
        self.gradient_norm_ = result.gradient_norm
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        return self


# ---------------------------------------------------------------------------
# geodesic regression


@dataclass
class GeodesicRegressionModel:
    intercept: np.ndarray
    coef: np.ndarray
    center_X: bool = False
    mean_X: float = 0.0
    loss: float = np.inf
    losses: list = field(default_factory=list)
    converged: bool = False
    method: str = "riemannian"
    initialization: str = "warm_start"


def _space_of(metric):
    return metric.space


class GeodesicRegression:
    """Fit X -> exp_theta(X * phi) to (scalar, point) pairs.

    Riemannian gradient descent on (theta, phi): gradients are central
    differences along an orthonormal tangent basis at theta, theta moves by
    the exponential map, and phi is projected back onto the tangent space
    at the new theta after each update. Steps follow a Barzilai-Borwein
    guess with Armijo backtracking; only decreasing steps are accepted.
    """

    def __init__(self, metric, center_X=False, max_iter=500, tol=1e-12,
                 initialization="warm_start", method="riemannian", seed=None):
        if initialization not in ("warm_start", "random"):
            raise ValueError("initialization must be 'warm_start' or 'random'")
        if method not in ("riemannian", "extrinsic-init"):
            raise ValueError("method must be 'riemannian' or 'extrinsic-init'")
        self.metric = metric
        self.space = _space_of(metric)
        self.center_X = center_X
        self.max_iter = max_iter
        self.tol = tol
        self.initialization = initialization
        self.method = method
        self.seed = seed

    # -- model evaluation
    def _predict(self, theta, phi, X):
        return np.stack([self.metric.exp(x * phi, theta) for x in X])

    def _loss(self, theta, phi, X, y):
        return float(sum(self.metric.squared_dist(p, t) for p, t in zip(self._predict(theta, phi, X), y)))

    def _to_tangent(self, vector, base_point):
        return self.space.to_tangent(vector, base_point)

    # -- initialization
    def _warm_start(self, X, y):
        order = np.argsort(X, kind="stable")
        lo, hi = order[0], order[-1]
        anchor_idx = order[(len(X) - 1) // 2]
        anchor, x_med = y[anchor_idx], X[anchor_idx]
        gap = X[hi] - X[lo]
        velocity = (self.metric.log(y[hi], anchor) - self.metric.log(y[lo], anchor)) / gap
        velocity = self._to_tangent(velocity, anchor)
        if x_med == 0:
            return anchor.copy(), velocity
        theta = self.metric.exp(-x_med * velocity, anchor)
        phi = self._to_tangent(self.metric.log(anchor, theta) / x_med, theta)
        return theta, phi

    def _random_start(self, X, y):
        rng = np.random.default_rng(self.seed)
        theta = y[rng.integers(len(y))].copy()
        basis = self.metric.orthonormal_basis(theta)
        phi = sum(c * b for c, b in zip(0.1 * rng.standard_normal(len(basis)), basis))
        return theta, self._to_tangent(phi, theta)

    # -- optimisation
    def _move(self, theta, phi, d_theta, d_phi):
        new_theta = self.metric.exp(d_theta, theta) if np.any(d_theta) else theta
        return new_theta, self._to_tangent(phi + d_phi, new_theta)

    def _gradient(self, theta, phi, X, y, basis):
        step = 1e-6 * max(1.0, float(np.max(np.abs(theta))))
        g_theta = np.zeros(len(basis))
        g_phi = np.zeros(len(basis))
        zero = np.zeros_like(theta)
        for j, b in enumerate(basis):
            plus = self._loss(*self._move(theta, phi, step * b, zero), X, y)
            minus = self._loss(*self._move(theta, phi, -step * b, zero), X, y)
            g_theta[j] = (plus - minus) / (2 * step)
            plus = self._loss(*self._move(theta, phi, zero, step * b), X, y)
            minus = self._loss(*self._move(theta, phi, zero, -step * b), X, y)
            g_phi[j] = (plus - minus) / (2 * step)
        return np.concatenate([g_theta, g_phi])

    def fit(self, X, y):
        X = np.asarray(X, dtype=float).ravel()
        y = np.asarray(y, dtype=float)
        if len(X) != len(y) or len(X) < 2:
            raise ValueError("need matching X and y with at least two samples")
        if np.ptp(X) == 0:
            raise GeometryError("degenerate X: all inputs are equal")
        mean_X = float(X.mean()) if self.center_X else 0.0
        Xc = X - mean_X
        if self.initialization == "warm_start":
            theta, phi = self._warm_start(Xc, y)
        else:
            theta, phi = self._random_start(Xc, y)
        loss = self._loss(theta, phi, Xc, y)
        losses = [loss]
        converged = False
        step_size = 1.0 / max(1.0, float(np.sum(Xc**2)))
        prev = None
        basis = self.metric.orthonormal_basis(theta)
        grad = self._gradient(theta, phi, Xc, y, basis)
        for _ in range(self.max_iter):
            if loss <= self.tol:
                converged = True
                break
            m = len(basis)
            if prev is not None:
                s, yk = prev
                denom = float(np.dot(s, yk))
                if denom > 0:
                    step_size = float(np.dot(s, s)) / denom
            accepted = False
            t = step_size
            for _ in range(40):
                d = -t * grad
                d_theta = sum(c * b for c, b in zip(d[:m], basis))
                d_phi = sum(c * b for c, b in zip(d[m:], basis))
                try:
                    cand_theta, cand_phi = self._move(theta, phi, d_theta, d_phi)
                    cand_loss = self._loss(cand_theta, cand_phi, Xc, y)
                except GeometryError:
                    cand_loss = np.inf
                if cand_loss <= loss - 1e-4 * t * float(np.dot(grad, grad)) and cand_loss < loss:
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                converged = np.linalg.norm(grad) < 1e-8 or loss <= self.tol
                break
            # the BB secant pairs coordinates in the old and new frames by index
            new_basis = self.metric.orthonormal_basis(cand_theta)
            new_grad = self._gradient(cand_theta, cand_phi, Xc, y, new_basis)
            prev = (-t * grad, new_grad - grad) if len(new_basis) == m else None
            theta, phi, loss = cand_theta, cand_phi, cand_loss
            basis, grad = new_basis, new_grad
            losses.append(loss)
        else:
            converged = loss <= self.tol
        if not converged:
            warnings.warn(f"geodesic regression stopped with loss {loss:.3e}", ConvergenceWarning)
        self.model_ = GeodesicRegressionModel(theta, phi, self.center_X, mean_X, loss, losses,
                                              converged, self.method, self.initialization)
        self.intercept_, self.coef_ = theta, phi
        self.loss_, self.losses_ = loss, losses
        return self

    def predict(self, X_new):
        return geodesic_regression_predict(self.metric, self.model_, X_new)


def geodesic_regression_fit(metric, X, y, **options):
    return GeodesicRegression(metric, **options).fit(X, y).model_


def geodesic_regression_predict(metric, model, X_new):
    X_new = np.atleast_1d(np.asarray(X_new, dtype=float)) - model.mean_X
    return np.stack([metric.exp(x * model.coef, model.intercept) for x in X_new])
