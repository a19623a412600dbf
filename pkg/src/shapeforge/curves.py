"""Discrete open curves, the SRV transform, elastic metrics and curve
alignment in rotations and reparametrizations.

A discrete curve is a k x d array of samples at uniform parameter values
u_i = i / (k - 1). Curves of :class:`DiscreteCurves` with
``starting_at_origin=True`` are stored without their first sample (which is
the origin); the functions below that take a "full" curve expect all k
samples.
"""

import warnings

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import minimize

from .geometry import (
    ConvergenceWarning,
    GeodesicPath,
    GeometryError,
    Manifold,
    RiemannianMetric,
)
from .landmarks import optimal_rotation
from .quotient import (
    AlignerAlgorithm,
    AlignmentResult,
    FiberBundle,
    GroupAction,
    GroupElement,
    QuotientRecord,
    QuotientSpace,
    RotationAction,
    register_quotient,
)


# ---------------------------------------------------------------------------
# full-curve helpers


def _velocities(curve):
    curve = np.asarray(curve, dtype=float)
    return np.diff(curve, axis=0) * (curve.shape[0] - 1)


# warps that shrink a segment below this fraction of the fastest one are
# rejected by the DP aligner; repeated alignment would otherwise collapse it
MIN_RELATIVE_SPEED = 1e-8


def _well_immersed(curve):
    speeds = np.linalg.norm(_velocities(curve), axis=1)
    return bool(speeds.min() > MIN_RELATIVE_SPEED * speeds.max())


def _check_immersion(speeds):
    bad = np.flatnonzero(speeds <= 1e-12 * max(1.0, speeds.max(initial=0.0)))
    if bad.size:
        raise GeometryError(f"zero-velocity segment at index {int(bad[0])}")


def srv_transform(curve):
    """SRV representation q_i = v_i / sqrt(|v_i|) on the k - 1 intervals."""
    v = _velocities(curve)
    speeds = np.linalg.norm(v, axis=1)
    _check_immersion(speeds)
    return v / np.sqrt(speeds)[:, None]


def srv_inverse(srv, starting_point=None):
    """Full curve (k x d) with the given SRV, starting at the origin."""
    srv = np.asarray(srv, dtype=float)
    k = srv.shape[0] + 1
    steps = srv * np.linalg.norm(srv, axis=1)[:, None] / (k - 1)
    curve = np.vstack([np.zeros((1, srv.shape[1])), np.cumsum(steps, axis=0)])
    if starting_point is not None:
        curve = curve + starting_point
    return curve


def srv_differential(curve, tangent_vec):
    """Differential of the SRV transform at ``curve`` applied to a full
    tangent vector field."""
    v = _velocities(curve)
    w = _velocities(tangent_vec)
    speeds = np.linalg.norm(v, axis=1)
    _check_immersion(speeds)
    unit = v / speeds[:, None]
    along = np.sum(unit * w, axis=1)
    return (w - 0.5 * along[:, None] * unit) / np.sqrt(speeds)[:, None]


def srv_inverse_differential(srv, srv_tangent):
    """Full tangent field (zero at the origin) mapped to ``srv_tangent``."""
    srv = np.asarray(srv, dtype=float)
    srv_tangent = np.asarray(srv_tangent, dtype=float)
    k = srv.shape[0] + 1
    norms = np.linalg.norm(srv, axis=1)
    if np.any(norms == 0):
        raise GeometryError("SRV has a zero row")
    unit = srv / norms[:, None]
    along = np.sum(unit * srv_tangent, axis=1)
    dv = norms[:, None] * (srv_tangent + along[:, None] * unit)
    return np.vstack([np.zeros((1, srv.shape[1])), np.cumsum(dv, axis=0) / (k - 1)])


def l2_srv_inner_product(srv_a, srv_b):
    """L2 inner product of piecewise-constant SRV functions on [0, 1]."""
    srv_a = np.asarray(srv_a)
    return float(np.sum(srv_a * srv_b) / srv_a.shape[0])


def _elastic_terms(v, w, w2, a, b):
    speeds = np.linalg.norm(v, axis=-1)
    unit = v / speeds[..., None]
    along = np.sum(unit * w, axis=-1) * np.sum(unit * w2, axis=-1)
    return (a**2 * np.sum(w * w2, axis=-1) + (b**2 - a**2) * along) / speeds


def elastic_inner_product(curve, tangent_vec_a, tangent_vec_b, a=1.0, b=0.5):
    """Discrete elastic metric G^{a,b} at a full curve.

    Velocities and the derivatives of h, k are forward differences on each
    interval; the arc-length integral is the exact integral of the resulting
    piecewise-constant integrand.
    """
    v = _velocities(curve)
    speeds = np.linalg.norm(v, axis=1)
    _check_immersion(speeds)
    w_a = _velocities(tangent_vec_a)
    w_b = _velocities(tangent_vec_b)
    return float(np.sum(_elastic_terms(v, w_a, w_b, a, b)) / v.shape[0])


def resample(curve, grid_values):
    """Piecewise-linear evaluation of a full curve at parameters in [0, 1]."""
    curve = np.asarray(curve, dtype=float)
    u = np.linspace(0.0, 1.0, curve.shape[0])
    return np.stack([np.interp(grid_values, u, curve[:, j]) for j in range(curve.shape[1])], axis=1)


def compose_reparametrizations(first, second):
    """Grid values of ``second`` after ``first`` (u -> second(first(u)))."""
    u = np.linspace(0.0, 1.0, len(second))
    return np.interp(first, u, second)


def _make_increasing(grid):
    grid = np.clip(np.asarray(grid, dtype=float), 0.0, 1.0)
    grid[0], grid[-1] = 0.0, 1.0
    eps = 1e-9 / len(grid)
    for i in range(1, len(grid)):
        grid[i] = max(grid[i], grid[i - 1] + eps)
    if grid[-1] > 1.0 or grid[-2] >= 1.0:
        grid = grid / grid[-1]
        for i in range(len(grid) - 2, 0, -1):
            grid[i] = min(grid[i], grid[i + 1] - eps)
    grid[-1] = 1.0
    return grid


# ---------------------------------------------------------------------------
# spaces and metrics


class DiscreteCurves(Manifold):
    """Curves sampled at k uniform parameter values in R^d."""

    kind = "discrete_curves"

    def __init__(self, k_sampling_points, ambient_dim, starting_at_origin=True, metric=None):
        if k_sampling_points < 3:
            raise ValueError("need at least 3 sampling points")
        n_stored = k_sampling_points - 1 if starting_at_origin else k_sampling_points
        super().__init__(n_stored * ambient_dim, (n_stored, ambient_dim))
        self.k_sampling_points = k_sampling_points
        self.ambient_dim = ambient_dim
        self.starting_at_origin = starting_at_origin
        if metric is None:
            metric = SRVMetric if starting_at_origin else L2CurvesMetric
        self.equip_with_metric(metric)

    def full(self, point):
        point = np.asarray(point, dtype=float)
        if not self.starting_at_origin:
            return point
        return np.vstack([np.zeros((1, self.ambient_dim)), point])

    def strip(self, full_curve):
        full_curve = np.asarray(full_curve, dtype=float)
        if not self.starting_at_origin:
            return full_curve
        return (full_curve - full_curve[0])[1:]

    def projection(self, point):
        """Translate a full curve (k samples) to start at the origin."""
        point = np.asarray(point, dtype=float)
        if point.shape == self.shape:
            return point
        return self.strip(point)

    def belongs(self, point, atol=1e-9):
        point = np.asarray(point)
        if point.shape != self.shape or not np.all(np.isfinite(point)):
            return False
        speeds = np.linalg.norm(_velocities(self.full(point)), axis=1)
        return bool(np.all(speeds > 1e-12 * max(1.0, speeds.max())))

    def random_point(self, n_samples=1, seed=None):
        rng = np.random.default_rng(seed)
        out = np.stack([self.strip(random_curve(self.k_sampling_points, self.ambient_dim, rng))
                        for _ in range(n_samples)])
        return out[0] if n_samples == 1 else out


def random_curve(k_sampling_points, ambient_dim, rng):
    """Smooth random immersed curve starting at the origin (full samples)."""
    u = np.linspace(0.0, 1.0, k_sampling_points)
    while True:
        direction = rng.standard_normal(ambient_dim)
        direction /= np.linalg.norm(direction)
        velocity = np.tile(direction, (k_sampling_points, 1))
        for mode in range(1, 4):
            coef = rng.standard_normal((2, ambient_dim)) * 0.6 / mode
            velocity += np.outer(np.sin(mode * np.pi * u), coef[0]) + np.outer(np.cos(mode * np.pi * u), coef[1])
        curve = np.vstack([np.zeros(ambient_dim), np.cumsum(velocity[:-1], axis=0) / (k_sampling_points - 1)])
        speeds = np.linalg.norm(_velocities(curve), axis=1)
        if speeds.min() > 0.05:
            return curve


class L2CurvesMetric(RiemannianMetric):
    """Flat discrete L2 metric (trapezoidal weights) on full curves."""

    kind = "l2_curves"

    def _weights(self, n):
        w = np.full(n, 1.0 / (n - 1))
        w[[0, -1]] *= 0.5
        return w

    def inner_product(self, tangent_vec_a, tangent_vec_b, base_point=None):
        tangent_vec_a = np.asarray(tangent_vec_a, dtype=float)
        weights = self._weights(tangent_vec_a.shape[0])
        return float(np.sum(weights * np.sum(tangent_vec_a * tangent_vec_b, axis=1)))

    def exp(self, tangent_vec, base_point):
        return np.asarray(base_point, dtype=float) + tangent_vec

    def log(self, point, base_point):
        return np.asarray(point, dtype=float) - base_point


def _time_matrices(n_nodes, n_quad):
    """Lagrange evaluation and derivative matrices for a polynomial path
    through Chebyshev-Lobatto nodes on [0, 1], at Gauss-Legendre points."""
    degree = n_nodes - 1
    nodes = 0.5 * (1.0 - np.cos(np.pi * np.arange(n_nodes) / degree))
    x, weights = np.polynomial.legendre.leggauss(n_quad)
    t_quad = 0.5 * (x + 1.0)
    # Chebyshev basis on [0, 1]: values at nodes and at quadrature points
    cheb = np.polynomial.chebyshev
    vander_nodes = cheb.chebvander(2 * nodes - 1, degree)
    inv = np.linalg.inv(vander_nodes)
    eval_q = cheb.chebvander(2 * t_quad - 1, degree) @ inv
    deriv_coef = np.stack([2 * cheb.chebder(np.eye(n_nodes)[i]) for i in range(n_nodes)])
    deriv_q = cheb.chebvander(2 * t_quad - 1, degree - 1) @ deriv_coef.T @ inv
    return nodes, eval_q, deriv_q, 0.5 * weights


class ElasticMetric(RiemannianMetric):
    """Elastic metric G^{a,b} on origin-anchored curves.

    Distances for general (a, b) minimise the path energy over paths that are
    polynomial in time through ``n_segments + 1`` Chebyshev nodes, with the
    energy integral evaluated by Gauss-Legendre quadrature.
    """

    kind = "elastic_curves"

    def __init__(self, space, a=1.0, b=0.5, n_segments=20):
        if not (a > 0 and b > 0):
            raise ValueError("elastic parameters a, b must be positive")
        super().__init__(space)
        self.a = float(a)
        self.b = float(b)
        self.n_segments = n_segments

    def inner_product(self, tangent_vec_a, tangent_vec_b, base_point):
        full = self.space.full
        return elastic_inner_product(
            full(base_point), full(tangent_vec_a), full(tangent_vec_b), self.a, self.b
        )

    def _integrand(self, curves, tangents):
        """Elastic squared norms of full ``tangents`` at full ``curves`` (batched
        over the leading axis) and their gradients."""
        k = curves.shape[1]
        a2, b2 = self.a**2, self.b**2
        v = np.diff(curves, axis=1) * (k - 1)
        w = np.diff(tangents, axis=1) * (k - 1)
        r = np.linalg.norm(v, axis=-1)
        if np.any(r <= 1e-12):
            return None
        s = np.sum(v * w, axis=-1)
        ww = np.sum(w * w, axis=-1)
        values = np.sum((a2 * ww + (b2 - a2) * s**2 / r**2) / r, axis=-1) / (k - 1)
        df_dw = (2 * a2 * w + 2 * (b2 - a2) * (s / r**2)[..., None] * v) / r[..., None]
        df_dv = (
            -a2 * (ww / r**3)[..., None] * v
            + (b2 - a2) * (2 * (s / r**3)[..., None] * w - 3 * (s**2 / r**5)[..., None] * v)
        )

        def back(g):
            out = np.zeros(curves.shape)
            out[:, 1:] += g
            out[:, :-1] -= g
            return out

        return values, back(df_dv), back(df_dw)

    def path_energy(self, path):
        """Discrete energy N/2 sum_j G_{mid_j}(c_{j+1} - c_j, c_{j+1} - c_j) of a
        path of stored points."""
        full = np.stack([self.space.full(c) for c in np.asarray(path, dtype=float)])
        n_seg = full.shape[0] - 1
        out = self._integrand(0.5 * (full[1:] + full[:-1]), full[1:] - full[:-1])
        if out is None:
            return np.inf
        return 0.5 * n_seg * float(np.sum(out[0]))

    def path_length(self, path):
        path = np.asarray(path, dtype=float)
        total = 0.0
        for c0, c1 in zip(path[:-1], path[1:]):
            mid = 0.5 * (c0 + c1)
            total += np.sqrt(self.inner_product(c1 - c0, c1 - c0, mid))
        return float(total)

    def _path_energy_in_srv_chart(self, srv_nodes, eval_q, deriv_q, weights):
        """Energy of the path whose SRV values are the polynomial through
        ``srv_nodes``; returns (energy, gradient wrt the node values).

        The SRV map serves only as a chart: curves and their time
        derivatives are rebuilt from it and the energy integrand is the
        elastic metric on curves."""
        n_int = srv_nodes.shape[1]
        q = np.tensordot(eval_q, srv_nodes, axes=1)
        qdot = np.tensordot(deriv_q, srv_nodes, axes=1)
        norms = np.linalg.norm(q, axis=-1, keepdims=True)
        if np.any(norms <= 1e-12):
            return np.inf, np.zeros_like(srv_nodes)
        unit = q / norms
        along = np.sum(unit * qdot, axis=-1, keepdims=True)
        zeros = np.zeros((q.shape[0], 1, q.shape[2]))
        curves = np.concatenate([zeros, np.cumsum(q * norms, axis=1) / n_int], axis=1)
        dv = norms * qdot + along * q
        tangents = np.concatenate([zeros, np.cumsum(dv, axis=1) / n_int], axis=1)
        values, g_c, g_t = self._integrand(curves, tangents)
        energy = float(weights @ values)
        # adjoint of the cumulative sums: per-interval gradients
        h_c = np.cumsum(g_c[:, ::-1], axis=1)[:, ::-1][:, 1:] * weights[:, None, None] / n_int
        h_t = np.cumsum(g_t[:, ::-1], axis=1)[:, ::-1][:, 1:] * weights[:, None, None] / n_int
        # v = q |q| and dv = |q| qdot + (u . qdot) q
        qh_c = np.sum(unit * h_c, axis=-1, keepdims=True)
        grad_q = norms * h_c + qh_c * q
        q_qdot = np.sum(q * qdot, axis=-1, keepdims=True)
        q_h = np.sum(q * h_t, axis=-1, keepdims=True)
        grad_q += (np.sum(qdot * h_t, axis=-1, keepdims=True) * unit
                   + (qdot * q_h + h_t * q_qdot) / norms
                   - q_qdot * q_h * q / norms**3)
        grad_qdot = norms * h_t + np.sum(unit * h_t, axis=-1, keepdims=True) * q
        grad = np.tensordot(eval_q.T, grad_q, axes=1) + np.tensordot(deriv_q.T, grad_qdot, axes=1)
        return energy, grad

    def _solve_path(self, point_a, point_b, n_segments=None, gtol=1e-10, max_iter=2000):
        n_nodes = (n_segments or self.n_segments) + 1
        nodes, eval_q, deriv_q, weights = _time_matrices(n_nodes, 2 * n_nodes)
        q_a = srv_transform(self.space.full(point_a))
        q_b = srv_transform(self.space.full(point_b))
        srv_nodes = (1 - nodes)[:, None, None] * q_a + nodes[:, None, None] * q_b
        shape = srv_nodes[1:-1].shape

        def fun(x):
            srv_nodes[1:-1] = x.reshape(shape)
            energy, grad = self._path_energy_in_srv_chart(srv_nodes, eval_q, deriv_q, weights)
            return energy, grad[1:-1].ravel()

        res = minimize(fun, srv_nodes[1:-1].ravel(), jac=True, method="L-BFGS-B",
                       options={"gtol": gtol, "ftol": 1e-15, "maxiter": max_iter, "maxcor": 30})
        srv_nodes[1:-1] = res.x.reshape(shape)
        return srv_nodes, float(res.fun)

    def discrete_geodesic(self, point_a, point_b, n_times=None, n_segments=None):
        """Energy-minimising path sampled at ``n_times`` uniform times."""
        srv_nodes, _ = self._solve_path(point_a, point_b, n_segments)
        n_nodes = len(srv_nodes)
        n_times = n_times or n_nodes
        nodes = 0.5 * (1.0 - np.cos(np.pi * np.arange(n_nodes) / (n_nodes - 1)))
        cheb = np.polynomial.chebyshev
        basis = cheb.chebvander(2 * np.linspace(0.0, 1.0, n_times) - 1, n_nodes - 1)
        basis = basis @ np.linalg.inv(cheb.chebvander(2 * nodes - 1, n_nodes - 1))
        srv_path = np.tensordot(basis, srv_nodes, axes=1)
        path = [self.space.strip(srv_inverse(q)) for q in srv_path]
        path[0], path[-1] = np.asarray(point_a, dtype=float), np.asarray(point_b, dtype=float)
        return np.stack(path)

    def squared_dist(self, point_a, point_b):
        if np.array_equal(point_a, point_b):
            return 0.0
        return float(self._solve_path(point_a, point_b)[1])

    def dist(self, point_a, point_b):
        return float(np.sqrt(self.squared_dist(point_a, point_b)))


class SRVMetric(ElasticMetric):
    """Elastic metric with a = 1, b = 1/2: the pullback of the flat L2 metric
    through the SRV transform, with closed-form geodesics."""

    kind = "srv"

    def __init__(self, space, n_segments=20):
        super().__init__(space, 1.0, 0.5, n_segments)

    def srv(self, point):
        return srv_transform(self.space.full(point))

    def inner_product(self, tangent_vec_a, tangent_vec_b, base_point):
        full = self.space.full
        dq_a = srv_differential(full(base_point), full(tangent_vec_a))
        dq_b = srv_differential(full(base_point), full(tangent_vec_b))
        return l2_srv_inner_product(dq_a, dq_b)

    def _from_srv(self, srv):
        return self.space.strip(srv_inverse(srv))

    def exp(self, tangent_vec, base_point):
        full = self.space.full
        q = srv_transform(full(base_point))
        dq = srv_differential(full(base_point), full(tangent_vec))
        _check_segment(q, q + dq)
        return self._from_srv(q + dq)

    def log(self, point, base_point):
        q0 = self.srv(base_point)
        q1 = self.srv(point)
        tangent = srv_inverse_differential(q0, q1 - q0)
        return self.space.strip(tangent) if self.space.starting_at_origin else tangent

    def dist(self, point_a, point_b):
        diff = self.srv(point_a) - self.srv(point_b)
        return float(np.sqrt(l2_srv_inner_product(diff, diff)))

    def squared_dist(self, point_a, point_b):
        return self.dist(point_a, point_b) ** 2

    def geodesic(self, initial_point, end_point=None, initial_tangent_vec=None):
        if (end_point is None) == (initial_tangent_vec is None):
            raise ValueError("give exactly one of end_point or initial_tangent_vec")
        initial_point = np.asarray(initial_point, dtype=float)
        q0 = self.srv(initial_point)
        if end_point is not None:
            q1 = self.srv(end_point)
        else:
            full = self.space.full
            q1 = q0 + srv_differential(full(initial_point), full(initial_tangent_vec))
        _check_segment(q0, q1)
        return GeodesicPath(lambda t: self._from_srv((1 - t) * q0 + t * q1), initial_point,
                            end_point=end_point)


def _check_segment(q0, q1):
    """Raise if the straight SRV segment q0 -> q1 hits a zero row."""
    dq = q1 - q0
    denom = np.sum(dq * dq, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.clip(np.where(denom > 0, -np.sum(q0 * dq, axis=1) / denom, 0.0), 0.0, 1.0)
    closest = np.linalg.norm(q0 + t[:, None] * dq, axis=1)
    if np.any(closest <= 1e-12):
        raise GeometryError("geodesic leaves immersion space")


# ---------------------------------------------------------------------------
# alignment


def rotation_align_curves(curve_a, curve_b):
    """Rotation R minimising the L2 distance between the SRVs of a and R b.

    Returns (R, rotated full curve b)."""
    curve_b = np.asarray(curve_b, dtype=float)
    rotation = optimal_rotation(srv_transform(curve_b), srv_transform(curve_a))
    return rotation, curve_b @ rotation.T


def curve_rotation_align(curve_a, curve_b):
    """Full curve b rotated onto curve a in SRV space."""
    return rotation_align_curves(curve_a, curve_b)[1]


def _edge_costs(q1, q2, n, di, dj):
    """Exact integral of q1(t) . q2(g(t)) sqrt(g') over every lattice edge
    (i - di, j - dj) -> (i, j), with g linear on the edge.

    Returns an (n + 1) x (n + 1) array indexed by the edge end (i, j); entries
    for impossible edges are -inf."""
    k_int = q1.shape[0]
    out = np.full((n + 1, n + 1), -np.inf)
    i = np.arange(di, n + 1)[:, None]
    j = np.arange(dj, n + 1)[None, :]
    i, j = np.broadcast_arrays(i, j)
    slope = dj / di
    a = (i - di) / n
    b = i / n
    ga = (j - dj) / n
    r1 = int(np.ceil(di * k_int / n)) + 1
    r2 = int(np.ceil(dj * k_int / n)) + 1
    m1 = np.floor(a * k_int)[..., None] + 1 + np.arange(r1)
    cand1 = m1 / k_int
    m2 = np.floor(ga * k_int)[..., None] + 1 + np.arange(r2)
    cand2 = a[..., None] + (m2 / k_int - ga[..., None]) / slope
    pts = np.concatenate([a[..., None], cand1, cand2, b[..., None]], axis=-1)
    pts = np.clip(pts, a[..., None], b[..., None])
    pts.sort(axis=-1)
    lengths = np.diff(pts, axis=-1)
    mids = 0.5 * (pts[..., 1:] + pts[..., :-1])
    idx1 = np.clip((mids * k_int).astype(int), 0, k_int - 1)
    idx2 = np.clip(((ga[..., None] + slope * (mids - a[..., None])) * k_int).astype(int), 0, k_int - 1)
    products = np.sum(q1[idx1] * q2[idx2], axis=-1)
    out[di:, dj:] = np.sqrt(slope) * np.sum(lengths * products, axis=-1)
    return out


def dp_lattice_path(q1, q2, grid_n, window_s):
    """Best monotone lattice path from (0, 0) to (n, n) and its value."""
    n = grid_n
    costs = {(di, dj): _edge_costs(q1, q2, n, di, dj)
             for di in range(1, window_s + 1) for dj in range(1, window_s + 1)}
    value = np.full((n + 1, n + 1), -np.inf)
    value[0, 0] = 0.0
    pred = np.zeros((n + 1, n + 1, 2), dtype=int)
    for i in range(1, n + 1):
        row = value[i]
        for (di, dj), cost in costs.items():
            if di > i:
                continue
            cand = np.full(n + 1, -np.inf)
            cand[dj:] = value[i - di, : n + 1 - dj] + cost[i, dj:]
            better = cand > row
            row[better] = cand[better]
            pred[i, better] = (di, dj)
    path = [(n, n)]
    i, j = n, n
    while (i, j) != (0, 0):
        di, dj = pred[i, j]
        if di == 0:
            raise GeometryError("no admissible lattice path; increase window_s")
        i, j = i - di, j - dj
        path.append((i, j))
    return np.array(path[::-1]), float(value[n, n])


def _resampled_srv_objective(q_a, curve_b, grid):
    """Squared SRV distance between q_a and curve_b o grid, and its gradient
    with respect to the grid values."""
    k = curve_b.shape[0]
    u = np.linspace(0.0, 1.0, k)
    points = np.stack([np.interp(grid, u, curve_b[:, j]) for j in range(curve_b.shape[1])], axis=1)
    v = np.diff(points, axis=0) * (k - 1)
    speeds = np.linalg.norm(v, axis=1)
    if np.any(speeds <= 1e-12):
        return np.inf, np.zeros_like(grid)
    q = v / np.sqrt(speeds)[:, None]
    diff = q - q_a
    value = float(np.sum(diff * diff) / (k - 1))
    unit = v / speeds[:, None]
    along = np.sum(unit * diff, axis=1)
    # d value / d v_j, then / d point_i through v_j = (k - 1)(p_{j+1} - p_j)
    g_v = 2.0 / (k - 1) * (diff - 0.5 * along[:, None] * unit) / np.sqrt(speeds)[:, None]
    g_p = np.zeros_like(points)
    g_p[1:] += (k - 1) * g_v
    g_p[:-1] -= (k - 1) * g_v
    segment = np.clip((grid * (k - 1)).astype(int), 0, k - 2)
    slope = (curve_b[segment + 1] - curve_b[segment]) * (k - 1)
    return value, np.sum(g_p * slope, axis=1)


def refine_reparametrization(curve_a, curve_b, grid, max_iter=200):
    """Local descent of the SRV distance between curve a and curve b o grid,
    starting at ``grid``. The grid is kept strictly increasing by writing it
    as normalised cumulative sums of exp(z)."""
    curve_a = np.asarray(curve_a, dtype=float)
    curve_b = np.asarray(curve_b, dtype=float)
    q_a = srv_transform(curve_a)
    increments = np.maximum(np.diff(grid), 1e-12)

    def to_grid(z):
        w = np.exp(z - z.max())
        grid = np.concatenate([[0.0], np.cumsum(w)]) / w.sum()
        grid[-1] = 1.0
        return grid, w / w.sum()

    def fun(z):
        g, w = to_grid(z)
        value, grad_g = _resampled_srv_objective(q_a, curve_b, g)
        if not np.isfinite(value):
            return value, np.zeros_like(z)
        # d grid_i / d z_j = w_j ([j < i] - grid_i)
        tail = np.cumsum(grad_g[::-1])[::-1][1:]
        return value, w * (tail - np.dot(grad_g, g))

    z0 = np.log(increments)
    start = fun(z0)[0]
    res = minimize(fun, z0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": 1e-12, "ftol": 1e-14})
    if not res.fun < start:
        return np.asarray(grid, dtype=float)
    return _make_increasing(to_grid(res.x)[0])


def dp_align(curve_a, curve_b, grid_n=None, window_s=5, refine=True):
    """Dynamic-programming reparametrization of full curve b onto curve a.

    The lattice path is the exact optimum over piecewise-linear warps with
    slopes di/dj, di, dj <= window_s. With ``refine`` the warp read off the
    path is then polished by :func:`refine_reparametrization`, which removes
    the slope-quantisation error of the lattice.

    Returns (reparametrization element, aligned full curve b)."""
    curve_a = np.asarray(curve_a, dtype=float)
    curve_b = np.asarray(curve_b, dtype=float)
    k = curve_a.shape[0]
    grid_n = k if grid_n is None else grid_n
    if grid_n < 1 or not 1 <= window_s <= grid_n:
        raise ValueError("need 1 <= window_s <= grid_n")
    q1, q2 = srv_transform(curve_a), srv_transform(curve_b)
    path, _ = dp_lattice_path(q1, q2, grid_n, window_s)
    u = np.linspace(0.0, 1.0, k)
    grid = np.interp(u, path[:, 0] / grid_n, path[:, 1] / grid_n)
    grid[0], grid[-1] = 0.0, 1.0
    grid = _make_increasing(grid)
    if refine:
        grid = refine_reparametrization(curve_a, curve_b, grid)
    return GroupElement.reparametrization(grid), resample(curve_b, grid)


def _vertical_coefficients(curve, tangent_vec):
    """Coefficients m (zero at both ends) of the SRV-orthogonal projection of
    a full tangent field onto the vertical fields m(u) c'(u)."""
    k = curve.shape[0]
    v = _velocities(curve)
    speeds = np.linalg.norm(v, axis=1)
    _check_immersion(speeds)
    unit = v / speeds[:, None]
    tau = (curve[2:] - curve[:-2]) * (k - 1) / 2.0  # c'(u_j), interior samples

    def apply_d(interval, x):
        along = np.sum(unit[interval] * x, axis=-1)
        return (k - 1) * (x - 0.5 * along[..., None] * unit[interval]) / np.sqrt(speeds[interval])[..., None]

    interior = np.arange(1, k - 1)
    left = apply_d(interior - 1, tau)   # effect on interval j - 1 (sign +)
    right = apply_d(interior, tau)      # effect on interval j (sign -)
    diag = np.sum(left**2, axis=1) + np.sum(right**2, axis=1)
    off = -np.sum(right[:-1] * left[1:], axis=1)
    dq = srv_differential(curve, tangent_vec)
    rhs = np.sum(dq[interior - 1] * left, axis=1) - np.sum(dq[interior] * right, axis=1)
    bands = np.zeros((3, k - 2))
    bands[0, 1:] = off
    bands[1] = diag
    bands[2, :-1] = off
    m = solve_banded((1, 1), bands, rhs)
    return np.concatenate([[0.0], m, [0.0]]), tau


def vertical_part(curve, tangent_vec):
    """Vertical (reparametrization) component of a full tangent field."""
    m, tau = _vertical_coefficients(np.asarray(curve, float), np.asarray(tangent_vec, float))
    out = np.zeros_like(np.asarray(curve, float))
    out[1:-1] = m[1:-1, None] * tau
    return out


def _srv_dist_full(curve_a, curve_b):
    diff = srv_transform(curve_a) - srv_transform(curve_b)
    return float(np.sqrt(l2_srv_inner_product(diff, diff)))


MAX_WARP_SLOPE_CHANGE = 0.5
LINE_SEARCH_SHRINKS = (1.0, 0.5, 0.25, 0.125, 0.0625)


def horizontal_reparametrization(curve_a, curve_b, n_times=20):
    """Reparametrization psi such that the path obtained by horizontally
    lifting the SRV geodesic a -> b ends at b o psi."""
    k = curve_a.shape[0]
    u = np.linspace(0.0, 1.0, k)
    q_a, q_b = srv_transform(curve_a), srv_transform(curve_b)
    psi = u.copy()
    current = np.asarray(curve_a, dtype=float)
    for t in np.linspace(0.0, 1.0, n_times + 1)[1:]:
        target = srv_inverse((1 - t) * q_a + t * q_b)
        step = resample(target, psi) - current
        m, _ = _vertical_coefficients(current, step)
        # damp steps that would fold u - m; near-singular lifts happen where the
        # SRV segment passes close to a zero row
        slope = float(np.max(np.abs(np.diff(m)))) * (k - 1)
        if slope > MAX_WARP_SLOPE_CHANGE:
            m = m * (MAX_WARP_SLOPE_CHANGE / slope)
        psi = _make_increasing(np.interp(np.clip(u - m, 0.0, 1.0), u, psi))
        current = resample(target, psi)
    return psi


def iterative_horizontal_align(curve_a, curve_b, max_iter=20, tol=1e-6, n_times=20):
    """Iterative horizontal-geodesic alignment of full curve b onto curve a.

    Returns an :class:`AlignmentResult` whose ``distances`` record the
    accepted SRV distances (non-increasing)."""
    curve_a = np.asarray(curve_a, dtype=float)
    curve_b = np.asarray(curve_b, dtype=float)
    k = curve_a.shape[0]
    u = np.linspace(0.0, 1.0, k)
    phi = u.copy()
    current = curve_b.copy()
    distance = _srv_dist_full(curve_a, current)
    distances = [distance]
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        if distance == 0.0:
            converged = True
            break
        psi = horizontal_reparametrization(curve_a, current, n_times)
        # backtrack towards the identity warp until the distance decreases
        for shrink in LINE_SEARCH_SHRINKS:
            step = u + shrink * (psi - u)
            new_phi = _make_increasing(compose_reparametrizations(step, phi))
            candidate = resample(curve_b, new_phi)
            new_distance = _srv_dist_full(curve_a, candidate)
            if new_distance < distance:
                break
        if not new_distance < distance:
            converged = True
            break
        decrease = (distance - new_distance) / distance
        phi, current, distance = new_phi, candidate, new_distance
        distances.append(distance)
        if decrease < tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"iterative horizontal alignment stopped after {max_iter} iterations "
            f"(distance {distance:.3e})",
            ConvergenceWarning,
        )
    return AlignmentResult(current, distance, distances, converged, n_iter,
                           GroupElement.reparametrization(phi))


# ---------------------------------------------------------------------------
# group actions, aligners and bundles on DiscreteCurves points


class ReparametrizationAction(GroupAction):
    """Right action c -> c o phi of discrete reparametrizations."""

    tag = "reparametrization"

    def __init__(self, space):
        self.space = space

    def apply(self, element, point):
        full = self.space.full(point)
        if element.payload.size != full.shape[0]:
            raise GeometryError("reparametrization grid does not match the sampling")
        return self.space.strip(resample(full, element.payload))

    def compose(self, element_a, element_b):
        # acting by a after b means c o b o a
        return GroupElement.reparametrization(
            _make_increasing(compose_reparametrizations(element_a.payload, element_b.payload))
        )

    def identity(self, point=None):
        return GroupElement.reparametrization(np.linspace(0.0, 1.0, self.space.k_sampling_points))

    def vertical_basis(self, point):
        full = self.space.full(point)
        k = full.shape[0]
        tau = (full[2:] - full[:-2]) * (k - 1) / 2.0
        basis = []
        for j in range(1, k - 1):
            vec = np.zeros_like(full)
            vec[j] = tau[j - 1]
            basis.append(self.space.strip(vec) if self.space.starting_at_origin else vec)
        return basis


class SRVRotationAligner(AlignerAlgorithm):
    kind = "closed_form_svd"

    def align_with_info(self, bundle, point, base_point):
        space = bundle.total_space
        rotation, rotated = rotation_align_curves(space.full(base_point), space.full(point))
        aligned = space.strip(rotated)
        metric = space.metric
        initial, distance = metric.dist(base_point, point), metric.dist(base_point, aligned)
        return AlignmentResult(aligned, distance, [initial, distance], True, 1,
                               GroupElement.rotation(rotation))


class DynamicProgrammingAligner(AlignerAlgorithm):
    kind = "dynamic_programming"

    def __init__(self, grid_n=None, window_s=5):
        self.grid_n = grid_n
        self.window_s = window_s

    def align_with_info(self, bundle, point, base_point):
        space = bundle.total_space
        element, aligned_full = dp_align(space.full(base_point), space.full(point),
                                         self.grid_n, self.window_s)
        aligned = space.strip(aligned_full)
        metric = space.metric
        initial = metric.dist(base_point, point)
        distance = metric.dist(base_point, aligned) if _well_immersed(aligned_full) else np.inf
        if distance > initial:
            aligned, distance = np.asarray(point, dtype=float), initial
            element = ReparametrizationAction(space).identity()
        return AlignmentResult(aligned, distance, [initial, distance], True, 1, element)


class IterativeHorizontalGeodesicAligner(AlignerAlgorithm):
    kind = "iterative_horizontal"

    def __init__(self, max_iter=20, tol=1e-6, n_times=20):
        self.max_iter = max_iter
        self.tol = tol
        self.n_times = n_times

    def align_with_info(self, bundle, point, base_point):
        space = bundle.total_space
        result = iterative_horizontal_align(space.full(base_point), space.full(point),
                                            self.max_iter, self.tol, self.n_times)
        result.point = space.strip(result.point)
        return result


class CurvesBundle(FiberBundle):
    @staticmethod
    def _sub_bundle(total_space, action, aligner):
        if aligner is None:
            aligner = _default_aligner(action)
        return FiberBundle(total_space, action, aligner)


def _default_aligner(action):
    if action.tag == "rotation":
        return SRVRotationAligner()
    return DynamicProgrammingAligner()


def _make_actions(space, tags):
    from .quotient import normalize_tag

    actions = []
    for tag in tags:
        tag = normalize_tag(tag)
        if tag == "rotation":
            actions.append(RotationAction(space.ambient_dim))
        elif tag == "reparametrization":
            actions.append(ReparametrizationAction(space))
        else:
            raise ValueError(f"unsupported group {tag!r} for curves")
    return actions


def curves_bundle(space, group_actions=("rotations", "reparametrizations"), aligners=None):
    actions = _make_actions(space, group_actions)
    if len(actions) == 1:
        aligner = aligners if aligners is not None else _default_aligner(actions[0])
        return CurvesBundle(space, actions[0], aligner)
    return CurvesBundle(space, actions, aligners)


def _curves_factory(space):
    bundle = curves_bundle(space, space.group_action_tags)
    quotient = QuotientSpace(space, bundle)
    return QuotientRecord(quotient, bundle, quotient.metric)


for _tags in (("rotation",), ("reparametrization",), ("rotation", "reparametrization")):
    register_quotient("discrete_curves", "srv", _tags, _curves_factory)


def curve_shape_space(k_sampling_points, ambient_dim, group_actions=("rotations", "reparametrizations")):
    """Quotient of origin-anchored curves (SRV metric) by the given groups."""
    space = DiscreteCurves(k_sampling_points, ambient_dim)
    space.equip_with_group_action(tuple(group_actions))
    space.equip_with_quotient()
    return space.quotient


def curve_shape_dist(curve_a, curve_b, group_actions=("rotations", "reparametrizations")):
    """Quotient SRV distance between two full curves (translated to the origin)."""
    curve_a = np.asarray(curve_a, dtype=float)
    quotient = curve_shape_space(curve_a.shape[0], curve_a.shape[1], group_actions)
    strip = quotient.total_space.strip
    return quotient.metric.dist(strip(curve_a), strip(curve_b))
