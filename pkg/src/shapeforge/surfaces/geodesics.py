"""Discrete geodesics between meshes: path straightening (boundary value
problem) and midpoint shooting (initial value problem)."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..geometry import ConvergenceError, ConvergenceWarning, GeometryError
from .metric import squared_norm_and_grads

DEFAULT_N_TIMES = 10
BVP_GTOL = 1e-8
BVP_MAX_ITER = 500


@dataclass
class PathResult:
    path: np.ndarray
    energy: float
    energies: list = field(default_factory=list)
    converged: bool = True
    message: str = ""


def _check_path(path, faces):
    path = np.asarray(path, dtype=float)
    if path.ndim != 3 or path.shape[2] != 3:
        raise GeometryError(f"a path must be an N x n x 3 array, got shape {path.shape}")
    if faces.max(initial=-1) >= path.shape[1]:
        raise GeometryError("mismatched connectivity: face index beyond vertex count")
    return path


def path_energy_and_grad(params, path, faces):
    """E = 1/(2N) sum_{i=0}^{N-2} G_{q_i}(qdot_i, qdot_i), qdot_i = (N-1)(q_{i+1} - q_i),
    and its gradient with respect to every mesh of the path."""
    path = _check_path(path, faces)
    n_times = path.shape[0]
    scale = n_times - 1
    energy = 0.0
    grad = np.zeros_like(path)
    for i in range(n_times - 1):
        velocity = scale * (path[i + 1] - path[i])
        value, g_q, g_h = squared_norm_and_grads(params, path[i], faces, velocity)
        energy += value
        grad[i] += g_q - scale * g_h
        grad[i + 1] += scale * g_h
    factor = 1.0 / (2 * n_times)
    return factor * energy, factor * grad


def path_energy(params, path, faces):
    return path_energy_and_grad(params, path, faces)[0]


def path_length(params, path, faces):
    path = _check_path(path, faces)
    scale = path.shape[0] - 1
    total = 0.0
    for i in range(path.shape[0] - 1):
        value = squared_norm_and_grads(params, path[i], faces, scale * (path[i + 1] - path[i]))[0]
        total += np.sqrt(max(value, 0.0)) / scale
    return float(total)


def linear_path(start, end, n_times):
    t = np.linspace(0.0, 1.0, n_times)[:, None, None]
    start = np.asarray(start, dtype=float)
    path = start + t * (np.asarray(end, dtype=float) - start)
    path[-1] = end
    return path


def _lbfgs(fun, x0, gtol, max_iter, energies, rel_gtol=1e-6):
    """L-BFGS-B whose accepted iterates are logged through ``energies``.

    ``res.converged`` also accepts a line-search stall once the gradient has
    dropped by ``rel_gtol`` relative to the start (machine-precision stop)."""

    def callback(intermediate_result):
        energies.append(float(intermediate_result.fun))

    initial_grad = float(np.max(np.abs(fun(x0)[1]), initial=0.0))
    res = minimize(fun, x0, jac=True, method="L-BFGS-B", callback=callback,
                   options={"gtol": gtol, "ftol": 1e-15, "maxiter": max_iter, "maxcor": 20})
    final_grad = float(np.max(np.abs(res.jac), initial=0.0))
    res.grad_norm = final_grad
    res.converged = bool(res.success) or final_grad <= max(gtol, rel_gtol * initial_grad)
    return res


def geodesic_bvp(params, start, end, faces, n_times=DEFAULT_N_TIMES, gtol=BVP_GTOL,
                 max_iter=BVP_MAX_ITER, initial_path=None):
    """Path straightening: minimise the discrete energy over interior meshes,
    starting from linear interpolation, with both endpoints pinned."""
    if n_times < 3:
        raise ValueError("path straightening needs n_times >= 3")
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    path = linear_path(start, end, n_times) if initial_path is None else np.array(initial_path, float)
    path[0], path[-1] = start, end
    shape = path[1:-1].shape

    def fun(x):
        path[1:-1] = x.reshape(shape)
        try:
            energy, grad = path_energy_and_grad(params, path, faces)
        except GeometryError:
            return np.inf, np.zeros_like(x)
        return energy, grad[1:-1].ravel()

    initial_energy = fun(path[1:-1].ravel().copy())[0]
    energies = [initial_energy]
    x0 = path[1:-1].ravel().copy()
    res = _lbfgs(fun, x0, gtol, max_iter, energies)
    if res.fun <= initial_energy:
        path[1:-1] = res.x.reshape(shape)
        energy = float(res.fun)
    else:
        path[1:-1] = x0.reshape(shape)
        energy = initial_energy
    grad_norm = res.grad_norm
    converged = res.converged
    if not converged:
        warnings.warn(f"path straightening stopped: {res.message} (max |grad| {grad_norm:.2e})",
                      ConvergenceWarning)
    return PathResult(path.copy(), energy, energies, converged, str(res.message))


def stencil_residual(params, faces, prev, current, nxt):
    """Discrete geodesic equation at ``current``: the gradient in q_i of
    G_{q_{i-1}}(q_i - q_{i-1}) + G_{q_i}(q_{i+1} - q_i)."""
    _, _, g_h_prev = squared_norm_and_grads(params, prev, faces, current - prev)
    _, g_q, g_h = squared_norm_and_grads(params, current, faces, nxt - current)
    return (g_h_prev + g_q - g_h).ravel()


def _fd_jacobian(residual, x, base_value):
    step = 1e-6 * max(1.0, float(np.max(np.abs(x))))
    jac = np.empty((base_value.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        jac[:, j] = (residual(x + e) - residual(x - e)) / (2 * step)
    return jac


def solve_stencil(params, faces, prev, current, guess=None, tol=1e-10, max_iter=50):
    """Next mesh of a discrete geodesic through ``prev`` and ``current``.

    Newton iterations on the stencil residual with a finite-difference
    Jacobian that is refreshed only when progress stalls."""
    from scipy.linalg import lu_factor, lu_solve

    shape = current.shape
    reference = np.linalg.norm(squared_norm_and_grads(params, prev, faces, current - prev)[2])
    target = tol * max(reference, 1e-300)

    def residual(x):
        return stencil_residual(params, faces, prev, current, x.reshape(shape))

    x = (2 * current - prev).ravel() if guess is None else np.asarray(guess, float).ravel()
    r = residual(x)
    norm = np.linalg.norm(r)
    factor = None
    for _ in range(max_iter):
        if norm <= target:
            break
        if factor is None:
            factor = lu_factor(_fd_jacobian(residual, x, r))
        candidate = x - lu_solve(factor, r)
        try:
            r_new = residual(candidate)
        except GeometryError:
            r_new = None
        if r_new is None or not np.linalg.norm(r_new) < norm:
            if factor is not None and _ > 0:
                factor = None
                continue
            break
        if np.linalg.norm(r_new) > 0.25 * norm:
            factor = None
        x, r, norm = candidate, r_new, np.linalg.norm(r_new)
    return x.reshape(shape), float(norm), float(target)


def geodesic_ivp(params, initial_point, initial_tangent, faces, n_times=DEFAULT_N_TIMES,
                 tol=1e-10):
    """Midpoint shooting: q_1 = q_0 + h/(N-1), then each q_{i+1} zeroes the
    stencil residual at q_i."""
    if n_times < 2:
        raise ValueError("shooting needs n_times >= 2")
    q0 = np.asarray(initial_point, dtype=float)
    h = np.asarray(initial_tangent, dtype=float)
    path = np.zeros((n_times,) + q0.shape)
    path[0] = q0
    path[1] = q0 + h / (n_times - 1)
    if not np.any(h):
        path[:] = q0
        return path
    for i in range(1, n_times - 1):
        nxt, res_norm, target = solve_stencil(params, faces, path[i - 1], path[i], tol=tol)
        if not res_norm <= target:
            raise ConvergenceError(
                f"midpoint shooting failed at step {i + 1}: residual {res_norm:.3e}",
                residual=res_norm, best=nxt,
            )
        path[i + 1] = nxt
    return path
