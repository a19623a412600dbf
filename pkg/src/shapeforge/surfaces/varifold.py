"""Oriented varifold discrepancy between triangle meshes and relaxed
(unparametrized) geodesic matching."""

import warnings
from dataclasses import dataclass

import numpy as np

from ..geometry import ConvergenceWarning, GeometryError
from .geodesics import DEFAULT_N_TIMES, PathResult, _lbfgs, linear_path, path_energy_and_grad
from .mesh import TriangleMesh, edge_frames
from .metric import _scatter_rows

NORMAL_KERNELS = ("oriented_gaussian", "binet")


@dataclass(frozen=True)
class VarifoldParams:
    position_kernel_width: float = None
    normal_kernel: str = "oriented_gaussian"
    normal_kernel_width: float = 0.5

    def __post_init__(self):
        if self.normal_kernel not in NORMAL_KERNELS:
            raise ValueError(f"normal_kernel must be one of {NORMAL_KERNELS}")
        if self.position_kernel_width is not None and not self.position_kernel_width > 0:
            raise ValueError("position kernel width must be positive")
        if not self.normal_kernel_width > 0:
            raise ValueError("normal kernel width must be positive")

    def resolved(self, vertices, faces):
        """Copy with the position width defaulted to the mean edge length."""
        if self.position_kernel_width is not None:
            return self
        return VarifoldParams(mean_edge_length(vertices, faces), self.normal_kernel,
                              self.normal_kernel_width)


@dataclass(frozen=True)
class RelaxationParams:
    lambda0: float = 0.0
    lambda1: float = 1.0
    n_times: int = DEFAULT_N_TIMES

    def __post_init__(self):
        if self.lambda0 < 0 or self.lambda1 < 0 or not (self.lambda0 > 0 or self.lambda1 > 0):
            raise ValueError("relaxation weights must be nonnegative with at least one positive")
        if self.n_times < 2:
            raise ValueError("n_times must be at least 2")


def mean_edge_length(vertices, faces):
    faces = np.asarray(faces)
    edges = np.unique(np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1), axis=0)
    vertices = np.asarray(vertices, dtype=float)
    return float(np.mean(np.linalg.norm(vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1)))


def _face_measures(vertices, faces):
    """Barycenters, area-weighted normals N = (e1 x e2)/2 and the edge frames."""
    vertices = np.asarray(vertices, dtype=float)
    frames = edge_frames(vertices, faces)
    centers = vertices[faces].mean(axis=1)
    weighted = 0.5 * np.cross(frames[..., 0], frames[..., 1])
    return centers, weighted, frames


def _kernel_pairing(params, x, nx, y, ny, with_grad=False):
    """sum_{f,g} |N_f| |M_g| k_pos(x_f, y_g) k_nor(n_f, m_g) and, optionally,
    its gradient with respect to the first measure's centers and normals."""
    area_x = np.linalg.norm(nx, axis=1)
    area_y = np.linalg.norm(ny, axis=1)
    if np.any(area_x <= 0) or np.any(area_y <= 0):
        raise GeometryError("degenerate face in varifold evaluation")
    ux, uy = nx / area_x[:, None], ny / area_y[:, None]
    diff = x[:, None, :] - y[None, :, :]
    k_pos = np.exp(-np.sum(diff**2, axis=-1) / params.position_kernel_width**2)
    cos = ux @ uy.T
    if params.normal_kernel == "oriented_gaussian":
        k_nor = np.exp(-2.0 * (1.0 - cos) / params.normal_kernel_width**2)
        dk_nor = k_nor * 2.0 / params.normal_kernel_width**2
    else:
        k_nor = cos**2
        dk_nor = 2.0 * cos
    weights = area_x[:, None] * area_y[None, :]
    value = float(np.sum(weights * k_pos * k_nor))
    if not with_grad:
        return value
    # centers
    coef = weights * k_pos * k_nor * (-2.0 / params.position_kernel_width**2)
    grad_x = np.einsum("fg,fgc->fc", coef, diff)
    # weighted normals: d(|N| phi(n . m)) = dN . [phi n + phi' (m - (n . m) n)]
    kp_ay = k_pos * area_y[None, :]
    term_phi = np.sum(kp_ay * k_nor, axis=1)[:, None] * ux
    proj_m = kp_ay * dk_nor
    term_dphi = proj_m @ uy - np.sum(proj_m * cos, axis=1)[:, None] * ux
    grad_n = term_phi + term_dphi
    return value, grad_x, grad_n


def varifold_distance(params, vertices_a, faces_a, vertices_b, faces_b):
    """Squared kernel norm of the difference of the two oriented varifolds."""
    params = params.resolved(vertices_a, faces_a)
    xa, na, _ = _face_measures(vertices_a, faces_a)
    xb, nb, _ = _face_measures(vertices_b, faces_b)
    # cross term in a canonical argument order so that swapping the meshes
    # reproduces the value bit for bit
    if (xa.tobytes(), na.tobytes()) <= (xb.tobytes(), nb.tobytes()):
        cross = _kernel_pairing(params, xa, na, xb, nb)
    else:
        cross = _kernel_pairing(params, xb, nb, xa, na)
    value = (_kernel_pairing(params, xa, na, xa, na) + _kernel_pairing(params, xb, nb, xb, nb)) - 2 * cross
    return max(value, 0.0)


def varifold_distance_and_grad(params, vertices, faces, target_vertices, target_faces):
    """Discrepancy and its gradient with respect to ``vertices``."""
    if params.position_kernel_width is None:
        raise ValueError("resolve the position kernel width before differentiating")
    vertices = np.asarray(vertices, dtype=float)
    x, nx, frames = _face_measures(vertices, faces)
    y, ny, _ = _face_measures(target_vertices, target_faces)
    self_val, gx_self, gn_self = _kernel_pairing(params, x, nx, x, nx, with_grad=True)
    cross_val, gx_cross, gn_cross = _kernel_pairing(params, x, nx, y, ny, with_grad=True)
    target_val = _kernel_pairing(params, y, ny, y, ny)
    value = self_val - 2 * cross_val + target_val
    grad_x = 2 * gx_self - 2 * gx_cross      # the self term is symmetric in its two slots
    grad_n = 2 * gn_self - 2 * gn_cross
    n = vertices.shape[0]
    grad = _scatter_rows(faces.T.ravel(), np.tile(grad_x / 3.0, (3, 1)), n)
    e1, e2 = frames[..., 0], frames[..., 1]
    g1 = 0.5 * np.cross(e2, grad_n)     # d/d q1 of G . (e1 x e2)/2
    g2 = 0.5 * np.cross(grad_n, e1)     # d/d q2
    grad += _scatter_rows(np.concatenate([faces[:, 1], faces[:, 2], faces[:, 0]]),
                          np.concatenate([g1, g2, -g1 - g2]), n)
    return value, grad


def relaxed_geodesic_bvp(metric_params, varifold_params, relaxation, source, faces, target,
                         target_faces, gtol=1e-8, max_iter=500, initial_path=None):
    """Minimise E(path) + lambda1 Gamma(path[-1], target), or the symmetric
    objective adding lambda0 Gamma(path[0], source) with a free first mesh.

    ``target`` may have any connectivity; the path keeps ``faces``."""
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    faces = np.asarray(faces)
    target_faces = np.asarray(target_faces)
    TriangleMesh(target, target_faces)
    varifold_params = varifold_params.resolved(source, faces)
    n_times = relaxation.n_times
    free_start = relaxation.lambda0 > 0
    path = linear_path(source, source, n_times) if initial_path is None else np.array(initial_path, float)
    first = 0 if free_start else 1
    shape = path[first:].shape

    def objective(x):
        path[first:] = x.reshape(shape)
        try:
            energy, grad = path_energy_and_grad(metric_params, path, faces)
            total = energy
            if relaxation.lambda1 > 0:
                g1, dg1 = varifold_distance_and_grad(varifold_params, path[-1], faces, target, target_faces)
                total += relaxation.lambda1 * g1
                grad[-1] += relaxation.lambda1 * dg1
            if free_start:
                g0, dg0 = varifold_distance_and_grad(varifold_params, path[0], faces, source, faces)
                total += relaxation.lambda0 * g0
                grad[0] += relaxation.lambda0 * dg0
        except GeometryError:
            return np.inf, np.zeros_like(x)
        return total, grad[first:].ravel()

    x0 = path[first:].ravel().copy()
    initial = objective(x0)[0]
    history = [initial]
    res = _lbfgs(objective, x0, gtol, max_iter, history)
    best = res.x if res.fun <= initial else x0
    path[first:] = best.reshape(shape)
    objective_value = min(float(res.fun), initial)
    discrepancy = varifold_distance(varifold_params, path[-1], faces, target, target_faces)
    if not res.converged:
        warnings.warn(f"relaxed matching stopped: {res.message} "
                      f"(final discrepancy {discrepancy:.3e})", ConvergenceWarning)
    result = PathResult(path.copy(), objective_value, history, res.converged, str(res.message))
    result.discrepancy = discrepancy
    return result
