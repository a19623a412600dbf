"""Second-order Sobolev (elastic) metric on triangle meshes with fixed
connectivity.

Per face, with edge frame E = [q1 - q0, q2 - q0], induced metric g = E^T E,
G = g^{-1} and Dh = [h1 - h0, h2 - h0], the one-form dh acts on the tangent
plane as L = Dh G E^T. Its parts are

    normal       (I - P) L                  with P = E G E^T
    scaling      tr(P L) / 2 * P
    shearing     sym(P L) - scaling
    antisymmetric skew(P L)

and the squared g^{-1}-norms reduce to traces of 2 x 2 matrices:
s1 = tr(G B), s2 = tr(G A^T G A), s3 = tr(G A G A), s4 = tr(G A) with
A = E^T Dh, B = Dh^T Dh.
"""

from dataclasses import dataclass

import numpy as np

from ..geometry import GeometryError
from .mesh import HAT_GRADIENTS, edge_frames


@dataclass(frozen=True)
class SurfaceMetricParams:
    a0: float = 1.0
    a1: float = 1.0
    b1: float = 1.0
    c1: float = 1.0
    d1: float = 1.0
    a2: float = 1.0

    def __post_init__(self):
        values = [self.a0, self.a1, self.b1, self.c1, self.d1, self.a2]
        if any(not np.isfinite(v) or v < 0 for v in values):
            raise ValueError("surface metric parameters must be finite and nonnegative")
        if not (self.a0 > 0 or (self.a1 > 0 and self.b1 > 0 and self.c1 > 0)):
            raise ValueError("degenerate surface metric: need a0 > 0 or a1, b1, c1 > 0")

    @classmethod
    def from_sequence(cls, values):
        return cls(*[float(v) for v in values])

    def as_tuple(self):
        return (self.a0, self.a1, self.b1, self.c1, self.d1, self.a2)


def _face_data(vertices, faces):
    frames = edge_frames(vertices, faces)
    g = np.einsum("...ki,...kj->...ij", frames, frames)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    if np.any(det <= 0):
        bad = np.flatnonzero(np.atleast_2d(det <= 0).any(axis=0))
        raise GeometryError(f"degenerate face {int(bad[0])} along evaluation")
    inv = np.stack([np.stack([g[..., 1, 1], -g[..., 0, 1]], -1),
                    np.stack([-g[..., 1, 0], g[..., 0, 0]], -1)], -2) / det[..., None, None]
    vol = 0.5 * np.sqrt(det)
    return frames, inv, vol


def one_form_decomposition(vertices, faces, tangent_vec):
    """Per-face 3 x 3 maps (shear, scaling, normal, antisymmetric) whose sum
    is the one-form dh = Dh G E^T."""
    frames, inv, _ = _face_data(vertices, faces)
    dh = edge_frames(tangent_vec, faces)
    one_form = dh @ inv @ np.swapaxes(frames, -1, -2)
    proj = frames @ inv @ np.swapaxes(frames, -1, -2)
    tangential = proj @ one_form
    normal = one_form - tangential
    trace = np.trace(tangential, axis1=-2, axis2=-1)
    scaling = 0.5 * trace[..., None, None] * proj
    sym = 0.5 * (tangential + np.swapaxes(tangential, -1, -2))
    return sym - scaling, scaling, normal, tangential - sym


def _trace_terms(inv, a_h, a_k, b_hk):
    """Bilinear versions of s1..s4 (s4 returned as the product of traces)."""
    s1 = np.trace(inv @ b_hk, axis1=-2, axis2=-1)
    ga_h = inv @ a_h
    ga_k = inv @ a_k
    s2 = np.trace(inv @ np.swapaxes(a_h, -1, -2) @ ga_k, axis1=-2, axis2=-1)
    s3 = np.trace(ga_h @ ga_k, axis1=-2, axis2=-1)
    s4 = np.trace(ga_h, axis1=-2, axis2=-1) * np.trace(ga_k, axis1=-2, axis2=-1)
    return s1, s2, s3, s4


def _coefficients(params):
    p = params
    return (p.c1, 0.5 * p.a1 - p.c1 + 0.5 * p.d1, 0.5 * (p.a1 - p.d1), 0.5 * (p.b1 - p.a1))


def surface_inner_product(params, vertices, faces, tangent_vec_a, tangent_vec_b):
    """Discrete Sobolev inner product G_q(h, k) at the mesh with vertices q."""
    vertices = np.asarray(vertices, dtype=float)
    h = np.asarray(tangent_vec_a, dtype=float)
    k = np.asarray(tangent_vec_b, dtype=float)
    frames, inv, vol = _face_data(vertices, faces)
    n = vertices.shape[0]
    vert_area = np.bincount(faces.ravel(), np.repeat(vol / 3.0, 3), minlength=n)
    total = 0.0
    if params.a0:
        total += params.a0 * float(np.sum(vert_area * np.sum(h * k, axis=-1)))
    dh, dk = edge_frames(h, faces), edge_frames(k, faces)
    ft = np.swapaxes(frames, -1, -2)
    a_h, a_k = ft @ dh, ft @ dk
    b_hk = np.swapaxes(dh, -1, -2) @ dk
    c = _coefficients(params)
    # averaging both argument orders makes G(h, k) == G(k, h) bit for bit
    s_hk = _trace_terms(inv, a_h, a_k, b_hk)
    s_kh = _trace_terms(inv, a_k, a_h, np.swapaxes(b_hk, -1, -2))
    s = [0.5 * (x + y) for x, y in zip(s_hk, s_kh)]
    total += float(np.sum(vol * (c[0] * s[0] + c[1] * s[1] + c[2] * s[2] + c[3] * s[3])))
    if params.a2:
        lap_h = _stiffness_apply(inv, vol, dh, faces, n)
        lap_k = _stiffness_apply(inv, vol, dk, faces, n)
        total += params.a2 * float(np.sum(np.sum(lap_h * lap_k, axis=-1) / vert_area))
    return total


def _stiffness_apply(inv, vol, dh, faces, n):
    """K h assembled from per-face blocks vol_f C G Dh^T."""
    local = vol[:, None, None] * (HAT_GRADIENTS @ inv @ np.swapaxes(dh, -1, -2))
    return _scatter_rows(faces.T.ravel(), np.concatenate([local[:, j] for j in range(3)]), n)


def _scatter_rows(index, values, n):
    """Sum rows of ``values`` (r x 3) into n rows by ``index``."""
    return np.stack([np.bincount(index, values[:, c], minlength=n) for c in range(values.shape[1])], axis=1)


def _scatter_frame_grad(grad_frames, faces, n):
    """Adjoint of edge_frames: m x 3 x 2 gradient -> n x 3 vertex gradient."""
    index = np.concatenate([faces[:, 1], faces[:, 2], faces[:, 0]])
    values = np.concatenate([grad_frames[..., 0], grad_frames[..., 1],
                             -grad_frames[..., 0] - grad_frames[..., 1]])
    return _scatter_rows(index, values, n)


def squared_norm_and_grads(params, vertices, faces, tangent_vec):
    """G_q(h, h) with its gradients with respect to q and to h."""
    q = np.asarray(vertices, dtype=float)
    h = np.asarray(tangent_vec, dtype=float)
    n = q.shape[0]
    frames, inv, vol = _face_data(q, faces)
    ft = np.swapaxes(frames, -1, -2)
    dh = edge_frames(h, faces)
    a = ft @ dh
    at = np.swapaxes(a, -1, -2)
    b = np.swapaxes(dh, -1, -2) @ dh
    ga = inv @ a
    gat = inv @ at
    s1 = np.trace(inv @ b, axis1=-2, axis2=-1)
    s2 = np.trace(gat @ ga, axis1=-2, axis2=-1)
    s3 = np.trace(ga @ ga, axis1=-2, axis2=-1)
    s4 = np.trace(ga, axis1=-2, axis2=-1)
    c1, c2, c3, c4 = _coefficients(params)
    face_val = c1 * s1 + c2 * s2 + c3 * s3 + c4 * s4**2

    # derivatives of face_val with respect to G and A
    d_g = (c1 * b + c2 * (at @ inv @ a + a @ inv @ at) + c3 * 2 * (at @ inv @ at)
           + c4 * 2 * s4[:, None, None] * at)
    d_a = c2 * 2 * (inv @ a @ inv) + c3 * 2 * (inv @ at @ inv) + c4 * 2 * s4[:, None, None] * inv
    d_dh = c1 * 2 * dh @ inv
    value = float(np.sum(vol * face_val))
    # dvol/dg = vol/2 G; scaled contributions
    d_vol = face_val.copy()
    grad_g_scaled = vol[:, None, None] * d_g      # wrt G
    grad_a = vol[:, None, None] * d_a
    grad_dh = vol[:, None, None] * d_dh

    vert_area = np.bincount(faces.ravel(), np.repeat(vol / 3.0, 3), minlength=n)
    grad_h = np.zeros((n, 3))
    if params.a0:
        hh = np.sum(h * h, axis=-1)
        value += params.a0 * float(np.sum(vert_area * hh))
        grad_h += 2 * params.a0 * vert_area[:, None] * h
        d_vol += params.a0 * np.sum(hh[faces], axis=1) / 3.0
    if params.a2:
        y = _stiffness_apply(inv, vol, dh, faces, n)
        yy = np.sum(y * y, axis=-1)
        value += params.a2 * float(np.sum(yy / vert_area))
        z = 2 * params.a2 * y / vert_area[:, None]
        d_vol += -params.a2 * np.sum((yy / vert_area**2)[faces], axis=1) / 3.0
        zf = z[faces]  # m x 3 (local vertex) x 3 (xyz)
        # Y_f = vol C G Dh^T
        ct_z = HAT_GRADIENTS.T @ zf                       # 2 x 3
        grad_dh += vol[:, None, None] * np.swapaxes(inv @ ct_z, -1, -2)
        grad_g_scaled += vol[:, None, None] * (ct_z @ dh)
        d_vol += np.einsum("fij,fij->f", zf, HAT_GRADIENTS @ inv @ np.swapaxes(dh, -1, -2))

    # G = g^{-1}: dL/dg = -G (dL/dG) G, plus the volume term vol/2 G
    sym_g = 0.5 * (grad_g_scaled + np.swapaxes(grad_g_scaled, -1, -2))
    grad_g = -inv @ sym_g @ inv + (0.5 * vol * d_vol)[:, None, None] * inv
    # g = E^T E and A = E^T Dh
    grad_frames = 2 * frames @ grad_g + dh @ np.swapaxes(grad_a, -1, -2)
    grad_dh = grad_dh + frames @ grad_a
    grad_q = _scatter_frame_grad(grad_frames, faces, n)
    grad_h += _scatter_frame_grad(grad_dh, faces, n)
    return value, grad_q, grad_h
