# refelem.py
"""
Reference simplex operators for the nodal spectral element discretization.

The reference triangle is R = {(r, s): r, s >= -1, r + s <= 0} (area 2), with
vertices v0 = (-1, -1), v1 = (1, -1), v2 = (-1, 1). Local faces run
v0 -> v1 (face 0, s = -1), v1 -> v2 (face 1, r + s = 0) and
v2 -> v0 (face 2, r = -1); face nodes are stored in that direction.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Tuple, Union

import numpy as np
from scipy.special import gammaln, roots_jacobi, roots_legendre

from errors import ConstructionError, ParameterError

logger = logging.getLogger(__name__)

NODETOL = 1e-10
MAX_ORDER = 12
_MAX_VANDERMONDE_COND = 1e12

# Warp-and-blend optimized blending parameters for orders 1..15.
_ALPHA_OPT = np.array([0.0000, 0.0000, 1.4152, 0.1001, 0.2751, 0.9800, 1.0999,
                       1.2832, 1.3648, 1.4773, 1.4959, 1.5743, 1.5770, 1.6223, 1.6258])

ArrayLike = Union[float, np.ndarray]


# --- One-dimensional Jacobi family ---

def jacobi_poly(n: int, a: float, b: float, x: ArrayLike) -> np.ndarray:
    """
    L2-orthonormal Jacobi polynomial P_n^(a,b) evaluated at x (scalar or array),
    computed with the three-term recurrence.
    """
    if int(n) != n or n < 0:
        raise ParameterError(f"Jacobi degree must be a non-negative integer, got {n}")
    if a <= -1 or b <= -1:
        raise ParameterError(f"Jacobi weights must exceed -1, got a={a}, b={b}")
    x = np.asarray(x, dtype=float)

    # gamma0 written with Gamma(a+b+2) so a+b = -1 needs no special case
    log_gamma0 = (a + b + 1) * np.log(2.0) + gammaln(a + 1) + gammaln(b + 1) - gammaln(a + b + 2)
    gamma0 = np.exp(log_gamma0)
    p_prev = np.full_like(x, 1.0 / np.sqrt(gamma0))
    if n == 0:
        return p_prev
    gamma1 = (a + 1) * (b + 1) / (a + b + 3) * gamma0
    p_curr = ((a + b + 2) * x / 2 + (a - b) / 2) / np.sqrt(gamma1)
    if n == 1:
        return p_curr

    a_old = 2 / (2 + a + b) * np.sqrt((a + 1) * (b + 1) / (a + b + 3))
    for i in range(1, int(n)):
        h1 = 2 * i + a + b
        a_new = 2 / (h1 + 2) * np.sqrt(
            (i + 1) * (i + 1 + a + b) * (i + 1 + a) * (i + 1 + b) / (h1 + 1) / (h1 + 3))
        b_new = -(a * a - b * b) / (h1 * (h1 + 2))
        p_next = (-a_old * p_prev + (x - b_new) * p_curr) / a_new
        p_prev, p_curr = p_curr, p_next
        a_old = a_new
    return p_curr


def grad_jacobi_poly(n: int, a: float, b: float, x: ArrayLike) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if n == 0:
        return np.zeros_like(x)
    return np.sqrt(n * (n + a + b + 1)) * jacobi_poly(n - 1, a + 1, b + 1, x)


def jacobi_gq(a: float, b: float, n_points: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Jacobi nodes and weights for the weight (1-x)^a (1+x)^b."""
    if a == 0 and b == 0:
        return roots_legendre(n_points)
    return roots_jacobi(n_points, a, b)


def jacobi_gl(a: float, b: float, order: int) -> np.ndarray:
    """Gauss-Lobatto nodes of the given order (order + 1 points including the ends)."""
    if order < 1:
        raise ParameterError("Gauss-Lobatto set needs order >= 1")
    x = np.empty(order + 1)
    x[0], x[-1] = -1.0, 1.0
    if order > 1:
        interior, _ = jacobi_gq(a + 1, b + 1, order - 1)
        x[1:-1] = np.sort(interior)
    return x


def vandermonde_1d(order: int, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.stack([jacobi_poly(j, 0, 0, x) for j in range(order + 1)], axis=-1)


def grad_vandermonde_1d(order: int, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.stack([grad_jacobi_poly(j, 0, 0, x) for j in range(order + 1)], axis=-1)


# --- Orthonormal simplex basis ---

def rs_to_ab(r: ArrayLike, s: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """Collapsed coordinates; the top vertex s = 1 takes its analytic limit a = -1."""
    r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
    regular = np.abs(1 - s) > NODETOL
    denom = np.where(regular, 1 - s, 1.0)
    a = np.where(regular, 2 * (1 + r) / denom - 1, -1.0)
    return a, s.copy()


def simplex_basis(i: int, j: int, r: ArrayLike, s: ArrayLike) -> np.ndarray:
    """Orthonormal Dubiner-type mode psi_ij on the reference triangle."""
    if i < 0 or j < 0:
        raise ParameterError(f"simplex mode indices must be non-negative, got ({i}, {j})")
    a, b = rs_to_ab(r, s)
    h1 = jacobi_poly(i, 0, 0, a)
    h2 = jacobi_poly(j, 2 * i + 1, 0, b)
    return np.sqrt(2.0) * h1 * h2 * (1 - b) ** i


def grad_simplex_basis(i: int, j: int, r: ArrayLike, s: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    a, b = rs_to_ab(r, s)
    fa = jacobi_poly(i, 0, 0, a)
    dfa = grad_jacobi_poly(i, 0, 0, a)
    gb = jacobi_poly(j, 2 * i + 1, 0, b)
    dgb = grad_jacobi_poly(j, 2 * i + 1, 0, b)

    half_1mb = 0.5 * (1 - b)
    dmode_dr = dfa * gb
    if i > 0:
        dmode_dr = dmode_dr * half_1mb ** (i - 1)

    dmode_ds = dfa * (gb * (0.5 * (1 + a)))
    if i > 0:
        dmode_ds = dmode_ds * half_1mb ** (i - 1)
    tmp = dgb * half_1mb ** i
    if i > 0:
        tmp = tmp - 0.5 * i * gb * half_1mb ** (i - 1)
    dmode_ds = dmode_ds + fa * tmp

    scale = 2 ** (i + 0.5)
    return scale * dmode_dr, scale * dmode_ds


def mode_indices(order: int) -> List[Tuple[int, int]]:
    return [(i, j) for i in range(order + 1) for j in range(order + 1 - i)]


def vandermonde_2d(order: int, r: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.stack([simplex_basis(i, j, r, s) for i, j in mode_indices(order)], axis=-1)


def grad_vandermonde_2d(order: int, r: np.ndarray, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    grads = [grad_simplex_basis(i, j, r, s) for i, j in mode_indices(order)]
    vr = np.stack([g[0] for g in grads], axis=-1)
    vs = np.stack([g[1] for g in grads], axis=-1)
    return vr, vs


# --- Nodal set ---

def _warp_factor(order: int, rout: np.ndarray) -> np.ndarray:
    lgl = jacobi_gl(0, 0, order)
    req = np.linspace(-1, 1, order + 1)
    v_eq = vandermonde_1d(order, req)
    p_mat = vandermonde_1d(order, rout).T
    l_mat = np.linalg.solve(v_eq.T, p_mat)
    warp = l_mat.T @ (lgl - req)

    zerof = (np.abs(rout) < 1.0 - 1e-10).astype(float)
    sf = 1.0 - (zerof * rout) ** 2
    return warp / sf + warp * (zerof - 1)


def _xy_to_rs(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    l1 = (np.sqrt(3.0) * y + 1.0) / 3.0
    l2 = (-3.0 * x - np.sqrt(3.0) * y + 2.0) / 6.0
    l3 = (3.0 * x - np.sqrt(3.0) * y + 2.0) / 6.0
    return -l2 + l3 - l1, -l2 - l3 + l1


def nodal_set(order: int) -> np.ndarray:
    """
    Warp-and-blend interpolation nodes on the reference triangle, shape (n_ep, 2).
    Vertices are included and edge nodes sit at Gauss-Lobatto positions.
    """
    if order < 1:
        raise ParameterError(f"polynomial order must be >= 1, got {order}")
    alpha = _ALPHA_OPT[order - 1] if order < 16 else 5.0 / 3.0

    l1_list, l3_list = [], []
    for n in range(order + 1):
        for m in range(order + 1 - n):
            l1_list.append(n / order)
            l3_list.append(m / order)
    l1 = np.array(l1_list)
    l3 = np.array(l3_list)
    l2 = 1.0 - l1 - l3

    x = -l2 + l3
    y = (-l2 - l3 + 2 * l1) / np.sqrt(3.0)

    blend1 = 4 * l2 * l3
    blend2 = 4 * l1 * l3
    blend3 = 4 * l1 * l2
    warp1 = blend1 * _warp_factor(order, l3 - l2) * (1 + (alpha * l1) ** 2)
    warp2 = blend2 * _warp_factor(order, l1 - l3) * (1 + (alpha * l2) ** 2)
    warp3 = blend3 * _warp_factor(order, l2 - l1) * (1 + (alpha * l3) ** 2)

    x = x + warp1 + np.cos(2 * np.pi / 3) * warp2 + np.cos(4 * np.pi / 3) * warp3
    y = y + np.sin(2 * np.pi / 3) * warp2 + np.sin(4 * np.pi / 3) * warp3

    r, s = _xy_to_rs(x, y)
    return np.column_stack([r, s])


# --- Cubature ---

def collapsed_cubature(strength: int) -> np.ndarray:
    """
    Tensorized Gauss rule on the reference triangle through the collapsed map,
    exact for polynomials of total degree <= strength. Rows are (r, s, weight).
    """
    n = max(1, int(np.ceil((strength + 1) / 2)))
    a, wa = jacobi_gq(0, 0, n)
    b, wb = jacobi_gq(1, 0, n)
    aa, bb = np.meshgrid(a, b, indexing="ij")
    ww = np.outer(wa, wb) / 2.0
    r = 0.5 * (1 + aa) * (1 - bb) - 1
    return np.column_stack([r.ravel(), bb.ravel(), ww.ravel()])


# --- Reference element ---

@dataclass(frozen=True)
class ReferenceElement:
    order: int
    n_ep: int
    nodes: np.ndarray
    V: np.ndarray
    Vr: np.ndarray
    Vs: np.ndarray
    Vinv: np.ndarray
    Dr: np.ndarray
    Ds: np.ndarray
    M: np.ndarray
    face_nodes: np.ndarray           # (3, P+1) local node indices, face direction order
    face_params: np.ndarray          # (P+1,) edge parameter t in [-1, 1] of the face nodes
    face_mass_1d: np.ndarray         # (P+1, P+1)
    face_diff_1d: np.ndarray         # (P+1, P+1) d/dt on face nodes
    vertex_nodes: np.ndarray         # (3,)
    interior_nodes: np.ndarray
    cubature: np.ndarray             # (Nq, 3) rows (r, s, w)
    cub_interp: np.ndarray           # (Nq, n_ep)
    cub_dr: np.ndarray
    cub_ds: np.ndarray
    face_gauss_t: np.ndarray         # (Ng,)
    face_gauss_w: np.ndarray
    face_gauss_interp: np.ndarray    # (Ng, P+1) from face nodes
    face_gauss_dt: np.ndarray        # (Ng, P+1) d/dt from face nodes
    cubature_strength: int = field(default=0)

    @property
    def r(self) -> np.ndarray:
        return self.nodes[:, 0]

    @property
    def s(self) -> np.ndarray:
        return self.nodes[:, 1]

    def edge_interior_nodes(self, face: int) -> np.ndarray:
        return self.face_nodes[face, 1:-1]


def _face_node_lists(r: np.ndarray, s: np.ndarray) -> np.ndarray:
    f0 = np.flatnonzero(np.abs(s + 1) < NODETOL)
    f0 = f0[np.argsort(r[f0])]
    f1 = np.flatnonzero(np.abs(r + s) < NODETOL)
    f1 = f1[np.argsort(s[f1])]
    f2 = np.flatnonzero(np.abs(r + 1) < NODETOL)
    f2 = f2[np.argsort(-s[f2])]
    return np.vstack([f0, f1, f2])


def interpolation_matrix(ref: ReferenceElement, points: np.ndarray) -> np.ndarray:
    """Rows evaluate a nodal field at the given reference points (shape (n, 2))."""
    points = np.atleast_2d(points)
    return vandermonde_2d(ref.order, points[:, 0], points[:, 1]) @ ref.Vinv


def gradient_interpolation(ref: ReferenceElement, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    points = np.atleast_2d(points)
    vr, vs = grad_vandermonde_2d(ref.order, points[:, 0], points[:, 1])
    return vr @ ref.Vinv, vs @ ref.Vinv


def face_quadrature(ref: ReferenceElement) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss points, weights and the face-node interpolation matrix of the edge rule."""
    return ref.face_gauss_t, ref.face_gauss_w, ref.face_gauss_interp


def build_reference_element(order: int, cubature_strength: int = None) -> ReferenceElement:
    """
    Assembles every reference operator for order P. The volume cubature defaults
    to strength 2P+2 (super-collocation) and the face rule to P+2 Gauss points.
    """
    if int(order) != order or not 1 <= order <= MAX_ORDER:
        raise ParameterError(f"polynomial order must be an integer in [1, {MAX_ORDER}], got {order}")
    order = int(order)
    n_ep = (order + 1) * (order + 2) // 2

    nodes = nodal_set(order)
    r, s = nodes[:, 0], nodes[:, 1]
    V = vandermonde_2d(order, r, s)
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > _MAX_VANDERMONDE_COND:
        raise ConstructionError(f"Vandermonde matrix is ill-conditioned (cond={cond:.3e}) for P={order}")
    Vinv = np.linalg.inv(V)
    Vr, Vs = grad_vandermonde_2d(order, r, s)
    Dr = Vr @ Vinv
    Ds = Vs @ Vinv
    M = np.linalg.inv(V @ V.T)
    M = 0.5 * (M + M.T)

    face_nodes = _face_node_lists(r, s)
    if face_nodes.shape != (3, order + 1):
        raise ConstructionError(f"expected {order + 1} nodes per face, found {face_nodes.shape}")
    face_params = r[face_nodes[0]]
    gl = jacobi_gl(0, 0, order)
    if np.max(np.abs(face_params - gl)) > 1e-8:
        raise ConstructionError("edge nodes do not coincide with Gauss-Lobatto points")

    v1d = vandermonde_1d(order, gl)
    v1d_inv = np.linalg.inv(v1d)
    face_mass_1d = np.linalg.inv(v1d @ v1d.T)
    face_diff_1d = grad_vandermonde_1d(order, gl) @ v1d_inv

    vertex_nodes = np.array([face_nodes[0, 0], face_nodes[1, 0], face_nodes[2, 0]])
    on_face = np.unique(face_nodes.ravel())
    interior_nodes = np.setdiff1d(np.arange(n_ep), on_face)

    strength = 2 * order + 2 if cubature_strength is None else int(cubature_strength)
    cub = collapsed_cubature(strength)
    cub_interp = vandermonde_2d(order, cub[:, 0], cub[:, 1]) @ Vinv
    cvr, cvs = grad_vandermonde_2d(order, cub[:, 0], cub[:, 1])

    tg, wg = jacobi_gq(0, 0, order + 2)
    face_gauss_interp = vandermonde_1d(order, tg) @ v1d_inv
    face_gauss_dt = grad_vandermonde_1d(order, tg) @ v1d_inv

    logger.debug("Reference element P=%d: %d nodes, %d cubature points", order, n_ep, len(cub))
    return ReferenceElement(
        order=order, n_ep=n_ep, nodes=nodes, V=V, Vr=Vr, Vs=Vs, Vinv=Vinv, Dr=Dr, Ds=Ds, M=M,
        face_nodes=face_nodes, face_params=face_params, face_mass_1d=face_mass_1d,
        face_diff_1d=face_diff_1d, vertex_nodes=vertex_nodes, interior_nodes=interior_nodes,
        cubature=cub, cub_interp=cub_interp, cub_dr=cvr @ Vinv, cub_ds=cvs @ Vinv,
        face_gauss_t=tg, face_gauss_w=wg, face_gauss_interp=face_gauss_interp,
        face_gauss_dt=face_gauss_dt, cubature_strength=strength,
    )


if __name__ == "__main__":
    for p in (1, 2, 4, 8):
        ref = build_reference_element(p)
        print(f"P={p}: n_ep={ref.n_ep}, cond(V)={np.linalg.cond(ref.V):.2e}, "
              f"max|Dr 1|={np.max(np.abs(ref.Dr.sum(axis=1))):.1e}")
