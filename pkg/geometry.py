# geometry.py
"""
Element maps, curved body elements and geometric factors.

Affine elements map the reference triangle with
    x(r, s) = -(r + s)/2 v0 + (1 + r)/2 v1 + (1 + s)/2 v2.
Elements owning a Body face get explicit high-order node coordinates: the
straight face is displaced onto the analytic curve and the displacement is
blended linearly into the element, vanishing on its other two edges.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from errors import CurvingError, GeometryError, ParameterError
from mesh import BoundaryTag, Mesh
from refelem import ReferenceElement, gradient_interpolation, interpolation_matrix, vandermonde_1d

logger = logging.getLogger(__name__)

GENERALIZED_MODES = (1, 3, 5)


# --- Body curves ---

@dataclass(frozen=True)
class CircleArc:
    radius: float
    center: Tuple[float, float] = (0.0, 0.0)

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.abs(np.linalg.norm(np.atleast_2d(points) - self.center, axis=1) - self.radius)

    def points_between(self, pa: np.ndarray, pb: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Points on the shorter arc from pa to pb, uniform in angle over t in [-1, 1]."""
        c = np.asarray(self.center)
        ta = np.arctan2(pa[1] - c[1], pa[0] - c[0])
        tb = np.arctan2(pb[1] - c[1], pb[0] - c[0])
        dtheta = (tb - ta + np.pi) % (2 * np.pi) - np.pi
        theta = ta + dtheta * 0.5 * (1 + np.asarray(t))
        return c + self.radius * np.column_stack([np.cos(theta), np.sin(theta)])


@dataclass(frozen=True)
class StraightCurve:
    """Identity curve: body faces stay straight."""

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.zeros(len(np.atleast_2d(points)))

    def points_between(self, pa: np.ndarray, pb: np.ndarray, t: np.ndarray) -> np.ndarray:
        w = 0.5 * (1 + np.asarray(t))[:, None]
        return (1 - w) * np.asarray(pa) + w * np.asarray(pb)


# --- Element node coordinates ---

def affine_node_coords(mesh: Mesh, ref: ReferenceElement) -> np.ndarray:
    p = mesh.vertices[mesh.triangles]                      # (K, 3, 2)
    r, s = ref.r[None, :, None], ref.s[None, :, None]
    return (-(r + s) / 2 * p[:, None, 0] + (1 + r) / 2 * p[:, None, 1]
            + (1 + s) / 2 * p[:, None, 2])


def element_node_coords(mesh: Mesh, ref: ReferenceElement) -> np.ndarray:
    """(K, n_ep, 2) physical node coordinates, curved elements included."""
    coords = affine_node_coords(mesh, ref)
    if mesh.curved:
        if mesh.curved_order != ref.order:
            raise GeometryError(
                f"mesh was curved for P={mesh.curved_order} but the reference element has P={ref.order}")
        for k, xz in mesh.curved.items():
            coords[k] = xz
    return coords


def _barycentric(ref: ReferenceElement) -> np.ndarray:
    """(n_ep, 3) barycentric coordinates of the reference nodes w.r.t. v0, v1, v2."""
    r, s = ref.r, ref.s
    return np.column_stack([-(r + s) / 2, (1 + r) / 2, (1 + s) / 2])


def curve_body_elements(mesh: Mesh, ref: ReferenceElement, body, tol: float = 1e-6) -> Mesh:
    """
    Returns a copy of the mesh whose Body elements carry curved node coordinates
    for order ref.order. Raises CurvingError when a Body vertex is off the curve
    or the blended map folds (J <= 0).
    """
    coords = affine_node_coords(mesh, ref)
    lam = _barycentric(ref)
    v1d_inv = np.linalg.inv(vandermonde_1d(ref.order, ref.face_params))
    scale = max(np.ptp(mesh.vertices[:, 0]), np.ptp(mesh.vertices[:, 1]), 1.0)

    curved = {}
    for row in mesh.faces_with_tag(BoundaryTag.Body):
        k, f, _ = mesh.boundary_faces[row]
        ia, ib = mesh.triangles[k, f], mesh.triangles[k, (f + 1) % 3]
        pa, pb = mesh.vertices[ia], mesh.vertices[ib]
        off = body.distance(np.vstack([pa, pb]))
        if np.max(off) > tol * scale:
            raise CurvingError(f"body face of element {k} is {np.max(off):.3e} m off the curve", element=int(k))

        t = ref.face_params
        straight = np.outer(0.5 * (1 - t), pa) + np.outer(0.5 * (1 + t), pb)
        disp_face = body.points_between(pa, pb, t) - straight         # (P+1, 2), zero at the ends
        modal = v1d_inv @ disp_face

        la, lb = lam[:, f], lam[:, (f + 1) % 3]
        tv = 2 * lb - 1
        regular = (1 - lb) > 1e-10
        blend = np.where(regular, la / np.where(regular, 1 - lb, 1.0), 0.0)
        disp_vol = (vandermonde_1d(ref.order, tv) @ modal) * blend[:, None]

        base = curved.get(int(k), coords[k])
        curved[int(k)] = base + disp_vol

    for k, xz in curved.items():
        xr, xs = ref.Dr @ xz[:, 0], ref.Ds @ xz[:, 0]
        zr, zs = ref.Dr @ xz[:, 1], ref.Ds @ xz[:, 1]
        j_nodes = xr * zs - xs * zr
        cub_x, cub_z = ref.cub_dr @ xz, ref.cub_ds @ xz
        j_cub = cub_x[:, 0] * cub_z[:, 1] - cub_z[:, 0] * cub_x[:, 1]
        if min(j_nodes.min(), j_cub.min()) <= 0:
            raise CurvingError(f"curved element {k} folds (min J = {min(j_nodes.min(), j_cub.min()):.3e})",
                               element=k)

    logger.info("Curved %d body elements at P=%d", len(curved), ref.order)
    return mesh.with_curved(curved, ref.order)


# --- Geometric factors ---

@dataclass(frozen=True)
class GeometricFactors:
    """
    Volume metrics at the nodes and at the cubature points, and face data for
    every boundary face (rows aligned with mesh.boundary_faces) at the face
    nodes and at the face Gauss points. Face quantities follow the face
    direction, with the outward normal pointing out of the fluid.
    """
    x: np.ndarray           # (K, n_ep)
    z: np.ndarray
    rx: np.ndarray
    sx: np.ndarray
    rz: np.ndarray
    sz: np.ndarray
    J: np.ndarray
    cub_x: np.ndarray       # (K, Nq)
    cub_z: np.ndarray
    cub_rx: np.ndarray
    cub_sx: np.ndarray
    cub_rz: np.ndarray
    cub_sz: np.ndarray
    cub_J: np.ndarray
    affine: np.ndarray      # (K,) bool
    face_x: np.ndarray      # (Nb, P+1)
    face_z: np.ndarray
    nx: np.ndarray
    nz: np.ndarray
    sJ: np.ndarray
    gauss_x: np.ndarray     # (Nb, Ng)
    gauss_z: np.ndarray
    gauss_nx: np.ndarray
    gauss_nz: np.ndarray
    gauss_sJ: np.ndarray
    face_mass: np.ndarray   # (Nb, P+1, P+1)

    def generalized_normal(self, mode: int, at: str = "nodes") -> np.ndarray:
        """n_1 = n_x, n_3 = n_z, n_5 = z n_x - x n_z (moment arm about the origin)."""
        if at == "nodes":
            x, z, nx, nz = self.face_x, self.face_z, self.nx, self.nz
        elif at == "gauss":
            x, z, nx, nz = self.gauss_x, self.gauss_z, self.gauss_nx, self.gauss_nz
        else:
            raise ParameterError(f"unknown evaluation set '{at}'")
        return generalized_normal(mode, x, z, nx, nz)


def generalized_normal(mode: int, x, z, nx, nz) -> np.ndarray:
    if mode == 1:
        return np.asarray(nx)
    if mode == 3:
        return np.asarray(nz)
    if mode == 5:
        return np.asarray(z) * nx - np.asarray(x) * nz
    raise ParameterError(f"mode must be one of {GENERALIZED_MODES}, got {mode}")


def _metrics(xr, xs, zr, zs):
    J = xr * zs - xs * zr
    return zs / J, -zr / J, -xs / J, xr / J, J


def geometric_factors(mesh: Mesh, ref: ReferenceElement) -> GeometricFactors:
    xz = element_node_coords(mesh, ref)
    x, z = xz[..., 0], xz[..., 1]

    xr, xs = x @ ref.Dr.T, x @ ref.Ds.T
    zr, zs = z @ ref.Dr.T, z @ ref.Ds.T
    rx, sx, rz, sz, J = _metrics(xr, xs, zr, zs)

    cxr, cxs = x @ ref.cub_dr.T, x @ ref.cub_ds.T
    czr, czs = z @ ref.cub_dr.T, z @ ref.cub_ds.T
    crx, csx, crz, csz, cJ = _metrics(cxr, cxs, czr, czs)

    for values, where in ((J, "node"), (cJ, "cubature point")):
        bad = np.flatnonzero(values.min(axis=1) <= 0)
        if bad.size:
            raise GeometryError(f"element {bad[0]} has J <= 0 at a {where}", element=int(bad[0]))

    affine = np.ones(mesh.n_elements, dtype=bool)
    affine[list(mesh.curved.keys())] = False

    elem, local = mesh.boundary_faces[:, 0], mesh.boundary_faces[:, 1]
    fnodes = ref.face_nodes[local]                                   # (Nb, P+1)
    fx, fz = x[elem[:, None], fnodes], z[elem[:, None], fnodes]
    tx, tz = fx @ ref.face_diff_1d.T, fz @ ref.face_diff_1d.T
    sJ = np.hypot(tx, tz)

    gx, gz = fx @ ref.face_gauss_interp.T, fz @ ref.face_gauss_interp.T
    gtx, gtz = fx @ ref.face_gauss_dt.T, fz @ ref.face_gauss_dt.T
    gsJ = np.hypot(gtx, gtz)

    weights = ref.face_gauss_w[None, :] * gsJ                       # (Nb, Ng)
    face_mass = np.einsum("fg,gi,gj->fij", weights, ref.face_gauss_interp, ref.face_gauss_interp)

    logger.debug("Geometric factors: %d elements (%d curved), %d boundary faces",
                 mesh.n_elements, int((~affine).sum()), len(elem))
    return GeometricFactors(
        x=x, z=z, rx=rx, sx=sx, rz=rz, sz=sz, J=J,
        cub_x=x @ ref.cub_interp.T, cub_z=z @ ref.cub_interp.T,
        cub_rx=crx, cub_sx=csx, cub_rz=crz, cub_sz=csz, cub_J=cJ, affine=affine,
        face_x=fx, face_z=fz, nx=tz / sJ, nz=-tx / sJ, sJ=sJ,
        gauss_x=gx, gauss_z=gz, gauss_nx=gtz / gsJ, gauss_nz=-gtx / gsJ, gauss_sJ=gsJ,
        face_mass=face_mass,
    )


# --- Point location ---

def _affine_reference_coords(p: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Reference (r, s) of `point` under the affine map of each triangle in p (K, 3, 2)."""
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e2[:, 0] * e1[:, 1]
    d = point - p[:, 0]
    l1 = (d[:, 0] * e2[:, 1] - e2[:, 0] * d[:, 1]) / det
    l2 = (e1[:, 0] * d[:, 1] - d[:, 0] * e1[:, 1]) / det
    return np.column_stack([2 * l1 - 1, 2 * l2 - 1])


def _inside(rs: np.ndarray, tol: float) -> np.ndarray:
    r, s = rs[..., 0], rs[..., 1]
    return (r >= -1 - tol) & (s >= -1 - tol) & (r + s <= tol)


def _newton_reference_coords(ref: ReferenceElement, xz: np.ndarray, point: np.ndarray,
                             start: np.ndarray, max_iter: int = 30) -> Optional[np.ndarray]:
    rs = start.copy()
    for _ in range(max_iter):
        row = interpolation_matrix(ref, rs)[0]
        dr, ds = gradient_interpolation(ref, rs)
        residual = row @ xz - point
        jac = np.column_stack([dr[0] @ xz, ds[0] @ xz])
        try:
            step = np.linalg.solve(jac, residual)
        except np.linalg.LinAlgError:
            return None
        rs = rs - step
        if np.max(np.abs(step)) < 1e-14:
            break
    return rs


def locate_points(mesh: Mesh, factors: GeometricFactors, ref: ReferenceElement,
                  points: np.ndarray, tol: float = 1e-9) -> Tuple[np.ndarray, np.ndarray]:
    """
    Element index and reference coordinates of each physical point. Affine
    elements invert their map directly; curved candidates are refined by Newton.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    p = mesh.vertices[mesh.triangles]
    xz = np.stack([factors.x, factors.z], axis=-1)
    elements = np.empty(len(points), dtype=int)
    coords = np.empty((len(points), 2))

    for n, point in enumerate(points):
        rs_all = _affine_reference_coords(p, point)
        found = False
        for k in np.flatnonzero(factors.affine & _inside(rs_all, tol)):
            elements[n], coords[n] = k, rs_all[k]
            found = True
            break
        if not found:
            for k in np.flatnonzero(~factors.affine & _inside(rs_all, 0.25)):
                rs = _newton_reference_coords(ref, xz[k], point, rs_all[k])
                if rs is not None and _inside(rs, tol):
                    elements[n], coords[n] = k, rs
                    found = True
                    break
        if not found:
            raise GeometryError(f"point ({point[0]:.6g}, {point[1]:.6g}) lies outside the mesh")
    return elements, coords


def point_operators(ref: ReferenceElement, factors: GeometricFactors, elements: np.ndarray,
                    coords: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Element-local rows (n, n_ep) evaluating a nodal field, its x- and its
    z-derivative at located points.
    """
    values = interpolation_matrix(ref, coords)
    dr, ds = gradient_interpolation(ref, coords)
    x, z = factors.x[elements], factors.z[elements]
    xr, xs = np.sum(dr * x, axis=1), np.sum(ds * x, axis=1)
    zr, zs = np.sum(dr * z, axis=1), np.sum(ds * z, axis=1)
    rx, sx, rz, sz, _ = _metrics(xr, xs, zr, zs)
    ddx = rx[:, None] * dr + sx[:, None] * ds
    ddz = rz[:, None] * dr + sz[:, None] * ds
    return values, ddx, ddz
