# assembly.py
"""
Continuous Galerkin assembly of the Laplace/Poisson problem.

Global numbering: mesh vertices first, then P-1 nodes per edge (oriented from
the lower to the higher vertex index), then element-interior nodes.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Union

import numpy as np
import scipy.sparse as sp

import linsolve
from errors import DirichletError, ParameterError
from geometry import GeometricFactors, element_node_coords, generalized_normal, geometric_factors
from mesh import BoundaryTag, Mesh
from refelem import ReferenceElement

logger = logging.getLogger(__name__)

FluxFunction = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
SourceFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


# --- Degrees of freedom ---

@dataclass(frozen=True)
class DofMap:
    element_dofs: np.ndarray            # (K, n_ep)
    n_dof: int
    coords: np.ndarray                  # (n_dof, 2)
    face_dofs: np.ndarray               # (Nb, P+1), rows aligned with mesh.boundary_faces
    tag_dofs: Dict[int, np.ndarray]
    fs_dofs: np.ndarray                 # free-surface trace ordered by x
    body_dofs: np.ndarray

    def dofs_with_tag(self, tag: BoundaryTag) -> np.ndarray:
        return self.tag_dofs.get(int(tag), np.empty(0, dtype=int))


def build_dofmap(mesh: Mesh, ref: ReferenceElement) -> DofMap:
    P, K = ref.order, mesh.n_elements
    n_vert = len(mesh.vertices)
    edge_ids: Dict[tuple, int] = {}
    for tri in mesh.triangles:
        for f in range(3):
            a, b = int(tri[f]), int(tri[(f + 1) % 3])
            edge_ids.setdefault((min(a, b), max(a, b)), len(edge_ids))
    n_edge_nodes = P - 1
    edge_base = n_vert
    interior_base = edge_base + len(edge_ids) * n_edge_nodes
    n_int = len(ref.interior_nodes)

    dofs = np.empty((K, ref.n_ep), dtype=int)
    for k, tri in enumerate(mesh.triangles):
        dofs[k, ref.vertex_nodes] = tri
        for f in range(3):
            a, b = int(tri[f]), int(tri[(f + 1) % 3])
            start = edge_base + edge_ids[(min(a, b), max(a, b))] * n_edge_nodes
            ids = start + np.arange(n_edge_nodes)
            dofs[k, ref.edge_interior_nodes(f)] = ids if a < b else ids[::-1]
        dofs[k, ref.interior_nodes] = interior_base + k * n_int + np.arange(n_int)
    n_dof = interior_base + K * n_int

    coords = np.empty((n_dof, 2))
    coords[dofs.ravel()] = element_node_coords(mesh, ref).reshape(-1, 2)

    face_dofs = dofs[mesh.boundary_faces[:, 0][:, None], ref.face_nodes[mesh.boundary_faces[:, 1]]]
    tag_dofs = {int(t): np.unique(face_dofs[mesh.faces_with_tag(t)]) for t in BoundaryTag}
    fs = tag_dofs[int(BoundaryTag.FreeSurface)]
    fs = fs[np.argsort(coords[fs, 0], kind="stable")]
    logger.debug("DofMap: %d dofs, %d on the free surface", n_dof, len(fs))
    return DofMap(element_dofs=dofs, n_dof=n_dof, coords=coords, face_dofs=face_dofs,
                  tag_dofs=tag_dofs, fs_dofs=fs, body_dofs=tag_dofs[int(BoundaryTag.Body)])


# --- System ---

@dataclass
class DiscreteLaplacian:
    mesh: Mesh
    ref: ReferenceElement
    factors: GeometricFactors
    dofmap: DofMap
    A: sp.csr_matrix
    b: np.ndarray
    quadrature: str = "auto"
    stats: Dict[str, float] = field(default_factory=dict)

    @property
    def n_dof(self) -> int:
        return self.dofmap.n_dof


def _local_stiffness_affine(ref: ReferenceElement, factors: GeometricFactors, elems: np.ndarray) -> np.ndarray:
    Srr = ref.Dr.T @ ref.M @ ref.Dr
    Srs = ref.Dr.T @ ref.M @ ref.Ds + ref.Ds.T @ ref.M @ ref.Dr
    Sss = ref.Ds.T @ ref.M @ ref.Ds
    rx, sx = factors.rx[elems, 0], factors.sx[elems, 0]
    rz, sz = factors.rz[elems, 0], factors.sz[elems, 0]
    J = factors.J[elems, 0]
    c_rr = J * (rx * rx + rz * rz)
    c_rs = J * (rx * sx + rz * sz)
    c_ss = J * (sx * sx + sz * sz)
    return (c_rr[:, None, None] * Srr + c_rs[:, None, None] * Srs + c_ss[:, None, None] * Sss)


def _local_stiffness_cubature(ref: ReferenceElement, factors: GeometricFactors, elems: np.ndarray) -> np.ndarray:
    w = ref.cubature[:, 2][None, :] * factors.cub_J[elems]               # (n, Nq)
    dx = (factors.cub_rx[elems][:, :, None] * ref.cub_dr[None]
          + factors.cub_sx[elems][:, :, None] * ref.cub_ds[None])       # (n, Nq, n_ep)
    dz = (factors.cub_rz[elems][:, :, None] * ref.cub_dr[None]
          + factors.cub_sz[elems][:, :, None] * ref.cub_ds[None])
    return np.einsum("eq,eqi,eqj->eij", w, dx, dx) + np.einsum("eq,eqi,eqj->eij", w, dz, dz)


def _scatter_matrix(dofs: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    n_ep = dofs.shape[1]
    rows = np.repeat(dofs, n_ep, axis=1).ravel()
    cols = np.tile(dofs, (1, n_ep)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_stiffness(mesh: Mesh, factors: GeometricFactors, ref: ReferenceElement,
                       dofmap: Optional[DofMap] = None, quadrature: str = "auto") -> DiscreteLaplacian:
    """
    quadrature: "auto" integrates affine elements exactly with the reference
    mass matrix and curved ones by cubature; "cubature" uses cubature everywhere.
    """
    if quadrature not in ("auto", "cubature"):
        raise ParameterError(f"unknown quadrature mode '{quadrature}'")
    start = time.perf_counter()
    dofmap = dofmap or build_dofmap(mesh, ref)
    local = np.empty((mesh.n_elements, ref.n_ep, ref.n_ep))
    exact = factors.affine if quadrature == "auto" else np.zeros(mesh.n_elements, dtype=bool)
    if exact.any():
        local[exact] = _local_stiffness_affine(ref, factors, np.flatnonzero(exact))
    if (~exact).any():
        local[~exact] = _local_stiffness_cubature(ref, factors, np.flatnonzero(~exact))

    A = _scatter_matrix(dofmap.element_dofs, local, dofmap.n_dof)
    A = 0.5 * (A + A.T)
    A = A.tocsr()
    A.eliminate_zeros()
    elapsed = time.perf_counter() - start
    logger.info("Assembled stiffness: N_dof=%d, nnz=%d, %d curved elements",
                dofmap.n_dof, A.nnz, int((~factors.affine).sum()))
    return DiscreteLaplacian(mesh=mesh, ref=ref, factors=factors, dofmap=dofmap, A=A,
                             b=np.zeros(dofmap.n_dof), quadrature=quadrature,
                             stats={"assembly_seconds": elapsed})


def build_laplacian(mesh: Mesh, ref: ReferenceElement, quadrature: str = "auto") -> DiscreteLaplacian:
    factors = geometric_factors(mesh, ref)
    return assemble_stiffness(mesh, factors, ref, quadrature=quadrature)


# --- Loads ---

def _faces(sys: DiscreteLaplacian, tag: BoundaryTag) -> np.ndarray:
    rows = sys.mesh.faces_with_tag(tag)
    if rows.size == 0:
        logger.warning("No boundary faces carry tag %s; flux ignored", BoundaryTag(tag).name)
    return rows


def face_mass_operator(sys: DiscreteLaplacian, rows: np.ndarray) -> sp.csr_matrix:
    """Global boundary mass matrix over the given rows of mesh.boundary_faces."""
    rows = np.asarray(rows, dtype=int)
    if rows.size == 0:
        return sp.csr_matrix((sys.n_dof, sys.n_dof))
    return _scatter_matrix(sys.dofmap.face_dofs[rows], sys.factors.face_mass[rows], sys.n_dof)


def neumann_operator(sys: DiscreteLaplacian, tag: BoundaryTag) -> sp.csr_matrix:
    """Sparse boundary mass matrix on the tagged faces: b += B @ q for nodal q."""
    return face_mass_operator(sys, sys.mesh.faces_with_tag(tag))


def assemble_neumann_flux(sys: DiscreteLaplacian, tag: BoundaryTag,
                          q: Union[float, np.ndarray, FluxFunction],
                          b: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Adds the boundary integral of q v over the faces with `tag` to b (a copy of
    sys.b when b is None) and returns it. q may be a constant, global nodal
    values (n_dof,), per-face nodal values (n_faces, P+1), or a callable
    q(x, z, n_x, n_z) evaluated at the face Gauss points.
    """
    b = sys.b.copy() if b is None else b
    rows = _faces(sys, tag)
    if rows.size == 0:
        return b
    f = sys.factors
    dofs = sys.dofmap.face_dofs[rows]
    if callable(q):
        values = q(f.gauss_x[rows], f.gauss_z[rows], f.gauss_nx[rows], f.gauss_nz[rows])
        weighted = sys.ref.face_gauss_w[None, :] * f.gauss_sJ[rows] * np.broadcast_to(values, f.gauss_sJ[rows].shape)
        contrib = weighted @ sys.ref.face_gauss_interp
    else:
        q = np.asarray(q, dtype=float)
        if q.ndim == 0:
            nodal = np.full(dofs.shape, float(q))
        elif q.shape == (sys.n_dof,):
            nodal = q[dofs]
        elif q.shape == dofs.shape:
            nodal = q
        else:
            raise ParameterError(f"flux array of shape {q.shape} matches neither {sys.n_dof} dofs nor {dofs.shape}")
        contrib = np.einsum("fij,fj->fi", f.face_mass[rows], nodal)
    np.add.at(b, dofs.ravel(), contrib.ravel())
    return b


def assemble_volume_source(sys: DiscreteLaplacian, f: SourceFunction,
                           b: Optional[np.ndarray] = None) -> np.ndarray:
    """Adds the cubature of f v over every element to b and returns it."""
    b = sys.b.copy() if b is None else b
    fac = sys.factors
    values = np.broadcast_to(f(fac.cub_x, fac.cub_z), fac.cub_x.shape)
    weighted = sys.ref.cubature[:, 2][None, :] * fac.cub_J * values
    contrib = weighted @ sys.ref.cub_interp
    np.add.at(b, sys.dofmap.element_dofs.ravel(), contrib.ravel())
    return b


def body_normal_load(sys: DiscreteLaplacian, mode: int) -> np.ndarray:
    """Vector of the integrals of n_mode v over the body, normals taken at face Gauss points."""
    return assemble_neumann_flux(
        sys, BoundaryTag.Body,
        lambda x, z, nx, nz: generalized_normal(mode, x, z, nx, nz),
        b=np.zeros(sys.n_dof))


def boundary_mass(sys: DiscreteLaplacian, tag: BoundaryTag, dofs: np.ndarray) -> sp.csr_matrix:
    """Boundary mass matrix on `tag` restricted to the given dof list (in that order)."""
    B = neumann_operator(sys, tag).tocsr()
    return B[dofs][:, dofs].tocsr()


# --- Dirichlet conditions ---

class DirichletSystem:
    """
    A with Dirichlet rows and columns replaced by the identity. The removed
    columns are kept, so new boundary values only change the right-hand side
    and the factorization is computed once.
    """

    def __init__(self, base: DiscreteLaplacian, nodes: np.ndarray, values: np.ndarray):
        self.base = base
        self.nodes = nodes
        self.values = values
        n = base.n_dof
        free = np.ones(n, dtype=bool)
        free[nodes] = False
        self.free = free
        P_free = sp.diags(free.astype(float))
        A = base.A.tocsr()
        self.A = (P_free @ A @ P_free + sp.diags((~free).astype(float))).tocsr()
        self.A.eliminate_zeros()
        self.columns = (P_free @ A[:, nodes]).tocsr()
        self._factorization: Optional[linsolve.Factorization] = None

    @property
    def factorization(self) -> linsolve.Factorization:
        if self._factorization is None:
            self._factorization = linsolve.factorize(self.A, linsolve.rcm_permutation(self.A))
        return self._factorization

    def rhs(self, values: Optional[np.ndarray] = None, b: Optional[np.ndarray] = None) -> np.ndarray:
        g = self.values if values is None else np.asarray(values, dtype=float)
        b = self.base.b if b is None else np.asarray(b, dtype=float)
        if g.shape[0] != len(self.nodes):
            raise DirichletError(f"expected {len(self.nodes)} Dirichlet values, got {g.shape[0]}")
        if b.ndim < g.ndim:
            b = np.broadcast_to(b[:, None], (b.shape[0],) + g.shape[1:])
        out = b - self.columns @ g
        out = out * (self.free if out.ndim == 1 else self.free[:, None])
        out[self.nodes] = g
        return out

    def solve(self, values: Optional[np.ndarray] = None, b: Optional[np.ndarray] = None) -> np.ndarray:
        """Solution for new boundary values and/or load; several columns at once are allowed."""
        return linsolve.solve(self.factorization, self.rhs(values, b))


def impose_dirichlet(sys: DiscreteLaplacian, nodes, values) -> DirichletSystem:
    nodes = np.asarray(nodes, dtype=int).ravel()
    values = np.broadcast_to(np.asarray(values, dtype=float), nodes.shape).copy()
    if nodes.size and (nodes.min() < 0 or nodes.max() >= sys.n_dof):
        raise DirichletError("Dirichlet node index out of range")

    unique, first, inverse = np.unique(nodes, return_index=True, return_inverse=True)
    kept = values[first]
    scale = max(1.0, float(np.max(np.abs(values))) if values.size else 1.0)
    conflict = np.abs(values - kept[inverse]) > 1e-12 * scale
    if conflict.any():
        node = int(nodes[np.flatnonzero(conflict)[0]])
        raise DirichletError(f"conflicting Dirichlet values for node {node}")
    if unique.size == 0:
        logger.warning("Dirichlet set is empty; the system is singular for pure Neumann data")
    return DirichletSystem(sys, unique, kept)
