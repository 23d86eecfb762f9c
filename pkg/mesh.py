# mesh.py
"""
Triangular meshes of the 2D fluid domain with tagged boundaries.

The built-in generators cover the two benchmark topologies (quarter cylinder
and half box cut out of the top-left corner of the tank) plus a closed basin.
Each one maps a single logical rectangle onto the fluid region by
transfinite interpolation and splits every cell into two triangles.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from errors import MeshGenerationError, MeshValidationError

logger = logging.getLogger(__name__)

MAX_LAYERS = 5000
# body-row triangle height, in arc sagittas, below which curving at P >= 2 folds
SAGITTA_CLEARANCE = 4.0
# target first symmetry-side layer, in arc sagittas, when arc-face layers overshoot the depth
SYMMETRY_FIRST_LAYER = 6.0


class BoundaryTag(IntEnum):
    FreeSurface = 1
    Bed = 2
    FarField = 3
    Body = 4
    Symmetry = 5


@dataclass(frozen=True)
class Mesh:
    """
    vertices: (Nv, 2) in meters, (x, z) with z = 0 the still water line.
    triangles: (K, 3) counter-clockwise vertex indices.
    boundary_faces: (Nb, 3) rows of (element, local face, tag); local face f joins
    triangle vertices f and (f + 1) % 3.
    curved: element -> (n_ep, 2) high-order node coordinates replacing the affine map.
    """
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_faces: np.ndarray
    depth: float
    length: float
    curved: Dict[int, np.ndarray] = field(default_factory=dict)
    curved_order: Optional[int] = None
    name: str = "mesh"

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    def faces_with_tag(self, tag: BoundaryTag) -> np.ndarray:
        return np.flatnonzero(self.boundary_faces[:, 2] == int(tag))

    def face_vertices(self, face_rows: Optional[np.ndarray] = None) -> np.ndarray:
        """(n, 2) vertex indices of boundary faces, in the element's CCW direction."""
        rows = self.boundary_faces if face_rows is None else self.boundary_faces[face_rows]
        elem, local = rows[:, 0], rows[:, 1]
        first = self.triangles[elem, local]
        second = self.triangles[elem, (local + 1) % 3]
        return np.column_stack([first, second])

    def element_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def with_curved(self, curved: Dict[int, np.ndarray], order: int) -> "Mesh":
        return replace(self, curved=curved, curved_order=order)


# --- Validation ---

def _edge_table(triangles: np.ndarray) -> Dict[Tuple[int, int], List[Tuple[int, int]]]:
    table: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
    for k, tri in enumerate(triangles):
        for f in range(3):
            a, b = int(tri[f]), int(tri[(f + 1) % 3])
            table.setdefault((min(a, b), max(a, b)), []).append((k, f))
    return table


def euler_characteristic(mesh: Mesh) -> int:
    used = np.unique(mesh.triangles)
    n_edges = len(_edge_table(mesh.triangles))
    return len(used) - n_edges + mesh.n_elements


def validate_mesh(mesh: Mesh, require_simply_connected: bool = False) -> None:
    """Raises MeshValidationError on any conformity, tagging or orientation defect."""
    tris = mesh.triangles
    if tris.ndim != 2 or tris.shape[1] != 3:
        raise MeshValidationError("triangles must have shape (K, 3)")
    if tris.min() < 0 or tris.max() >= len(mesh.vertices):
        raise MeshValidationError("triangle references a vertex that does not exist")

    areas = mesh.element_areas()
    bad = np.flatnonzero(areas <= 0)
    if bad.size:
        raise MeshValidationError(f"element {bad[0]} has non-positive signed area {areas[bad[0]]:.3e}")

    table = _edge_table(tris)
    for edge, owners in table.items():
        if len(owners) > 2:
            raise MeshValidationError(f"edge {edge} is shared by {len(owners)} triangles (non-conforming)")
    boundary_edges = {edge for edge, owners in table.items() if len(owners) == 1}

    valid_tags = {int(t) for t in BoundaryTag}
    seen = set()
    for elem, local, tag in mesh.boundary_faces:
        if int(tag) not in valid_tags:
            raise MeshValidationError(f"unknown boundary tag {tag} on element {elem}")
        a, b = int(tris[elem, local]), int(tris[elem, (local + 1) % 3])
        edge = (min(a, b), max(a, b))
        if edge not in boundary_edges:
            raise MeshValidationError(f"face {edge} of element {elem} is not on the boundary")
        if edge in seen:
            raise MeshValidationError(f"boundary face {edge} is tagged more than once")
        seen.add(edge)
    untagged = boundary_edges - seen
    if untagged:
        raise MeshValidationError(f"{len(untagged)} boundary edges carry no tag, e.g. {sorted(untagged)[0]}")

    chi = euler_characteristic(mesh)
    if chi != 1:
        message = f"Euler characteristic {chi} does not describe a simply-connected domain"
        if require_simply_connected:
            raise MeshValidationError(message)
        logger.warning(message)


def tag_boundary(triangles: np.ndarray, edge_tags: Dict[Tuple[int, int], int]) -> np.ndarray:
    """Builds the (element, local face, tag) table from tags keyed by sorted vertex pairs."""
    rows = []
    for k, tri in enumerate(triangles):
        for f in range(3):
            a, b = int(tri[f]), int(tri[(f + 1) % 3])
            tag = edge_tags.get((min(a, b), max(a, b)))
            if tag is not None:
                rows.append((k, f, int(tag)))
    return np.array(rows, dtype=int).reshape(-1, 3)


# --- Structured-block construction ---

def _graded_fractions(first: float, total: float, grading: float) -> np.ndarray:
    """Cumulative fractions in [0, 1] of a geometric progression starting near `first`."""
    if first <= 0 or total <= 0:
        raise MeshGenerationError("edge length and segment length must be positive")
    if grading < 1:
        raise MeshGenerationError(f"grading must be >= 1, got {grading}")
    widths = []
    covered = 0.0
    while covered < total * (1 - 1e-9):
        widths.append(first * grading ** len(widths))
        covered += widths[-1]
        if len(widths) > MAX_LAYERS:
            raise MeshGenerationError(
                f"sizing needs more than {MAX_LAYERS} layers (edge {first:.3e} m over {total:.3e} m)")
    # drop a sliver last layer rather than keeping a degenerate cell
    if len(widths) > 1 and covered - total > 0.5 * widths[-1]:
        widths.pop()
    cumulative = np.concatenate([[0.0], np.cumsum(widths)])
    return cumulative / cumulative[-1]


def _layer_fractions(first: float, total: float, n: int) -> np.ndarray:
    """Cumulative fractions of `n` geometric layers of first width `first` that sum to `total`."""
    if n < 1 or first <= 0 or first > total:
        raise MeshGenerationError(f"cannot fit {n} layers starting at {first:.3e} m into {total:.3e} m")
    if n == 1 or abs(n * first - total) <= 1e-12 * total:
        return np.linspace(0.0, 1.0, n + 1)

    powers = np.arange(n)

    def excess(q: float) -> float:
        return first * float(np.sum(q ** powers)) - total

    if n * first < total:
        ratio = brentq(excess, 1.0, (total / first) ** (1.0 / (n - 1)) + 1.0, xtol=1e-14)
    else:
        ratio = brentq(excess, 0.0, 1.0, xtol=1e-14)
    cumulative = np.concatenate([[0.0], np.cumsum(first * ratio ** powers)])
    return cumulative / cumulative[-1]


def arc_sagitta(R: float, beta: int) -> float:
    """Distance between the midpoint of a quarter-arc face and its chord."""
    return float(R * (1 - np.cos(0.25 * np.pi / beta)))


def body_row_heights(mesh: Mesh) -> np.ndarray:
    """Height of each Body-face triangle above its straight body face."""
    rows = mesh.faces_with_tag(BoundaryTag.Body)
    elem, local = mesh.boundary_faces[rows, 0], mesh.boundary_faces[rows, 1]
    pa = mesh.vertices[mesh.triangles[elem, local]]
    pb = mesh.vertices[mesh.triangles[elem, (local + 1) % 3]]
    apex = mesh.vertices[mesh.triangles[elem, (local + 2) % 3]]
    chord, rise = pb - pa, apex - pa
    return np.abs(chord[:, 0] * rise[:, 1] - chord[:, 1] * rise[:, 0]) / np.linalg.norm(chord, axis=1)


def _polyline(points: Sequence[Tuple[float, float]], counts: Sequence[int]) -> np.ndarray:
    """Points along a polyline with `counts[i]` uniform segments on leg i."""
    out = [np.asarray(points[0], dtype=float)]
    for (p, q, n) in zip(points[:-1], points[1:], counts):
        p, q = np.asarray(p, float), np.asarray(q, float)
        for i in range(1, n + 1):
            out.append(p + (q - p) * i / n)
    return np.array(out)


def _transfinite_grid(inner: np.ndarray, outer: np.ndarray,
                      side0: np.ndarray, side1: np.ndarray) -> np.ndarray:
    """
    Gordon-Hall (bilinearly blended) grid. inner/outer: (n_xi+1, 2) along xi;
    side0/side1: (n_eta+1, 2) along eta at xi = 0 and xi = 1. Returns (n_xi+1, n_eta+1, 2).
    """
    n_xi, n_eta = len(inner) - 1, len(side0) - 1
    # blending parameters follow the arc length of the bounding curves
    xi = _arc_fraction(inner)[:, None, None]
    xi_o = _arc_fraction(outer)[:, None, None]
    eta0 = _arc_fraction(side0)[None, :, None]
    eta1 = _arc_fraction(side1)[None, :, None]
    xi_b = 0.5 * (xi + xi_o)
    eta = (1 - xi_b) * eta0 + xi_b * eta1

    c_in = inner[:, None, :]
    c_out = outer[:, None, :]
    d0 = side0[None, :, :]
    d1 = side1[None, :, :]
    grid = ((1 - eta) * c_in + eta * c_out + (1 - xi_b) * d0 + xi_b * d1
            - ((1 - xi_b) * (1 - eta) * inner[0] + xi_b * (1 - eta) * inner[-1]
               + (1 - xi_b) * eta * outer[0] + xi_b * eta * outer[-1]))
    grid[:, 0] = inner
    grid[:, -1] = outer
    grid[0, :] = side0
    grid[-1, :] = side1
    assert grid.shape == (n_xi + 1, n_eta + 1, 2)
    return grid


def _arc_fraction(points: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    return cum / cum[-1]


def _triangulate_grid(grid: np.ndarray, symmetric: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Splits every cell into two CCW triangles; alternating diagonals when symmetric."""
    n_i, n_j = grid.shape[0] - 1, grid.shape[1] - 1
    vertices = grid.reshape(-1, 2)

    def vid(i: int, j: int) -> int:
        return i * (n_j + 1) + j

    triangles = []
    for i in range(n_i):
        for j in range(n_j):
            p00, p10, p01, p11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            lean = (i + j) % 2 == 0 if symmetric else True
            if lean:
                triangles += [(p00, p10, p11), (p00, p11, p01)]
            else:
                triangles += [(p00, p10, p01), (p10, p11, p01)]
    triangles = np.array(triangles, dtype=int)

    p = vertices[triangles]
    signed = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
              - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    flip = signed < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return vertices, triangles


def _side_edge_tags(n_i: int, n_j: int,
                    tag_j0: Sequence[int], tag_jn: Sequence[int],
                    tag_i0: int, tag_in: int) -> Dict[Tuple[int, int], int]:
    def vid(i: int, j: int) -> int:
        return i * (n_j + 1) + j

    tags: Dict[Tuple[int, int], int] = {}

    def put(a: int, b: int, tag: int) -> None:
        tags[(min(a, b), max(a, b))] = int(tag)

    for i in range(n_i):
        put(vid(i, 0), vid(i + 1, 0), tag_j0[i])
        put(vid(i, n_j), vid(i + 1, n_j), tag_jn[i])
    for j in range(n_j):
        put(vid(0, j), vid(0, j + 1), tag_i0)
        put(vid(n_i, j), vid(n_i, j + 1), tag_in)
    return tags


def _finish(name: str, grid: np.ndarray, symmetric: bool, tags: Dict[Tuple[int, int], int],
            depth: float, length: float) -> Mesh:
    vertices, triangles = _triangulate_grid(grid, symmetric)
    mesh = Mesh(vertices=vertices, triangles=triangles,
                boundary_faces=tag_boundary(triangles, tags),
                depth=float(depth), length=float(length), name=name)
    try:
        validate_mesh(mesh, require_simply_connected=True)
    except MeshValidationError as e:
        raise MeshGenerationError(f"{name}: generated mesh is invalid ({e})") from e
    logger.info("Generated %s: %d elements, %d vertices", name, mesh.n_elements, len(vertices))
    return mesh


def _corner_index(n_cells: int, fraction: float) -> int:
    return int(min(max(round(n_cells * fraction), 1), n_cells - 1))


# --- Generators ---

def generate_cylinder_domain(R: float, h: float, L: float, beta: int,
                             grading: float = 1.0, symmetric_fs: bool = True) -> Mesh:
    """
    Quarter cylinder of radius R in the top-left corner of a tank [0, L] x [-h, 0].
    `beta` faces on the quarter arc; the free surface starts with the arc face
    length next to the body and grows geometrically by `grading` towards L.
    """
    if not (0 < R < h and R < L):
        raise MeshGenerationError(f"cylinder needs 0 < R < h and R < L (R={R}, h={h}, L={L})")
    if int(beta) != beta or beta < 2:
        raise MeshGenerationError(f"beta must be an integer >= 2, got {beta}")
    beta = int(beta)

    arc_face = 0.5 * np.pi * R / beta
    if arc_face >= L - R:
        raise MeshGenerationError(f"beta={beta} arc faces are longer than the free surface (L - R = {L - R})")
    fractions = _graded_fractions(arc_face, L - R, grading)
    n_eta = len(fractions) - 1

    # the symmetry side has its own sizing over the same layer count
    sagitta = arc_sagitta(R, beta)
    if n_eta * arc_face <= h - R:
        first_sym = arc_face
    else:
        first_sym = max((h - R) / n_eta, SYMMETRY_FIRST_LAYER * sagitta)
    if first_sym >= h - R and n_eta > 1:
        raise MeshGenerationError(f"depth below the body (h - R = {h - R}) is too small for beta={beta}")
    sym_fractions = _layer_fractions(min(first_sym, h - R), h - R, n_eta)

    theta = -0.5 * np.pi * np.arange(beta + 1) / beta
    inner = np.column_stack([R * np.cos(theta), R * np.sin(theta)])

    i_corner = _corner_index(beta, np.arctan2(h, L) / (0.5 * np.pi))
    outer = _polyline([(L, 0.0), (L, -h), (0.0, -h)], [i_corner, beta - i_corner])
    side_fs = np.column_stack([R + (L - R) * fractions, np.zeros_like(fractions)])
    side_sym = np.column_stack([np.zeros_like(sym_fractions), -R - (h - R) * sym_fractions])

    grid = _transfinite_grid(inner, outer, side_fs, side_sym)
    outer_tags = [BoundaryTag.FarField] * i_corner + [BoundaryTag.Bed] * (beta - i_corner)
    tags = _side_edge_tags(beta, n_eta, [BoundaryTag.Body] * beta, outer_tags,
                           BoundaryTag.FreeSurface, BoundaryTag.Symmetry)
    mesh = _finish(f"cylinder(R={R:g},beta={beta})", grid, symmetric_fs, tags, h, L)

    thinnest = float(body_row_heights(mesh).min())
    if thinnest < SAGITTA_CLEARANCE * sagitta:
        raise MeshGenerationError(
            f"body-row element of height {thinnest:.3e} m is within {SAGITTA_CLEARANCE:g} arc sagittas "
            f"({sagitta:.3e} m); curving would fold it")
    return mesh


def generate_box_domain(a: float, d: float, h: float, L: float, n_bottom: int, n_side: int,
                        grading: float = 1.0, symmetric_fs: bool = True) -> Mesh:
    """Half box of half-length a and draft d, symmetric about x = 0; affine elements only."""
    if not (0 < d < h):
        raise MeshGenerationError(f"box draft must satisfy 0 < d < h (d={d}, h={h})")
    if not (0 < a < L):
        raise MeshGenerationError(f"box half-length must satisfy 0 < a < L (a={a}, L={L})")
    if n_bottom < 1 or n_side < 1:
        raise MeshGenerationError("box needs at least one face on the bottom and on the side")

    n_xi = n_side + n_bottom
    fractions = _graded_fractions(d / n_side, L - a, grading)
    inner = _polyline([(a, 0.0), (a, -d), (0.0, -d)], [n_side, n_bottom])
    outer = _polyline([(L, 0.0), (L, -h), (0.0, -h)], [n_side, n_bottom])
    side_fs = np.column_stack([a + (L - a) * fractions, np.zeros_like(fractions)])
    side_sym = np.column_stack([np.zeros_like(fractions), -d - (h - d) * fractions])

    grid = _transfinite_grid(inner, outer, side_fs, side_sym)
    n_eta = len(fractions) - 1
    outer_tags = [BoundaryTag.FarField] * n_side + [BoundaryTag.Bed] * n_bottom
    tags = _side_edge_tags(n_xi, n_eta, [BoundaryTag.Body] * n_xi, outer_tags,
                           BoundaryTag.FreeSurface, BoundaryTag.Symmetry)
    return _finish(f"box(a={a:g},d={d:g})", grid, symmetric_fs, tags, h, L)


def generate_basin_domain(L: float, h: float, nx: int, nz: int, symmetric_fs: bool = True) -> Mesh:
    """Closed rectangular basin [0, L] x [-h, 0] with walls tagged FarField."""
    if L <= 0 or h <= 0 or nx < 1 or nz < 1:
        raise MeshGenerationError("basin needs positive extents and at least one cell per direction")
    x = np.linspace(0.0, L, nx + 1)
    z = np.linspace(-h, 0.0, nz + 1)
    grid = np.stack(np.meshgrid(x, z, indexing="ij"), axis=-1)
    tags = _side_edge_tags(nx, nz, [BoundaryTag.Bed] * nx, [BoundaryTag.FreeSurface] * nx,
                           BoundaryTag.FarField, BoundaryTag.FarField)
    return _finish(f"basin(L={L:g},h={h:g})", grid, symmetric_fs, tags, h, L)


def mirror_mesh(mesh: Mesh) -> Mesh:
    """
    Full domain [-L, L] from a half domain whose Symmetry side lies on x = 0.
    Vertices on the axis are shared; the Symmetry faces become interior.
    """
    if mesh.curved:
        raise MeshGenerationError("mirror the straight-sided mesh before curving it")
    if mesh.faces_with_tag(BoundaryTag.Symmetry).size == 0:
        raise MeshGenerationError(f"{mesh.name} has no symmetry side to mirror about")
    tol = 1e-12 * max(mesh.length, 1.0)
    off_axis = np.flatnonzero(np.abs(mesh.vertices[:, 0]) > tol)
    image = np.arange(len(mesh.vertices))
    image[off_axis] = len(mesh.vertices) + np.arange(len(off_axis))
    mirrored = mesh.vertices[off_axis] * np.array([-1.0, 1.0])
    vertices = np.vstack([mesh.vertices, mirrored])

    # reversed vertex order keeps the images counter-clockwise; face f maps to face 2 - f
    n_elem = mesh.n_elements
    triangles = np.vstack([mesh.triangles, image[mesh.triangles][:, [0, 2, 1]]])
    kept = mesh.boundary_faces[mesh.boundary_faces[:, 2] != BoundaryTag.Symmetry]
    images = np.column_stack([kept[:, 0] + n_elem, 2 - kept[:, 1], kept[:, 2]])
    full = Mesh(vertices=vertices, triangles=triangles, boundary_faces=np.vstack([kept, images]),
                depth=mesh.depth, length=mesh.length, name=f"{mesh.name}-full")
    try:
        validate_mesh(full, require_simply_connected=True)
    except MeshValidationError as e:
        raise MeshGenerationError(f"{full.name}: mirrored mesh is invalid ({e})") from e
    logger.info("Mirrored %s: %d elements", mesh.name, full.n_elements)
    return full


def free_surface_edge_lengths(mesh: Mesh) -> np.ndarray:
    """Lengths of free-surface faces sorted by their left end."""
    verts = mesh.face_vertices(mesh.faces_with_tag(BoundaryTag.FreeSurface))
    p, q = mesh.vertices[verts[:, 0]], mesh.vertices[verts[:, 1]]
    order = np.argsort(np.minimum(p[:, 0], q[:, 0]))
    return np.linalg.norm(q - p, axis=1)[order]


if __name__ == "__main__":
    m = generate_cylinder_domain(R=1.0, h=6.283, L=10.0, beta=5, grading=1.1)
    print(f"{m.name}: {m.n_elements} elements, "
          f"body faces = {len(m.faces_with_tag(BoundaryTag.Body))}, chi = {euler_characteristic(m)}")
