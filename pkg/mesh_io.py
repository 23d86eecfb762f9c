# mesh_io.py
"""
Reader and writer for the ASCII mesh exchange format (a gmsh v2 subset).

    $MeshFormat            optional
    2.2 0 8
    $EndMeshFormat
    $Nodes
    <count>
    <index> <x> <z>        a fourth column is read as gmsh "x y z" with y as z
    $EndNodes
    $Elements
    <count>
    <id> 1 <ntags> <physical> [...] <n1> <n2>          boundary line, tag 1..5
    <id> 2 <ntags> [...] <n1> <n2> <n3>                 triangle
    $EndElements

Node indices are 1-based in the file. Other element types (points) are skipped.
"""
import logging
from pathlib import Path
from typing import Dict, Iterator, List, Tuple, Union

import numpy as np

from errors import MeshParseError, MeshValidationError
from mesh import BoundaryTag, Mesh, validate_mesh

logger = logging.getLogger(__name__)

LINE_TYPE = 1
TRIANGLE_TYPE = 2
_SKIPPED_TYPES = {15}
_VALID_TAGS = {int(t) for t in BoundaryTag}


class _LineReader:
    def __init__(self, lines: List[str]):
        self._lines = lines
        self.number = 0

    def __iter__(self) -> Iterator[str]:
        return self

    def __next__(self) -> str:
        while self.number < len(self._lines):
            text = self._lines[self.number].strip()
            self.number += 1
            if text:
                return text
        raise StopIteration

    def expect(self, what: str) -> str:
        try:
            return next(self)
        except StopIteration:
            raise MeshParseError(f"unexpected end of file while reading {what}", self.number) from None


def _read_count(reader: _LineReader, section: str) -> int:
    text = reader.expect(f"{section} count")
    try:
        count = int(text.split()[0])
    except (ValueError, IndexError):
        raise MeshParseError(f"expected an entry count for {section}, got '{text}'", reader.number) from None
    if count < 0:
        raise MeshParseError(f"negative entry count in {section}", reader.number)
    return count


def _read_nodes(reader: _LineReader) -> Tuple[Dict[int, int], np.ndarray]:
    count = _read_count(reader, "$Nodes")
    index_of: Dict[int, int] = {}
    coords = np.empty((count, 2))
    for i in range(count):
        fields = reader.expect("$Nodes").split()
        try:
            values = [float(v) for v in fields[1:]]
            node_id = int(fields[0])
        except (ValueError, IndexError):
            raise MeshParseError(f"malformed node entry '{' '.join(fields)}'", reader.number) from None
        if len(values) == 2:
            coords[i] = values
        elif len(values) == 3:
            coords[i] = values[:2]
        else:
            raise MeshParseError(f"node entry needs 3 or 4 columns, got {len(fields)}", reader.number)
        if node_id in index_of:
            raise MeshParseError(f"duplicate node index {node_id}", reader.number)
        index_of[node_id] = i
    if reader.expect("$EndNodes") != "$EndNodes":
        raise MeshParseError("missing $EndNodes", reader.number)
    return index_of, coords


def _read_elements(reader: _LineReader, index_of: Dict[int, int]):
    count = _read_count(reader, "$Elements")
    triangles: List[Tuple[int, int, int]] = []
    lines: List[Tuple[int, int, int, int]] = []   # (a, b, tag, line number)
    for _ in range(count):
        fields = reader.expect("$Elements").split()
        try:
            numbers = [int(v) for v in fields]
            elem_type, n_tags = numbers[1], numbers[2]
        except (ValueError, IndexError):
            raise MeshParseError(f"malformed element entry '{' '.join(fields)}'", reader.number) from None
        tags, nodes = numbers[3:3 + n_tags], numbers[3 + n_tags:]
        try:
            local = [index_of[n] for n in nodes]
        except KeyError as e:
            raise MeshParseError(f"element references unknown node {e.args[0]}", reader.number) from None

        if elem_type == LINE_TYPE:
            if len(local) != 2 or not tags:
                raise MeshParseError("boundary line needs a physical tag and 2 nodes", reader.number)
            if tags[0] not in _VALID_TAGS:
                raise MeshParseError(f"unknown boundary tag {tags[0]} (expected 1..5)", reader.number)
            lines.append((local[0], local[1], tags[0], reader.number))
        elif elem_type == TRIANGLE_TYPE:
            if len(local) != 3:
                raise MeshParseError("triangle needs 3 nodes", reader.number)
            triangles.append(tuple(local))
        elif elem_type in _SKIPPED_TYPES:
            continue
        else:
            raise MeshParseError(f"unsupported element type {elem_type}", reader.number)
    if reader.expect("$EndElements") != "$EndElements":
        raise MeshParseError("missing $EndElements", reader.number)
    return triangles, lines


def _orient(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    signed = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
              - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    flip = signed < 0
    if flip.any():
        logger.info("Reoriented %d clockwise triangles", int(flip.sum()))
        triangles = triangles.copy()
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return triangles


def import_mesh(path: Union[str, Path], name: str = None) -> Mesh:
    """Reads a tagged triangular mesh and validates it."""
    path = Path(path)
    logger.info("Reading mesh from %s", path)
    reader = _LineReader(path.read_text(encoding="utf-8").splitlines())

    index_of, coords, triangles, lines = None, None, None, None
    for text in reader:
        if text == "$MeshFormat":
            version = reader.expect("$MeshFormat").split()[0]
            if not version.startswith("2"):
                raise MeshParseError(f"unsupported mesh format version {version}", reader.number)
            if reader.expect("$EndMeshFormat") != "$EndMeshFormat":
                raise MeshParseError("missing $EndMeshFormat", reader.number)
        elif text == "$Nodes":
            index_of, coords = _read_nodes(reader)
        elif text == "$Elements":
            if index_of is None:
                raise MeshParseError("$Elements appears before $Nodes", reader.number)
            triangles, lines = _read_elements(reader, index_of)
        elif text.startswith("$"):
            # unknown section: skip to its end marker
            end = "$End" + text[1:]
            while reader.expect(end) != end:
                pass
    if coords is None or triangles is None:
        raise MeshParseError("file needs both $Nodes and $Elements sections", reader.number)
    if not triangles:
        raise MeshParseError("file contains no triangles", reader.number)

    tri = _orient(coords, np.array(triangles, dtype=int))
    owner: Dict[Tuple[int, int], Tuple[int, int]] = {}
    for k, t in enumerate(tri):
        for f in range(3):
            a, b = int(t[f]), int(t[(f + 1) % 3])
            owner.setdefault((min(a, b), max(a, b)), (k, f))

    rows, seen = [], {}
    for a, b, tag, line_number in lines:
        edge = (min(a, b), max(a, b))
        if edge not in owner:
            raise MeshParseError(f"boundary line {edge} is not an edge of any triangle", line_number)
        if edge in seen:
            raise MeshValidationError(
                f"line {line_number}: boundary face {edge} repeats the face on line {seen[edge]}")
        seen[edge] = line_number
        k, f = owner[edge]
        rows.append((k, f, tag))

    mesh = Mesh(vertices=coords, triangles=tri,
                boundary_faces=np.array(rows, dtype=int).reshape(-1, 3),
                depth=float(-coords[:, 1].min()), length=float(coords[:, 0].max()),
                name=name or path.stem)
    validate_mesh(mesh)
    logger.info("Imported %s: %d elements, %d boundary faces", mesh.name, mesh.n_elements, len(rows))
    return mesh


def export_mesh(mesh: Mesh, path: Union[str, Path]) -> Path:
    """
    Writes vertices, triangles and tagged boundary faces. Curved node data is
    not stored; body elements are curved again when the mesh is prepared.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(len(mesh.vertices))]
    out += [f"{i + 1} {repr(float(x))} {repr(float(z))}" for i, (x, z) in enumerate(mesh.vertices)]
    out += ["$EndNodes", "$Elements", str(len(mesh.boundary_faces) + mesh.n_elements)]

    element_id = 1
    for (a, b), tag in zip(mesh.face_vertices(), mesh.boundary_faces[:, 2]):
        out.append(f"{element_id} {LINE_TYPE} 2 {int(tag)} {int(tag)} {a + 1} {b + 1}")
        element_id += 1
    for tri in mesh.triangles:
        out.append(f"{element_id} {TRIANGLE_TYPE} 2 0 1 {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}")
        element_id += 1
    out.append("$EndElements")
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    logger.info("Wrote mesh %s to %s", mesh.name, path)
    return path
