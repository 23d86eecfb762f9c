# mesh_manager.py
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import List, Optional, Union

from assembly import DiscreteLaplacian, build_laplacian
from errors import ParameterError
from geometry import CircleArc, StraightCurve, curve_body_elements
from mesh import (BoundaryTag, Mesh, generate_basin_domain, generate_box_domain, generate_cylinder_domain,
                  mirror_mesh, validate_mesh)
from mesh_io import import_mesh
from refelem import ReferenceElement, build_reference_element

logger = logging.getLogger(__name__)

BodyCurve = Union[CircleArc, StraightCurve]


# --- Mesh Manager Classes ---

class BaseMeshManager(ABC):
    """
    One mesh source. load_and_prepare() builds or reads the straight-sided
    mesh, validates it and curves the body elements for the configured order;
    the discrete Laplacian is assembled on first request.
    """

    def __init__(self, source_name: str, order: int, quadrature: str = "auto"):
        self.source_name = source_name
        self.order = int(order)
        self.quadrature = quadrature
        self._mesh: Optional[Mesh] = None
        self._ref: Optional[ReferenceElement] = None
        self._system: Optional[DiscreteLaplacian] = None
        self._is_loaded: bool = False

    @abstractmethod
    def _load_mesh_from_source(self) -> Mesh:
        pass

    def body_curve(self) -> Optional[BodyCurve]:
        return None

    @property
    def waterline(self) -> Optional[float]:
        """x of the body/free-surface intersection, if the source has a body."""
        return None

    def load_and_prepare(self) -> None:
        if self._is_loaded:
            return
        logger.info("MeshManager: preparing '%s' for P=%d", self.source_name, self.order)
        mesh = self._load_mesh_from_source()
        validate_mesh(mesh)
        self._ref = build_reference_element(self.order)
        self._mesh = self._post_process_mesh(mesh)
        self._is_loaded = True
        logger.info("MeshManager: '%s' ready with %d elements", self.source_name, self._mesh.n_elements)

    def _post_process_mesh(self, mesh: Mesh) -> Mesh:
        body = self.body_curve()
        if body is None or self.order == 1 or mesh.faces_with_tag(BoundaryTag.Body).size == 0:
            return mesh
        return curve_body_elements(mesh, self._ref, body)

    def get_mesh(self) -> Mesh:
        if not self._is_loaded or self._mesh is None:
            raise RuntimeError(f"Mesh '{self.source_name}' not loaded. Call load_and_prepare() first.")
        return self._mesh

    def get_reference_element(self) -> ReferenceElement:
        self.get_mesh()
        return self._ref

    def get_system(self) -> DiscreteLaplacian:
        if self._system is None:
            self._system = build_laplacian(self.get_mesh(), self._ref, quadrature=self.quadrature)
        return self._system


class CylinderMeshManager(BaseMeshManager):
    def __init__(self, R: float, h: float, L: float, beta: int, order: int, grading: float = 1.0,
                 symmetric_fs: bool = True, full_domain: bool = False, quadrature: str = "auto"):
        super().__init__(source_name=f"cylinder(R={R:g},beta={beta})", order=order, quadrature=quadrature)
        self.R, self.h, self.L, self.beta = R, h, L, beta
        self.grading = grading
        self.symmetric_fs = symmetric_fs
        self.full_domain = full_domain

    def _load_mesh_from_source(self) -> Mesh:
        mesh = generate_cylinder_domain(self.R, self.h, self.L, self.beta, grading=self.grading,
                                        symmetric_fs=self.symmetric_fs)
        return mirror_mesh(mesh) if self.full_domain else mesh

    def body_curve(self) -> BodyCurve:
        return CircleArc(self.R)

    @property
    def waterline(self) -> float:
        return self.R


class BoxMeshManager(BaseMeshManager):
    def __init__(self, a: float, d: float, h: float, L: float, n_bottom: int, n_side: int, order: int,
                 grading: float = 1.0, symmetric_fs: bool = True, full_domain: bool = False,
                 quadrature: str = "auto"):
        super().__init__(source_name=f"box(a={a:g},d={d:g})", order=order, quadrature=quadrature)
        self.a, self.d, self.h, self.L = a, d, h, L
        self.n_bottom, self.n_side = n_bottom, n_side
        self.grading = grading
        self.symmetric_fs = symmetric_fs
        self.full_domain = full_domain

    def _load_mesh_from_source(self) -> Mesh:
        mesh = generate_box_domain(self.a, self.d, self.h, self.L, self.n_bottom, self.n_side,
                                   grading=self.grading, symmetric_fs=self.symmetric_fs)
        return mirror_mesh(mesh) if self.full_domain else mesh

    @property
    def waterline(self) -> float:
        return self.a


class BasinMeshManager(BaseMeshManager):
    def __init__(self, L: float, h: float, nx: int, nz: int, order: int, symmetric_fs: bool = True,
                 quadrature: str = "auto"):
        super().__init__(source_name=f"basin(L={L:g},h={h:g})", order=order, quadrature=quadrature)
        self.L, self.h, self.nx, self.nz = L, h, nx, nz
        self.symmetric_fs = symmetric_fs

    def _load_mesh_from_source(self) -> Mesh:
        return generate_basin_domain(self.L, self.h, self.nx, self.nz, symmetric_fs=self.symmetric_fs)


class FileMeshManager(BaseMeshManager):
    """Mesh read from the ASCII exchange format; a body radius curves the body faces as a circle."""

    def __init__(self, path: Union[str, Path], order: int, body_radius: Optional[float] = None,
                 quadrature: str = "auto"):
        super().__init__(source_name=Path(path).stem, order=order, quadrature=quadrature)
        self.path = Path(path)
        self.body_radius = body_radius

    def _load_mesh_from_source(self) -> Mesh:
        logger.info("FileMeshManager: reading '%s'", self.path)
        return import_mesh(self.path)

    def body_curve(self) -> Optional[BodyCurve]:
        return CircleArc(self.body_radius) if self.body_radius else None

    @property
    def waterline(self) -> Optional[float]:
        return self.body_radius


# --- Factory ---

def mesh_manager_from_config(geometry, discretization, **overrides) -> BaseMeshManager:
    """Manager for a validated geometry block; overrides replace geometry fields (e.g. beta)."""
    fields = geometry.model_dump()
    fields.update(overrides)
    kind = fields.pop("kind")
    common = {"order": overrides.get("order", discretization.P), "quadrature": discretization.quadrature}
    fields.pop("order", None)
    if kind == "cylinder":
        return CylinderMeshManager(symmetric_fs=discretization.symmetric_fs, **fields, **common)
    if kind == "box":
        return BoxMeshManager(symmetric_fs=discretization.symmetric_fs, **fields, **common)
    if kind == "basin":
        return BasinMeshManager(symmetric_fs=discretization.symmetric_fs, **fields, **common)
    if kind == "import":
        return FileMeshManager(**fields, **common)
    raise ParameterError(f"unknown geometry kind '{kind}'")


def mesh_family(geometry, discretization, levels: List[int]) -> List[Mesh]:
    """
    Straight-sided meshes of increasing resolution: the body face count beta
    for cylinders, faces per body side for boxes and cells per unit length
    scale for basins. Imported meshes form a family of one.
    """
    meshes = []
    for level in levels:
        if geometry.kind == "cylinder":
            manager = mesh_manager_from_config(geometry, discretization, beta=level, order=1)
        elif geometry.kind == "box":
            manager = mesh_manager_from_config(geometry, discretization, n_bottom=level, n_side=level, order=1)
        elif geometry.kind == "basin":
            manager = mesh_manager_from_config(geometry, discretization, nx=level, nz=max(1, level // 2), order=1)
        else:
            manager = mesh_manager_from_config(geometry, discretization, order=1)
        manager.load_and_prepare()
        meshes.append(manager.get_mesh())
        if geometry.kind == "import":
            break
    return meshes


if __name__ == "__main__":
    from log_config import configure_logging

    configure_logging("INFO")
    for manager in (CylinderMeshManager(R=0.5, h=3.0, L=6.0, beta=5, order=4),
                    BasinMeshManager(L=2.0, h=1.0, nx=8, nz=4, order=4)):
        manager.load_and_prepare()
        system = manager.get_system()
        logger.info("%s: %d elements, N_dof=%d", manager.source_name, manager.get_mesh().n_elements, system.n_dof)
