import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import toml
from pydantic import (BaseModel, ConfigDict, Field, NonNegativeInt, PositiveFloat, PositiveInt, ValidationError,
                      model_validator)
from typing_extensions import Annotated

from errors import ConfigError
from refelem import MAX_ORDER

"""
Configuration and summary models.

Every run is described by one RunConfig read from a TOML file (sections as
[tables] or dotted `section.key = value` pairs) or from JSON. Unknown keys are
rejected so a typo never silently falls back to a default. RunSummary is the
structured record written next to the output tables as run.json.
"""

Mode = Literal[1, 3, 5]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# --- Geometry Models ---

class CylinderGeometry(StrictModel):
    kind: Literal["cylinder"]
    R: PositiveFloat = Field(..., description="Cylinder radius [m].")
    h: PositiveFloat = Field(..., description="Water depth [m].")
    L: PositiveFloat = Field(..., description="Free-surface length from the symmetry plane [m].")
    beta: Annotated[int, Field(ge=2)] = Field(..., description="Faces on the quarter circle.")
    grading: PositiveFloat = 1.0
    full_domain: bool = Field(False, description="Mirror the half domain about x = 0.")


class BoxGeometry(StrictModel):
    kind: Literal["box"]
    a: PositiveFloat = Field(..., description="Box half-length [m].")
    d: PositiveFloat = Field(..., description="Draft [m].")
    h: PositiveFloat
    L: PositiveFloat
    n_bottom: PositiveInt
    n_side: PositiveInt
    grading: PositiveFloat = 1.0
    full_domain: bool = Field(False, description="Mirror the half domain about x = 0.")


class BasinGeometry(StrictModel):
    kind: Literal["basin"]
    L: PositiveFloat
    h: PositiveFloat
    nx: PositiveInt
    nz: PositiveInt


class ImportGeometry(StrictModel):
    kind: Literal["import"]
    path: Path
    body_radius: Optional[PositiveFloat] = Field(None, description="Curve body faces onto a circle of this radius.")


Geometry = Annotated[Union[CylinderGeometry, BoxGeometry, BasinGeometry, ImportGeometry],
                     Field(discriminator="kind")]


# --- Run Blocks ---

class Discretization(StrictModel):
    P: Annotated[int, Field(ge=1, le=MAX_ORDER)] = 4
    Cr: PositiveFloat = 0.5
    symmetric_fs: bool = True
    quadrature: Literal["auto", "cubature"] = "auto"
    dtn_recovery: Literal["average", "weak"] = "weak"


class ImpulseBlock(StrictModel):
    mode: Mode = 3
    alpha: PositiveFloat = 3.0
    s: Optional[PositiveFloat] = None
    r: Annotated[float, Field(gt=0, lt=1)] = 1e-4
    epsilon: Annotated[float, Field(gt=0, lt=1)] = 1e-8
    t0: Optional[PositiveFloat] = None
    t_end: Optional[PositiveFloat] = None
    extend_to_decay: bool = Field(True, description="Continue past t_end until the force has decayed.")
    max_t_end_factor: Annotated[float, Field(ge=3)] = 10.0
    amplitude: float = 1.0


class AbsorptionBlock(StrictModel):
    relaxation: bool = True
    relaxation_length: Optional[PositiveFloat] = None
    relaxation_strength: Optional[PositiveFloat] = None
    sommerfeld: bool = True
    grading_only: bool = False

    @model_validator(mode="after")
    def _grading_only_disables_absorbers(self) -> "AbsorptionBlock":
        if self.grading_only and (self.relaxation or self.sommerfeld):
            self.relaxation = False
            self.sommerfeld = False
        return self


class OutputBlock(StrictModel):
    directory: Path = Path("out")
    monitors: List[float] = Field(default_factory=list, description="Free-surface x positions; empty means the waterline.")
    directions: List[Mode] = Field(default_factory=list, description="Force directions j for a_jk, b_jk; empty means j = k.")
    pad_factor: Annotated[float, Field(ge=1)] = 8.0
    rho: PositiveFloat = 1000.0
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    progress_every: NonNegativeInt = 500
    signal_columns: Optional[List[str]] = Field(None, description="Keep only these columns in signals.csv.")


class StudyBlock(StrictModel):
    orders: List[Annotated[int, Field(ge=1, le=MAX_ORDER)]] = Field(default_factory=lambda: [1, 2, 3, 4])
    levels: List[PositiveInt] = Field(default_factory=lambda: [3, 5, 8],
                                      description="Mesh resolutions: beta for cylinders, faces per side for boxes.")
    curved: bool = True
    alphas: List[PositiveFloat] = Field(default_factory=lambda: [0.5, 1.0, 2.0, 3.0, 5.0])
    spurious: Literal["alpha", "beta"] = "alpha"
    spurious_s: PositiveFloat = 1.0
    repeats: PositiveInt = 10
    max_eigen_dim: PositiveInt = 4000
    stability_tolerance: PositiveFloat = 1e-8
    n_jobs: int = 1
    seed: NonNegativeInt = 0


class RunConfig(StrictModel):
    geometry: Geometry
    discretization: Discretization = Field(default_factory=Discretization)
    impulse: ImpulseBlock = Field(default_factory=ImpulseBlock)
    absorption: AbsorptionBlock = Field(default_factory=AbsorptionBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)
    study: StudyBlock = Field(default_factory=StudyBlock)


class RunSummary(BaseModel):
    command: str
    status: Literal["ok", "aborted"] = "ok"
    message: str = ""
    mesh: str = ""
    n_elements: int = 0
    n_dof: int = 0
    order: int = 0
    dt: Optional[float] = None
    t_end: Optional[float] = None
    n_steps: Optional[int] = None
    omega_r: Optional[float] = None
    results: Dict[str, Any] = Field(default_factory=dict)
    timings: Dict[str, float] = Field(default_factory=dict)
    outputs: List[str] = Field(default_factory=list)


# --- Loading ---

def _expand_dotted(mapping: Dict[str, Any]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for key, value in mapping.items():
        if isinstance(value, dict):
            value = _expand_dotted(value)
        _set_path(out, key.split("."), value)
    return out


def _set_path(target: Dict[str, Any], path: Sequence[str], value: Any) -> None:
    for key in path[:-1]:
        node = target.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"'{key}' is a value, not a section", key_paths=[".".join(path)])
        target = node
    last = path[-1]
    if isinstance(value, dict) and isinstance(target.get(last), dict):
        target[last].update(value)
    else:
        target[last] = value


def parse_override(text: str) -> Tuple[List[str], Any]:
    """'section.key=value' with the value read as a TOML scalar, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"override '{text}' is not of the form section.key=value", key_paths=[text])
    key, raw = (part.strip() for part in text.split("=", 1))
    try:
        value = toml.loads(f"v = {raw}")["v"]
    except toml.TomlDecodeError:
        value = raw
    return key.split("."), value


def read_config_mapping(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc}") from exc
    try:
        raw = json.loads(text) if path.suffix.lower() == ".json" else toml.loads(text)
    except (toml.TomlDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config '{path}': {exc}") from exc
    return _expand_dotted(raw)


def build_config(mapping: Dict[str, Any], overrides: Sequence[str] = ()) -> RunConfig:
    mapping = _expand_dotted(dict(mapping))
    for text in overrides:
        keys, value = parse_override(text)
        _set_path(mapping, keys, value)
    try:
        return RunConfig.model_validate(mapping)
    except ValidationError as exc:
        paths = [".".join(str(part) for part in err["loc"]) for err in exc.errors()]
        details = "; ".join(f"{p}: {err['msg']}" for p, err in zip(paths, exc.errors()))
        raise ConfigError(f"invalid configuration: {details}", key_paths=paths) from exc


def load_config(path: Optional[Union[str, Path]], overrides: Sequence[str] = ()) -> RunConfig:
    mapping = read_config_mapping(path) if path else {}
    return build_config(mapping, overrides)
