"""JSON scenario schema with strict key checking."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..errors import SchemaError
from ..fields import ExternalFields, GridSpec
from ..guidance import EnsembleSpec
from ..propagator import InitialState, PropagatorConfig
from ..su2 import RotatorParams

MODES = ("verify-algebra", "propagate", "trajectories", "verify-identity6", "verify-source",
         "covariance", "unified-field")
# each mode lists the modes whose outputs it consumes
REQUIRES = {"trajectories": ("propagate",), "unified-field": ("propagate", "trajectories")}

Vec3 = list[float]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ParamsModel(_Strict):
    m: float = Field(1.0, gt=0)
    I: float = Field(1.0, gt=0)
    l: float | None = Field(None, gt=0)
    mm: float = Field(1.0, gt=0)
    hbar: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _inertia(self):
        if self.l is not None and abs(self.I - self.m * self.l**2) > 1e-12 * self.I:
            raise ValueError("I must equal m * l**2 when l is given")
        return self

    def build(self) -> RotatorParams:
        return RotatorParams(self.m, self.I, self.l, self.mm, self.hbar)


class GridModel(_Strict):
    extent: list[float] = Field(min_length=1, max_length=3)
    points: list[int] = Field(min_length=1, max_length=3)

    @model_validator(mode="after")
    def _shape(self):
        if len(self.extent) != len(self.points):
            raise ValueError("extent and points must have the same length")
        if any(e <= 0 for e in self.extent):
            raise ValueError("extent entries must be positive")
        if any(p < 8 for p in self.points):
            raise ValueError("at least 8 points per axis are required")
        return self

    def build(self) -> GridSpec:
        return GridSpec(tuple(self.extent), tuple(self.points))


class FieldsModel(_Strict):
    A: dict = Field(default_factory=lambda: {"type": "zero"})
    B: dict = Field(default_factory=lambda: {"type": "zero"})
    V: dict = Field(default_factory=lambda: {"type": "zero"})
    consistency_mode: Literal["independent", "curl_checked"] = "independent"

    @model_validator(mode="after")
    def _buildable(self):
        try:
            self.build()
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"invalid field descriptor: {exc}") from exc
        return self

    def build(self) -> ExternalFields:
        return ExternalFields.from_descriptor(self.model_dump())


class InitialModel(_Strict):
    center: list[float] = Field(default_factory=lambda: [0.0])
    width: float = Field(1.0, gt=0)
    wavevector: list[float] = Field(default_factory=lambda: [0.0])
    polarization: list = Field(default_factory=lambda: [1.0, 0.0],
                               description="two entries, each a number or a [re, im] pair")

    @field_validator("polarization")
    @classmethod
    def _pol(cls, v):
        if len(v) != 2:
            raise ValueError("polarization needs two components")
        out = []
        for c in v:
            if isinstance(c, (int, float)):
                out.append(complex(c))
            elif isinstance(c, list) and len(c) == 2 and all(isinstance(x, (int, float)) for x in c):
                out.append(complex(c[0], c[1]))
            else:
                raise ValueError("components must be numbers or [re, im] pairs")
        if abs(np.linalg.norm(out) - 1) > 1e-9:
            raise ValueError("polarization must have unit norm")
        return v

    def build(self) -> InitialState:
        pol = np.array([complex(c) if not isinstance(c, list) else complex(*c)
                        for c in self.polarization])
        pol = tuple(pol / np.linalg.norm(pol))
        return InitialState(tuple(self.center), self.width, tuple(self.wavevector), pol)


class PropagatorModel(_Strict):
    dt: float = Field(0.01, gt=0)
    t_final: float = Field(1.0, gt=0)
    scheme: Literal["split_step_spectral", "crank_nicolson"] = "split_step_spectral"
    variant: Literal["pauli_eq29", "bopp_haag_eq27"] = "pauli_eq29"
    steps_per_output: int = Field(1, ge=1)

    def build(self) -> PropagatorConfig:
        return PropagatorConfig(self.dt, self.scheme, self.variant, self.steps_per_output)


class StartPoint(_Strict):
    q: Vec3 = Field(min_length=3, max_length=3)
    theta: Vec3 = Field(min_length=3, max_length=3)


class TrajectoriesModel(_Strict):
    mode: Literal["rotator", "pauli", "pauli_plus_spin"] = "rotator"
    dt: float = Field(0.01, gt=0)
    starts: list[StartPoint] = Field(default_factory=list)
    record_every: int = Field(1, ge=1)
    plot: bool = True


class EnsembleModel(_Strict):
    count: int = Field(1000, ge=1)
    sampling: Literal["density_weighted", "uniform"] = "density_weighted"
    checkpoints: int = Field(5, ge=1)

    def build(self, seed: int) -> EnsembleSpec:
        return EnsembleSpec(self.count, self.sampling, seed)


class Identity6Model(_Strict):
    steps: list[float] = Field(default_factory=lambda: [0.1, 0.05, 0.025], min_length=3)
    points: int = Field(20, ge=1)


class SourceModel(_Strict):
    widths: list[float] = Field(default_factory=lambda: [0.08, 0.04, 0.02], min_length=3)
    nodes: int = Field(12, ge=4)


class ElementModel(_Strict):
    d: float = 0.0
    c: Vec3 = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)
    epsilon: Vec3 = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)
    w: Vec3 = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)


class CovarianceModel(_Strict):
    t_final: float = Field(1.0, gt=0)
    q0: Vec3 = Field(default_factory=lambda: [0.5, 0.0, 0.0], min_length=3, max_length=3)
    theta0: Vec3 = Field(default_factory=lambda: [1.1, 0.4, 0.9], min_length=3, max_length=3)
    trajectory_dt: float = Field(0.01, gt=0)
    elements: list[ElementModel] = Field(default_factory=list)
    rotation_epsilon: Vec3 | None = None


class UnifiedModel(_Strict):
    width_x: float = Field(0.5, gt=0)
    width_angle: float = Field(0.05, gt=0)
    plot: bool = True


class OutputModel(_Strict):
    svg: bool = True


class Scenario(_Strict):
    """Validated scenario: physics, numerics and the requested modes."""

    name: str = "scenario"
    modes: list[Literal[MODES]] = Field(min_length=1)  # type: ignore[valid-type]
    params: ParamsModel = Field(default_factory=ParamsModel)
    grid: GridModel | None = None
    fields: FieldsModel = Field(default_factory=FieldsModel)
    initial: InitialModel = Field(default_factory=InitialModel)
    propagator: PropagatorModel = Field(default_factory=PropagatorModel)
    trajectories: TrajectoriesModel = Field(default_factory=TrajectoriesModel)
    ensemble: EnsembleModel | None = None
    identity6: Identity6Model = Field(default_factory=Identity6Model)
    source: SourceModel = Field(default_factory=SourceModel)
    covariance: CovarianceModel = Field(default_factory=CovarianceModel)
    unified: UnifiedModel = Field(default_factory=UnifiedModel)
    output: OutputModel = Field(default_factory=OutputModel)
    seed: int = 0

    @model_validator(mode="after")
    def _consistent(self):
        for mode in self.modes:
            for dep in REQUIRES.get(mode, ()):
                if dep not in self.modes:
                    raise ValueError(f"mode {mode!r} requires mode {dep!r}")
        needs_grid = {"propagate", "covariance"} & set(self.modes)
        if needs_grid and self.grid is None:
            raise ValueError(f"modes {sorted(needs_grid)} require a grid section")
        if "trajectories" in self.modes and self.ensemble is None and not self.trajectories.starts:
            raise ValueError("trajectories mode needs trajectories.starts or an ensemble section")
        return self

    def ordered_modes(self) -> list[str]:
        return [m for m in MODES if m in self.modes]

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def _path(loc) -> str:
    return ".".join(str(p) for p in loc) or "<root>"


def scenario_from_dict(data: dict) -> Scenario:
    """Validate a mapping; raise SchemaError carrying the offending field path."""
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = list(err.get("loc", ()))
        msg = err.get("msg", "invalid value")
        if err.get("type") == "extra_forbidden":
            msg = f"unknown key {loc[-1]!r}"
        raise SchemaError(_path(loc), msg) from None


def parse_scenario(path) -> Scenario:
    """Read and validate a JSON scenario file."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("<root>", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaError("<root>", "scenario must be a JSON object")
    return scenario_from_dict(data)
