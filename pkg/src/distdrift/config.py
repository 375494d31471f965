"""Run configuration for the command line front end."""

import hashlib
import json
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RepSpec(_Model):
    kind: Literal["const", "zero", "samples", "expr-id", "brownian-env"]
    value: Optional[float] = None
    x: Optional[List[float]] = None
    values: Optional[List[float]] = None
    id: Optional[str] = None
    params: Dict[str, float] = {}
    seed: Optional[int] = None
    step: Optional[float] = None
    scale: float = 1.0

    @model_validator(mode="after")
    def _needs(self):
        need = {"const": ["value"], "samples": ["x", "values"], "expr-id": ["id"],
                "brownian-env": ["seed"]}.get(self.kind, [])
        missing = [k for k in need if getattr(self, k) is None]
        if missing:
            raise ValueError(f"kind {self.kind!r} needs {', '.join(missing)}")
        return self

    def as_dict(self):
        return self.model_dump(exclude_none=True)


class CoefficientSpec(_Model):
    sigma: RepSpec = RepSpec(kind="const", value=1.0)
    beta: RepSpec = RepSpec(kind="zero")
    R: float = Field(2.0, ge=1.0)
    grid_step: float = Field(1.0 / 1024, gt=0, le=0.5)


class FSpec(_Model):
    id: str
    params: Dict[str, float] = {}


class BoundarySpec(_Model):
    A: float = 0.0
    B: float = 0.0


class InitialSpec(_Model):
    anchor: float = 0.0
    x0: float = 0.0
    x1: float = 0.0


class HintSpec(_Model):
    k_y: Optional[float] = None
    k_z: Optional[float] = None
    a_mono: Optional[float] = None
    bound: Optional[float] = None


class ProblemSpec(_Model):
    F: FSpec = FSpec(id="const", params={"c": 0.0})
    interval: Tuple[float, float] = (0.0, 1.0)
    boundary: Optional[BoundarySpec] = None
    initial: Optional[InitialSpec] = None
    method: Literal["linear-bvp", "ivp", "shooting", "picard", "auto"] = "auto"
    hints: Optional[HintSpec] = None
    max_slope: float = Field(1e6, gt=0)
    root_tol: float = Field(1e-8, gt=0)
    force: bool = False

    @model_validator(mode="after")
    def _data(self):
        if self.boundary is not None and self.initial is not None:
            raise ValueError("give either boundary or initial data, not both")
        if self.method == "ivp" and self.initial is None:
            raise ValueError("method 'ivp' needs initial data")
        if self.method != "ivp" and self.initial is not None:
            raise ValueError(f"method {self.method!r} needs boundary data")
        return self


class SimSpec(_Model):
    dt: float = Field(1e-3, gt=0, le=1e-2)
    paths: int = Field(10000, ge=1)
    tmax: float = Field(10.0, gt=0)
    x0: float = 0.5
    interval: Tuple[float, float] = (0.0, 1.0)
    coarse_factor: int = Field(2, ge=2)
    dump_paths: bool = False


class ExitSpec(_Model):
    gammas: List[float] = [0.0, 1.0]
    horizons: Optional[List[float]] = None
    richardson: bool = True


class VerifySpec(_Model):
    dt_levels: List[float] = [2e-4, 1e-4]
    checkpoints: List[float] = [0.0]
    gammas: List[float] = [0.0]
    horizons: Optional[List[float]] = None


class DemoSpec(_Model):
    eta: float = 1.0
    gamma: float = 19.739208802178716
    n_samples: int = Field(5, ge=1)


class RunConfig(_Model):
    seed: int = Field(0, ge=0, lt=2 ** 64)
    coefficients: CoefficientSpec = CoefficientSpec()
    problem: ProblemSpec = ProblemSpec()
    sim: SimSpec = SimSpec()
    exit: ExitSpec = ExitSpec()
    verify: VerifySpec = VerifySpec()
    demo: DemoSpec = DemoSpec()

    def digest(self):
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _format_validation(exc):
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"field {loc}: {err['msg']}")
    return "\n".join(lines)


def parse_config(text, source="<config>"):
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{source}:\n{_format_validation(exc)}") from None


def load_config(path):
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def with_overrides(cfg, **kw):
    """Copy of ``cfg`` with dotted-path overrides; ``None`` values are skipped."""
    data = cfg.model_dump(mode="json")
    for key, value in kw.items():
        if value is None:
            continue
        node = data
        *path, leaf = key.split(".")
        for p in path:
            node = node[p]
        node[leaf] = value
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"command line:\n{_format_validation(exc)}") from None
