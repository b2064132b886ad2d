"""Run configuration: one versioned JSON document drives every command.

The same schema is accepted by the CLI (from a file) and the HTTP service
(as a request body).  A seed is mandatory; nothing falls back to wall-clock
entropy.
"""

from __future__ import annotations

import json
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .models import Distribution, ModelSpec, ProcessSpec, get_builtin

SCHEMA_VERSION = 1


class DistributionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["uniform", "normal"]
    a: float
    b: float

    def build(self) -> Distribution:
        return Distribution(self.kind, self.a, self.b)


class ScalarInputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    distribution: DistributionConfig


class ProcessConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    length: int = Field(ge=1)
    step_law: DistributionConfig
    mode: Literal["standalone", "additive_relative"] = "standalone"
    nominal: Optional[List[float]] = None

    def build(self) -> ProcessSpec:
        return ProcessSpec(
            length=self.length,
            step_law=self.step_law.build(),
            mode=self.mode,
            nominal=None if self.nominal is None else tuple(self.nominal),
        )


class InputsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scalars: List[ScalarInputConfig]
    process: Optional[ProcessConfig] = None


class ModelConfig(BaseModel):
    """Either a builtin benchmark by name, or an external model described by
    its inputs (sampled here, evaluated elsewhere, results returned as CSV)."""

    model_config = ConfigDict(extra="forbid")

    builtin: Optional[str] = None
    inputs: Optional[InputsConfig] = None

    @model_validator(mode="after")
    def _one_of(self):
        if (self.builtin is None) == (self.inputs is None):
            raise ValueError("model needs exactly one of 'builtin' or 'inputs'")
        return self

    def build(self) -> ModelSpec:
        if self.builtin is not None:
            return get_builtin(self.builtin)
        process = None if self.inputs.process is None else self.inputs.process.build()
        return ModelSpec(
            scalar_inputs=tuple(
                (s.name, s.distribution.build()) for s in self.inputs.scalars
            ),
            functional_input=process,
            evaluator=None,
            name="external",
        )


class FormulasConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mean: str
    dispersion: str


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    model: ModelConfig
    method: Literal["macroparameter", "trigger", "joint_glm", "joint_gam"]
    seed: int = Field(ge=0, le=2**64 - 1)
    out: Optional[str] = None

    # estimation
    algo: Literal["sobol", "saltelli"] = "saltelli"
    n: Optional[int] = Field(default=None, ge=1)
    targets: Optional[List[Union[str, List[str]]]] = None
    scheme: Literal["simple_mc", "lhs"] = "simple_mc"
    bootstrap: int = Field(default=100, ge=0)
    evaluations_csv: Optional[str] = None

    # joint-model methods
    formulas: Optional[FormulasConfig] = None
    n_learn: Optional[int] = Field(default=None, ge=1)
    learning_csv: Optional[str] = None
    response: str = "Y"
    index_n: int = Field(default=10_000, ge=100)
    fresh_n: int = Field(default=100_000, ge=100)
    sd_replicates: int = Field(default=100, ge=0)
    q2_method: Literal["cross_validation", "leave_one_out"] = "cross_validation"
    replicates: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _method_fields(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(
                f"unsupported schema_version {self.schema_version}; this build reads {SCHEMA_VERSION}"
            )
        if self.method in ("macroparameter", "trigger"):
            if self.n is None:
                raise ValueError(f"method {self.method!r} requires 'n'")
        else:
            if self.formulas is None:
                raise ValueError(f"method {self.method!r} requires 'formulas'")
            if self.n_learn is None and self.learning_csv is None:
                raise ValueError(
                    f"method {self.method!r} requires 'n_learn' (builtin) or 'learning_csv'"
                )
        return self

    @property
    def engine(self) -> str:
        return {"joint_glm": "glm", "joint_gam": "gam"}[self.method]

    def normalized_targets(self) -> Optional[List[Tuple[str, ...]]]:
        if self.targets is None:
            return None
        return [(t,) if isinstance(t, str) else tuple(t) for t in self.targets]


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from None
    return parse_config(raw)


def parse_config(raw: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            where = ".".join(str(p) for p in err["loc"]) or "<root>"
            lines.append(f"{where}: {err['msg']}")
        raise ConfigError("invalid config: " + "; ".join(lines)) from None
