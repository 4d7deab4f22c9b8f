"""Run configuration for the minimax-infer command line.

A run config is a JSON object; unknown keys are rejected with the JSON pointer
of the offending entry. ``settings`` may override any numerical default of
``config.settings.Settings`` for this run only.

Minimal example:

    {"problem": "smooth_saddle", "command": "solve", "N": 1000, "seed": 1}
"""

import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, create_model, model_validator

from config.settings import Settings, get_settings
from problems.base import ProblemSpec
from problems.loader import load_problem_file, problem_document, resolve_problem
from services.exceptions import ConfigError, InvalidArgumentError

COMMANDS = ("solve", "reduce", "limit", "value-deriv", "validate", "report")

SettingsOverrides = create_model(
    "SettingsOverrides",
    __config__=ConfigDict(extra="forbid"),
    **{name: (info.annotation | None, None) for name, info in Settings.model_fields.items()},
)


class EtaSpec(BaseModel):
    """Perturbation η(γ, ξ): constants per listed ξ, or polynomial term tables without X."""

    model_config = ConfigDict(extra="forbid")

    values: list[float] | None = None
    tables: list[list[dict[str, Any]]] | None = None

    @model_validator(mode="after")
    def _one_form(self):
        if (self.values is None) == (self.tables is None):
            raise ValueError("give exactly one of 'values' or 'tables'")
        return self


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: str | dict[str, Any]
    command: Literal["solve", "reduce", "limit", "value-deriv", "validate", "report"] | None = None

    N: int = Field(default=1000, ge=1, description="Sample size")
    R: int = Field(default=200, ge=1, description="Monte Carlo replications")
    S: int = Field(default=100_000, ge=1, description="Limit-law draws")
    seed: int = Field(default=0, ge=0, description="Dataset seed / replication master seed")
    limit_seed: int = Field(default=1, ge=0, description="Seed of the limit-law draws")

    population: bool = Field(default=True, description="solve: run the population problem")
    sample: bool = Field(default=True, description="solve: run the sample problem")
    sigma_source: Literal["analytic", "plugin"] = "analytic"
    response_correction: bool = True
    eta: EtaSpec | None = None
    t_grid: list[float] | None = None

    out: str | None = None
    formats: list[Literal["json", "text"]] = Field(default_factory=lambda: ["json", "text"])
    settings: SettingsOverrides = Field(default_factory=SettingsOverrides)

    def effective_settings(self) -> Settings:
        """Process defaults with this run's overrides applied."""
        overrides = self.settings.model_dump(exclude_none=True)
        return get_settings().model_copy(update=overrides)

    def materialized(self) -> dict:
        """JSON document with every default written out, including settings."""
        data = self.model_dump(mode="json")
        data["settings"] = self.effective_settings().model_dump(mode="json")
        if self.t_grid is None:
            data["t_grid"] = list(data["settings"]["t_grid"])
        return data

    def resolve(self) -> ProblemSpec:
        return resolve_problem(self.problem)


def _pointer(loc: tuple) -> str:
    return "/" + "/".join(str(part) for part in loc)


def parse_config_data(data: Any) -> RunConfig:
    """Validate an already-decoded config document.

    Raises:
        ConfigError: With one JSON pointer per violation.
    """
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as exc:
        errors = exc.errors()
        pointers = [_pointer(err["loc"]) for err in errors]
        detail = "; ".join(f"{_pointer(err['loc'])}: {err['msg']}" for err in errors)
        raise ConfigError(f"invalid run config: {detail}", pointers) from exc
    try:
        config.resolve()
    except (InvalidArgumentError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid problem: {exc}", ["/problem"]) from exc
    return config


def load_problem_document(path) -> dict:
    """Inline problem document read from ``path`` and normalized by the loader.

    Raises:
        ConfigError: If the file is missing or does not describe a problem.
    """
    try:
        return problem_document(load_problem_file(path))
    except FileNotFoundError as exc:
        raise ConfigError(f"problem file not found: {path}", ["/problem"]) from exc
    except (InvalidArgumentError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid problem file {path}: {exc}", ["/problem"]) from exc


def parse_config(path, problem_file=None) -> RunConfig:
    """Read and validate a JSON run config file.

    ``problem_file`` replaces the config's ``problem`` with an inline document.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}", [""]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}", [""]) from exc
    if problem_file is not None and isinstance(data, dict):
        data["problem"] = load_problem_document(problem_file)
    return parse_config_data(data)


def serialize_config(config: RunConfig) -> str:
    return json.dumps(config.model_dump(mode="json", exclude_none=True), indent=2, sort_keys=True)
