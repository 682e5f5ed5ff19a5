"""Experiment configuration: YAML on disk, validated by pydantic before any compute."""

from __future__ import annotations

import dataclasses
import re
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..models import MODEL_REGISTRY

KINDS = ("verify", "clt", "mdp", "rate", "controlled", "modulus", "convergence")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelConfig(_Strict):
    name: Literal["shell", "ns2d", "ou"] = "shell"
    params: dict = Field(default_factory=dict)

    @model_validator(mode="after")
    def _known_params(self):
        cls, _ = MODEL_REGISTRY[self.name]
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(self.params) - allowed)
        if unknown:
            raise ValueError(f"unknown {self.name} parameters {unknown}; allowed: {sorted(allowed)}")
        return self


class CovarianceConfig(_Strict):
    kind: Literal["power_law", "uniform", "explicit"] = "power_law"
    m: Optional[int] = Field(default=None, ge=1)
    exponent: float = 2.0
    scale: float = Field(default=1.0, gt=0)
    values: Optional[list[float]] = None

    @model_validator(mode="after")
    def _values(self):
        if self.kind == "explicit":
            if not self.values:
                raise ValueError("explicit covariance needs values")
            if any(v < 0 for v in self.values):
                raise ValueError("covariance eigenvalues must be >= 0")
        return self


class GridConfig(_Strict):
    T: float = Field(default=1.0, gt=0)
    steps: int = Field(default=1000, ge=1)


class InitialConfig(_Strict):
    preset: str = "single-mode"
    mode: int = Field(default=0, ge=0)
    amplitude: float = 1.0
    seed: int = Field(default=0, ge=0)
    values: Optional[list[float]] = None

    @field_validator("preset")
    @classmethod
    def _preset(cls, v):
        if v in ("zero", "single-mode", "random", "explicit") or re.fullmatch(r"random\(\d+\)", v):
            return v
        raise ValueError("preset must be zero, single-mode, random, random(<seed>) or explicit")


class ScalingConfig(_Strict):
    a: float = Field(default=0.25, gt=0, lt=0.5)
    eps_list: list[float] = Field(default_factory=lambda: [1e-2, 1e-3, 1e-4])

    @field_validator("eps_list")
    @classmethod
    def _eps(cls, v):
        if not v:
            raise ValueError("eps_list must not be empty")
        if any(not (0 < e <= 1) for e in v):
            raise ValueError("every eps must lie in (0, 1]")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("eps_list must be strictly decreasing")
        return v


class ControlConfig(_Strict):
    kind: Literal["zero", "constant", "explicit"] = "constant"
    values: list[float] = Field(default_factory=lambda: [1.0])
    N: float = Field(default=1.0, gt=0)
    coeffs: Optional[list[list[float]]] = None


class VerifyConfig(_Strict):
    samples: int = Field(default=10_000, ge=1)
    etas: list[float] = Field(default_factory=lambda: [0.25, 1.0])
    slack: float = Field(default=1.1, ge=1)
    tol: float = Field(default=1e-10, gt=0)

    @field_validator("etas")
    @classmethod
    def _etas(cls, v):
        if not v or any(e <= 0 for e in v):
            raise ValueError("etas must be a nonempty list of positive numbers")
        return v


class MDPConfig(_Strict):
    probe_mode: int = Field(default=0, ge=0)
    threshold: float = 1.0
    importance: bool = True
    plain_replicas: int = Field(default=0, ge=0)
    reference: Optional[float] = None
    tolerance: float = Field(default=0.15, gt=0)
    min_ess: float = Field(default=100.0, ge=0)


class RateConfig(_Strict):
    probe_mode: int = Field(default=0, ge=0)
    target: float = 1.0
    betas: list[float] = Field(default_factory=lambda: [1e2, 1e3, 1e4])
    tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=200, ge=1)
    reference: Optional[float] = None
    tolerance: float = Field(default=0.01, gt=0)

    @field_validator("betas")
    @classmethod
    def _betas(cls, v):
        if not v or any(b <= 0 for b in v):
            raise ValueError("betas must be positive")
        return v


class ControlledConfig(_Strict):
    max_ratio: float = Field(default=0.1, gt=0)


class ModulusConfig(_Strict):
    n_list: list[int] = Field(default_factory=lambda: [2, 3, 4, 5, 6])
    eps: float = Field(default=1e-3, gt=0, le=1)
    clip_M: Optional[float] = Field(default=None, gt=0)
    min_exponent: float = 0.5


class ConvergenceConfig(_Strict):
    levels: int = Field(default=4, ge=3)
    solver: Literal["sde", "deterministic"] = "sde"
    eps: float = Field(default=1.0, ge=0)
    oracle: Literal["self", "ou-exact"] = "self"
    min_order: float = 0.4


class CLTConfig(_Strict):
    min_slope: float = 0.4
    first_order_slope: tuple[float, float] = (0.8, 1.2)
    max_D: Optional[float] = None


class ExperimentConfig(_Strict):
    kind: Literal["verify", "clt", "mdp", "rate", "controlled", "modulus", "convergence"]
    model: ModelConfig = Field(default_factory=ModelConfig)
    covariance: CovarianceConfig = Field(default_factory=CovarianceConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    xi: InitialConfig = Field(default_factory=InitialConfig)
    scaling: ScalingConfig = Field(default_factory=ScalingConfig)
    control: ControlConfig = Field(default_factory=ControlConfig)
    replicas: int = Field(default=256, ge=2)
    seed: int = Field(default=0, ge=0, lt=2**64)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    clt: CLTConfig = Field(default_factory=CLTConfig)
    mdp: MDPConfig = Field(default_factory=MDPConfig)
    rate: RateConfig = Field(default_factory=RateConfig)
    controlled: ControlledConfig = Field(default_factory=ControlledConfig)
    modulus: ModulusConfig = Field(default_factory=ModulusConfig)
    convergence: ConvergenceConfig = Field(default_factory=ConvergenceConfig)

    def echo(self):
        """Plain-data form; parse(echo) reproduces the config."""
        return self.model_dump(mode="json")

    def to_yaml(self):
        return yaml.safe_dump(self.echo(), sort_keys=True)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field path."""


def _format_errors(exc):
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return "; ".join(lines)


def apply_overrides(raw: dict, overrides):
    """Apply --set path=value pairs; values are parsed as YAML scalars or lists."""
    raw = dict(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form path=value")
        path, text = item.split("=", 1)
        keys = path.strip().split(".")
        node = raw
        for k in keys[:-1]:
            child = node.get(k)
            if child is None:
                child = node[k] = {}
            elif not isinstance(child, dict):
                raise ConfigError(f"{path}: {k} is not a mapping")
            else:
                child = node[k] = dict(child)
            node = child
        node[keys[-1]] = yaml.safe_load(text)
    return raw


def parse_config(raw: dict) -> ExperimentConfig:
    from pydantic import ValidationError

    if not isinstance(raw, dict):
        raise ConfigError("<root>: config must be a mapping")
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path, overrides=(), kind=None) -> ExperimentConfig:
    try:
        with open(path) as f:
            raw = yaml.safe_load(f) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("<root>: config must be a mapping")
    raw = apply_overrides(raw, overrides)
    if kind is not None:
        if raw.get("kind", kind) != kind:
            raise ConfigError(f"kind: config says {raw['kind']!r}, command line says {kind!r}")
        raw["kind"] = kind
    return parse_config(raw)
