"""Experiment configuration: TOML files validated by pydantic.

Unknown keys are rejected everywhere. Overrides use dotted paths with
TOML-literal values, e.g. ``experiment.trials=5`` or ``noise.sigma=0.2``.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import operators as ops
from .measure import InputMeasure
from .noise import NoiseModel
from .spectrum import SpectrumProfile


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SpectrumConfig(_Strict):
    kind: Literal["algebraic", "exponential", "double_exponential", "explicit"]
    alpha: Optional[float] = None
    beta: float = 1.0
    values: Optional[list[float]] = None

    def build(self) -> SpectrumProfile:
        return SpectrumProfile.from_dict(self.model_dump(exclude_none=True))


class MeasureConfig(_Strict):
    spectrum: SpectrumConfig
    law: Literal["uniform", "gaussian"] = "uniform"
    sim_dim: Optional[int] = Field(None, ge=1)

    def build(self) -> InputMeasure:
        return InputMeasure.build(self.spectrum.build(), self.law, self.sim_dim)


class OperatorConfig(_Strict):
    """``clipped_linear``: rows of ``A`` map eigencoordinates to outputs.
    ``tent``: tent on the first ``d`` coordinates along ``psi_direction``.
    ``profile``: unit-Lipschitz tent times ``v_i = i^-decay`` (``i <= output_dim``).
    ``zero``: the zero operator.
    """

    family: Literal["clipped_linear", "tent", "profile", "zero"]
    A: Optional[list[list[float]]] = None
    B: Optional[float] = Field(None, gt=0)
    L: float = Field(1.0, gt=0)
    t: float = Field(0.0, ge=0)
    output_dim: int = Field(1, ge=1)
    direction: int = Field(1, ge=1)
    d: int = Field(1, ge=1)
    decay: float = Field(1.5, gt=0)

    @model_validator(mode="after")
    def _needs(self):
        if self.family == "clipped_linear" and (self.A is None or self.B is None):
            raise ValueError("clipped_linear needs A and B")
        return self


def build_operator(cfg: dict, spectrum: SpectrumProfile) -> ops.TestOperator:
    """Module-level so ``functools.partial`` of it pickles for worker processes."""
    c = OperatorConfig(**cfg)
    if c.family == "clipped_linear":
        return ops.clipped_linear_operator(np.asarray(c.A), c.B, c.L, c.t,
                                           max(c.output_dim, len(c.A)))
    if c.family == "tent":
        return ops.tent_operator(c.d, spectrum, c.L, c.output_dim, c.direction, c.t)
    if c.family == "profile":
        unit = 1.0 / ops.tent_lipschitz(c.d, spectrum)
        v = c.L * np.arange(1, c.output_dim + 1, dtype=float) ** -c.decay
        return ops.profile_operator(lambda X: unit * ops.tent(X, c.d, spectrum), unit, 1.0, v,
                                    c.t)
    return ops.zero_operator(c.output_dim)


def operator_factory(cfg: "OperatorConfig", spectrum: SpectrumProfile):
    return functools.partial(build_operator, cfg.model_dump(), spectrum)


class NoiseConfig(_Strict):
    kind: Literal["hilbert", "white"] = "hilbert"
    sigma: float = Field(0.1, ge=0)
    coeff_dim: int = Field(8, ge=1)
    upsilon: Literal["geometric", "spectrum"] = "geometric"

    def build(self, spectrum: SpectrumProfile) -> NoiseModel:
        if self.kind == "white":
            return NoiseModel.white(self.sigma, self.coeff_dim)
        return NoiseModel.hilbert(self.sigma, self.coeff_dim,
                                  spectrum if self.upsilon == "spectrum" else None)


class SelectionConfig(_Strict):
    rule: Literal["theorem", "finite_dim"] = "theorem"
    sigma: Optional[float] = Field(None, gt=0)  # defaults to the noise level
    d: Optional[int] = Field(None, ge=1)
    r: Optional[int] = Field(None, ge=1)
    t: float = Field(1.0, ge=0)
    c_prime: float = Field(1.0, gt=0)
    d_max: int = Field(64, ge=1)
    R: Optional[float] = Field(None, gt=0)
    c_scale: float = Field(1.0, gt=0)


class ExperimentConfig(_Strict):
    p: float = Field(2.0, ge=1)
    m_grid: list[int] = Field(default_factory=lambda: [128, 256, 512, 1024])
    trials: int = Field(10, ge=1)
    n_mc: int = Field(20000, ge=2)
    design: Literal["fixed", "random"] = "fixed"
    r_grid: Optional[list[int]] = None

    @field_validator("m_grid")
    @classmethod
    def _positive(cls, v):
        if not v or any(m < 1 for m in v):
            raise ValueError("m_grid must be a nonempty list of positive integers")
        return v

    @field_validator("p")
    @classmethod
    def _finite(cls, v):
        if not math.isfinite(v):
            raise ValueError("p must be finite")
        return v


class LowerBoundConfig(_Strict):
    enabled: bool = True
    c: Optional[float] = Field(None, gt=0)
    d_max: int = Field(64, ge=1)
    # standalone lower-bound experiment
    d: int = Field(1, ge=1)
    m: int = Field(1000, ge=1)
    h: Optional[float] = Field(None, gt=0)
    separation_pairs: int = Field(3, ge=0)
    n_mc: int = Field(200000, ge=2)


class RatesConfig(_Strict):
    m_grid: list[float] = Field(default_factory=lambda: [10.0 ** e for e in range(2, 13)])
    C: float = Field(1.0, gt=0)
    d_max: int = Field(64, ge=1)
    r: Optional[int] = Field(None, ge=1)


class VerifyConfig(_Strict):
    vg_n: list[int] = Field(default_factory=lambda: [8, 16, 24, 32, 48])
    separation_n_mc: int = Field(200000, ge=1000)
    kl_instances: int = Field(100, ge=1)


class Config(_Strict):
    kind: Literal["risk-curve", "lower-bound", "rates", "verify"]
    name: str = "experiment"
    seed: int = Field(0, ge=0, lt=2 ** 64)
    measure: Optional[MeasureConfig] = None
    operator: Optional[OperatorConfig] = None
    noise: NoiseConfig = NoiseConfig()
    selection: SelectionConfig = SelectionConfig()
    experiment: ExperimentConfig = ExperimentConfig()
    lower_bound: LowerBoundConfig = LowerBoundConfig()
    rates: RatesConfig = RatesConfig()
    verify: VerifyConfig = VerifyConfig()

    @model_validator(mode="after")
    def _sections(self):
        if self.kind in ("risk-curve", "lower-bound", "rates") and self.measure is None:
            raise ValueError(f"kind={self.kind} needs a [measure] section")
        if self.kind in ("risk-curve", "lower-bound", "rates") and self.operator is None:
            raise ValueError(f"kind={self.kind} needs an [operator] section")
        return self

    def digest(self) -> str:
        text = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


class ConfigError(ValueError):
    pass


def _set_path(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    cur = doc
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"override {dotted!r}: {k!r} is not a table")
    cur[keys[-1]] = value


def parse_override(item: str) -> tuple[str, object]:
    """``key.path=value``; the value is read as a TOML literal, else as a bare string."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def load_config(path=None, overrides=(), kind: str | None = None) -> Config:
    doc: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                doc = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
    if kind is not None:
        if doc.get("kind", kind) != kind:
            raise ConfigError(f"config kind {doc['kind']!r} does not match command {kind!r}")
        doc["kind"] = kind
    for item in overrides:
        _set_path(doc, *parse_override(item))
    try:
        return Config(**doc)
    except ValidationError as exc:
        lines = [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}"
                 for e in exc.errors()]
        raise ConfigError("invalid config\n  " + "\n  ".join(lines)) from None


def shipped_configs() -> dict[str, Path]:
    root = resources.files("opminimax") / "configs"
    return {p.name: Path(str(p)) for p in sorted(root.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".toml")}


def resolve_config_path(name_or_path: str) -> Path:
    """A filesystem path, or the file name of a shipped config."""
    p = Path(name_or_path)
    if p.exists():
        return p
    shipped = shipped_configs()
    if p.name in shipped:
        return shipped[p.name]
    raise ConfigError(f"config {name_or_path!r} not found (shipped: {', '.join(shipped)})")
