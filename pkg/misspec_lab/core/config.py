"""
Experiment configuration.

Config files are TOML with one table per subcommand::

    [bandit]
    preset = "realizable"
    n_grid = [25000, 50000]
    seeds = 10

JSON with the same shape is accepted too, which is what a run echoes into
its output directory as ``config.json``.
"""

from __future__ import annotations

import json
import math
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Literal, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from misspec_lab.bandit.instances import NoiseKind
from misspec_lab.core.errors import ConfigError
from misspec_lab.rl.features import FeatureMode

OUT_ENV = "MISSPEC_LAB_OUT"
DEFAULT_OUT_ROOT = "runs"

FIXED_ACTION_ALGOS = ("phased_elimination", "phased_elimination_known_eps")
CONTEXTUAL_ALGOS = ("linucb", "linucb_modified")
# Near-orthogonal rows need 8·ln k < d − 1 to be non-trivial.
LOWER_BOUND_K = 100
LOWER_BOUND_D = 40


class ExperimentConfig(BaseModel):
    """Settings every subcommand shares."""

    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=0, ge=0, description="root seed of every random stream")
    out_dir: Path | None = Field(default=None, description="run directory")
    plots: bool = Field(default=True, description="render PNG plots next to the CSVs")
    jobs: int = Field(default=1, ge=1, description="cells run concurrently")


class DesignConfig(ExperimentConfig):
    generator: Literal["gaussian", "identity", "jl", "file"] = "gaussian"
    k: int = Field(default=500, ge=1)
    d: int = Field(default=10, ge=1)
    epsilon: float = Field(default=0.5, description="pairwise bound for the jl generator")
    path: Path | None = Field(default=None, description="feature CSV for the file generator")
    instances: int = Field(default=1, ge=1)
    target_g: float | None = None
    max_support: int | None = None
    max_iters: int | None = None
    away_steps: bool = True

    @model_validator(mode="after")
    def _check(self) -> DesignConfig:
        if self.generator == "gaussian" and self.k < self.d:
            raise ValueError(f"gaussian generator needs k >= d, got k={self.k}, d={self.d}")
        if self.generator == "jl" and not (0 < self.epsilon < 1 and self.k >= 2):
            raise ValueError("jl generator needs 0 < epsilon < 1 and k >= 2")
        if self.generator == "file" and self.path is None:
            raise ValueError("file generator needs 'path'")
        if self.target_g is not None and self.target_g < self.d * (1 + 1e-6):
            raise ValueError(f"target_g must be at least d·(1+1e-6) = {self.d * (1 + 1e-6)}")
        if self.max_support is not None and self.max_support < self.d:
            raise ValueError("max_support must be at least d")
        return self


class BanditSweepConfig(ExperimentConfig):
    preset: Literal["realizable", "misspecified", "lower_bound", "failure", "contextual"] = "realizable"
    algos: list[str] = []
    n_grid: list[int] = [25_000, 50_000]
    epsilon_grid: list[float] = [0.0]
    k: int = Field(default=100, ge=1)
    d: int = Field(default=5, ge=1)
    k_t: int = Field(default=10, ge=1, description="actions per round for contextual presets")
    seeds: int = Field(default=10, ge=1)
    alpha: float | None = None
    min_gap: float = Field(default=0.0, ge=0.0)
    noise: NoiseKind = NoiseKind.GAUSSIAN
    noise_scale: float = Field(default=1.0, ge=0.0)
    write_traces: bool = True

    @field_validator("n_grid")
    @classmethod
    def _n_grid(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("n_grid must not be empty")
        if any(n < 1 for n in v):
            raise ValueError("every horizon in n_grid must be at least 1")
        return v

    @field_validator("epsilon_grid")
    @classmethod
    def _eps_grid(cls, v: list[float]) -> list[float]:
        if not v:
            raise ValueError("epsilon_grid must not be empty")
        if any(e < 0 for e in v):
            raise ValueError("misspecification levels must be non-negative")
        return v

    @field_validator("alpha")
    @classmethod
    def _alpha(cls, v: float | None) -> float | None:
        if v is not None and not 0 < v < 1:
            raise ValueError("alpha must lie in (0, 1)")
        return v

    @model_validator(mode="after")
    def _algos(self) -> BanditSweepConfig:
        contextual = self.preset in ("failure", "contextual")
        allowed = CONTEXTUAL_ALGOS if contextual else FIXED_ACTION_ALGOS
        if not self.algos:
            self.algos = list(allowed)
        bad = [a for a in self.algos if a not in allowed]
        if bad:
            raise ValueError(f"preset {self.preset!r} supports algos {list(allowed)}, got {bad}")
        if self.preset == "failure":
            if any(n % 2 for n in self.n_grid):
                raise ValueError("the failure preset needs even horizons")
            if any(e <= 0 for e in self.epsilon_grid):
                raise ValueError("the failure preset needs positive epsilon")
        if self.preset == "lower_bound":
            if "k" not in self.model_fields_set:
                self.k = LOWER_BOUND_K
            if "d" not in self.model_fields_set:
                self.d = LOWER_BOUND_D
            if self.d < 2 or self.k < self.d:
                raise ValueError("the lower_bound preset needs k >= d >= 2")
            if 8.0 * math.log(self.k) >= self.d - 1:
                raise ValueError(
                    f"the lower_bound preset needs 8·ln k < d − 1 for near-orthogonal rows, "
                    f"got k={self.k}, d={self.d}"
                )
        if not contextual and self.k < self.d:
            raise ValueError("fixed-action presets need k >= d")
        return self


class RLConfig(ExperimentConfig):
    mdp_path: Path | None = None
    S: int = Field(default=20, ge=1)
    A: int = Field(default=4, ge=1)
    gamma: float = 0.9
    n_mdps: int = Field(default=1, ge=1)
    features: FeatureMode = FeatureMode.PROJECTED
    d: int = Field(default=12, ge=1)
    epsilon: float | None = Field(default=None, description="accuracy target; defaults to measured ε")
    epsilon_floor: float = Field(default=0.05, gt=0.0)
    alpha: float = 0.1
    k: int | None = Field(default=None, ge=1)
    m: int | None = Field(default=None, ge=1)
    n: int | None = Field(default=None, ge=1)
    propagation_check: bool = False

    @field_validator("gamma")
    @classmethod
    def _gamma(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError("gamma must lie in (0, 1)")
        return v

    @field_validator("alpha")
    @classmethod
    def _alpha(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError("alpha must lie in (0, 1)")
        return v

    @model_validator(mode="after")
    def _check(self) -> RLConfig:
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.features == FeatureMode.PROJECTED and self.mdp_path is None and self.d > self.S * self.A:
            raise ValueError(f"projected features need d <= S·A = {self.S * self.A}")
        return self


class QueryConfig(ExperimentConfig):
    needle_ks: list[int] = [5, 11]
    trials: int = Field(default=100_000, ge=1)
    lambda_instances: int = Field(default=5, ge=0)
    lambda_k: int = Field(default=8, ge=2)
    lambda_d: int = Field(default=2, ge=1)
    lambda_qs: list[int] = [2, 3]
    design_trials: int = Field(default=1000, ge=0)
    design_k: int = Field(default=300, ge=1)
    design_d: int = Field(default=10, ge=1)
    epsilon: float = Field(default=0.1, ge=0.0)

    @model_validator(mode="after")
    def _check(self) -> QueryConfig:
        if any(k < 1 for k in self.needle_ks):
            raise ValueError("needle sizes must be positive")
        if any(not 1 <= q < self.lambda_k for q in self.lambda_qs):
            raise ValueError(f"every q must satisfy 1 <= q < lambda_k = {self.lambda_k}")
        if self.lambda_k < self.lambda_d or self.design_k < self.design_d:
            raise ValueError("feature matrices need k >= d")
        return self


class HardnessConfig(ExperimentConfig):
    d_grid: list[int] = [9, 17, 33, 73]
    ratio_grid: list[float] = [0.25, 0.5, 1.0]
    jl_k: int = Field(default=100, ge=2)
    jl_epsilon: float = 0.5

    @model_validator(mode="after")
    def _check(self) -> HardnessConfig:
        if not self.d_grid or not self.ratio_grid:
            raise ValueError("d_grid and ratio_grid must not be empty")
        if any(d < 2 for d in self.d_grid):
            raise ValueError("every d must be at least 2")
        if any(not 0 < r <= 1 for r in self.ratio_grid):
            raise ValueError("every ε/δ ratio must lie in (0, 1]")
        if not 0 < self.jl_epsilon < 1:
            raise ValueError("jl_epsilon must lie in (0, 1)")
        return self


C = TypeVar("C", bound=ExperimentConfig)


def read_config_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        if path.suffix == ".json":
            return json.loads(path.read_text())
        with open(path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None


def load_config(
    config_cls: type[C],
    section: str,
    path: str | Path | None = None,
    overrides: dict[str, Any] | None = None,
) -> C:
    """
    Build *config_cls* from the ``[section]`` table of *path* plus non-None
    *overrides*. Any validation failure becomes a ConfigError.
    """
    raw: dict[str, Any] = {}
    if path is not None:
        data = read_config_file(path)
        raw = dict(data.get(section, {}))
        unknown = set(data) - {section}
        if unknown and not raw:
            raise ConfigError(f"{path} has no [{section}] table (found {sorted(unknown)})")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return config_cls.model_validate(raw)
    except ValidationError as exc:
        lines = [
            f"  {'.'.join(str(p) for p in err['loc']) or section}: {err['msg']}"
            for err in exc.errors()
        ]
        raise ConfigError(f"invalid [{section}] config:\n" + "\n".join(lines)) from None


def resolve_out_dir(config: ExperimentConfig, name: str, run_id: str) -> Path:
    if config.out_dir is not None:
        return Path(config.out_dir)
    root = Path(os.environ.get(OUT_ENV, DEFAULT_OUT_ROOT))
    return root / f"{name}-seed{config.seed}-{run_id}"


def echo_config(config: ExperimentConfig, section: str, out_dir: Path) -> Path:
    """Write the resolved config as ``config.json``, loadable by load_config."""
    path = out_dir / "config.json"
    payload = {section: config.model_dump(mode="json", exclude={"out_dir"})}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
