"""
Experiment configuration: the ``key = value`` file format and its mapping to
problems, schemes and training settings.

Example:

    # source: heat equation, N_f = 1000
    problem = heat1d
    scheme = cwp
    N_f = 1000
    lr0 = 0.0015
    seeds = 1,2,3
"""

from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.config import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    DEFAULT_CHECKPOINT_EVERY,
    DEFAULT_EPSILON,
    DEFAULT_ETA_LAMBDA,
    DEFAULT_NEIGHBORS,
    DEFAULT_RESAMPLE_EVERY,
    DEFAULT_SA_LR,
    DEFAULT_TEST_POINTS,
    PRESETS_DIR,
)
from app.exceptions import ConfigError, UnknownNameError
from app.problems import PROBLEMS, build_problem
from app.problems.base import FixedLoss, ProblemSpec, sample_uniform, with_fixed_losses
from app.trainer import TrainConfig
from app.utils import format_float, make_generator
from app.weighting import Scheme, SchemeConfig

SOURCE_PREFIX = "# source:"


class ExperimentConfig(BaseModel):
    """One experiment: a problem, a weighting scheme, training settings and seeds."""

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    problem: str
    scheme: Scheme

    # point counts
    n_f: int = Field(default=1000, ge=1, alias="N_f")
    n_b: int = Field(default=300, ge=0, alias="N_b")
    n_0: int = Field(default=0, ge=0, alias="N_0")
    n_obs: int = Field(default=60, ge=0, alias="N_obs")
    boundary_per_edge: int = Field(default=10, ge=1)

    # weighting
    neighbors: int = Field(default=DEFAULT_NEIGHBORS, ge=0, alias="M")
    epsilon: float = Field(default=DEFAULT_EPSILON, gt=0)
    eta_lambda: float = Field(default=DEFAULT_ETA_LAMBDA, gt=0, lt=1)
    eta_star: Optional[float] = Field(default=None, gt=0)
    sa_lr: float = Field(default=DEFAULT_SA_LR, gt=0)

    # global loss weights; unset means the problem's own default
    lambda_f: float = Field(default=1.0, gt=0)
    lambda_b: Optional[float] = Field(default=None, ge=0)
    lambda_obs: Optional[float] = Field(default=None, ge=0)
    lambda_0: float = Field(default=1.0, ge=0)

    # problem options
    noise_variance: float = Field(default=0.01, ge=0)
    kg_t_max: float = Field(default=10.0, gt=0)
    burgers_constraint: Literal["printed", "symmetric"] = "printed"
    hidden_layers: Optional[int] = Field(default=None, ge=1)
    hidden_width: Optional[int] = Field(default=None, ge=1)

    # training
    iterations: int = Field(default=20000, ge=1)
    lr0: float = Field(default=1e-3, gt=0)
    decay_factor: float = Field(default=1.0, gt=0, le=1)
    decay_every: int = Field(default=1000, ge=1)
    lr_floor: float = Field(default=0.0, ge=0)
    adam_beta1: float = Field(default=ADAM_BETA1, ge=0, lt=1)
    adam_beta2: float = Field(default=ADAM_BETA2, ge=0, lt=1)
    adam_eps: float = Field(default=ADAM_EPS, gt=0)
    weight_update_stride: int = Field(default=1, ge=0)
    resample_every: int = Field(default=DEFAULT_RESAMPLE_EVERY, ge=0)
    checkpoint_every: int = Field(default=DEFAULT_CHECKPOINT_EVERY, ge=1)
    snapshot_every: int = Field(default=0, ge=0)
    test_points: int = Field(default=DEFAULT_TEST_POINTS, ge=1)

    output_dir: Optional[str] = None
    seeds: List[int] = Field(default_factory=lambda: [1, 2, 3])

    @field_validator("problem")
    @classmethod
    def _known_problem(cls, value):
        if value not in PROBLEMS:
            raise ValueError(f"unknown problem, expected one of {sorted(PROBLEMS)}")
        return value

    @field_validator("seeds", mode="before")
    @classmethod
    def _split_seeds(cls, value):
        if isinstance(value, str):
            parts = [p.strip() for p in value.split(",")]
            if any(not p for p in parts):
                raise ValueError("seeds must be a comma-separated list of integers")
            return parts
        return value

    @field_validator("seeds")
    @classmethod
    def _distinct_seeds(cls, value):
        if not value:
            raise ValueError("at least one seed is required")
        if len(set(value)) != len(value):
            raise ValueError("seeds must be distinct")
        if any(s < 0 for s in value):
            raise ValueError("seeds must be non-negative")
        return value

    @model_validator(mode="after")
    def _consistent_counts(self):
        if self.problem == "kg2d" and self.n_b < 1:
            raise ValueError("kg2d needs N_b >= 1 boundary points")
        if self.problem == "poisson-inv" and self.n_obs < 1:
            raise ValueError("poisson-inv needs N_obs >= 1 observations")
        if self.problem == "poisson-inv" and self.n_0 > 0:
            raise ValueError("poisson-inv has no initial condition, N_0 must be 0")
        return self


FIELD_KEYS = {name: info.alias or name for name, info in ExperimentConfig.model_fields.items()}


def read_pairs(path) -> Dict[str, Tuple[str, int]]:
    """
    Read ``key = value`` lines.

    Returns:
        dict: key -> (raw value, line number)
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    return parse_pairs(text)


def parse_pairs(text: str) -> Dict[str, Tuple[str, int]]:
    pairs = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("missing key", line=number)
        if not value:
            raise ConfigError("missing value", key=key, line=number)
        if key in pairs:
            raise ConfigError(f"duplicate key (first set on line {pairs[key][1]})", key=key, line=number)
        pairs[key] = (value, number)
    return pairs


def config_from_pairs(pairs: Dict[str, Tuple[str, int]]) -> ExperimentConfig:
    """Validate raw pairs, turning pydantic errors into ConfigError with key and line."""
    lines = {}
    for key, (_, number) in pairs.items():
        # pydantic reports aliased fields under their alias
        lines[key] = number
        lines[FIELD_KEYS.get(key, key)] = number
    try:
        return ExperimentConfig.model_validate({key: value for key, (value, _) in pairs.items()})
    except ValidationError as e:
        error = e.errors()[0]
        key = str(error["loc"][0]) if error["loc"] else None
        message = error["msg"]
        if error["type"] == "extra_forbidden":
            message = "unknown key"
        elif error["type"] == "missing":
            message = "required key is missing"
        raise ConfigError(message, key=key, line=lines.get(key)) from e


def parse_config(path, base=None) -> ExperimentConfig:
    """
    Parse an experiment file.

    Args:
        path: File in ``key = value`` format (UTF-8, ``#`` comments)
        base: Optional file whose keys are used where ``path`` is silent

    Returns:
        ExperimentConfig: validated configuration, defaults filled in

    Raises:
        ConfigError: naming the offending key and line
    """
    pairs = read_pairs(base) if base is not None else {}
    overrides = read_pairs(path)
    # canonical names so that N_f in the base and n_f in the override collide
    canonical = {alias: name for name, alias in FIELD_KEYS.items()}
    merged = {canonical.get(k, k): v for k, v in pairs.items()}
    for key, value in overrides.items():
        merged[canonical.get(key, key)] = value
    return config_from_pairs({FIELD_KEYS.get(k, k): v for k, v in merged.items()})


def parse_config_text(text: str) -> ExperimentConfig:
    return config_from_pairs(parse_pairs(text))


def _format_value(value) -> str:
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def emit_config(config: ExperimentConfig, source: Optional[str] = None) -> str:
    """Serialize every set field; parse_config_text inverts it exactly."""
    lines = [f"{SOURCE_PREFIX} {source}"] if source else []
    for name, key in FIELD_KEYS.items():
        value = getattr(config, name)
        if value is None:
            continue
        lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def preset_path(name: str) -> Path:
    path = PRESETS_DIR / f"{name}.cfg"
    if not path.is_file():
        raise UnknownNameError(f"Unknown preset '{name}'")
    return path


def preset_source(path) -> str:
    """The ``# source:`` comment of a preset file, or an empty string."""
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith(SOURCE_PREFIX):
            return line[len(SOURCE_PREFIX):].strip()
    return ""


def preset_names() -> List[str]:
    return sorted(p.stem for p in PRESETS_DIR.glob("*.cfg"))


def scheme_config(config: ExperimentConfig) -> SchemeConfig:
    return SchemeConfig(
        scheme=config.scheme,
        n_f=config.n_f,
        neighbors=config.neighbors,
        epsilon=config.epsilon,
        eta_lambda=config.eta_lambda,
        eta_star=config.eta_star,
        sa_lr=config.sa_lr,
        lambda_f=config.lambda_f,
    )


def train_config(config: ExperimentConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        iterations=config.iterations,
        lr0=config.lr0,
        decay_factor=config.decay_factor,
        decay_every=config.decay_every,
        lr_floor=config.lr_floor,
        adam_beta1=config.adam_beta1,
        adam_beta2=config.adam_beta2,
        adam_eps=config.adam_eps,
        weight_update_stride=config.weight_update_stride,
        resample_every=config.resample_every,
        checkpoint_every=config.checkpoint_every,
        snapshot_every=config.snapshot_every,
        seed=seed,
    )


def problem_options(config: ExperimentConfig, seed: int) -> dict:
    """Construction options of the configured problem for one seed."""
    options = {}
    if config.hidden_layers is not None:
        options["hidden_layers"] = config.hidden_layers
    if config.hidden_width is not None:
        options["hidden_width"] = config.hidden_width
    if config.problem == "kg2d":
        options.update(n_boundary=config.n_b, seed=seed, t_max=config.kg_t_max)
        if config.lambda_b is not None:
            options["boundary_weight"] = config.lambda_b
    elif config.problem == "burgers1d":
        options["constraint"] = config.burgers_constraint
    elif config.problem == "poisson-inv":
        options.update(
            seed=seed,
            n_obs=config.n_obs,
            n_boundary_per_edge=config.boundary_per_edge,
            noise_variance=config.noise_variance,
        )
        if config.lambda_obs is not None:
            options["observation_weight"] = config.lambda_obs
        if config.lambda_b is not None:
            options["boundary_weight"] = config.lambda_b
    return options


def build_experiment_problem(config: ExperimentConfig, seed: int) -> ProblemSpec:
    """
    The configured problem for one seed.

    With N_0 > 0 an initial-condition loss against the reference solution is
    added on top of the hard constraint.
    """
    problem = build_problem(config.problem, **problem_options(config, seed))
    if config.n_0 > 0:
        points = sample_uniform(problem, config.n_0, "initial", make_generator(seed, "initial"))
        targets = problem.exact_solution(points)
        terms = [
            FixedLoss(kind="initial", field=name, points=points, targets=targets[:, index], weight=config.lambda_0)
            for index, name in enumerate(problem.fields)
        ]
        problem = with_fixed_losses(problem, *terms)
    return problem
