"""
Per-point residual weights and their update rules.

Schemes:
    uniform  constant weights (plain PINN loss)
    sa       self-adaptive weights trained by gradient ascent
    rba      residual-based attention, l-infinity normalized residuals
    cw       convolution weighting, sum-to-one normalized smoothed residuals
    cwp      cw plus re-centered resampling
    cwp_fix  cw plus fixed-center resampling
"""

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Literal, Optional, Union

import pandas as pd
import torch
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config import (
    DEFAULT_EPSILON,
    DEFAULT_ETA_LAMBDA,
    DEFAULT_NEIGHBORS,
    DEFAULT_SA_LR,
    EVAL_CHUNK_SIZE,
    MAX_REJECTION_ROUNDS,
)
from app.exceptions import NonFiniteError, SamplingError
from app.network import DTYPE
from app.utils import ensure_finite

Scheme = Literal["uniform", "sa", "rba", "cw", "cwp", "cwp_fix"]
SCHEMES = ("uniform", "sa", "rba", "cw", "cwp", "cwp_fix")
CW_FAMILY = ("cw", "cwp", "cwp_fix")
RESAMPLING_SCHEMES = ("cwp", "cwp_fix")

SA_FLOOR = 1e-12


class SchemeConfig(BaseModel):
    """Hyperparameters of a weighting scheme."""

    model_config = ConfigDict(frozen=True)

    scheme: Scheme
    n_f: int = Field(ge=1)
    neighbors: int = Field(default=DEFAULT_NEIGHBORS, ge=0)
    epsilon: float = Field(default=DEFAULT_EPSILON, gt=0)
    eta_lambda: float = Field(default=DEFAULT_ETA_LAMBDA, gt=0, lt=1)
    eta_star: Optional[float] = Field(default=None, gt=0)
    sa_lr: float = Field(default=DEFAULT_SA_LR, gt=0)
    lambda_f: float = Field(default=1.0, gt=0)

    @model_validator(mode="before")
    @classmethod
    def _default_eta_star(cls, data):
        if isinstance(data, dict) and data.get("eta_star") is None:
            # weights then live in (0, 1]
            data = {**data, "eta_star": data.get("eta_lambda", DEFAULT_ETA_LAMBDA)}
        return data


@dataclass(frozen=True)
class WeightState:
    """Weights of the residual points plus the scheme that updates them."""

    lambdas: torch.Tensor
    scheme: str
    eta_lambda: float = DEFAULT_ETA_LAMBDA
    eta_star: float = DEFAULT_ETA_LAMBDA
    neighbors: int = DEFAULT_NEIGHBORS
    epsilon: float = DEFAULT_EPSILON
    sa_lr: float = DEFAULT_SA_LR

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"Unknown weighting scheme '{self.scheme}'")
        if self.lambdas.ndim != 1:
            raise ValueError("Weights must be a vector")
        ensure_finite(self.lambdas, "weights")
        if (self.lambdas < 0).any():
            raise ValueError("Weights must be non-negative")

    @classmethod
    def initial(cls, config: SchemeConfig) -> "WeightState":
        return cls(
            lambdas=initial_lambdas(config.scheme, config.n_f),
            scheme=config.scheme,
            eta_lambda=config.eta_lambda,
            eta_star=config.eta_star,
            neighbors=config.neighbors,
            epsilon=config.epsilon,
            sa_lr=config.sa_lr,
        )

    @property
    def size(self) -> int:
        return self.lambdas.numel()

    def with_lambdas(self, lambdas: torch.Tensor) -> "WeightState":
        return dataclasses.replace(self, lambdas=lambdas)


def initial_lambdas(scheme: str, n: int) -> torch.Tensor:
    """1/N_f for the CW family, 1 for uniform and SA, 0 for RBA."""
    if scheme in CW_FAMILY:
        return torch.full((n,), 1.0 / n, dtype=DTYPE)
    if scheme == "rba":
        return torch.zeros(n, dtype=DTYPE)
    if scheme in ("uniform", "sa"):
        return torch.ones(n, dtype=DTYPE)
    raise ValueError(f"Unknown weighting scheme '{scheme}'")


def residual_scale(scheme: str, n: int) -> float:
    """
    Factor applied to sum(lambda * r^2) in the primal loss.

    CW weights already sum to one; the other schemes divide by N_f so that
    uniform weights give the mean-squared residual.
    """
    return 1.0 if scheme in CW_FAMILY else 1.0 / n


@dataclass(frozen=True)
class SmoothedResiduals:
    """
    Neighborhood-averaged absolute residuals of one iteration.

    values        r_bar, shape (N,)
    center_points points whose own residual entered the average, (N, d)
    center_residuals  |r| at those points, (N,)
    neighbor_points   (N, M, d) draws from the eps-ball around each center
    neighbor_residuals  |r| at the draws, (N, M)
    """

    values: torch.Tensor
    center_points: torch.Tensor
    center_residuals: torch.Tensor
    neighbor_points: torch.Tensor
    neighbor_residuals: torch.Tensor
    iteration: Optional[int] = None

    @property
    def neighbors(self) -> int:
        return self.neighbor_points.shape[1]


def _generator(seed: Union[int, torch.Generator]) -> torch.Generator:
    if isinstance(seed, torch.Generator):
        return seed
    return torch.Generator().manual_seed(int(seed))


def sample_ball_neighbors(
    centers: torch.Tensor,
    count: int,
    epsilon: float,
    lo: torch.Tensor,
    hi: torch.Tensor,
    generator: torch.Generator,
) -> torch.Tensor:
    """
    Draw ``count`` uniform points from the open eps-ball around every center,
    restricted to the box [lo, hi] by rejection.

    Returns:
        torch.Tensor: (N, count, d) neighbor points
    """
    n, dim = centers.shape
    out = torch.empty((n, count, dim), dtype=DTYPE)
    if count == 0 or n == 0:
        return out
    flat_centers = centers.unsqueeze(1).expand(n, count, dim).reshape(-1, dim)
    flat = out.view(-1, dim)
    pending = torch.arange(flat.shape[0])
    failed_rounds = 0
    while pending.numel() > 0:
        k = pending.numel()
        direction = torch.randn((k, dim), generator=generator, dtype=DTYPE)
        direction = direction / direction.norm(dim=1, keepdim=True)
        radius = epsilon * torch.rand((k, 1), generator=generator, dtype=DTYPE) ** (1.0 / dim)
        candidates = flat_centers[pending] + radius * direction
        inside = ((candidates >= lo) & (candidates <= hi)).all(dim=1)
        if inside.any():
            failed_rounds = 0
            flat[pending[inside]] = candidates[inside]
            pending = pending[~inside]
        else:
            failed_rounds += 1
            if failed_rounds >= MAX_REJECTION_ROUNDS:
                raise SamplingError(
                    f"Neighbor sampling failed {failed_rounds} consecutive rounds "
                    f"for {pending.numel()} draws (eps={epsilon})"
                )
    return out


def _abs_residuals(residual_fn: Callable, points: torch.Tensor) -> torch.Tensor:
    chunks = [
        residual_fn(points[start:start + EVAL_CHUNK_SIZE]).detach().abs()
        for start in range(0, points.shape[0], EVAL_CHUNK_SIZE)
    ]
    return torch.cat(chunks) if chunks else torch.zeros(0, dtype=DTYPE)


def smooth_residuals(
    residual_fn: Callable,
    points: torch.Tensor,
    neighbors: int,
    epsilon: float,
    lo: torch.Tensor,
    hi: torch.Tensor,
    seed: Union[int, torch.Generator],
    centers: Optional[torch.Tensor] = None,
    center_residuals: Optional[torch.Tensor] = None,
    iteration: Optional[int] = None,
) -> SmoothedResiduals:
    """
    Monte-Carlo neighborhood average of absolute residuals.

    r_bar_i = (|r(x_i)| + sum_j |r(x_ij)|) / (M + 1), with the x_ij drawn
    uniformly from the eps-ball around ``centers[i]`` (``points`` when not
    given) inside the domain box.

    Args:
        residual_fn: Batched map (B, d) -> (B,) signed residuals
        points: Collocation points, (N, d)
        neighbors: M, draws per point (0 gives r_bar = |r|)
        epsilon: Ball radius
        lo, hi: Domain box
        seed: Seed or generator of the neighbor stream
        centers: Ball centers, frozen originals under cwp_fix
        center_residuals: Already computed residuals at ``points``
        iteration: Training iteration the result belongs to

    Returns:
        SmoothedResiduals: averages plus the neighbor data used by resampling
    """
    if neighbors < 0:
        raise ValueError("Number of neighbors must be non-negative")
    if epsilon <= 0:
        raise ValueError("Neighborhood radius must be positive")
    points = torch.as_tensor(points, dtype=DTYPE).detach()
    centers = points if centers is None else torch.as_tensor(centers, dtype=DTYPE).detach()
    if centers.shape != points.shape:
        raise ValueError("Centers and points must have the same shape")
    lo = torch.as_tensor(lo, dtype=DTYPE)
    hi = torch.as_tensor(hi, dtype=DTYPE)

    drawn = sample_ball_neighbors(centers, neighbors, epsilon, lo, hi, _generator(seed))

    if center_residuals is None:
        center_abs = _abs_residuals(residual_fn, points)
    else:
        center_abs = torch.as_tensor(center_residuals, dtype=DTYPE).detach().abs()
    n, dim = points.shape
    neighbor_abs = _abs_residuals(residual_fn, drawn.reshape(-1, dim)).reshape(n, neighbors)
    ensure_finite(center_abs, "center residuals")
    ensure_finite(neighbor_abs, "neighbor residuals")

    values = (center_abs + neighbor_abs.sum(dim=1)) / (neighbors + 1)
    return SmoothedResiduals(
        values=values,
        center_points=points,
        center_residuals=center_abs,
        neighbor_points=drawn,
        neighbor_residuals=neighbor_abs,
        iteration=iteration,
    )


def _require(state: WeightState, schemes: tuple, rule: str):
    if state.scheme not in schemes:
        raise ValueError(f"{rule} update does not apply to scheme '{state.scheme}'")


def update_cw(state: WeightState, smoothed: Union[SmoothedResiduals, torch.Tensor]) -> WeightState:
    """
    Convolution-weighting step.

    lambda <- (1 - eta) lambda + eta r_bar / sum(r_bar). Both terms sum to one,
    so the weights stay on the simplex.
    """
    _require(state, CW_FAMILY, "Convolution-weighting")
    values = smoothed.values if isinstance(smoothed, SmoothedResiduals) else smoothed
    values = torch.as_tensor(values, dtype=DTYPE)
    if values.shape != state.lambdas.shape:
        raise ValueError(f"Expected {state.size} smoothed residuals, got {tuple(values.shape)}")
    total = values.sum()
    if total <= 0:
        logger.warning("All smoothed residuals are zero, weights left unchanged")
        return state
    eta = state.eta_lambda
    return state.with_lambdas((1.0 - eta) * state.lambdas + eta * (values / total))


def update_rba(state: WeightState, residuals: torch.Tensor) -> WeightState:
    """lambda <- (1 - eta) lambda + eta_star |r| / max|r|."""
    _require(state, ("rba",), "RBA")
    magnitude = torch.as_tensor(residuals, dtype=DTYPE).detach().abs()
    if magnitude.shape != state.lambdas.shape:
        raise ValueError(f"Expected {state.size} residuals, got {tuple(magnitude.shape)}")
    ensure_finite(magnitude, "residuals")
    peak = magnitude.max()
    if peak <= 0:
        logger.warning("All residuals are zero, RBA weights left unchanged")
        return state
    return state.with_lambdas(
        (1.0 - state.eta_lambda) * state.lambdas + state.eta_star * (magnitude / peak)
    )


def update_sa(state: WeightState, residuals: torch.Tensor) -> WeightState:
    """Gradient ascent on sum(lambda r^2): lambda <- lambda + sa_lr r^2, floored."""
    _require(state, ("sa",), "SA")
    r = torch.as_tensor(residuals, dtype=DTYPE).detach()
    if r.shape != state.lambdas.shape:
        raise ValueError(f"Expected {state.size} residuals, got {tuple(r.shape)}")
    ensure_finite(r, "residuals")
    return state.with_lambdas((state.lambdas + state.sa_lr * r**2).clamp_min(SA_FLOOR))


def update_weights(
    state: WeightState,
    residuals: torch.Tensor,
    smoothed: Optional[SmoothedResiduals] = None,
) -> WeightState:
    """Apply the update rule of ``state.scheme``; uniform weights never change."""
    if state.scheme in CW_FAMILY:
        if smoothed is None:
            raise ValueError(f"Scheme '{state.scheme}' needs smoothed residuals")
        return update_cw(state, smoothed)
    if state.scheme == "rba":
        return update_rba(state, residuals)
    if state.scheme == "sa":
        return update_sa(state, residuals)
    return state


def weighted_residual_loss(lambdas: torch.Tensor, residuals: torch.Tensor) -> torch.Tensor:
    """
    sum_i lambda_i r_i^2 with the weights held constant.

    The result keeps the autograd graph of ``residuals``; no gradient flows
    into ``lambdas``.
    """
    lambdas = torch.as_tensor(lambdas, dtype=DTYPE).detach()
    if lambdas.shape != residuals.shape:
        raise ValueError(
            f"Weights {tuple(lambdas.shape)} and residuals {tuple(residuals.shape)} differ in shape"
        )
    loss = torch.sum(lambdas * residuals**2)
    if not torch.isfinite(loss):
        raise NonFiniteError("Weighted residual loss is not finite")
    return loss


def export_weights(path, points: torch.Tensor, lambdas: torch.Tensor, coordinates) -> Path:
    """Write weights as CSV: index, coordinates..., lambda."""
    frame = pd.DataFrame(points.detach().numpy(), columns=list(coordinates))
    frame.insert(0, "index", range(len(frame)))
    frame["lambda"] = lambdas.detach().numpy()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path
