"""
Inverse Poisson problem: recover the diffusion coefficient a(x, y) from noisy
observations of u.

    -div(a grad u) = f  on [0, 1]^2
    u = sin(pi x) sin(pi y),  a = 1 / (1 + x^2 + y^2 + (x - 1)^2 + (y - 1)^2)

Two networks are trained, one for u and one for a. The fixed losses are the
observation misfit on u and the boundary values of a.
"""

import math

import torch

from app.network import DTYPE, NetworkConfig
from app.problems.base import (
    FixedLoss,
    ObservationSet,
    ProblemSpec,
    sample_uniform,
    with_fixed_losses,
)
from app.utils import make_generator

X, Y = 0, 1
U, A = 0, 1
DEFAULT_NOISE_VARIANCE = 0.01


def _denominator(x, y):
    return 1.0 + x**2 + y**2 + (x - 1.0) ** 2 + (y - 1.0) ** 2


def poisson_exact_u(points: torch.Tensor) -> torch.Tensor:
    x, y = points[:, X], points[:, Y]
    return torch.sin(math.pi * x) * torch.sin(math.pi * y)


def poisson_exact_a(points: torch.Tensor) -> torch.Tensor:
    return 1.0 / _denominator(points[:, X], points[:, Y])


def poisson_exact(points: torch.Tensor) -> torch.Tensor:
    return torch.stack([poisson_exact_u(points), poisson_exact_a(points)], dim=1)


def poisson_source(points: torch.Tensor) -> torch.Tensor:
    x, y = points[:, X], points[:, Y]
    d = _denominator(x, y)
    sx, sy = torch.sin(math.pi * x), torch.sin(math.pi * y)
    cx, cy = torch.cos(math.pi * x), torch.cos(math.pi * y)
    return (
        2.0 * math.pi**2 * sx * sy / d
        + 2.0 * math.pi * ((2.0 * x - 1.0) * cx * sy + (2.0 * y - 1.0) * cy * sx) / d**2
    )


def poisson_constraint(points, raw):
    return torch.cat([raw["u"], raw["a"]], dim=1)


def poisson_residual(points, jet):
    a = jet.u(A)
    flux = jet.d(X, A) * jet.d(X, U) + jet.d(Y, A) * jet.d(Y, U)
    laplacian = jet.dd(X, X, U) + jet.dd(Y, Y, U)
    return -(flux + a * laplacian) - poisson_source(points)


def edge_points(per_edge: int) -> torch.Tensor:
    """Evenly spaced points on the four edges of the unit square (no corners)."""
    s = (torch.arange(per_edge, dtype=DTYPE) + 0.5) / per_edge
    zeros, ones = torch.zeros_like(s), torch.ones_like(s)
    return torch.cat(
        [
            torch.stack([s, zeros], dim=1),
            torch.stack([s, ones], dim=1),
            torch.stack([zeros, s], dim=1),
            torch.stack([ones, s], dim=1),
        ]
    )


def poisson_inverse2d(
    seed: int = 0,
    n_obs: int = 60,
    n_boundary_per_edge: int = 10,
    noise_variance: float = DEFAULT_NOISE_VARIANCE,
    observation_weight: float = 10.0,
    boundary_weight: float = 10.0,
    hidden_layers: int = 4,
    hidden_width: int = 50,
) -> ProblemSpec:
    """
    Inverse Poisson benchmark.

    Observation points and their Gaussian noise are drawn once from the
    experiment seed and stay frozen for the whole run.
    """
    if n_obs < 1 or n_boundary_per_edge < 1:
        raise ValueError("Inverse Poisson needs observation and boundary points")
    if noise_variance < 0:
        raise ValueError("Noise variance must be non-negative")
    network = NetworkConfig(
        input_dim=2, output_dim=1, hidden_layers=hidden_layers, hidden_width=hidden_width
    )
    spec = ProblemSpec(
        name="poisson-inv",
        coordinates=("x", "y"),
        domain_lo=(0.0, 0.0),
        domain_hi=(1.0, 1.0),
        fields=("u", "a"),
        networks={"u": network, "a": network},
        hard_constraint=poisson_constraint,
        residual_operator=poisson_residual,
        exact_solution=poisson_exact,
        time_axis=None,
        options={"noise_variance": float(noise_variance)},
    )

    obs_points = sample_uniform(spec, n_obs, "interior", make_generator(seed, "observation"))
    noise = torch.randn(n_obs, generator=make_generator(seed, "noise"), dtype=DTYPE)
    observations = ObservationSet(
        points=obs_points,
        values=poisson_exact_u(obs_points) + math.sqrt(noise_variance) * noise,
        noise_variance=float(noise_variance),
    )
    boundary = edge_points(n_boundary_per_edge)
    return with_fixed_losses(
        spec,
        FixedLoss(
            kind="observation",
            field="u",
            points=observations.points,
            targets=observations.values,
            weight=float(observation_weight),
        ),
        FixedLoss(
            kind="boundary",
            field="a",
            points=boundary,
            targets=poisson_exact_a(boundary),
            weight=float(boundary_weight),
        ),
    )
