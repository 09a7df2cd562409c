"""
1D heat equation with a high-frequency initial profile.

    u_t = u_xx / (400 pi^2),  (t, x) in [0, 1] x [0, 1]
    u(t, 0) = u(t, 1) = 0,  u(0, x) = sin(20 pi x)

Exact solution exp(-t) sin(20 pi x). All conditions are hard-enforced, so the
training loss is the residual term alone.
"""

import math

import torch

from app.network import NetworkConfig
from app.problems.base import ProblemSpec

T, X = 0, 1
DIFFUSIVITY = 1.0 / (400.0 * math.pi**2)


def heat_exact(points: torch.Tensor) -> torch.Tensor:
    t, x = points[:, T], points[:, X]
    return (torch.exp(-t) * torch.sin(20.0 * math.pi * x)).unsqueeze(1)


def heat_constraint(points, raw):
    t, x = points[:, T], points[:, X]
    u = t * x * (1.0 - x) * raw["u"][:, 0] + torch.sin(20.0 * math.pi * x)
    return u.unsqueeze(1)


def heat_residual(points, jet):
    return jet.d(T) - DIFFUSIVITY * jet.dd(X, X)


def heat1d(hidden_layers: int = 4, hidden_width: int = 80) -> ProblemSpec:
    """Heat benchmark; network defaults are 4 hidden layers of 80 units."""
    return ProblemSpec(
        name="heat1d",
        coordinates=("t", "x"),
        domain_lo=(0.0, 0.0),
        domain_hi=(1.0, 1.0),
        fields=("u",),
        networks={
            "u": NetworkConfig(
                input_dim=2, output_dim=1, hidden_layers=hidden_layers, hidden_width=hidden_width
            )
        },
        hard_constraint=heat_constraint,
        residual_operator=heat_residual,
        exact_solution=heat_exact,
        time_axis=T,
    )
