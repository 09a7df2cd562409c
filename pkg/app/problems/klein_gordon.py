"""
2D time-dependent Klein-Gordon equation.

    u_tt - (u_xx + u_yy) + u^2 = f,  (x, y) in [0, 1]^2, t in [0, T]

with exact solution u = (x + y) cos t + x y sin t. Since u_tt = -u and the
Laplacian vanishes, f = u^2 - u. The initial condition is hard-enforced, the
lateral boundary is a weighted fixed loss with target g = u.
"""

import torch

from app.network import NetworkConfig
from app.problems.base import FixedLoss, ProblemSpec, sample_uniform, with_fixed_losses
from app.utils import make_generator

T, X, Y = 0, 1, 2
DEFAULT_T_MAX = 10.0
DEFAULT_BOUNDARY_WEIGHT = 100.0


def kg_exact_u(points: torch.Tensor) -> torch.Tensor:
    t, x, y = points[:, T], points[:, X], points[:, Y]
    return (x + y) * torch.cos(t) + x * y * torch.sin(t)


def kg_exact(points: torch.Tensor) -> torch.Tensor:
    return kg_exact_u(points).unsqueeze(1)


def kg_source(points: torch.Tensor) -> torch.Tensor:
    u = kg_exact_u(points)
    return u**2 - u


def kg_constraint(points, raw):
    t, x, y = points[:, T], points[:, X], points[:, Y]
    return (t * raw["u"][:, 0] + x + y).unsqueeze(1)


def kg_residual(points, jet):
    u = jet.u()
    return jet.dd(T, T) - (jet.dd(X, X) + jet.dd(Y, Y)) + u**2 - kg_source(points)


def klein_gordon2d(
    n_boundary: int = 300,
    seed: int = 0,
    t_max: float = DEFAULT_T_MAX,
    boundary_weight: float = DEFAULT_BOUNDARY_WEIGHT,
    hidden_layers: int = 4,
    hidden_width: int = 80,
) -> ProblemSpec:
    """
    Klein-Gordon benchmark.

    The spatial box is [0, 1]^2 and the time horizon defaults to [0, 10];
    boundary points are drawn once from the experiment seed's boundary stream.
    """
    if n_boundary < 1:
        raise ValueError("Klein-Gordon needs at least one boundary point")
    spec = ProblemSpec(
        name="kg2d",
        coordinates=("t", "x", "y"),
        domain_lo=(0.0, 0.0, 0.0),
        domain_hi=(float(t_max), 1.0, 1.0),
        fields=("u",),
        networks={
            "u": NetworkConfig(
                input_dim=3, output_dim=1, hidden_layers=hidden_layers, hidden_width=hidden_width
            )
        },
        hard_constraint=kg_constraint,
        residual_operator=kg_residual,
        exact_solution=kg_exact,
        time_axis=T,
        options={"t_max": float(t_max)},
    )
    points = sample_uniform(spec, n_boundary, "boundary", make_generator(seed, "boundary"))
    boundary = FixedLoss(
        kind="boundary",
        field="u",
        points=points,
        targets=kg_exact_u(points),
        weight=float(boundary_weight),
    )
    return with_fixed_losses(spec, boundary)
