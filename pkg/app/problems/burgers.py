"""
Viscous Burgers equation with a shock forming at x = 0.

    u_t + u u_x = (0.01 / pi) u_xx,  x in [-1, 1], t in [0, 1]
    u(t, -1) = u(t, 1) = 0,  u(0, x) = -sin(pi x)

The reference solution comes from the Cole-Hopf integral representation,

    u(t, x) = -int sin(pi (x - c z)) F(x - c z) e^{-z^2} dz / int F(x - c z) e^{-z^2} dz,
    F(y) = exp(-cos(pi y) / (2 pi nu)),  c = 2 sqrt(nu t),

evaluated with Gauss-Hermite quadrature.
"""

import math
from functools import lru_cache

import numpy as np
import torch

from app.network import DTYPE, NetworkConfig
from app.problems.base import ProblemSpec

T, X = 0, 1
VISCOSITY = 0.01 / math.pi
DEFAULT_QUADRATURE_NODES = 200
CONSTRAINTS = ("printed", "symmetric")

# rows per quadrature batch; keeps the (rows x nodes) temporaries small
_CHUNK = 8192


@lru_cache(maxsize=8)
def _hermite_rule(nodes: int):
    return np.polynomial.hermite.hermgauss(nodes)


def burgers_reference(t, x, nodes: int = DEFAULT_QUADRATURE_NODES, nu: float = VISCOSITY):
    """
    Viscous Burgers solution for initial data -sin(pi x).

    Args:
        t: Time(s), broadcastable against x
        x: Position(s) in [-1, 1]
        nodes: Gauss-Hermite nodes (at least 100)
        nu: Viscosity

    Returns:
        float or numpy.ndarray: u(t, x) with the broadcast shape of the inputs
    """
    if nodes < 100:
        raise ValueError("Use at least 100 quadrature nodes")
    t, x = np.broadcast_arrays(np.asarray(t, dtype=np.float64), np.asarray(x, dtype=np.float64))
    shape = t.shape
    t = t.reshape(-1)
    x = x.reshape(-1)
    u = -np.sin(np.pi * x)

    z, w = _hermite_rule(nodes)
    later = np.flatnonzero(t > 0.0)
    for start in range(0, later.size, _CHUNK):
        rows = later[start:start + _CHUNK]
        c = 2.0 * np.sqrt(nu * t[rows])[:, None]
        y = x[rows][:, None] - c * z[None, :]
        exponent = -np.cos(np.pi * y) / (2.0 * np.pi * nu)
        # common factor cancels between numerator and denominator
        exponent -= exponent.max(axis=1, keepdims=True)
        kernel = w[None, :] * np.exp(exponent)
        u[rows] = -(kernel * np.sin(np.pi * y)).sum(axis=1) / kernel.sum(axis=1)

    u = u.reshape(shape)
    return float(u) if u.ndim == 0 else u


def burgers_exact(points: torch.Tensor) -> torch.Tensor:
    values = burgers_reference(points[:, T].detach().numpy(), points[:, X].detach().numpy())
    return torch.as_tensor(np.atleast_1d(values), dtype=DTYPE).unsqueeze(1)


def _printed_constraint(points, raw):
    t, x = points[:, T], points[:, X]
    return (t * (x - 1.0) ** 2 * raw["u"][:, 0] - torch.sin(math.pi * x)).unsqueeze(1)


def _symmetric_constraint(points, raw):
    t, x = points[:, T], points[:, X]
    return (t * (1.0 - x**2) * raw["u"][:, 0] - torch.sin(math.pi * x)).unsqueeze(1)


def burgers_residual(points, jet):
    u = jet.u()
    return jet.d(T) + u * jet.d(X) - VISCOSITY * jet.dd(X, X)


def burgers1d(
    constraint: str = "printed",
    hidden_layers: int = 7,
    hidden_width: int = 20,
) -> ProblemSpec:
    """
    Burgers benchmark.

    ``constraint="printed"`` uses t (x - 1)^2 u_NN - sin(pi x), which pins
    u(t, 1) but not u(t, -1); ``"symmetric"`` uses t (1 - x^2) u_NN - sin(pi x).
    """
    if constraint not in CONSTRAINTS:
        raise ValueError(f"Unknown Burgers constraint '{constraint}', expected one of {CONSTRAINTS}")
    return ProblemSpec(
        name="burgers1d",
        coordinates=("t", "x"),
        domain_lo=(0.0, -1.0),
        domain_hi=(1.0, 1.0),
        fields=("u",),
        networks={
            "u": NetworkConfig(
                input_dim=2, output_dim=1, hidden_layers=hidden_layers, hidden_width=hidden_width
            )
        },
        hard_constraint=_printed_constraint if constraint == "printed" else _symmetric_constraint,
        residual_operator=burgers_residual,
        exact_solution=burgers_exact,
        time_axis=T,
        options={"constraint": constraint},
    )
