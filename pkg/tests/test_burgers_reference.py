#!/usr/bin/env python3
"""
Self-consistency checks of the Cole-Hopf quadrature reference for Burgers.
"""
import sys
import os

# Add parent directory to path for imports
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest
import torch

from app.network import DTYPE
from app.problems.burgers import VISCOSITY, burgers_exact, burgers_reference


def test_initial_condition():
    x = np.linspace(-1.0, 1.0, 201)
    u = burgers_reference(0.0, x)
    assert np.max(np.abs(u + np.sin(np.pi * x))) < 1e-8
    assert burgers_reference(0.0, 0.5) == pytest.approx(-1.0, abs=1e-12)


def test_scalar_input_returns_float():
    assert isinstance(burgers_reference(0.5, 0.25), float)


def test_zero_at_origin_for_all_times():
    t = np.linspace(0.0, 1.0, 21)
    assert np.max(np.abs(burgers_reference(t, 0.0))) < 1e-8


def test_odd_symmetry():
    rng = np.random.default_rng(0)
    t = rng.uniform(0.0, 1.0, 500)
    x = rng.uniform(-1.0, 1.0, 500)
    assert np.max(np.abs(burgers_reference(t, -x) + burgers_reference(t, x))) < 1e-8


def test_requires_enough_nodes():
    with pytest.raises(ValueError):
        burgers_reference(0.5, 0.1, nodes=50)


def test_finite_difference_residual_away_from_shock():
    """The oracle satisfies the PDE to 1e-3 on a fine stencil outside |x| < 0.05."""
    print("🌊 Burgers reference finite-difference residual")
    dx, dt = 1e-3, 1e-4
    x = np.concatenate([np.linspace(-0.95, -0.05, 91), np.linspace(0.05, 0.95, 91)])
    worst = 0.0
    for t in (0.4, 0.6, 0.9):
        u = burgers_reference(t, x)
        u_t = (burgers_reference(t + dt, x) - burgers_reference(t - dt, x)) / (2 * dt)
        right = burgers_reference(t, x + dx)
        left = burgers_reference(t, x - dx)
        u_x = (right - left) / (2 * dx)
        u_xx = (right - 2 * u + left) / dx**2
        residual = u_t + u * u_x - VISCOSITY * u_xx
        worst = max(worst, float(np.max(np.abs(residual))))
    print(f"   max residual {worst:.3e}")
    assert worst < 1e-3


def test_exact_field_matches_reference():
    points = torch.tensor([[0.0, 0.5], [0.4, -0.3]], dtype=DTYPE)
    values = burgers_exact(points)
    assert values.shape == (2, 1)
    assert float(values[0, 0]) == pytest.approx(-1.0, abs=1e-12)
    assert float(values[1, 0]) == pytest.approx(burgers_reference(0.4, -0.3), abs=1e-15)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
