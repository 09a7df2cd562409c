#!/usr/bin/env python3
"""
Tests for the benchmark problems: residual operators against exact
solutions, hard constraints, samplers and the registry.
"""
import sys
import os

# Add parent directory to path for imports
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import math

import pandas as pd
import pytest
import torch

from app.exceptions import SamplingError, UnknownNameError
from app.network import DTYPE, param_count
from app.problems import (
    PROBLEMS,
    build_problem,
    export_reference_grid,
    grid_points,
    sample_uniform,
)
from app.problems.burgers import burgers1d
from app.problems.heat import heat1d, heat_constraint, heat_residual
from app.problems.klein_gordon import kg_constraint, kg_residual, klein_gordon2d
from app.problems.poisson import (
    edge_points,
    poisson_exact_a,
    poisson_exact_u,
    poisson_inverse2d,
    poisson_residual,
)


def zero_params(problem):
    return {name: torch.zeros(param_count(c), dtype=DTYPE) for name, c in problem.networks.items()}


def test_registry_names():
    assert set(PROBLEMS) == {"heat1d", "kg2d", "burgers1d", "poisson-inv"}
    assert build_problem("heat1d").name == "heat1d"
    with pytest.raises(UnknownNameError):
        build_problem("navier-stokes")


def test_heat_residual_vanishes_on_exact_solution():
    print("🔥 Heat residual on the exact solution")
    problem = heat1d()
    points = sample_uniform(problem, 1000, "interior", 0)
    jet = problem.exact_jet(points)
    residual = heat_residual(jet.points, jet)
    assert residual.abs().max() < 1e-10


def test_klein_gordon_residual_vanishes_on_exact_solution():
    problem = klein_gordon2d(n_boundary=10)
    points = sample_uniform(problem, 1000, "interior", 1)
    jet = problem.exact_jet(points)
    assert kg_residual(jet.points, jet).abs().max() < 1e-10


def test_poisson_residual_vanishes_on_exact_fields():
    """The closed-form source matches -div(a grad u) for the exact u and a."""
    problem = poisson_inverse2d()
    points = sample_uniform(problem, 1000, "interior", 2)
    jet = problem.exact_jet(points)
    assert poisson_residual(jet.points, jet).abs().max() < 1e-8


def test_poisson_exact_values():
    assert abs(float(poisson_exact_a(torch.tensor([[0.0, 0.0]], dtype=DTYPE))) - 1.0 / 3.0) < 1e-15
    assert abs(float(poisson_exact_u(torch.tensor([[0.5, 0.5]], dtype=DTYPE))) - 1.0) < 1e-15


def test_heat_hard_constraint():
    generator = torch.Generator().manual_seed(0)
    for _ in range(100):
        raw = {"u": torch.randn(5, 1, generator=generator, dtype=DTYPE) * 10}
        x = torch.rand(5, generator=generator, dtype=DTYPE)
        t = torch.rand(5, generator=generator, dtype=DTYPE)

        initial = heat_constraint(torch.stack([torch.zeros(5, dtype=DTYPE), x], dim=1), raw)
        assert torch.allclose(initial[:, 0], torch.sin(20 * math.pi * x), rtol=0, atol=1e-12)
        for edge in (0.0, 1.0):
            side = heat_constraint(torch.stack([t, torch.full((5,), edge, dtype=DTYPE)], dim=1), raw)
            assert side.abs().max() < 1e-12


def test_klein_gordon_hard_constraint():
    generator = torch.Generator().manual_seed(1)
    for _ in range(100):
        raw = {"u": torch.randn(4, 1, generator=generator, dtype=DTYPE) * 10}
        xy = torch.rand(4, 2, generator=generator, dtype=DTYPE)
        points = torch.cat([torch.zeros(4, 1, dtype=DTYPE), xy], dim=1)
        assert torch.equal(kg_constraint(points, raw)[:, 0], xy[:, 0] + xy[:, 1])


def test_burgers_hard_constraints():
    generator = torch.Generator().manual_seed(2)
    printed = burgers1d("printed")
    symmetric = burgers1d("symmetric")
    for _ in range(100):
        raw = {"u": torch.randn(4, 1, generator=generator, dtype=DTYPE) * 10}
        x = 2 * torch.rand(4, generator=generator, dtype=DTYPE) - 1
        t = torch.rand(4, generator=generator, dtype=DTYPE)
        zeros = torch.zeros(4, dtype=DTYPE)
        ones = torch.ones(4, dtype=DTYPE)
        for problem in (printed, symmetric):
            initial = problem.hard_constraint(torch.stack([zeros, x], dim=1), raw)
            assert torch.allclose(initial[:, 0], -torch.sin(math.pi * x), rtol=0, atol=1e-12)
            right = problem.hard_constraint(torch.stack([t, ones], dim=1), raw)
            assert right.abs().max() < 1e-12
        left = symmetric.hard_constraint(torch.stack([t, -ones], dim=1), raw)
        assert left.abs().max() < 1e-12


def test_burgers_rejects_unknown_constraint():
    with pytest.raises(ValueError):
        burgers1d("mirrored")


def test_sample_uniform_interior_in_box_and_deterministic():
    problem = heat1d()
    points = sample_uniform(problem, 1000, "interior", 42)
    assert points.shape == (1000, 2)
    assert bool(problem.contains(points).all())
    assert torch.equal(points, sample_uniform(problem, 1000, "interior", 42))


def test_sample_uniform_mean_near_center():
    problem = heat1d()
    n = 100_000
    points = sample_uniform(problem, n, "interior", 7)
    sigma = math.sqrt(1.0 / 12.0) / math.sqrt(n)
    assert (points.mean(dim=0) - 0.5).abs().max() < 4 * sigma


def test_sample_uniform_boundary_and_initial():
    heat = heat1d()
    boundary = sample_uniform(heat, 500, "boundary", 3)
    on_edge = (boundary[:, 1] == 0.0) | (boundary[:, 1] == 1.0)
    assert bool(on_edge.all())
    assert bool(((boundary[:, 1] == 0.0)).any()) and bool(((boundary[:, 1] == 1.0)).any())

    initial = sample_uniform(heat, 50, "initial", 3)
    assert torch.count_nonzero(initial[:, 0]) == 0

    kg = klein_gordon2d(n_boundary=10)
    faces = sample_uniform(kg, 500, "boundary", 4)
    spatial = faces[:, 1:]
    assert bool(((spatial == 0.0) | (spatial == 1.0)).any(dim=1).all())
    assert float(faces[:, 0].max()) > 1.0


def test_sample_uniform_rejects_bad_requests():
    poisson = poisson_inverse2d()
    with pytest.raises(SamplingError):
        sample_uniform(poisson, 10, "initial", 0)
    with pytest.raises(ValueError):
        sample_uniform(heat1d(), 0, "interior", 0)


def test_klein_gordon_boundary_loss():
    problem = klein_gordon2d(n_boundary=300, seed=5)
    (term,) = problem.fixed_losses
    assert term.kind == "boundary"
    assert term.weight == 100.0
    assert term.points.shape == (300, 3)
    assert problem.domain_hi == (10.0, 1.0, 1.0)
    again = klein_gordon2d(n_boundary=300, seed=5)
    assert torch.equal(term.points, again.fixed_losses[0].points)


def test_poisson_setup():
    """Two networks, frozen noisy observations and 10 boundary points per edge."""
    problem = poisson_inverse2d(seed=3)
    assert problem.fields == ("u", "a")
    assert set(problem.networks) == {"u", "a"}
    assert problem.networks["u"].hidden_layers == 4
    assert problem.networks["u"].hidden_width == 50
    assert problem.time_axis is None

    observation, boundary = problem.fixed_losses
    assert observation.kind == "observation" and observation.field == "u"
    assert observation.points.shape == (60, 2)
    assert observation.weight == 10.0
    assert boundary.kind == "boundary" and boundary.field == "a"
    assert boundary.points.shape == (40, 2)
    assert boundary.weight == 10.0

    again = poisson_inverse2d(seed=3)
    assert torch.equal(observation.targets, again.fixed_losses[0].targets)
    noise = observation.targets - poisson_exact_u(observation.points)
    assert 0.0 < float(noise.var()) < 0.05

    clean = poisson_inverse2d(seed=3, noise_variance=0.0)
    assert torch.equal(clean.fixed_losses[0].targets, poisson_exact_u(clean.fixed_losses[0].points))


def test_poisson_edge_points_skip_corners():
    points = edge_points(10)
    assert points.shape == (40, 2)
    corners = ((points == 0.0) | (points == 1.0)).all(dim=1)
    assert not bool(corners.any())
    assert len({tuple(p) for p in points.tolist()}) == 40


def test_fixed_loss_is_zero_without_terms():
    problem = heat1d(hidden_layers=1, hidden_width=4)
    assert float(problem.fixed_loss(zero_params(problem))) == 0.0


def test_grid_points_and_reference_export(tmp_path):
    problem = heat1d()
    assert grid_points(problem, [2, 2]).shape == (4, 2)
    assert grid_points(problem, [3]).shape == (9, 2)
    with pytest.raises(ValueError):
        grid_points(problem, [2, 2, 2])

    path = export_reference_grid(problem, [2, 41], tmp_path / "heat.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["t", "x", "u"]
    assert len(frame) == 82
    row = frame[(frame.t == 0.0) & ((frame.x - 0.025).abs() < 1e-12)]
    assert abs(float(row.u.iloc[0]) - 1.0) < 1e-12


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
