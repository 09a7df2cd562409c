#!/usr/bin/env python3
"""
Tests for neighborhood smoothing and the weight update rules.
"""
import sys
import os

# Add parent directory to path for imports
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pandas as pd
import pytest
import torch
from pydantic import ValidationError

from app.exceptions import SamplingError
from app.network import DTYPE
from app.weighting import (
    SchemeConfig,
    WeightState,
    export_weights,
    initial_lambdas,
    residual_scale,
    smooth_residuals,
    update_cw,
    update_rba,
    update_sa,
    update_weights,
    weighted_residual_loss,
)

LO = torch.tensor([0.0, 0.0], dtype=DTYPE)
HI = torch.tensor([1.0, 1.0], dtype=DTYPE)


def cw_state(lambdas, eta=0.5):
    return WeightState(lambdas=torch.as_tensor(lambdas, dtype=DTYPE), scheme="cw", eta_lambda=eta)


def test_initial_lambdas_per_scheme():
    assert torch.equal(initial_lambdas("cwp", 4), torch.full((4,), 0.25, dtype=DTYPE))
    assert torch.equal(initial_lambdas("rba", 3), torch.zeros(3, dtype=DTYPE))
    assert torch.equal(initial_lambdas("sa", 2), torch.ones(2, dtype=DTYPE))
    assert torch.equal(initial_lambdas("uniform", 2), torch.ones(2, dtype=DTYPE))
    assert residual_scale("cw", 10) == 1.0
    assert residual_scale("uniform", 10) == 0.1


def test_scheme_config_defaults_and_validation():
    config = SchemeConfig(scheme="rba", n_f=10, eta_lambda=0.01)
    assert config.eta_star == 0.01
    assert config.neighbors == 4
    assert config.epsilon == 0.01
    with pytest.raises(ValidationError):
        SchemeConfig(scheme="cw", n_f=10, eta_lambda=-1.0)
    with pytest.raises(ValidationError):
        SchemeConfig(scheme="gradnorm", n_f=10)


def test_weight_state_rejects_bad_weights():
    with pytest.raises(ValueError):
        WeightState(lambdas=torch.tensor([0.5, -0.1], dtype=DTYPE), scheme="cw")
    with pytest.raises(ValueError):
        WeightState(lambdas=torch.tensor([float("nan")], dtype=DTYPE), scheme="sa")


def test_smoothing_constant_field():
    points = torch.rand(20, 2, dtype=DTYPE)
    smoothed = smooth_residuals(
        lambda x: torch.full((x.shape[0],), -2.5, dtype=DTYPE), points, 4, 0.01, LO, HI, 0
    )
    assert torch.allclose(smoothed.values, torch.full((20,), 2.5, dtype=DTYPE), rtol=0, atol=1e-15)
    assert smoothed.neighbor_points.shape == (20, 4, 2)
    assert smoothed.neighbor_residuals.shape == (20, 4)


def test_smoothing_without_neighbors_is_absolute_residual():
    points = torch.rand(10, 2, dtype=DTYPE)

    def residual(x):
        return x[:, 0] - x[:, 1]

    smoothed = smooth_residuals(residual, points, 0, 0.01, LO, HI, 0)
    assert torch.equal(smoothed.values, residual(points).abs())
    assert smoothed.neighbors == 0


def test_smoothing_hand_example():
    """Center residual 0 and four neighbor residuals of 5 average to 4."""
    center = torch.tensor([[0.5, 0.5]], dtype=DTYPE)

    def residual(x):
        return 5.0 * (x != center).any(dim=1).to(DTYPE)

    smoothed = smooth_residuals(residual, center, 4, 0.01, LO, HI, 3)
    assert float(smoothed.values[0]) == pytest.approx(4.0, abs=1e-15)


def test_neighbors_stay_in_ball_and_box():
    centers = torch.tensor([[0.001, 0.001], [0.5, 0.999], [0.3, 0.7]], dtype=DTYPE)
    smoothed = smooth_residuals(lambda x: x.sum(dim=1), centers, 50, 0.01, LO, HI, 11)
    neighbors = smoothed.neighbor_points
    distance = (neighbors - centers.unsqueeze(1)).norm(dim=2)
    assert bool((distance < 0.01).all())
    assert bool(((neighbors >= LO) & (neighbors <= HI)).all())


def test_smoothing_uses_given_centers():
    points = torch.tensor([[0.2, 0.2]], dtype=DTYPE)
    centers = torch.tensor([[0.6, 0.6]], dtype=DTYPE)
    smoothed = smooth_residuals(lambda x: x.sum(dim=1), points, 8, 0.01, LO, HI, 0, centers=centers)
    assert bool(((smoothed.neighbor_points - centers.unsqueeze(1)).norm(dim=2) < 0.01).all())
    assert torch.equal(smoothed.center_points, points)


def test_smoothing_is_deterministic_per_seed():
    points = torch.rand(30, 2, dtype=DTYPE)

    def residual(x):
        return torch.sin(5 * x[:, 0]) * x[:, 1]

    a = smooth_residuals(residual, points, 4, 0.05, LO, HI, 123)
    b = smooth_residuals(residual, points, 4, 0.05, LO, HI, 123)
    assert torch.equal(a.values, b.values)
    assert torch.equal(a.neighbor_points, b.neighbor_points)


def test_smoothing_converges_to_ball_average():
    """With many neighbors the average approaches the exact disk mean of x^2 + y."""
    center = torch.tensor([[0.5, 0.5]], dtype=DTYPE)
    eps = 0.01
    smoothed = smooth_residuals(lambda x: x[:, 0] ** 2 + x[:, 1], center, 10_000, eps, LO, HI, 5)
    exact = 0.5**2 + eps**2 / 4 + 0.5
    assert abs(float(smoothed.values[0]) - exact) / exact < 1e-2


def test_smoothing_gives_up_on_degenerate_box():
    flat_hi = torch.tensor([1.0, 0.0], dtype=DTYPE)
    points = torch.tensor([[0.5, 0.0]], dtype=DTYPE)
    with pytest.raises(SamplingError):
        smooth_residuals(lambda x: x[:, 0], points, 2, 0.01, LO, flat_hi, 0)


def test_update_cw_hand_example():
    state = update_cw(cw_state([0.5, 0.5], eta=0.5), torch.tensor([1.0, 3.0], dtype=DTYPE))
    assert torch.allclose(state.lambdas, torch.tensor([0.375, 0.625], dtype=DTYPE), rtol=0, atol=1e-15)


def test_update_cw_fixed_point():
    n = 8
    state = cw_state(torch.full((n,), 1.0 / n), eta=0.1)
    updated = update_cw(state, torch.full((n,), 3.0, dtype=DTYPE))
    assert torch.allclose(updated.lambdas, state.lambdas, rtol=0, atol=1e-15)


def test_update_cw_keeps_sum_one_over_many_steps():
    """10^5 random updates from uniform weights keep |sum - 1| < 1e-9."""
    print("⚖️  Sum-to-one drift over 100000 updates")
    n = 16
    generator = torch.Generator().manual_seed(0)
    signals = torch.rand((100_000, n), generator=generator, dtype=DTYPE) * 10.0
    state = cw_state(torch.full((n,), 1.0 / n), eta=0.3)
    for row in signals:
        state = update_cw(state, row)
    drift = abs(float(state.lambdas.sum()) - 1.0)
    print(f"   drift {drift:.2e}")
    assert drift < 1e-9


def test_update_cw_is_scale_invariant():
    generator = torch.Generator().manual_seed(1)
    smoothed = torch.rand(12, generator=generator, dtype=DTYPE)
    state = cw_state(torch.full((12,), 1.0 / 12), eta=0.2)
    base = update_cw(state, smoothed)
    for power in (-20, -3, 1, 7, 30):
        scaled = update_cw(state, smoothed * 2.0**power)
        assert torch.equal(base.lambdas, scaled.lambdas)


def test_update_cw_all_zero_is_noop():
    state = cw_state([0.25, 0.75])
    assert update_cw(state, torch.zeros(2, dtype=DTYPE)) is state


def test_update_cw_rejects_other_schemes():
    state = WeightState(lambdas=torch.ones(2, dtype=DTYPE), scheme="sa")
    with pytest.raises(ValueError):
        update_cw(state, torch.ones(2, dtype=DTYPE))


def test_update_rba_single_step():
    state = WeightState(lambdas=torch.zeros(3, dtype=DTYPE), scheme="rba", eta_lambda=0.01, eta_star=0.02)
    updated = update_rba(state, torch.tensor([1.0, -4.0, 2.0], dtype=DTYPE))
    assert float(updated.lambdas[1]) == pytest.approx(0.02, abs=1e-17)
    assert torch.allclose(updated.lambdas, torch.tensor([0.005, 0.02, 0.01], dtype=DTYPE), rtol=0, atol=1e-17)


def test_update_rba_bound_over_many_steps():
    """10^5 random updates keep every weight in (0, eta_star / eta_lambda]."""
    n = 8
    eta, eta_star = 0.01, 0.01
    generator = torch.Generator().manual_seed(2)
    residuals = torch.randn((100_000, n), generator=generator, dtype=DTYPE)
    state = WeightState(lambdas=torch.zeros(n, dtype=DTYPE), scheme="rba", eta_lambda=eta, eta_star=eta_star)
    bound = eta_star / eta + 1e-12
    for row in residuals:
        state = update_rba(state, row)
        assert float(state.lambdas.max()) <= bound
    assert float(state.lambdas.min()) > 0.0


def test_update_rba_converges_to_fixed_point():
    eta, eta_star = 0.01, 0.005
    r = torch.tensor([1.0, -2.0, 0.5, 4.0], dtype=DTYPE)
    state = WeightState(lambdas=torch.zeros(4, dtype=DTYPE), scheme="rba", eta_lambda=eta, eta_star=eta_star)
    for _ in range(5000):
        state = update_rba(state, r)
    expected = (eta_star / eta) * r.abs() / r.abs().max()
    assert torch.allclose(state.lambdas, expected, rtol=0, atol=1e-12)


def test_update_rba_all_zero_is_noop():
    state = WeightState(lambdas=torch.full((2,), 0.3, dtype=DTYPE), scheme="rba")
    assert update_rba(state, torch.zeros(2, dtype=DTYPE)) is state


def test_update_sa_ascent_step():
    state = WeightState(lambdas=torch.ones(3, dtype=DTYPE), scheme="sa", sa_lr=0.1)
    updated = update_sa(state, torch.tensor([2.0, 0.0, -1.0], dtype=DTYPE))
    assert float(updated.lambdas[0]) == pytest.approx(1.4, abs=1e-15)
    assert float(updated.lambdas[1]) == 1.0
    assert float(updated.lambdas[0]) > float(updated.lambdas[2]) > float(updated.lambdas[1])


def test_update_sa_zero_residuals_unchanged_and_floor():
    state = WeightState(lambdas=torch.tensor([0.0, 2.0], dtype=DTYPE), scheme="sa")
    updated = update_sa(state, torch.zeros(2, dtype=DTYPE))
    assert float(updated.lambdas[1]) == 2.0
    assert float(updated.lambdas[0]) == 1e-12


def test_updates_commute_with_permutation():
    generator = torch.Generator().manual_seed(4)
    n = 10
    perm = torch.randperm(n, generator=generator)
    inverse = torch.argsort(perm)
    residuals = torch.randn(n, generator=generator, dtype=DTYPE)
    cases = [
        (WeightState(lambdas=torch.rand(n, generator=generator, dtype=DTYPE), scheme="rba"), update_rba),
        (WeightState(lambdas=torch.rand(n, generator=generator, dtype=DTYPE), scheme="sa"), update_sa),
    ]
    for state, rule in cases:
        direct = rule(state, residuals)
        permuted = rule(state.with_lambdas(state.lambdas[perm]), residuals[perm])
        assert torch.equal(direct.lambdas, permuted.lambdas[inverse])

    state = cw_state(torch.full((n,), 1.0 / n), eta=0.1)
    smoothed = residuals.abs()
    direct = update_cw(state, smoothed)
    permuted = update_cw(state.with_lambdas(state.lambdas[perm]), smoothed[perm])
    assert torch.allclose(direct.lambdas, permuted.lambdas[inverse], rtol=1e-14, atol=0)


def test_update_weights_dispatch():
    residuals = torch.tensor([1.0, 2.0], dtype=DTYPE)
    uniform = WeightState(lambdas=torch.ones(2, dtype=DTYPE), scheme="uniform")
    assert update_weights(uniform, residuals) is uniform
    with pytest.raises(ValueError):
        update_weights(cw_state([0.5, 0.5]), residuals)


def test_weighted_residual_loss_examples():
    assert float(weighted_residual_loss(torch.tensor([1.0, 0.0], dtype=DTYPE), torch.tensor([3.0, 100.0], dtype=DTYPE))) == 9.0
    assert float(weighted_residual_loss(torch.tensor([0.25, 0.75], dtype=DTYPE), torch.tensor([2.0, 2.0], dtype=DTYPE))) == 4.0
    with pytest.raises(ValueError):
        weighted_residual_loss(torch.ones(2, dtype=DTYPE), torch.ones(3, dtype=DTYPE))


def test_weighted_residual_loss_treats_weights_as_constants():
    lambdas = torch.tensor([0.3, 0.7], dtype=DTYPE, requires_grad=True)
    residuals = torch.tensor([1.0, -2.0], dtype=DTYPE, requires_grad=True)
    weighted_residual_loss(lambdas, residuals).backward()
    assert lambdas.grad is None
    assert torch.allclose(residuals.grad, torch.tensor([0.6, -2.8], dtype=DTYPE), rtol=0, atol=1e-15)


def test_export_weights(tmp_path):
    points = torch.tensor([[0.1, 0.2], [0.3, 0.4]], dtype=DTYPE)
    path = export_weights(tmp_path / "w" / "weights.csv", points, torch.tensor([0.25, 0.75], dtype=DTYPE), ("t", "x"))
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["index", "t", "x", "lambda"]
    assert frame["lambda"].tolist() == [0.25, 0.75]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
