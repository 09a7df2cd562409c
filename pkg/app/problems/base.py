"""
Problem definitions shared by all benchmarks: box geometry, sampling, the
ProblemSpec record and the fixed (boundary / initial / observation) losses.
"""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Mapping, Optional, Union

import pandas as pd
import torch
from loguru import logger

from app.exceptions import SamplingError
from app.network import DTYPE, InputJet, NetworkConfig, as_points, forward, function_jet

Region = Literal["interior", "boundary", "initial"]
FixedLossKind = Literal["boundary", "initial", "observation"]


@dataclass(frozen=True)
class FixedLoss:
    """A mean-squared penalty of one predicted field against fixed targets."""

    kind: FixedLossKind
    field: str
    points: torch.Tensor
    targets: torch.Tensor
    weight: float

    def __post_init__(self):
        if self.points.shape[0] != self.targets.shape[0]:
            raise ValueError(f"{self.kind} loss has mismatched points and targets")


@dataclass(frozen=True)
class ObservationSet:
    """Noisy measurements of the solution used by inverse problems."""

    points: torch.Tensor
    values: torch.Tensor
    noise_variance: float

    def __post_init__(self):
        if self.points.shape[0] != self.values.shape[0]:
            raise ValueError("Observation points and values differ in length")
        if not torch.isfinite(self.values).all():
            raise ValueError("Observation values must be finite")


@dataclass(frozen=True)
class ProblemSpec:
    """
    A PDE benchmark described as data.

    ``hard_constraint(x, raw)`` turns raw network outputs (name -> (B, 1)) into
    the constrained prediction of every field, shape (B, len(fields)).
    ``residual_operator(x, jet)`` maps the jet of that prediction to the signed
    PDE residual, shape (B,).
    """

    name: str
    coordinates: tuple
    domain_lo: tuple
    domain_hi: tuple
    fields: tuple
    networks: Mapping[str, NetworkConfig]
    hard_constraint: Callable
    residual_operator: Callable
    exact_solution: Optional[Callable] = None
    fixed_losses: tuple = ()
    time_axis: Optional[int] = 0
    options: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.domain_lo) != len(self.coordinates) or len(self.domain_hi) != len(self.coordinates):
            raise ValueError(f"{self.name}: domain bounds do not match the coordinates")
        if any(lo >= hi for lo, hi in zip(self.domain_lo, self.domain_hi)):
            raise ValueError(f"{self.name}: domain_lo must be below domain_hi componentwise")

    @property
    def input_dim(self) -> int:
        return len(self.coordinates)

    @property
    def regions(self) -> tuple:
        if self.time_axis is None:
            return ("interior", "boundary")
        return ("interior", "boundary", "initial")

    def field_index(self, name: str) -> int:
        return self.fields.index(name)

    def lo(self) -> torch.Tensor:
        return torch.tensor(self.domain_lo, dtype=DTYPE)

    def hi(self) -> torch.Tensor:
        return torch.tensor(self.domain_hi, dtype=DTYPE)

    def contains(self, points: torch.Tensor) -> torch.Tensor:
        return ((points >= self.lo()) & (points <= self.hi())).all(dim=-1)

    def predict(self, params: Mapping[str, torch.Tensor], points) -> torch.Tensor:
        """Hard-constrained prediction of every field at a batch of points."""
        x = as_points(points, self.input_dim)
        raw = {
            name: forward(params[name], config, x)
            for name, config in self.networks.items()
        }
        return self.hard_constraint(x, raw)

    def prediction_jet(self, params, points, create_graph: bool = False) -> InputJet:
        return function_jet(lambda x: self.predict(params, x), points, create_graph)

    def residuals(self, params, points, create_graph: bool = False):
        """Signed residuals at ``points`` and the jet they were computed from."""
        jet = self.prediction_jet(params, points, create_graph)
        return self.residual_operator(jet.points, jet), jet

    def exact_jet(self, points) -> InputJet:
        """Jet of the closed-form solution, for residual sanity checks."""
        if self.exact_solution is None:
            raise ValueError(f"{self.name} has no exact solution")
        return function_jet(self.exact_solution, points)

    def fixed_loss(self, params) -> torch.Tensor:
        """Sum of weighted fixed losses (zero when all conditions are hard)."""
        total = torch.zeros((), dtype=DTYPE)
        for term in self.fixed_losses:
            pred = self.predict(params, term.points)[:, self.field_index(term.field)]
            total = total + term.weight * torch.mean((pred - term.targets) ** 2)
        return total


def _generator(seed: Union[int, torch.Generator]) -> torch.Generator:
    if isinstance(seed, torch.Generator):
        return seed
    return torch.Generator().manual_seed(int(seed))


def sample_uniform(
    spec: ProblemSpec,
    n: int,
    region: Region,
    seed: Union[int, torch.Generator],
) -> torch.Tensor:
    """
    Draw i.i.d. uniform points from a region of the problem's box.

    Args:
        spec: Problem whose domain is sampled
        n: Number of points (at least 1)
        region: interior, boundary (spatial faces for all times) or initial (t = t0)
        seed: Seed or generator; equal seeds give equal point sets

    Returns:
        torch.Tensor: (n, input_dim) float64 points
    """
    if n < 1:
        raise ValueError("Number of points must be at least 1")
    if region not in spec.regions:
        raise SamplingError(f"Region '{region}' is not defined for {spec.name}")

    generator = _generator(seed)
    lo, hi = spec.lo(), spec.hi()
    points = lo + (hi - lo) * torch.rand((n, spec.input_dim), generator=generator, dtype=DTYPE)

    if region == "initial":
        points[:, spec.time_axis] = lo[spec.time_axis]
    elif region == "boundary":
        spatial = [i for i in range(spec.input_dim) if i != spec.time_axis]
        if not spatial:
            raise SamplingError(f"{spec.name} has no spatial boundary")
        # faces are chosen with probability proportional to their measure
        widths = hi - lo
        faces = []
        areas = []
        for axis in spatial:
            others = [widths[i] for i in range(spec.input_dim) if i != axis]
            area = float(torch.stack(others).prod()) if others else 1.0
            faces.extend([(axis, lo[axis]), (axis, hi[axis])])
            areas.extend([area, area])
        probs = torch.tensor(areas, dtype=DTYPE)
        choice = torch.multinomial(probs / probs.sum(), n, replacement=True, generator=generator)
        for index, (axis, value) in enumerate(faces):
            points[choice == index, axis] = value
    return points


def grid_points(spec: ProblemSpec, counts) -> torch.Tensor:
    """
    Tensor-product grid over the domain box.

    ``counts`` gives the number of nodes per coordinate in the problem's
    coordinate order; a single count is used for every axis.
    """
    counts = list(counts)
    if len(counts) == 1:
        counts = counts * spec.input_dim
    if len(counts) != spec.input_dim:
        raise ValueError(f"{spec.name} needs {spec.input_dim} grid counts, got {len(counts)}")
    if any(c < 1 for c in counts):
        raise ValueError("Grid counts must be positive")
    axes = [
        torch.linspace(lo, hi, count, dtype=DTYPE) if count > 1 else torch.tensor([lo], dtype=DTYPE)
        for lo, hi, count in zip(spec.domain_lo, spec.domain_hi, counts)
    ]
    mesh = torch.meshgrid(*axes, indexing="ij")
    return torch.stack([m.reshape(-1) for m in mesh], dim=1)


def export_reference_grid(spec: ProblemSpec, counts, path) -> Path:
    """Write the exact/reference fields on a grid as CSV (coordinates..., fields...)."""
    if spec.exact_solution is None:
        raise ValueError(f"{spec.name} has no reference solution")
    points = grid_points(spec, counts)
    values = spec.exact_solution(points)
    frame = pd.DataFrame(points.numpy(), columns=list(spec.coordinates))
    for index, name in enumerate(spec.fields):
        frame[name] = values[:, index].numpy()
    path = Path(path)
    frame.to_csv(path, index=False)
    logger.info(f"Reference grid for {spec.name} written to {path} ({len(frame)} rows)")
    return path


def with_fixed_losses(spec: ProblemSpec, *terms: FixedLoss, **changes) -> ProblemSpec:
    """Copy of ``spec`` with extra fixed losses and field changes."""
    return dataclasses.replace(spec, fixed_losses=spec.fixed_losses + tuple(terms), **changes)
