"""
Benchmark problem registry.
"""
from app.exceptions import UnknownNameError
from app.problems.base import (
    FixedLoss,
    ObservationSet,
    ProblemSpec,
    export_reference_grid,
    grid_points,
    sample_uniform,
)
from app.problems.burgers import burgers1d, burgers_reference
from app.problems.heat import heat1d
from app.problems.klein_gordon import klein_gordon2d
from app.problems.poisson import poisson_inverse2d

PROBLEMS = {
    "heat1d": heat1d,
    "kg2d": klein_gordon2d,
    "burgers1d": burgers1d,
    "poisson-inv": poisson_inverse2d,
}


def build_problem(name: str, **options) -> ProblemSpec:
    """Construct a registered problem with its construction options."""
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise UnknownNameError(
            f"Unknown problem '{name}', expected one of {sorted(PROBLEMS)}"
        ) from None
    return factory(**options)


__all__ = [
    "PROBLEMS",
    "FixedLoss",
    "ObservationSet",
    "ProblemSpec",
    "build_problem",
    "burgers1d",
    "burgers_reference",
    "export_reference_grid",
    "grid_points",
    "heat1d",
    "klein_gordon2d",
    "poisson_inverse2d",
    "sample_uniform",
]
