"""
Neighborhood resampling of collocation points.

Every K iterations each point is replaced by the candidate with the largest
absolute residual among itself and the neighbors drawn for smoothing in the
same iteration. Under cwp the neighborhood follows the point; under cwp_fix
it stays at the original location.
"""

from dataclasses import dataclass
from pathlib import Path

import pandas as pd
import torch
from loguru import logger

from app.exceptions import StaleDataError
from app.network import DTYPE
from app.weighting import RESAMPLING_SCHEMES, SmoothedResiduals


@dataclass(frozen=True)
class CollocationSet:
    """Current collocation points and the centers of their neighborhoods."""

    points: torch.Tensor
    centers: torch.Tensor
    last_resample_iter: int = 0

    def __post_init__(self):
        if self.points.shape != self.centers.shape:
            raise ValueError("Collocation points and centers differ in shape")

    @classmethod
    def from_points(cls, points: torch.Tensor) -> "CollocationSet":
        points = torch.as_tensor(points, dtype=DTYPE).detach()
        return cls(points=points, centers=points.clone(), last_resample_iter=0)

    def __len__(self):
        return self.points.shape[0]


def should_resample(iteration: int, every: int, scheme: str) -> bool:
    """True on multiples of ``every`` after the start, for resampling schemes only."""
    if every < 1:
        raise ValueError("Resampling interval must be at least 1")
    return scheme in RESAMPLING_SCHEMES and iteration > 0 and iteration % every == 0


def resample(
    collocation: CollocationSet,
    smoothed: SmoothedResiduals,
    scheme: str,
    iteration: int,
) -> CollocationSet:
    """
    Move every point to its highest-residual candidate.

    Candidates are the point itself followed by its drawn neighbors. Ties keep
    the point (first maximal index). No residuals are evaluated here.

    Args:
        collocation: Set being updated
        smoothed: Smoothing data of this iteration
        scheme: cwp (re-center) or cwp_fix (keep centers)
        iteration: Current training iteration

    Returns:
        CollocationSet: Updated set; weights stay index-aligned with the points
    """
    if scheme not in RESAMPLING_SCHEMES:
        raise ValueError(f"Scheme '{scheme}' does not resample")
    if smoothed.iteration != iteration:
        raise StaleDataError(
            f"Smoothing data from iteration {smoothed.iteration} used at iteration {iteration}"
        )
    if smoothed.center_points.shape != collocation.points.shape or not torch.equal(
        smoothed.center_points, collocation.points
    ):
        raise StaleDataError("Smoothing data was computed for a different collocation set")

    candidates = torch.cat([collocation.points.unsqueeze(1), smoothed.neighbor_points], dim=1)
    scores = torch.cat(
        [smoothed.center_residuals.unsqueeze(1), smoothed.neighbor_residuals], dim=1
    )
    choice = torch.argmax(scores, dim=1)
    points = candidates[torch.arange(len(collocation)), choice]

    moved = int((choice > 0).sum())
    logger.info(f"Resampled collocation set at iteration {iteration}: {moved}/{len(collocation)} points moved")

    centers = points.clone() if scheme == "cwp" else collocation.centers
    return CollocationSet(points=points, centers=centers, last_resample_iter=iteration)


def export_collocation(path, iteration: int, points: torch.Tensor, coordinates, append: bool = False) -> Path:
    """Write a collocation snapshot as CSV: iter, index, coordinates..."""
    frame = pd.DataFrame(points.detach().numpy(), columns=list(coordinates))
    frame.insert(0, "index", range(len(frame)))
    frame.insert(0, "iter", iteration)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_header = not (append and path.exists())
    frame.to_csv(path, mode="a" if append else "w", header=write_header, index=False)
    return path
