"""
Evaluation metrics and run artifacts (history, timing, summary, index).
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional

import pandas as pd
import torch
from loguru import logger
from pydantic import BaseModel, Field

from app.config import EVAL_CHUNK_SIZE
from app.network import DTYPE
from app.problems.base import ProblemSpec, grid_points, sample_uniform
from app.utils import make_generator, utc_now_iso


@dataclass(frozen=True)
class TestSet:
    """Held-out points with noiseless reference values, one column per field."""

    points: torch.Tensor
    truth: torch.Tensor

    # not a pytest class
    __test__ = False

    def __post_init__(self):
        if self.points.shape[0] != self.truth.shape[0]:
            raise ValueError("Test points and truth differ in length")

    def __len__(self):
        return self.points.shape[0]


@dataclass
class TrainingRecord:
    iteration: int
    loss_total: float
    loss_residual: float
    loss_fixed: float
    rel_l2: float
    l_inf: float
    lr: float
    wall_ms: float = 0.0
    rel_l2_a: Optional[float] = None
    l_inf_a: Optional[float] = None


@dataclass
class TimingRecord:
    """Mean per-iteration cost over the window ending at ``iteration``."""

    iteration: int
    wall_ms: float
    forward_ms: float
    step_ms: float


def rel_l2(pred, truth) -> float:
    """||pred - truth||_2 / ||truth||_2."""
    pred = torch.as_tensor(pred, dtype=DTYPE).reshape(-1)
    truth = torch.as_tensor(truth, dtype=DTYPE).reshape(-1)
    if pred.numel() == 0 or pred.shape != truth.shape:
        raise ValueError("rel_l2 needs two non-empty vectors of equal length")
    norm = torch.linalg.vector_norm(truth)
    if norm == 0:
        raise ValueError("rel_l2 is undefined for a zero reference vector")
    return float(torch.linalg.vector_norm(pred - truth) / norm)


def l_inf(pred, truth) -> float:
    """max |pred - truth|."""
    pred = torch.as_tensor(pred, dtype=DTYPE).reshape(-1)
    truth = torch.as_tensor(truth, dtype=DTYPE).reshape(-1)
    if pred.shape != truth.shape:
        raise ValueError("l_inf needs two vectors of equal length")
    if pred.numel() == 0:
        return 0.0
    return float((pred - truth).abs().max())


def build_test_set(problem: ProblemSpec, n: int, seed: int) -> TestSet:
    """Uniform interior test points from the seed's dedicated test stream."""
    if problem.exact_solution is None:
        raise ValueError(f"{problem.name} has no reference solution to test against")
    points = sample_uniform(problem, n, "interior", make_generator(seed, "test"))
    truth = torch.cat(
        [
            problem.exact_solution(points[start:start + EVAL_CHUNK_SIZE])
            for start in range(0, n, EVAL_CHUNK_SIZE)
        ]
    )
    return TestSet(points=points, truth=truth.detach())


def predict(problem: ProblemSpec, params, points: torch.Tensor) -> torch.Tensor:
    """Hard-constrained prediction in chunks, without autograd."""
    with torch.no_grad():
        return torch.cat(
            [
                problem.predict(params, points[start:start + EVAL_CHUNK_SIZE])
                for start in range(0, points.shape[0], EVAL_CHUNK_SIZE)
            ]
        )


def evaluate(problem: ProblemSpec, params, test: TestSet) -> Dict[str, tuple]:
    """
    Relative L2 and L-infinity error of every output field.

    Returns:
        dict: field name -> (rel_l2, l_inf)
    """
    prediction = predict(problem, params, test.points)
    return {
        name: (
            rel_l2(prediction[:, index], test.truth[:, index]),
            l_inf(prediction[:, index], test.truth[:, index]),
        )
        for index, name in enumerate(problem.fields)
    }


def export_field_grid(problem: ProblemSpec, params, counts, path) -> Path:
    """
    Write prediction, truth and absolute error on a tensor grid.

    Columns are the coordinates followed by ``<field>_pred``, ``<field>_true``
    and ``<field>_abs_err`` per field (truth columns only when a reference
    solution exists).
    """
    points = grid_points(problem, counts)
    prediction = predict(problem, params, points)
    truth = None if problem.exact_solution is None else problem.exact_solution(points).detach()
    frame = pd.DataFrame(points.numpy(), columns=list(problem.coordinates))
    for index, name in enumerate(problem.fields):
        frame[f"{name}_pred"] = prediction[:, index].numpy()
        if truth is not None:
            frame[f"{name}_true"] = truth[:, index].numpy()
            frame[f"{name}_abs_err"] = (prediction[:, index] - truth[:, index]).abs().numpy()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.info(f"Field grid for {problem.name} written to {path} ({len(frame)} rows)")
    return path


def history_frame(records: List[TrainingRecord]) -> pd.DataFrame:
    frame = pd.DataFrame([asdict(r) for r in records], columns=list(TrainingRecord.__dataclass_fields__))
    frame = frame.drop(columns=["wall_ms"])
    if frame[["rel_l2_a", "l_inf_a"]].isna().all().all():
        frame = frame.drop(columns=["rel_l2_a", "l_inf_a"])
    return frame


def write_history(records: List[TrainingRecord], path) -> Path:
    """history.csv, one row per checkpoint; wall time is kept out so reruns match byte for byte."""
    path = Path(path)
    history_frame(records).to_csv(path, index=False)
    return path


def write_timing(records: List[TimingRecord], path) -> Path:
    path = Path(path)
    pd.DataFrame([asdict(r) for r in records], columns=list(TimingRecord.__dataclass_fields__)).to_csv(
        path, index=False
    )
    return path


class RunSummary(BaseModel):
    """Final state of one seed's run, dumped as summary.json."""

    problem: str
    scheme: str
    seed: int
    iterations: int
    final: Dict[str, Dict[str, float]]
    finite: bool
    diverged: bool = False
    config: Dict[str, object] = Field(default_factory=dict)
    problem_options: Dict[str, object] = Field(default_factory=dict)
    finished_at: str = Field(default_factory=utc_now_iso)


class RunIndex(BaseModel):
    """Cross-seed index: per-seed final metrics and the best (minimum) of each."""

    name: str
    runs: Dict[str, Dict[str, float]]
    best: Dict[str, float]
    best_seed: Dict[str, int]


def write_summary(summary: RunSummary, path) -> Path:
    path = Path(path)
    path.write_text(summary.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def flatten_metrics(final: Mapping[str, Mapping[str, float]]) -> Dict[str, float]:
    """{"u": {"rel_l2": ..}} -> {"rel_l2_u": ..}"""
    return {f"{metric}_{field}": value for field, values in final.items() for metric, value in values.items()}


def write_index(name: str, summaries: List[RunSummary], path) -> RunIndex:
    """
    Write index.json over all seeds of an experiment.

    Only finished runs with finite metrics compete for the best value.
    """
    runs = {str(s.seed): flatten_metrics(s.final) for s in summaries}
    best = {}
    best_seed = {}
    for summary in summaries:
        if not summary.finite:
            continue
        for key, value in flatten_metrics(summary.final).items():
            if key not in best or value < best[key]:
                best[key] = value
                best_seed[key] = summary.seed
    index = RunIndex(name=name, runs=runs, best=best, best_seed=best_seed)
    Path(path).write_text(json.dumps(index.model_dump(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return index
