"""
Alternating descent/ascent training loop.

Each iteration evaluates the residuals at the current parameters, updates the
point weights from them (ascent, weights held constant in the primal loss),
assembles the loss, records metrics on the checkpoint cadence, takes one Adam
step on all networks and finally resamples the collocation set when due.
"""

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional

import numpy as np
import torch
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from app.config import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    DEFAULT_CHECKPOINT_EVERY,
    DEFAULT_RESAMPLE_EVERY,
    DEFAULT_TEST_POINTS,
)
from app.exceptions import NonFiniteError, TrainingDiverged
from app.metrics import (
    TestSet,
    TimingRecord,
    TrainingRecord,
    build_test_set,
    evaluate,
)
from app.network import (
    DTYPE,
    LossGraph,
    init_params,
    load_checkpoint,
    param_gradient,
    save_checkpoint,
)
from app.problems.base import ProblemSpec, sample_uniform
from app.resampling import CollocationSet, export_collocation, resample, should_resample
from app.utils import (
    generator_from_ints,
    generator_state_to_ints,
    make_generator,
    stream_seed,
)
from app.weighting import (
    CW_FAMILY,
    SchemeConfig,
    WeightState,
    export_weights,
    residual_scale,
    smooth_residuals,
    update_weights,
    weighted_residual_loss,
)

SNAPSHOT_CHECKPOINT = "checkpoint.pinncw"
SNAPSHOT_STATE = "state.npz"
SNAPSHOT_META = "state.json"


class TrainConfig(BaseModel):
    """Optimizer, schedule and cadence settings of one training run."""

    model_config = ConfigDict(frozen=True)

    iterations: int = Field(ge=1)
    lr0: float = Field(gt=0)
    decay_factor: float = Field(default=1.0, gt=0, le=1)
    decay_every: int = Field(default=1000, ge=1)
    lr_floor: float = Field(default=0.0, ge=0)  # 0 disables the floor
    adam_beta1: float = Field(default=ADAM_BETA1, ge=0, lt=1)
    adam_beta2: float = Field(default=ADAM_BETA2, ge=0, lt=1)
    adam_eps: float = Field(default=ADAM_EPS, gt=0)
    weight_update_stride: int = Field(default=1, ge=0)  # 0 freezes the weights
    resample_every: int = Field(default=DEFAULT_RESAMPLE_EVERY, ge=0)  # 0 disables resampling
    checkpoint_every: int = Field(default=DEFAULT_CHECKPOINT_EVERY, ge=1)
    snapshot_every: int = Field(default=0, ge=0)
    seed: int = 0


def lr_at(config: TrainConfig, iteration: int) -> float:
    """
    Step-decayed learning rate.

    lr = lr0 * decay_factor ** (iteration // decay_every), held at lr_floor
    once it falls below a positive floor.
    """
    if iteration < 0:
        raise ValueError("Iteration must be non-negative")
    lr = config.lr0 * config.decay_factor ** (iteration // config.decay_every)
    if config.lr_floor > 0:
        lr = max(config.lr_floor, lr)
    return lr


def _step_dtype() -> torch.dtype:
    # matches the dtype torch.optim.Adam uses for its step counter
    return torch.float64 if torch.get_default_dtype() == torch.float64 else torch.float32


@dataclass
class AdamState:
    """
    One Adam optimizer over every network of a problem.

    The moments are sized to the concatenation of all parameter vectors.
    """

    optimizer: torch.optim.Adam
    params: Dict[str, torch.Tensor]

    @classmethod
    def create(cls, params: Mapping[str, torch.Tensor], config: TrainConfig) -> "AdamState":
        optimizer = torch.optim.Adam(
            list(params.values()),
            lr=config.lr0,
            betas=(config.adam_beta1, config.adam_beta2),
            eps=config.adam_eps,
            foreach=False,
        )
        return cls(optimizer=optimizer, params=dict(params))

    @property
    def step_count(self) -> int:
        first = next(iter(self.params.values()))
        state = self.optimizer.state.get(first)
        return int(state["step"]) if state else 0

    def moments(self, name: str) -> tuple:
        state = self.optimizer.state.get(self.params[name])
        if not state:
            zeros = torch.zeros_like(self.params[name]).detach()
            return zeros, zeros.clone()
        return state["exp_avg"], state["exp_avg_sq"]

    @property
    def first_moment(self) -> torch.Tensor:
        return torch.cat([self.moments(name)[0] for name in self.params])

    @property
    def second_moment(self) -> torch.Tensor:
        return torch.cat([self.moments(name)[1] for name in self.params])

    def restore(self, step: int, moments: Mapping[str, tuple]):
        """Load saved moments and step count (inverse of moments/step_count)."""
        if step == 0:
            return
        for name, tensor in self.params.items():
            exp_avg, exp_avg_sq = moments[name]
            self.optimizer.state[tensor] = {
                "step": torch.tensor(float(step), dtype=_step_dtype()),
                "exp_avg": torch.as_tensor(exp_avg, dtype=DTYPE).clone(),
                "exp_avg_sq": torch.as_tensor(exp_avg_sq, dtype=DTYPE).clone(),
            }


def adam_step(params: Mapping[str, torch.Tensor], grads: Mapping[str, torch.Tensor], state: AdamState, lr: float):
    """
    Bias-corrected Adam update of every parameter vector in place.

    Raises:
        NonFiniteError: when any gradient entry is NaN or infinite
    """
    for name, tensor in params.items():
        grad = grads[name]
        if grad.shape != tensor.shape:
            raise ValueError(f"Gradient of '{name}' has shape {tuple(grad.shape)}, expected {tuple(tensor.shape)}")
        if not torch.isfinite(grad).all():
            raise NonFiniteError(f"Gradient of '{name}' is not finite")
        tensor.grad = grad
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.optimizer.step()
    state.optimizer.zero_grad(set_to_none=True)


@dataclass
class RunState:
    """Everything that changes while training; enough to resume exactly."""

    params: Dict[str, torch.Tensor]
    optimizer: AdamState
    weights: WeightState
    collocation: CollocationSet
    neighbor_rng: torch.Generator
    iteration: int = 0
    history: List[TrainingRecord] = field(default_factory=list)
    timing: List[TimingRecord] = field(default_factory=list)


@dataclass
class TrainResult:
    params: Dict[str, torch.Tensor]
    weights: WeightState
    collocation: CollocationSet
    history: List[TrainingRecord]
    timing: List[TimingRecord]
    final: Dict[str, Dict[str, float]]

    def networks(self, problem: ProblemSpec) -> dict:
        """name -> (config, params), ready for save_checkpoint."""
        return {name: (config, self.params[name]) for name, config in problem.networks.items()}


def initial_params(problem: ProblemSpec, seed: int) -> Dict[str, torch.Tensor]:
    """Glorot-initialized parameters of every network from the init stream."""
    base = stream_seed(seed, "init")
    return {
        name: init_params(config, (base + offset) % 2**32).requires_grad_(True)
        for offset, (name, config) in enumerate(problem.networks.items())
    }


def fresh_state(problem: ProblemSpec, scheme: SchemeConfig, config: TrainConfig) -> RunState:
    params = initial_params(problem, config.seed)
    points = sample_uniform(problem, scheme.n_f, "interior", make_generator(config.seed, "collocation"))
    return RunState(
        params=params,
        optimizer=AdamState.create(params, config),
        weights=WeightState.initial(scheme),
        collocation=CollocationSet.from_points(points),
        neighbor_rng=make_generator(config.seed, "neighbors"),
    )


def save_snapshot(directory, problem: ProblemSpec, run: RunState):
    """
    Write a resumable snapshot of ``run``.

    The directory holds the network checkpoint, an .npz with weights,
    collocation points, centers and Adam moments, and a JSON sidecar with the
    scheme, iteration, neighbor RNG state and history so far.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        directory / SNAPSHOT_CHECKPOINT,
        {name: (config, run.params[name]) for name, config in problem.networks.items()},
    )
    arrays = {
        "lambdas": run.weights.lambdas.numpy(),
        "points": run.collocation.points.numpy(),
        "centers": run.collocation.centers.numpy(),
    }
    for name in problem.networks:
        exp_avg, exp_avg_sq = run.optimizer.moments(name)
        arrays[f"exp_avg__{name}"] = exp_avg.detach().numpy()
        arrays[f"exp_avg_sq__{name}"] = exp_avg_sq.detach().numpy()
    np.savez(directory / SNAPSHOT_STATE, **arrays)
    meta = {
        "problem": problem.name,
        "scheme": run.weights.scheme,
        "iteration": run.iteration,
        "last_resample_iter": run.collocation.last_resample_iter,
        "adam_step": run.optimizer.step_count,
        "neighbor_rng": generator_state_to_ints(run.neighbor_rng),
        "history": [asdict(r) for r in run.history],
        "timing": [asdict(r) for r in run.timing],
    }
    (directory / SNAPSHOT_META).write_text(json.dumps(meta), encoding="utf-8")
    logger.debug(f"Snapshot at iteration {run.iteration} written to {directory}")


def load_snapshot(directory, problem: ProblemSpec, scheme: SchemeConfig, config: TrainConfig) -> RunState:
    """Rebuild a RunState written by save_snapshot."""
    directory = Path(directory)
    meta = json.loads((directory / SNAPSHOT_META).read_text(encoding="utf-8"))
    if meta["problem"] != problem.name or meta["scheme"] != scheme.scheme:
        raise ValueError(
            f"Snapshot is for {meta['problem']}/{meta['scheme']}, not {problem.name}/{scheme.scheme}"
        )
    networks = load_checkpoint(directory / SNAPSHOT_CHECKPOINT)
    params = {}
    for name, expected in problem.networks.items():
        saved_config, values = networks[name]
        if saved_config != expected:
            raise ValueError(f"Snapshot network '{name}' does not match the problem")
        params[name] = values.clone().requires_grad_(True)

    with np.load(directory / SNAPSHOT_STATE) as arrays:
        lambdas = torch.tensor(arrays["lambdas"], dtype=DTYPE)
        points = torch.tensor(arrays["points"], dtype=DTYPE)
        centers = torch.tensor(arrays["centers"], dtype=DTYPE)
        moments = {
            name: (arrays[f"exp_avg__{name}"], arrays[f"exp_avg_sq__{name}"])
            for name in problem.networks
        }

    optimizer = AdamState.create(params, config)
    optimizer.restore(meta["adam_step"], moments)
    return RunState(
        params=params,
        optimizer=optimizer,
        weights=WeightState.initial(scheme).with_lambdas(lambdas),
        collocation=CollocationSet(points, centers, meta["last_resample_iter"]),
        neighbor_rng=generator_from_ints(meta["neighbor_rng"]),
        iteration=meta["iteration"],
        history=[TrainingRecord(**r) for r in meta["history"]],
        timing=[TimingRecord(**r) for r in meta["timing"]],
    )


def _export(output_dir: Path, problem: ProblemSpec, run: RunState, iteration: int):
    export_weights(
        output_dir / "weights" / f"weights-{iteration:06d}.csv",
        run.collocation.points,
        run.weights.lambdas,
        problem.coordinates,
    )
    export_collocation(
        output_dir / "collocation.csv",
        iteration,
        run.collocation.points,
        problem.coordinates,
        append=True,
    )


def train(
    problem: ProblemSpec,
    scheme: SchemeConfig,
    config: TrainConfig,
    test_set: Optional[TestSet] = None,
    output_dir=None,
    resume=None,
    progress: Optional[Callable[[TrainingRecord], None]] = None,
    test_points: int = DEFAULT_TEST_POINTS,
) -> TrainResult:
    """
    Train the networks of ``problem`` under a weighting scheme.

    Weights are updated first, from the residuals at the current parameters,
    and the Adam step follows; this is the descent-then-ascent order shifted
    by one iteration.

    Args:
        problem: Benchmark to solve
        scheme: Weighting scheme and its hyperparameters
        config: Optimizer, schedule and cadences
        test_set: Held-out points; built from the seed's test stream when omitted
        output_dir: Where weight/collocation exports and snapshots go (optional)
        resume: Snapshot directory to continue from
        progress: Called with every TrainingRecord as it is produced
        test_points: Size of the generated test set

    Returns:
        TrainResult: final parameters, weights, collocation set and history

    Raises:
        TrainingDiverged: on a non-finite loss or gradient; snapshots already
            written are left in place
    """
    if test_set is None:
        test_set = build_test_set(problem, test_points, config.seed)
    run = fresh_state(problem, scheme, config) if resume is None else load_snapshot(resume, problem, scheme, config)
    output_dir = Path(output_dir) if output_dir is not None else None
    start = run.iteration

    lo, hi = problem.lo(), problem.hi()
    residual_weight = scheme.lambda_f * residual_scale(scheme.scheme, scheme.n_f)
    stride = config.weight_update_stride
    smoothing = scheme.scheme in CW_FAMILY
    label = f"{problem.name}/{scheme.scheme}/seed-{config.seed}"

    logger.info(
        f"Training {label}: N_f={scheme.n_f}, iterations={config.iterations}, "
        f"lr0={config.lr0}, starting at iteration {start}"
    )
    started = time.perf_counter()
    window_forward = window_step = 0.0
    window_iters = window_steps = 0
    last_errors = {}

    def residual_fn(x):
        return problem.residuals(run.params, x)[0]

    for iteration in range(start, config.iterations + 1):
        run.iteration = iteration
        snapshot_due = config.snapshot_every > 0 and (
            iteration % config.snapshot_every == 0 or iteration == config.iterations
        )
        # a resumed run already exported and saved its first iteration
        if output_dir is not None and snapshot_due and (resume is None or iteration != start):
            _export(output_dir, problem, run, iteration)
            if iteration != start:
                save_snapshot(output_dir / "snapshot", problem, run)

        tick = time.perf_counter()
        try:
            residuals, jet = problem.residuals(run.params, run.collocation.points, create_graph=True)
            signal = residuals.detach()
            update_due = stride > 0 and iteration % stride == 0
            resample_due = config.resample_every > 0 and should_resample(
                iteration, config.resample_every, scheme.scheme
            )
            smoothed = None
            if smoothing and (update_due or resample_due):
                smoothed = smooth_residuals(
                    residual_fn,
                    run.collocation.points,
                    scheme.neighbors,
                    scheme.epsilon,
                    lo,
                    hi,
                    run.neighbor_rng,
                    centers=run.collocation.centers,
                    center_residuals=signal,
                    iteration=iteration,
                )
            if update_due:
                run.weights = update_weights(run.weights, signal, smoothed)

            residual_loss = residual_weight * weighted_residual_loss(run.weights.lambdas, residuals)
            fixed_loss = problem.fixed_loss(run.params)
            graph = LossGraph(residual_loss + fixed_loss, run.params, inputs=[jet.points])
        except NonFiniteError as e:
            logger.error(f"{label} diverged at iteration {iteration}: {e}")
            raise TrainingDiverged(str(e), iteration, run.history) from e
        window_forward += time.perf_counter() - tick
        window_iters += 1

        if iteration % config.checkpoint_every == 0 or iteration == config.iterations:
            errors = evaluate(problem, run.params, test_set)
            last_errors = {name: {"rel_l2": e[0], "l_inf": e[1]} for name, e in errors.items()}
            loss_residual = float(residual_loss.detach())
            loss_fixed = float(fixed_loss.detach())
            primary = errors[problem.fields[0]]
            secondary = errors.get("a")
            elapsed_ms = 1000.0 * (time.perf_counter() - started)
            record = TrainingRecord(
                iteration=iteration,
                loss_total=loss_residual + loss_fixed,
                loss_residual=loss_residual,
                loss_fixed=loss_fixed,
                rel_l2=primary[0],
                l_inf=primary[1],
                lr=lr_at(config, iteration),
                wall_ms=elapsed_ms,
                rel_l2_a=None if secondary is None else secondary[0],
                l_inf_a=None if secondary is None else secondary[1],
            )
            run.history.append(record)
            run.timing.append(
                TimingRecord(
                    iteration=iteration,
                    wall_ms=elapsed_ms,
                    forward_ms=1000.0 * window_forward / max(window_iters, 1),
                    step_ms=1000.0 * window_step / max(window_steps, 1),
                )
            )
            window_forward = window_step = 0.0
            window_iters = window_steps = 0
            logger.info(
                f"{label} iter {iteration:>6} | loss {record.loss_total:.4e} | "
                f"rel_l2 {record.rel_l2:.4e} | lr {record.lr:.3e}"
            )
            if progress is not None:
                progress(record)

        if iteration == config.iterations:
            break

        tick = time.perf_counter()
        try:
            grads = param_gradient(graph)
            adam_step(run.params, grads, run.optimizer, lr_at(config, iteration))
        except NonFiniteError as e:
            logger.error(f"{label} diverged at iteration {iteration}: {e}")
            raise TrainingDiverged(str(e), iteration, run.history) from e
        if resample_due:
            run.collocation = resample(run.collocation, smoothed, scheme.scheme, iteration)
        window_step += time.perf_counter() - tick
        window_steps += 1

    logger.info(f"Finished {label} in {time.perf_counter() - started:.1f}s")
    return TrainResult(
        params={name: tensor.detach().clone() for name, tensor in run.params.items()},
        weights=run.weights,
        collocation=run.collocation,
        history=run.history,
        timing=run.timing,
        final=last_errors,
    )
