"""
Command line interface for training runs, presets and post-hoc evaluation.

    run <config|preset> [--preset NAME] [--force] [--iterations N] [--seeds a,b,c] [--output-dir DIR]
    presets
    eval <checkpoint> <problem> [--constraint printed|symmetric] [--kg-t-max T]
    export-grid <checkpoint> <problem> <n1[,n2[,n3]]> [--output FILE] [--constraint ...] [--kg-t-max T]
    reference-grid <problem> <n1[,n2[,n3]]> [--output FILE]
"""

import argparse
import inspect
import json
import math
import shutil
from pathlib import Path
from typing import List, Optional

from loguru import logger
from pydantic import ValidationError

from app.config import DEFAULT_TEST_POINTS, OUTPUT_ROOT
from app.exceptions import ConfigError, PinnError, TrainingDiverged, UnknownNameError
from app.experiment import (
    ExperimentConfig,
    build_experiment_problem,
    emit_config,
    parse_config,
    preset_names,
    preset_path,
    preset_source,
    scheme_config,
    train_config,
)
from app.metrics import (
    RunSummary,
    build_test_set,
    evaluate,
    export_field_grid,
    write_history,
    write_index,
    write_summary,
    write_timing,
)
from app.network import load_checkpoint, save_checkpoint
from app.problems import PROBLEMS, build_problem, export_reference_grid
from app.trainer import train


def list_presets() -> str:
    """Sorted listing of the shipped presets with the experiment each reproduces."""
    names = preset_names()
    width = max((len(n) for n in names), default=0)
    return "\n".join(f"{name.ljust(width)}  {preset_source(preset_path(name))}" for name in names)


def resolve_config(target: str, preset: Optional[str] = None):
    """
    Load a config from a file path or a preset name.

    Returns:
        tuple: (ExperimentConfig, experiment name)
    """
    base = preset_path(preset) if preset else None
    path = Path(target)
    if path.is_file():
        return parse_config(path, base=base), path.stem
    if base is not None:
        raise ConfigError(f"config file not found: {target}")
    return parse_config(preset_path(target)), target


def _override(config: ExperimentConfig, **changes) -> ExperimentConfig:
    changes = {k: v for k, v in changes.items() if v is not None}
    if not changes:
        return config
    try:
        return ExperimentConfig.model_validate({**config.model_dump(), **changes})
    except ValidationError as e:
        error = e.errors()[0]
        raise ConfigError(error["msg"], key=str(error["loc"][0]) if error["loc"] else None) from e


def _clear_run_artifacts(root: Path):
    """Remove what a previous run wrote; other files are left alone."""
    for path in root.glob("seed-*"):
        if path.is_dir():
            shutil.rmtree(path)
    for name in ("config.cfg", "index.json"):
        (root / name).unlink(missing_ok=True)


def _final_is_finite(final: dict) -> bool:
    return bool(final) and all(math.isfinite(v) for values in final.values() for v in values.values())


def run(config: ExperimentConfig, name: str, output_dir=None, force: bool = False) -> int:
    """
    Train every seed of an experiment and write its artifacts.

    Layout:
        <root>/config.cfg           echoed configuration
        <root>/seed-<s>/            history.csv, timing.csv, summary.json,
                                    checkpoint.pinncw, weights/, collocation.csv
        <root>/index.json           per-seed final metrics and their minimum

    Returns:
        int: 0 when every seed finished with finite metrics, 1 otherwise,
        2 when the output directory is in use
    """
    root = Path(output_dir or config.output_dir or OUTPUT_ROOT / name)
    if root.exists() and any(root.iterdir()) and not force:
        print(f"❌ Output directory {root} is not empty (use --force to overwrite)")
        return 2
    if root.exists() and force:
        _clear_run_artifacts(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.cfg").write_text(emit_config(config, source=name), encoding="utf-8")

    print("\n" + "=" * 60)
    print(f"🚀 {name}: {config.problem} / {config.scheme}, seeds {config.seeds}")
    print(f"   N_f={config.n_f}  iterations={config.iterations}  output={root}")
    print("=" * 60)

    status = 0
    summaries = []
    echo = config.model_dump(by_alias=True)
    for seed in config.seeds:
        seed_dir = root / f"seed-{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        try:
            problem = build_experiment_problem(config, seed)
            result = train(
                problem,
                scheme_config(config),
                train_config(config, seed),
                output_dir=seed_dir,
                test_points=config.test_points,
            )
        except TrainingDiverged as e:
            logger.error(f"Seed {seed} diverged at iteration {e.iteration}: {e}")
            print(f"❌ Seed {seed} diverged at iteration {e.iteration}")
            write_history(e.history, seed_dir / "history.csv")
            summary = RunSummary(
                problem=config.problem,
                scheme=config.scheme,
                seed=seed,
                iterations=e.iteration,
                final={},
                finite=False,
                diverged=True,
                config=echo,
                problem_options=dict(problem.options),
            )
            write_summary(summary, seed_dir / "summary.json")
            summaries.append(summary)
            status = 1
            continue
        except (PinnError, OSError, ValueError) as e:
            logger.error(f"Seed {seed} failed: {e}")
            print(f"❌ Seed {seed} failed: {e}")
            status = 1
            continue

        write_history(result.history, seed_dir / "history.csv")
        write_timing(result.timing, seed_dir / "timing.csv")
        save_checkpoint(seed_dir / "checkpoint.pinncw", result.networks(problem))
        finite = _final_is_finite(result.final)
        summary = RunSummary(
            problem=config.problem,
            scheme=config.scheme,
            seed=seed,
            iterations=config.iterations,
            final=result.final,
            finite=finite,
            config=echo,
            problem_options=dict(problem.options),
        )
        write_summary(summary, seed_dir / "summary.json")
        summaries.append(summary)
        if not finite:
            status = 1
        errors = "  ".join(
            f"{field}: rel_l2={values['rel_l2']:.3e} l_inf={values['l_inf']:.3e}"
            for field, values in result.final.items()
        )
        print(f"{'✅' if finite else '⚠️'} Seed {seed}  {errors}")

    if summaries:
        index = write_index(name, summaries, root / "index.json")
        for key, value in sorted(index.best.items()):
            print(f"🏁 best {key} = {value:.3e} (seed {index.best_seed[key]})")
    logger.info(f"Experiment {name} finished with status {status}")
    return status


def checkpoint_problem_options(checkpoint, problem_name: str, **overrides) -> dict:
    """
    Problem options a checkpoint was trained with.

    Read from the summary.json written beside the checkpoint when it belongs to
    the same problem; non-None ``overrides`` win.
    """
    options = {}
    summary_path = Path(checkpoint).parent / "summary.json"
    if summary_path.is_file():
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        if summary.get("problem") == problem_name:
            options.update(summary.get("problem_options", {}))
    options.update({k: v for k, v in overrides.items() if v is not None})

    if problem_name not in PROBLEMS:
        raise UnknownNameError(f"Unknown problem '{problem_name}', expected one of {sorted(PROBLEMS)}")
    accepted = inspect.signature(PROBLEMS[problem_name]).parameters
    unknown = sorted(set(options) - set(accepted))
    if unknown:
        raise ConfigError(f"{problem_name} does not take the option(s) {unknown}")
    return options


def _problem_for_checkpoint(checkpoint, problem_name: str, **overrides):
    networks = load_checkpoint(checkpoint)
    options = checkpoint_problem_options(checkpoint, problem_name, **overrides)
    config, _ = next(iter(networks.values()))
    options.update(hidden_layers=config.hidden_layers, hidden_width=config.hidden_width)
    problem = build_problem(problem_name, **options)
    missing = set(problem.networks) - set(networks)
    if missing:
        raise ValueError(f"Checkpoint has no network named {sorted(missing)} for {problem_name}")
    return problem, {name: networks[name][1] for name in problem.networks}


def _parse_counts(text: str) -> List[int]:
    try:
        counts = [int(part) for part in text.split(",")]
    except ValueError:
        raise ConfigError(f"grid counts must be comma-separated integers, got '{text}'") from None
    return counts


def _parse_seeds(text: Optional[str]):
    if text is None:
        return None
    try:
        return [int(part) for part in text.split(",")]
    except ValueError:
        raise ConfigError(f"--seeds must be comma-separated integers, got '{text}'") from None


def _add_problem_flags(parser: argparse.ArgumentParser):
    """Overrides for problem options a checkpoint's summary.json does not supply."""
    parser.add_argument("--constraint", choices=("printed", "symmetric"), help="Burgers hard-constraint variant")
    parser.add_argument("--kg-t-max", type=float, help="Klein-Gordon final time")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pinncw", description="Convolution-weighted PINN training")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="Train an experiment")
    run_parser.add_argument("config", help="Config file or preset name")
    run_parser.add_argument("--preset", help="Preset supplying keys the config file leaves out")
    run_parser.add_argument("--force", action="store_true", help="Overwrite a non-empty output directory")
    run_parser.add_argument("--iterations", type=int, help="Override the number of iterations")
    run_parser.add_argument("--seeds", help="Override the seeds, e.g. 1,2,3")
    run_parser.add_argument("--output-dir", help="Override the output directory")

    commands.add_parser("presets", help="List the shipped presets")

    eval_parser = commands.add_parser("eval", help="Evaluate a checkpoint on a fresh test set")
    eval_parser.add_argument("checkpoint")
    eval_parser.add_argument("problem")
    eval_parser.add_argument("--test-points", type=int, default=DEFAULT_TEST_POINTS)
    eval_parser.add_argument("--seed", type=int, default=0)
    _add_problem_flags(eval_parser)

    grid_parser = commands.add_parser("export-grid", help="Write predictions on a grid as CSV")
    grid_parser.add_argument("checkpoint")
    grid_parser.add_argument("problem")
    grid_parser.add_argument("counts", help="Nodes per coordinate, in coordinate order")
    grid_parser.add_argument("--output", default="field_grid.csv")
    _add_problem_flags(grid_parser)

    reference_parser = commands.add_parser("reference-grid", help="Write the reference solution on a grid")
    reference_parser.add_argument("problem")
    reference_parser.add_argument("counts")
    reference_parser.add_argument("--output", default="reference_grid.csv")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            print(list_presets())
            return 0

        if args.command == "run":
            config, name = resolve_config(args.config, args.preset)
            config = _override(config, iterations=args.iterations, seeds=_parse_seeds(args.seeds))
            return run(config, name, output_dir=args.output_dir, force=args.force)

        if args.command == "eval":
            problem, params = _problem_for_checkpoint(
                args.checkpoint, args.problem, constraint=args.constraint, t_max=args.kg_t_max
            )
            test = build_test_set(problem, args.test_points, args.seed)
            print(f"📊 {problem.name} on {len(test)} test points")
            for field, (rel, inf) in evaluate(problem, params, test).items():
                print(f"   {field}: rel_l2={rel:.6e}  l_inf={inf:.6e}")
            return 0

        if args.command == "export-grid":
            problem, params = _problem_for_checkpoint(
                args.checkpoint, args.problem, constraint=args.constraint, t_max=args.kg_t_max
            )
            path = export_field_grid(problem, params, _parse_counts(args.counts), args.output)
            print(f"✅ Field grid written to {path}")
            return 0

        if args.command == "reference-grid":
            problem = build_problem(args.problem)
            path = export_reference_grid(problem, _parse_counts(args.counts), args.output)
            print(f"✅ Reference grid written to {path}")
            return 0
    except (ConfigError, UnknownNameError) as e:
        logger.error(f"Invalid input: {e}")
        print(f"❌ {e}")
        return 2
    except (PinnError, OSError, ValueError) as e:
        logger.error(f"Command {args.command} failed: {e}")
        print(f"❌ Error: {e}")
        return 1
    return 1
