"""
DTRformer command-line interface.

Subcommands:
    prepare    raw series + distance CSV -> prepared.npz
    train      fit a model, write best.dtrp, train_log.csv, metrics.csv
    eval       score a checkpoint (or the HI baseline) on val/test
    predict    write de-normalized test predictions to predictions.csv
    gradcheck  finite-difference verification of every op and the composed loss
    synth      generate a seeded synthetic dataset

Exit status: 0 success, 2 engine error (bad data, config, divergence),
3 gradient check above tolerance, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from app.core.config import settings
from app.core.exceptions import ConfigurationError, DTRBaseException
from app.core.logging import RUN_LOG_NAME, get_logger, run_context, setup_logging
from app.data.prepare import load_prepared, prepare_dataset, save_prepared
from app.data.synthetic import synth_generate, write_synthetic
from app.data.traffic_io import read_edges_csv, read_traffic
from app.models.config import TrainConfig, load_config
from app.models.traffic import PreparedDataset
from app.nn.dtrformer import build_model
from app.services.diagnostics import MODEL_TOLERANCE, OP_TOLERANCE, model_gradient_check, op_gradient_errors
from app.services.evaluation import (
    evaluate_baseline,
    evaluate_model,
    export_evaluations,
    predict_split,
    write_predictions_csv,
)
from app.services.trainer import CHECKPOINT_NAME, CONFIG_NAME, Trainer

logger = get_logger(__name__)

GRADCHECK_FAILED = 3
ABLATION_FLAGS = (
    "no_adaptive",
    "no_transformer",
    "no_forward_graph",
    "no_backward_graph",
    "no_graphs",
    "no_augmented_residual",
)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="Flat key = value config file")
    common.add_argument("--seed", type=int, default=None, help="Run seed (overrides the config file)")
    common.add_argument("--out-dir", type=Path, default=Path("runs/latest"), help="Artifact directory")
    return common


def _model_parser() -> argparse.ArgumentParser:
    model = argparse.ArgumentParser(add_help=False)
    for flag in ABLATION_FLAGS:
        model.add_argument(f"--{flag.replace('_', '-')}", dest=flag, action="store_true", default=None)
    return model


def _data_parser() -> argparse.ArgumentParser:
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--prepared", type=Path, default=None, help="prepared.npz from the prepare subcommand")
    data.add_argument("--data", type=Path, default=None, help="Traffic file (.traf binary, .csv or PEMS .npz)")
    data.add_argument("--adj", type=Path, default=None, help="Distance CSV: from,to,distance")
    data.add_argument("--start-epoch", type=int, default=0, help="Series start for CSV/npz input (UTC seconds)")
    data.add_argument("--step-seconds", type=int, default=300, help="Sampling step for CSV/npz input")
    return data


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtrformer", description=settings.SERVER_NAME)
    sub = parser.add_subparsers(dest="command", required=True)
    common, model, data = _common_parser(), _model_parser(), _data_parser()

    prepare = sub.add_parser("prepare", parents=[common, data], help="Build prepared.npz")
    prepare.add_argument("--theta", type=float, default=None, help="Kernel threshold (default 0.1)")
    prepare.add_argument("--sigma", type=float, default=None, help="Kernel width (default: std of distances)")
    prepare.add_argument("--out", type=Path, default=None, help="Output path (default <out-dir>/prepared.npz)")
    prepare.set_defaults(handler=cmd_prepare)

    train = sub.add_parser("train", parents=[common, model, data], help="Train a model")
    train.add_argument("--max-epochs", type=int, default=None)
    train.add_argument("--batch-size", type=int, default=None)
    train.add_argument("--lr", type=float, default=None)
    train.add_argument("--patience", type=int, default=None)
    train.set_defaults(handler=cmd_train)

    evaluate = sub.add_parser("eval", parents=[common, model, data], help="Score a checkpoint or the HI baseline")
    evaluate.add_argument("--checkpoint", type=Path, default=None)
    evaluate.add_argument("--model", choices=["dtrformer", "hi"], default="dtrformer")
    evaluate.set_defaults(handler=cmd_eval)

    predict = sub.add_parser("predict", parents=[common, model, data], help="Write predictions.csv")
    predict.add_argument("--checkpoint", type=Path, default=None)
    predict.add_argument("--split", choices=["train", "val", "test"], default="test")
    predict.set_defaults(handler=cmd_predict)

    gradcheck = sub.add_parser("gradcheck", parents=[common], help="Finite-difference gradient verification")
    gradcheck.add_argument("--samples", type=int, default=50, help="Parameter entries to check")
    gradcheck.set_defaults(handler=cmd_gradcheck)

    synth = sub.add_parser("synth", parents=[common], help="Generate a synthetic dataset")
    synth.add_argument("--nodes", type=int, default=16)
    synth.add_argument("--days", type=int, default=14)
    synth.add_argument("--noise", type=float, default=5.0)
    synth.add_argument("--weekly-amplitude", type=float, default=0.15)
    synth.add_argument("--step-seconds", type=int, default=300)
    synth.set_defaults(handler=cmd_synth)
    return parser


def resolve_config(args: argparse.Namespace) -> TrainConfig:
    """Config file (or the run's saved config.txt) plus command-line overrides."""
    path = args.config
    if path is None and (args.out_dir / CONFIG_NAME).exists() and args.command in ("eval", "predict"):
        path = args.out_dir / CONFIG_NAME
    overrides = {flag: getattr(args, flag, None) for flag in ABLATION_FLAGS}
    overrides["seed"] = args.seed
    for key in ("max_epochs", "batch_size", "lr", "patience", "theta", "sigma"):
        overrides[key] = getattr(args, key, None)
    return load_config(path, **overrides)


def resolve_dataset(args: argparse.Namespace, config: TrainConfig) -> PreparedDataset:
    if args.prepared is not None:
        dataset = load_prepared(args.prepared)
        if (dataset.splits.t_in, dataset.splits.t_out) != (config.t_in, config.t_out):
            raise ConfigurationError(
                f"prepared windows are {dataset.splits.t_in}->{dataset.splits.t_out} steps, "
                f"config asks for {config.t_in}->{config.t_out}"
            )
        return dataset
    if args.data is None or args.adj is None:
        raise ConfigurationError("pass --prepared or both --data and --adj")
    series = read_traffic(args.data, start_epoch=args.start_epoch, step_seconds=args.step_seconds)
    return prepare_dataset(series, read_edges_csv(args.adj), config)


def cmd_prepare(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if args.data is None or args.adj is None:
        raise ConfigurationError("prepare needs --data and --adj")
    dataset = resolve_dataset(argparse.Namespace(**{**vars(args), "prepared": None}), config)
    out = args.out or args.out_dir / "prepared.npz"
    save_prepared(out, dataset)
    logger.info("Wrote %s (windows %s)", out, dataset.splits.counts())
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    dataset = resolve_dataset(args, config)
    trainer = Trainer(config, dataset, args.out_dir)
    result = trainer.train()
    logger.info(
        "Best epoch %d of %d, validation MAE %.4f",
        result.best_epoch,
        result.epochs_run,
        result.best_val_mae,
    )
    export_evaluations(args.out_dir, evaluate_model(trainer.model, dataset, config))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    dataset = resolve_dataset(args, config)
    if args.model == "hi":
        results = evaluate_baseline(dataset, config)
    else:
        model = build_model(config, dataset.n_nodes, dataset.n_channels, dataset.steps_per_day)
        model.load(args.checkpoint or args.out_dir / CHECKPOINT_NAME)
        results = evaluate_model(model, dataset, config)
    written = export_evaluations(args.out_dir, results)
    logger.info("Wrote %s", ", ".join(str(path) for path in written))
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    dataset = resolve_dataset(args, config)
    model = build_model(config, dataset.n_nodes, dataset.n_channels, dataset.steps_per_day)
    model.load(args.checkpoint or args.out_dir / CHECKPOINT_NAME)
    if dataset.splits[args.split].size == 0:
        raise ConfigurationError(f"{args.split} split has no windows")
    predictions, targets = predict_split(model, dataset, args.split, config.eval_batch_size)
    path = write_predictions_csv(args.out_dir / "predictions.csv", predictions, targets)
    logger.info("Wrote %d predictions to %s", predictions.size, path)
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    seed = args.seed or 0
    op_errors = op_gradient_errors(seed=seed)
    worst_op = max(op_errors, key=op_errors.get)
    report = model_gradient_check(seed=seed, n_samples=args.samples)
    logger.info("Worst op error %.3e (%s); model error %.3e", op_errors[worst_op], worst_op, report.max_relative_error)
    failed = [name for name, err in op_errors.items() if err > OP_TOLERANCE]
    if failed or report.max_relative_error > MODEL_TOLERANCE:
        logger.error("Gradient check failed: ops %s, model error %.3e", failed, report.max_relative_error)
        return GRADCHECK_FAILED
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    dataset = synth_generate(
        n_nodes=args.nodes,
        n_days=args.days,
        seed=args.seed or 0,
        noise=args.noise,
        weekly_amplitude=args.weekly_amplitude,
        step_seconds=args.step_seconds,
    )
    data_path, adj_path = write_synthetic(args.out_dir, dataset)
    logger.info("Wrote %s and %s", data_path, adj_path)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(log_file=args.out_dir / RUN_LOG_NAME if args.command == "train" else None)
    try:
        with run_context(command=args.command, seed=args.seed, out_dir=str(args.out_dir)):
            return args.handler(args)
    except DTRBaseException as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return 2
    except Exception:
        logger.exception("Unexpected failure in %s", args.command)
        return 1


if __name__ == "__main__":
    sys.exit(main())
