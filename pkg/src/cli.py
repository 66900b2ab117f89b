"""Command-line entry point for the knowledge-transfer toolkit."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from datetime import datetime
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import __version__
from .config import ExperimentConfig, ci_config, default_config, load_config
from .data.storage import save_dataset
from .errors import ConfigurationError, ToolkitError
from .evaluation.ablation import ablate_latent_depth, sweep_sigma
from .evaluation.experiment import (
    CHECKPOINT_FILE,
    SOURCE_RESULTS_FILE,
    evaluate_source_model,
    obtain_source_model,
    prepare_data,
    require_results,
    run_experiment,
)
from .evaluation.gradients import DEFAULT_CASES, gradient_suite
from .evaluation.report import ResultTable, read_source_rows, write_source_rows
from .visualizations.accuracy import create_accuracy_chart

RULE = "=" * 60


def banner(title: str) -> None:
    print(RULE)
    print(title)
    print(RULE)
    print()


def finish(start_time: datetime, output_dir: Optional[Path] = None) -> None:
    duration = (datetime.now() - start_time).total_seconds()
    print()
    print(f"Duration: {duration:.2f} seconds")
    print(f"Finished: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    if output_dir is not None:
        print(f"Output in: {output_dir.absolute()}")
    print()


def _int_list(raw: str) -> list[int]:
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigurationError(f"expected comma-separated integers, got '{raw}'") from None


def _float_list(raw: str) -> list[float]:
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigurationError(f"expected comma-separated numbers, got '{raw}'") from None


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Preset or config file, then ``--seed``, ``--out`` and ``--workers`` overrides."""
    base = ci_config() if args.small else default_config()
    config = load_config(args.config, base) if args.config else base
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if args.out:
        config = replace(config, output_dir=args.out)
    if getattr(args, "workers", None):
        config = replace(config, workers=args.workers)
    return config


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out = Path(config.output_dir)
    banner("Synthetic device-mismatch dataset")
    start = datetime.now()
    dataset = prepare_data(config)
    path, manifest = save_dataset(dataset, out / "dataset.ltkd")
    print(f"Classes: {dataset.num_classes}   Feature shape: {tuple(dataset.shape)}")
    print(f"Source samples: {dataset.N_S} (test {len(dataset.source_test)})")
    for device in dataset.devices:
        tests = len(dataset.target_tests[device])
        print(f"  • device {device}: {dataset.N_T(device)} paired, {tests} test")
    print()
    print(f"✓ Dataset written to {path}")
    print(f"✓ Pairing manifest written to {manifest}")
    finish(start, out)
    return 0


def cmd_pretrain(args: argparse.Namespace) -> int:
    config = replace(resolve_config(args), source_checkpoint="")
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    banner("Source model pretraining")
    start = datetime.now()
    dataset = prepare_data(config)
    model = obtain_source_model(config, dataset, out, args.progress)
    rows = evaluate_source_model(model, dataset, config.devices)
    write_source_rows(rows, out / SOURCE_RESULTS_FILE)
    print(f"Model: {model!r}")
    print()
    for device, accuracy in rows.items():
        print(f"  • accuracy on device {device}: {accuracy:.4f}")
    print()
    print(f"✓ Checkpoint written to {out / CHECKPOINT_FILE}")
    finish(start, out)
    return 0


def _with_checkpoint(config: ExperimentConfig, checkpoint: Optional[str]) -> ExperimentConfig:
    if checkpoint:
        return replace(config, source_checkpoint=checkpoint)
    saved = Path(config.output_dir) / CHECKPOINT_FILE
    if not config.source_checkpoint and saved.is_file():
        return replace(config, source_checkpoint=str(saved))
    return config


def _print_table(table: ResultTable) -> None:
    for method, accuracy in table.grand_mean().items():
        print(f"  • {table.labels.get(method, method)}: {100 * accuracy:.2f}%")


def cmd_run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if args.command == "transfer":
        config = _with_checkpoint(config, args.checkpoint)
        if args.methods:
            methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
            config = replace(config, methods=methods)
    banner("Knowledge transfer experiment" if args.command == "run" else "Target model transfer")
    start = datetime.now()
    print(f"Methods: {', '.join(config.methods)}")
    devices = ", ".join(config.devices)
    print(f"Devices: {devices}   Trials: {config.trials}   Workers: {config.workers}")
    print()
    result = run_experiment(config, progress=args.progress)
    print("Mean accuracy over all devices and trials:")
    _print_table(result.table)
    print()
    print(f"✓ {len(result.table)} result rows, {len(result.artifacts)} artifacts")
    finish(start, result.output_dir)
    return 0


def cmd_ablate_depth(args: argparse.Namespace) -> int:
    config = _with_checkpoint(resolve_config(args), None)
    depths = _int_list(args.depths)
    if not depths:
        raise ConfigurationError("--depths must name at least one latent site")
    banner("Latent depth ablation")
    start = datetime.now()
    out = Path(config.output_dir)
    result = ablate_latent_depth(
        config, depths, method=args.method, output_dir=out, progress=args.progress
    )
    for row in result.summary.itertuples(index=False):
        accuracy = 100 * row.mean_accuracy
        print(f"  • depth {row.depth} (latent {row.latent_shape}): {accuracy:.2f}%")
    finish(start, out)
    return 0


def cmd_sweep_sigma(args: argparse.Namespace) -> int:
    config = _with_checkpoint(resolve_config(args), None)
    sigmas = _float_list(args.sigmas)
    if not sigmas:
        raise ConfigurationError("--sigmas must name at least one value")
    banner("VBKT sigma sweep")
    start = datetime.now()
    out = Path(config.output_dir)
    result = sweep_sigma(config, sigmas, output_dir=out, progress=args.progress)
    for row in result.summary.itertuples(index=False):
        accuracy = 100 * row.mean_accuracy
        print(f"  • sigma {row.sigma:g} (KL weight {row.kl_weight:g}): {accuracy:.2f}%")
    finish(start, out)
    return 0


def method_labels(methods: Sequence[str], config: ExperimentConfig) -> dict[str, str]:
    """Display names for result keys; sweep suffixes such as ``@sigma0.1`` are kept."""
    labels = {}
    for name in methods:
        key, at, suffix = name.partition("@")
        try:
            labels[name] = config.transfer.variant(key).label + (f" ({suffix})" if at else "")
        except ConfigurationError:
            labels[name] = name
    return labels


def cmd_report(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out = Path(args.out) if args.out else Path(config.output_dir)
    table = ResultTable.from_csv(require_results(out))
    table.labels = method_labels(table.methods, config)
    source_path = out / SOURCE_RESULTS_FILE
    source_row = read_source_rows(source_path) if source_path.is_file() else None

    markdown = table.to_markdown(source_row=source_row)
    (out / "report.md").write_text(markdown + "\n", encoding="utf-8")
    create_accuracy_chart(
        table.summary(),
        errors=table.per_device_std(),
        output_path=out / "accuracy.html",
        image_path=args.image,
    )
    print(markdown)
    print()
    print(f"✓ Report written to {out / 'report.md'}")
    print(f"✓ Chart written to {out / 'accuracy.html'}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    banner("Gradient check")
    start = datetime.now()
    reports = gradient_suite(seeds=range(args.cases), tolerance=args.tolerance)
    failed = {name: report for name, report in reports.items() if not report.passed}
    for name, report in reports.items():
        print(f"  {'✓' if report.passed else '✗'} {name}: {report.summary()}")
    print()
    print(f"Passed: {len(reports) - len(failed)}/{len(reports)}")
    finish(start)
    return 0 if not failed else 1


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Config file of 'section.key = value' lines")
    common.add_argument("--seed", type=int, help="Set every seed in the config")
    common.add_argument("--out", help="Output directory (overrides experiment.output_dir)")
    common.add_argument("--small", action="store_true", help="Start from the small CI preset")
    common.add_argument(
        "--verbose", "-v", action="store_true", help="Debug logging (per-step loss breakdowns)"
    )
    common.add_argument("--progress", action="store_true", help="Show per-epoch progress bars")

    parser = argparse.ArgumentParser(
        prog="vbkt",
        description=(
            "Variational Bayesian knowledge transfer on a synthetic device-mismatch benchmark"
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(
        name: str, handler: Callable[[argparse.Namespace], int], help_text: str
    ) -> argparse.ArgumentParser:
        command = sub.add_parser(name, parents=[common], help=help_text)
        command.set_defaults(handler=handler)
        return command

    add("gen-data", cmd_gen_data, "Generate, pair and scale the dataset and write it to disk")
    add("pretrain", cmd_pretrain, "Pretrain the source model and evaluate it on every device")

    run = add("run", cmd_run, "Pretrain (or load) the source model and run every transfer cell")
    run.add_argument("--workers", type=int, help="Worker processes for independent cells")

    transfer = add("transfer", cmd_run, "Run transfer cells against an existing source checkpoint")
    transfer.add_argument(
        "--checkpoint",
        help=f"Source checkpoint (default: <out>/{CHECKPOINT_FILE} when present)",
    )
    transfer.add_argument("--methods", help="Comma-separated method keys, e.g. 'tsl,vbkt,at+tsl'")
    transfer.add_argument("--workers", type=int, help="Worker processes for independent cells")

    ablate = add("ablate-depth", cmd_ablate_depth, "Train at several latent depths")
    ablate.add_argument(
        "--depths", required=True, help="Comma-separated latent site indices, e.g. '0,1,2'"
    )
    ablate.add_argument("--method", default="vbkt", help="Method key to ablate (default: vbkt)")
    ablate.add_argument("--workers", type=int, help="Worker processes for independent cells")

    sweep = add("sweep-sigma", cmd_sweep_sigma, "Run VBKT for several latent standard deviations")
    sweep.add_argument(
        "--sigmas", required=True, help="Comma-separated sigma values, e.g. '0.1,0.2,0.5'"
    )
    sweep.add_argument("--workers", type=int, help="Worker processes for independent cells")

    report = add("report", cmd_report, "Render results.csv as a markdown table and accuracy chart")
    report.add_argument(
        "--image", help="Also export the chart as a static image (PNG/SVG via kaleido)"
    )

    check = add("gradcheck", cmd_gradcheck, "Compare analytic and finite-difference gradients")
    check.add_argument(
        "--cases",
        type=int,
        default=DEFAULT_CASES,
        help=f"Seeded micro-cases per objective (default: {DEFAULT_CASES})",
    )
    check.add_argument(
        "--tolerance", type=float, default=1e-4, help="Maximum relative error (default: 1e-4)"
    )
    return parser


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except ToolkitError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
