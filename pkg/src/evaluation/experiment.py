"""End-to-end experiment driver: data, source model, transfer cells and artifacts."""

from __future__ import annotations

import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .. import __version__
from ..autodiff import SplitModel, latent_sites, load_checkpoint, save_checkpoint
from ..config import ExperimentConfig, dump_config, load_config
from ..data.dataset import PairedDataset, build_paired_dataset
from ..data.scaling import scale_features
from ..data.scenes import SOURCE_DEVICE
from ..errors import ArtifactError, ConfigurationError
from ..training.trainer import initial_target, pretrain_source, train_transfer
from ..transfer.losses import TransferConfig
from ..visualizations.heatmap import create_heatmap, export_heatmap
from .metrics import class_subset, evaluate_accuracy, intra_class_discrepancy, mean_off_diagonal
from .report import ResultTable, write_source_rows

logger = logging.getLogger(__name__)

RESULTS_FILE = "results.csv"
SOURCE_RESULTS_FILE = "source_model.csv"
MANIFEST_FILE = "manifest.txt"
CHECKPOINT_FILE = "source.ltk"


@dataclass(frozen=True)
class CellSpec:
    """One (row, device, trial) training run."""

    name: str
    transfer: TransferConfig
    device: str
    trial: int
    depth: Optional[int] = None
    discrepancy: bool = False


@dataclass
class CellResult:
    spec: CellSpec
    accuracy: float
    final_loss: float
    discrepancy: Optional[np.ndarray] = field(default=None, repr=False)

    def row(self) -> dict[str, object]:
        return {
            "method": self.spec.name,
            "device": self.spec.device,
            "trial": self.spec.trial,
            "accuracy": self.accuracy,
        }


@dataclass
class ExperimentResult:
    """Result table plus where everything was written."""

    table: ResultTable
    source_rows: dict[str, float]
    output_dir: Path
    artifacts: list[Path] = field(default_factory=list)
    discrepancies: dict[tuple[str, str], np.ndarray] = field(default_factory=dict, repr=False)


def prepare_data(config: ExperimentConfig) -> PairedDataset:
    """Generate, pair and scale the benchmark data."""
    dataset, scaler = scale_features(build_paired_dataset(config.data))
    logger.info(
        "dataset: %d source samples, devices %s, scaling range [%.4f, %.4f]",
        dataset.N_S,
        dataset.devices,
        scaler.minimum,
        scaler.maximum,
    )
    return dataset


def obtain_source_model(
    config: ExperimentConfig,
    dataset: PairedDataset,
    output_dir: Optional[Path] = None,
    progress: bool = False,
) -> SplitModel:
    """Load ``config.source_checkpoint`` or pretrain (and save) a source model; returned frozen.

    Raises:
        ArtifactError: If a configured checkpoint is missing or corrupt
        ConfigurationError: If the checkpoint does not fit the data
    """
    if config.source_checkpoint:
        model = load_checkpoint(config.source_checkpoint)
        if model.input_shape != tuple(dataset.shape) or model.num_classes != dataset.num_classes:
            raise ConfigurationError(
                f"checkpoint {config.source_checkpoint} expects inputs {model.input_shape} and "
                f"{model.num_classes} classes; "
                f"data has {tuple(dataset.shape)} and {dataset.num_classes}"
            )
        logger.info("loaded source model from %s", config.source_checkpoint)
        return model.freeze()

    model = SplitModel.build(config.model)
    log_path = _fresh(output_dir / "logs" / "pretrain.csv") if output_dir is not None else None
    result = pretrain_source(
        model,
        dataset.source,
        config.pretrain,
        config.mixup,
        dataset.source_test,
        log_path,
        progress,
    )
    if output_dir is not None:
        save_checkpoint(result.model, output_dir / CHECKPOINT_FILE)
    return result.model


def evaluate_source_model(
    model: SplitModel, dataset: PairedDataset, devices: Iterable[str]
) -> dict[str, float]:
    """Frozen source accuracy on its own test split and on each device's test split."""
    rows = {SOURCE_DEVICE: evaluate_accuracy(model, dataset.source_test)}
    for device in devices:
        rows[device] = evaluate_accuracy(model, dataset.target_tests[device])
    return rows


def resolve_latent_depth(model: SplitModel, depth: int) -> int:
    """Non-negative site index for ``depth``.

    Raises:
        ConfigurationError: If ``depth`` names no post-BN, pre-ReLU site
    """
    count = len(latent_sites(model.specs))
    if not -count <= depth < count:
        raise ConfigurationError(
            f"latent depth {depth} is not a valid site; model has {count} sites"
        )
    return depth % count


def _fresh(path: Path) -> Path:
    if path.exists():
        path.unlink()
    return path


def run_cell(
    config: ExperimentConfig,
    dataset: PairedDataset,
    source_model: SplitModel,
    spec: CellSpec,
    output_dir: Optional[Path] = None,
    progress: bool = False,
) -> CellResult:
    """Train and evaluate one target model.

    Trial ``t`` shifts the schedule seed (and the scratch-init seed) by ``t``.
    """
    cfg = spec.transfer
    schedule = replace(config.schedule, seed=config.schedule.seed + spec.trial)
    teacher = source_model
    depth = source_model.latent_site.depth
    if spec.depth is not None and resolve_latent_depth(source_model, spec.depth) != depth:
        teacher = source_model.clone(spec.depth).freeze()
    target = initial_target(teacher, cfg, seed=config.model.seed + 1 + spec.trial)

    log_path = None
    if output_dir is not None:
        log_path = _fresh(output_dir / "logs" / f"{spec.name}_{spec.device}_t{spec.trial}.csv")
    result = train_transfer(
        target, teacher, dataset, spec.device, cfg, schedule, config.mixup, log_path, progress
    )
    accuracy = evaluate_accuracy(result.model, dataset.target_tests[spec.device])
    logger.info("%s on %s trial %d: accuracy %.4f", spec.name, spec.device, spec.trial, accuracy)

    matrix = None
    if spec.discrepancy:
        samples = class_subset(
            dataset.target_tests[spec.device],
            config.discrepancy_class,
            config.discrepancy_samples,
            config.data.seed,
        )
        matrix = intra_class_discrepancy(result.model, samples)
    return CellResult(
        spec=spec,
        accuracy=accuracy,
        final_loss=result.metrics["final_loss"],
        discrepancy=matrix,
    )


def _run_cell_job(job: tuple) -> CellResult:
    return run_cell(*job)


def run_cells(
    config: ExperimentConfig,
    dataset: PairedDataset,
    source_model: SplitModel,
    cells: Sequence[CellSpec],
    output_dir: Optional[Path] = None,
    workers: int = 1,
    progress: bool = False,
) -> list[CellResult]:
    """Run every cell, in worker processes when ``workers > 1``; results follow ``cells`` order."""
    if workers > 1 and len(cells) > 1:
        jobs = [(config, dataset, source_model, spec, output_dir, False) for spec in cells]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell_job, jobs))
    return [run_cell(config, dataset, source_model, spec, output_dir, progress) for spec in cells]


def experiment_cells(config: ExperimentConfig) -> list[CellSpec]:
    return [
        CellSpec(
            name=key,
            transfer=config.transfer.variant(key),
            device=device,
            trial=trial,
            discrepancy=trial == 0,
        )
        for key in config.methods
        for device in config.devices
        for trial in range(config.trials)
    ]


def write_manifest(config: ExperimentConfig, path: Path) -> Path:
    """Re-runnable config text headed by its hash, seeds and library versions."""
    body = dump_config(config)
    header = [
        "# vbkt-toolkit experiment manifest (re-run with: vbkt run --config <this file>)",
        f"# config_hash: {config.fingerprint()}",
        f"# seeds: data={config.data.seed} model={config.model.seed} "
        f"pretrain={config.pretrain.seed} "
        f"schedule={config.schedule.seed} (+trial index per cell)",
        f"# versions: vbkt-toolkit {__version__}, python {platform.python_version()}, "
        f"numpy {np.__version__}, pandas {pd.__version__}",
        "",
    ]
    path.write_text("\n".join(header) + body, encoding="utf-8")
    return path


def write_heatmaps(
    discrepancies: dict[tuple[str, str], np.ndarray], output_dir: Path
) -> list[Path]:
    written = []
    for (name, device), matrix in sorted(discrepancies.items()):
        stem = output_dir / "heatmaps" / f"{name}_{device}"
        written.append(export_heatmap(matrix, stem.with_suffix(".pgm")))
        create_heatmap(
            matrix,
            title=f"Intra-class discrepancy: {name} on device {device}",
            output_path=stem.with_suffix(".html"),
        )
        written.append(stem.with_suffix(".html"))
        logger.info(
            "%s on %s: mean off-diagonal discrepancy %.4f", name, device, mean_off_diagonal(matrix)
        )
    return written


def run_experiment(
    config: Union[ExperimentConfig, str, Path],
    output_dir: Optional[Union[str, Path]] = None,
    workers: Optional[int] = None,
    progress: bool = False,
) -> ExperimentResult:
    """Pretrain (or load) the source model, then run and record every (method, device, trial) cell.

    Writes ``results.csv``, ``source_model.csv``, per-run logs, heatmaps and
    ``manifest.txt`` under the output directory.

    Raises:
        ConfigParseError: If a config file does not parse
        ArtifactError: If a configured checkpoint is missing
    """
    if not isinstance(config, ExperimentConfig):
        config = load_config(config)
    if output_dir is not None:
        config = replace(config, output_dir=str(output_dir))
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    dataset = prepare_data(config)
    source = obtain_source_model(config, dataset, out, progress)
    source_rows = evaluate_source_model(source, dataset, config.devices)

    cells = experiment_cells(config)
    results = run_cells(config, dataset, source, cells, out, workers or config.workers, progress)
    labels = {key: config.transfer.variant(key).label for key in config.methods}
    table = ResultTable.from_records((r.row() for r in results), labels)
    discrepancies = {
        (r.spec.name, r.spec.device): r.discrepancy for r in results if r.discrepancy is not None
    }

    artifacts = [
        table.to_csv(out / RESULTS_FILE),
        write_source_rows(source_rows, out / SOURCE_RESULTS_FILE),
        *write_heatmaps(discrepancies, out),
        write_manifest(config, out / MANIFEST_FILE),
    ]
    if not config.source_checkpoint:
        artifacts.append(out / CHECKPOINT_FILE)
    return ExperimentResult(
        table=table,
        source_rows=source_rows,
        output_dir=out,
        artifacts=artifacts,
        discrepancies=discrepancies,
    )


def require_results(output_dir: Union[str, Path]) -> Path:
    path = Path(output_dir) / RESULTS_FILE
    if not path.is_file():
        raise ArtifactError(f"no {RESULTS_FILE} in {output_dir}; run an experiment first")
    return path
