"""Latent-depth ablation and sigma sensitivity sweep."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import pandas as pd

from ..autodiff import SplitModel
from ..config import ExperimentConfig
from ..data.dataset import PairedDataset
from ..transfer.latent import kl_weight
from ..transfer.losses import TransferMethod
from .experiment import (
    CellSpec,
    obtain_source_model,
    prepare_data,
    resolve_latent_depth,
    run_cells,
)
from .report import ResultTable

logger = logging.getLogger(__name__)


@dataclass
class SweepResult:
    """Result cells plus one summary row per setting."""

    table: ResultTable
    summary: pd.DataFrame

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.summary.to_csv(path, index=False)
        return path


def _setup(
    config: ExperimentConfig, output_dir: Optional[Union[str, Path]], progress: bool
) -> tuple[Optional[Path], PairedDataset, SplitModel]:
    out = Path(output_dir) if output_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    dataset = prepare_data(config)
    source = obtain_source_model(config, dataset, out, progress)
    return out, dataset, source


def ablate_latent_depth(
    config: ExperimentConfig,
    depths: Sequence[int],
    method: str = TransferMethod.VBKT.value,
    output_dir: Optional[Union[str, Path]] = None,
    progress: bool = False,
) -> SweepResult:
    """Train ``method`` with the latent site at each of ``depths``.

    Rows are named ``<method>@depth<d>`` with ``d`` the resolved site index;
    the summary carries each depth's latent shape and config fingerprint.

    Raises:
        ConfigurationError: If a depth is not a valid latent site
    """
    out, dataset, source = _setup(config, output_dir, progress)
    resolved = [resolve_latent_depth(source, d) for d in depths]
    transfer = config.transfer.variant(method)

    cells = [
        CellSpec(
            name=f"{transfer.key}@depth{d}", transfer=transfer, device=device, trial=trial, depth=d
        )
        for d in resolved
        for device in config.devices
        for trial in range(config.trials)
    ]
    results = run_cells(config, dataset, source, cells, out, config.workers, progress)
    table = ResultTable.from_records(
        (r.row() for r in results),
        {f"{transfer.key}@depth{d}": f"{transfer.label} (depth {d})" for d in resolved},
    )
    means = table.grand_mean()

    rows = []
    for d in resolved:
        shape = source.clone(d).latent_site.shape
        depth_config = replace(config, model=replace(config.model, latent_depth=d))
        rows.append(
            {
                "depth": d,
                "latent_shape": "x".join(str(s) for s in shape),
                "mean_accuracy": float(means[f"{transfer.key}@depth{d}"]),
                "config_fingerprint": depth_config.fingerprint(),
            }
        )
        logger.info(
            "depth %d (%s): mean accuracy %.4f",
            d,
            rows[-1]["latent_shape"],
            rows[-1]["mean_accuracy"],
        )
    result = SweepResult(table=table, summary=pd.DataFrame(rows))
    if out is not None:
        table.to_csv(out / "ablation_results.csv")
        result.to_csv(out / "ablation_depth.csv")
    return result


def sweep_sigma(
    config: ExperimentConfig,
    sigmas: Sequence[float],
    output_dir: Optional[Union[str, Path]] = None,
    progress: bool = False,
) -> SweepResult:
    """Run VBKT once per ``sigma``; rows are named ``vbkt@sigma<s>``."""
    out, dataset, source = _setup(config, output_dir, progress)
    base = config.transfer.variant(TransferMethod.VBKT.value)
    variants = [(f"vbkt@sigma{s:g}", replace(base, sigma=float(s))) for s in sigmas]

    cells = [
        CellSpec(name=name, transfer=transfer, device=device, trial=trial)
        for name, transfer in variants
        for device in config.devices
        for trial in range(config.trials)
    ]
    results = run_cells(config, dataset, source, cells, out, config.workers, progress)
    table = ResultTable.from_records(
        (r.row() for r in results), {name: f"VBKT (sigma={t.sigma:g})" for name, t in variants}
    )
    means = table.grand_mean()
    summary = pd.DataFrame(
        [
            {"sigma": t.sigma, "kl_weight": kl_weight(t.sigma), "mean_accuracy": float(means[name])}
            for name, t in variants
        ]
    )
    result = SweepResult(table=table, summary=summary)
    if out is not None:
        table.to_csv(out / "sigma_results.csv")
        result.to_csv(out / "sigma_sweep.csv")
    return result
