"""Result tables: per-device accuracy per method, averaged over trials."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

import pandas as pd

from ..errors import ArtifactError, ValidationError

RESULT_COLUMNS = ["method", "device", "trial", "accuracy"]
SOURCE_COLUMNS = ["device", "accuracy"]


@dataclass
class ResultTable:
    """Raw ``(method, device, trial, accuracy)`` cells plus their aggregates.

    The grand mean of a method is the plain mean of its cells.
    """

    cells: pd.DataFrame = field(repr=False)
    labels: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        missing = [c for c in RESULT_COLUMNS if c not in self.cells.columns]
        if missing:
            raise ValidationError(f"result table is missing columns {missing}")
        cells = self.cells[RESULT_COLUMNS].copy()
        cells["trial"] = cells["trial"].astype(int)
        cells["accuracy"] = cells["accuracy"].astype(float)
        cells = cells.sort_values(["method", "device", "trial"], kind="mergesort")
        self.cells = cells.reset_index(drop=True)
        if self.cells.duplicated(["method", "device", "trial"]).any():
            raise ValidationError("result table has duplicate (method, device, trial) cells")

    @classmethod
    def from_records(
        cls, records: Iterable[Mapping[str, object]], labels: Optional[dict[str, str]] = None
    ) -> "ResultTable":
        return cls(pd.DataFrame(list(records), columns=RESULT_COLUMNS), labels or {})

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "ResultTable":
        path = Path(path)
        if not path.is_file():
            raise ArtifactError(f"results file not found: {path}")
        return cls(pd.read_csv(path, dtype={"method": str, "device": str}))

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def methods(self) -> list[str]:
        return list(dict.fromkeys(self.cells["method"]))

    @property
    def devices(self) -> list[str]:
        return list(dict.fromkeys(self.cells["device"]))

    def per_device(self) -> pd.DataFrame:
        """Mean accuracy over trials: methods as rows, devices as columns."""
        return self.cells.pivot_table(
            index="method", columns="device", values="accuracy", aggfunc="mean", sort=False
        )

    def per_device_std(self) -> pd.DataFrame:
        """Population standard deviation over trials."""
        return self.cells.pivot_table(
            index="method",
            columns="device",
            values="accuracy",
            aggfunc=lambda v: v.std(ddof=0),
            sort=False,
        )

    def grand_mean(self) -> pd.Series:
        return self.cells.groupby("method", sort=False)["accuracy"].mean()

    def summary(self) -> pd.DataFrame:
        table = self.per_device()
        table["mean"] = self.grand_mean()
        return table

    def merge(self, other: "ResultTable") -> "ResultTable":
        cells = pd.concat([self.cells, other.cells], ignore_index=True)
        return ResultTable(cells, {**self.labels, **other.labels})

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Write the sorted cells under the header ``method,device,trial,accuracy``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.cells.to_csv(path, index=False)
        return path

    def to_markdown(self, source_row: Optional[pd.Series] = None, digits: int = 2) -> str:
        """Percent accuracies per device plus the mean column.

        ``source_row`` (device -> accuracy) is rendered first as the frozen
        source model row.
        """
        summary = self.summary()
        columns = [*summary.columns]
        header = "| Method | " + " | ".join(columns) + " |"
        rule = "|---|" + "---:|" * len(columns)
        lines = [header, rule]

        def fmt(value: object) -> str:
            return "-" if pd.isna(value) else f"{100 * float(value):.{digits}f}"

        if source_row is not None:
            source_mean = source_row.reindex([c for c in columns if c != "mean"]).mean()
            cells = [fmt(source_row.get(c)) if c != "mean" else fmt(source_mean) for c in columns]
            lines.append("| Source model | " + " | ".join(cells) + " |")
        for method, row in summary.iterrows():
            label = self.labels.get(str(method), str(method))
            lines.append(f"| {label} | " + " | ".join(fmt(row[c]) for c in columns) + " |")
        return "\n".join(lines) + "\n"


def write_source_rows(rows: Mapping[str, float], path: Union[str, Path]) -> Path:
    """Write the frozen source model's accuracy per evaluation set."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(list(rows.items()), columns=SOURCE_COLUMNS).to_csv(path, index=False)
    return path


def read_source_rows(path: Union[str, Path]) -> pd.Series:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"source model results not found: {path}")
    frame = pd.read_csv(path, dtype={"device": str})
    return frame.set_index("device")["accuracy"]
