"""Dataset files.

Binary layout (all little-endian)::

    b"LTKD" | u32 format version | u32 classes | u8 rank | u32 dims...
    u32 record count
    per record:
        i64 sample id | u32 label | u8 split (0 train, 1 test)
        u8 device length | device | f32 features (C*H*W values)

The pairing manifest is a tab-separated text file with the header
``source_id<TAB>target_id<TAB>device``.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, Iterator, Union

import numpy as np
import pandas as pd

from ..errors import ArtifactError
from .dataset import PairedDataset
from .scenes import SOURCE_DEVICE, SceneSample

MAGIC = b"LTKD"
FORMAT_VERSION = 1
MANIFEST_COLUMNS = ["source_id", "target_id", "device"]

_TRAIN, _TEST = 0, 1


def _write(handle: BinaryIO, fmt: str, *values: object) -> None:
    handle.write(struct.pack("<" + fmt, *values))


def _read(handle: BinaryIO, fmt: str, path: Path) -> tuple:
    size = struct.calcsize("<" + fmt)
    chunk = handle.read(size)
    if len(chunk) != size:
        raise ArtifactError(f"dataset file {path} is truncated")
    return struct.unpack("<" + fmt, chunk)


def _records(dataset: PairedDataset) -> Iterator[tuple[int, SceneSample]]:
    yield from ((_TRAIN, s) for s in dataset.source)
    yield from ((_TEST, s) for s in dataset.source_test)
    for device in dataset.devices:
        yield from ((_TRAIN, s) for s in dataset.targets[device])
        yield from ((_TEST, s) for s in dataset.target_tests[device])


def pairing_frame(dataset: PairedDataset) -> pd.DataFrame:
    rows = [
        (source_id, target_id, device)
        for device, pairs in dataset.pairing.items()
        for target_id, source_id in pairs.items()
    ]
    return pd.DataFrame(rows, columns=MANIFEST_COLUMNS)


def save_dataset(dataset: PairedDataset, path: Union[str, Path]) -> tuple[Path, Path]:
    """Write the dataset file and its pairing manifest (``<path>.pairs.tsv``).

    Features are stored as float32.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = list(_records(dataset))
    with path.open("wb") as handle:
        handle.write(MAGIC)
        _write(handle, "II", FORMAT_VERSION, dataset.num_classes)
        _write(handle, "B", len(dataset.shape))
        _write(handle, f"{len(dataset.shape)}I", *dataset.shape)
        _write(handle, "I", len(records))
        for split, sample in records:
            device = sample.device_id.encode("ascii")
            _write(handle, "qIBB", sample.sample_id, sample.label, split, len(device))
            handle.write(device)
            handle.write(np.ascontiguousarray(sample.features, dtype="<f4").tobytes())

    manifest = path.with_name(path.name + ".pairs.tsv")
    pairing_frame(dataset).to_csv(manifest, sep="\t", index=False)
    return path, manifest


def load_dataset(path: Union[str, Path]) -> PairedDataset:
    """Read a dataset written by ``save_dataset``.

    Device profiles are not stored; the returned dataset has none.

    Raises:
        ArtifactError: If the dataset file or manifest is missing or corrupt
    """
    path = Path(path)
    manifest = path.with_name(path.name + ".pairs.tsv")
    for required in (path, manifest):
        if not required.is_file():
            raise ArtifactError(f"dataset file not found: {required}")

    source: list[SceneSample] = []
    source_test: list[SceneSample] = []
    targets: dict[str, list[SceneSample]] = {}
    target_tests: dict[str, list[SceneSample]] = {}
    with path.open("rb") as handle:
        if handle.read(4) != MAGIC:
            raise ArtifactError(f"{path} is not an LTKD dataset file")
        version, num_classes = _read(handle, "II", path)
        if version != FORMAT_VERSION:
            raise ArtifactError(f"{path} has unsupported dataset version {version}")
        (rank,) = _read(handle, "B", path)
        shape = tuple(_read(handle, f"{rank}I", path))
        (count,) = _read(handle, "I", path)
        nbytes = 4 * int(np.prod(shape))
        for _ in range(count):
            sample_id, label, split, length = _read(handle, "qIBB", path)
            device = handle.read(length).decode("ascii")
            raw = handle.read(nbytes)
            if len(raw) != nbytes:
                raise ArtifactError(f"{path} is truncated in sample {sample_id}")
            features = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
            sample = SceneSample(
                features=features, label=int(label), sample_id=int(sample_id), device_id=device
            )
            if device == SOURCE_DEVICE:
                (source if split == _TRAIN else source_test).append(sample)
            else:
                bucket = targets if split == _TRAIN else target_tests
                bucket.setdefault(device, []).append(sample)

    try:
        dtypes = {"source_id": "int64", "target_id": "int64", "device": str}
        frame = pd.read_csv(manifest, sep="\t", dtype=dtypes)
    except (ValueError, pd.errors.ParserError) as exc:
        raise ArtifactError(f"pairing manifest {manifest} is malformed: {exc}") from exc
    if list(frame.columns) != MANIFEST_COLUMNS:
        raise ArtifactError(f"pairing manifest {manifest} must have columns {MANIFEST_COLUMNS}")
    pairing: dict[str, dict[int, int]] = {device: {} for device in targets}
    for row in frame.itertuples(index=False):
        pairing.setdefault(row.device, {})[int(row.target_id)] = int(row.source_id)

    return PairedDataset(
        source=source,
        source_test=source_test,
        targets=targets,
        target_tests={device: target_tests.get(device, []) for device in targets},
        pairing=pairing,
        profiles={},
        num_classes=int(num_classes),
        shape=shape,
    )
