"""Binary model checkpoints.

Layout (all little-endian)::

    b"LTK1" | u32 layer count | u32 format version
    u8 input rank | u32 dims... | i32 latent depth | i64 seed
    per layer:
        u8 kind tag | i32 units, kernel, stride, padding | f64 epsilon, momentum
        u8 array count
        per array: u8 name length | name | u8 rank | u32 dims... | f64 values
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from ..errors import ArtifactError
from .layers import LayerKind, LayerSpec
from .model import SplitModel

MAGIC = b"LTK1"
FORMAT_VERSION = 1


def _write(handle: BinaryIO, fmt: str, *values: object) -> None:
    handle.write(struct.pack("<" + fmt, *values))


def _read(handle: BinaryIO, fmt: str) -> tuple:
    size = struct.calcsize("<" + fmt)
    chunk = handle.read(size)
    if len(chunk) != size:
        raise ArtifactError("checkpoint is truncated")
    return struct.unpack("<" + fmt, chunk)


def save_checkpoint(model: SplitModel, path: Union[str, Path]) -> Path:
    """Write ``model`` to ``path``; parameters round-trip bit-identically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        handle.write(MAGIC)
        _write(handle, "II", len(model.layers), FORMAT_VERSION)
        _write(handle, "B", len(model.input_shape))
        _write(handle, f"{len(model.input_shape)}I", *model.input_shape)
        _write(handle, "iq", model.latent_site.depth, model.seed)
        for layer in model.layers:
            spec = layer.spec
            _write(handle, "B", spec.kind.tag)
            _write(handle, "iiii", spec.units, spec.kernel_size, spec.stride, spec.padding)
            _write(handle, "dd", spec.epsilon, spec.momentum)
            arrays = layer.state_arrays()
            _write(handle, "B", len(arrays))
            for name, array in arrays.items():
                encoded = name.encode("ascii")
                _write(handle, "B", len(encoded))
                handle.write(encoded)
                _write(handle, "B", array.ndim)
                _write(handle, f"{array.ndim}I", *array.shape)
                handle.write(np.ascontiguousarray(array, dtype="<f8").tobytes())
    return path


def load_checkpoint(path: Union[str, Path]) -> SplitModel:
    """Rebuild a model saved by ``save_checkpoint``.

    Raises:
        ArtifactError: If the file is missing, truncated or not a checkpoint
    """
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"checkpoint not found: {path}")
    with path.open("rb") as handle:
        if handle.read(4) != MAGIC:
            raise ArtifactError(f"{path} is not an LTK1 checkpoint")
        layer_count, version = _read(handle, "II")
        if version != FORMAT_VERSION:
            raise ArtifactError(f"{path} has unsupported checkpoint version {version}")
        (rank,) = _read(handle, "B")
        input_shape = _read(handle, f"{rank}I")
        depth, seed = _read(handle, "iq")

        specs: list[LayerSpec] = []
        states: list[dict[str, np.ndarray]] = []
        for _ in range(layer_count):
            (tag,) = _read(handle, "B")
            units, kernel, stride, padding = _read(handle, "iiii")
            epsilon, momentum = _read(handle, "dd")
            specs.append(
                LayerSpec(
                    LayerKind.from_tag(tag), units, kernel, stride, padding, epsilon, momentum
                )
            )
            (count,) = _read(handle, "B")
            arrays = {}
            for _ in range(count):
                (length,) = _read(handle, "B")
                name = handle.read(length).decode("ascii")
                (ndim,) = _read(handle, "B")
                shape = _read(handle, f"{ndim}I") if ndim else ()
                nbytes = 8 * int(np.prod(shape))
                raw = handle.read(nbytes)
                if len(raw) != nbytes:
                    raise ArtifactError(f"{path} is truncated in array '{name}'")
                arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
            states.append(arrays)

    model = SplitModel(specs, tuple(input_shape), depth, seed)
    model.load_state_arrays(states)
    return model
