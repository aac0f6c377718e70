import json
import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np
from pydantic import ValidationError

from ..exceptions import CheckpointError
from ..tensor import AdamState, Tensor
from .config import ModelConfig
from .model import TransformerLM
from .params import ModelParameters, parameter_shapes

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
_LENGTH = struct.Struct("<Q")
_BODY_DTYPE = np.dtype("<f4")


def write_tensor_file(path: Union[str, Path], meta: Dict[str, Any], arrays: Mapping[str, np.ndarray]):
    """Write a length-prefixed JSON header followed by little-endian float32 tensors.

    The header carries ``meta``, the format version and a manifest of
    (name, shape, byte offset) entries in body order.
    """
    manifest, offset = [], 0
    for name, array in arrays.items():
        manifest.append({"name": name, "shape": list(array.shape), "offset": offset})
        offset += int(array.size) * _BODY_DTYPE.itemsize
    header = json.dumps({"format_version": FORMAT_VERSION, **meta, "tensors": manifest}).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_LENGTH.pack(len(header)))
        f.write(header)
        for array in arrays.values():
            f.write(np.ascontiguousarray(array, dtype=_BODY_DTYPE).tobytes())


def read_tensor_file(path: Union[str, Path]) -> Tuple[Dict[str, Any], "OrderedDict[str, np.ndarray]"]:
    try:
        with open(path, "rb") as f:
            (length,) = _LENGTH.unpack(f.read(_LENGTH.size))
            header = json.loads(f.read(length).decode("utf-8"))
            body = f.read()
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: malformed header: {e}") from e

    if not isinstance(header, dict):
        raise CheckpointError(f"{path}: header is not a JSON object")
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')}")

    arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
    try:
        for entry in header["tensors"]:
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            start, end = entry["offset"], entry["offset"] + count * _BODY_DTYPE.itemsize
            if end > len(body):
                raise CheckpointError(f"{path}: tensor '{entry['name']}' runs past the end of the file")
            arrays[entry["name"]] = np.frombuffer(body[start:end], dtype=_BODY_DTYPE).reshape(entry["shape"]).astype(np.float32)
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: malformed tensor manifest: {e!r}") from e
    return header, arrays


def save_checkpoint(path: Union[str, Path], model: TransformerLM):
    write_tensor_file(path, {"config": model.config.model_dump(mode="json")}, model.params.state_dict())
    logger.info(f"Saved checkpoint: path={path}, tensors={len(model.params)}")


def load_checkpoint(path: Union[str, Path]) -> TransformerLM:
    """Rebuild a float32 model from a checkpoint written by ``save_checkpoint``."""
    header, arrays = read_tensor_file(path)
    if "config" not in header:
        raise CheckpointError(f"{path}: header has no model config")
    try:
        config = ModelConfig.model_validate(header["config"])
    except ValidationError as e:
        raise CheckpointError(f"{path}: invalid model config: {e}") from e
    expected = [name for name, _ in parameter_shapes(config)]
    if list(arrays) != expected:
        raise CheckpointError(f"{path}: tensor manifest does not match the stored model config")

    tensors: "OrderedDict[str, Tensor]" = OrderedDict(
        (name, Tensor(values, requires_grad=True, name=name)) for name, values in arrays.items()
    )
    for name, shape in parameter_shapes(config):
        if tensors[name].shape != tuple(shape):
            raise CheckpointError(f"{path}: tensor '{name}' has shape {tensors[name].shape}, expected {shape}")
    logger.info(f"Loaded checkpoint: path={path}, vocab={config.vocab_size}, softmax={config.softmax_mode}")
    return TransformerLM(config, ModelParameters(tensors))


def save_optimizer_state(path: Union[str, Path], state: AdamState):
    """Sidecar file for Adam moments, in the checkpoint manifest layout."""
    arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name in state.first_moment:
        arrays[f"m.{name}"] = state.first_moment[name]
        arrays[f"v.{name}"] = state.second_moment[name]
    write_tensor_file(path, {"optimizer": "adam", "step": state.step}, arrays)


def load_optimizer_state(path: Union[str, Path]) -> AdamState:
    header, arrays = read_tensor_file(path)
    state = AdamState(step=int(header.get("step", 0)))
    for key, values in arrays.items():
        kind, name = key.split(".", 1)
        target = state.first_moment if kind == "m" else state.second_moment
        target[name] = values.copy()
    return state
