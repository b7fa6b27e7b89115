"""Model checkpoints (.snn).

Layout, little-endian: magic "SNNC", u32 header length, a UTF-8 JSON header
(architecture, neuron parameters, geometry, format version and the shape of
every blob), then the float32 weight blobs concatenated in layer order.
"""

import json
import logging
import struct

import numpy as np

from modules import __version__
from modules.exceptions import DataError
from modules.snn_core import SnnModel

logger = logging.getLogger(__name__)

MAGIC = b"SNNC"
FORMAT_VERSION = 1
LENGTH = struct.Struct("<I")
BLOB_DTYPE = np.dtype("<f4")


def _blobs(model):
    """(index, group, name, array) for every stored array, in layer order"""
    for index, layer in enumerate(model.layers):
        for name in sorted(layer.weights):
            yield index, "weights", name, layer.weights[name]
        for name in sorted(layer.buffers):
            yield index, "buffers", name, layer.buffers[name]


def model_header(model, extra=None):
    header = {
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "architecture": model.to_spec(),
        "geometry": {"channels": model.input_shape[0], "height": model.input_shape[1],
                     "width": model.input_shape[2]},
        "blobs": [
            {"layer": index, "group": group, "name": name, "shape": list(array.shape)}
            for index, group, name, array in _blobs(model)
        ],
    }
    if extra:
        header["extra"] = extra
    return header


def save_checkpoint(model, path, extra=None):
    """Write a model checkpoint"""
    if not model.is_initialized:
        raise DataError("cannot checkpoint an uninitialized model", path=str(path))
    header = json.dumps(model_header(model, extra), sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(LENGTH.pack(len(header)))
        f.write(header)
        for _, _, _, array in _blobs(model):
            f.write(np.ascontiguousarray(array, dtype=BLOB_DTYPE).tobytes())
    logger.debug(f"Saved checkpoint {path}")


def load_checkpoint(path):
    """Rebuild a model from a checkpoint, validating every blob against the header"""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except FileNotFoundError:
        raise DataError(f"Checkpoint not found: {path}", path=str(path))

    if data[:len(MAGIC)] != MAGIC:
        raise DataError(f"Not a checkpoint file: {path}", path=str(path))
    offset = len(MAGIC)
    if len(data) < offset + LENGTH.size:
        raise DataError(f"Truncated checkpoint header in {path}", path=str(path))
    (length,) = LENGTH.unpack_from(data, offset)
    offset += LENGTH.size
    try:
        header = json.loads(data[offset:offset + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"Malformed checkpoint header in {path}: {e}", path=str(path))
    offset += length

    if header.get("format_version") != FORMAT_VERSION:
        raise DataError("Unsupported checkpoint format version",
                        path=str(path), version=header.get("format_version"))
    model = SnnModel.from_spec(header["architecture"])

    for blob in header.get("blobs", []):
        layer = model.layers[blob["layer"]]
        shape = tuple(blob["shape"])
        if blob["group"] == "weights":
            expected = layer.weight_shapes().get(blob["name"])
            if expected is None or tuple(expected) != shape:
                raise DataError("checkpoint weight shape disagrees with the architecture",
                                layer=blob["layer"], name=blob["name"], expected=expected, got=shape)
        size = int(np.prod(shape)) * BLOB_DTYPE.itemsize
        if offset + size > len(data):
            raise DataError(f"Truncated checkpoint payload in {path}", path=str(path))
        array = np.frombuffer(data, dtype=BLOB_DTYPE, count=int(np.prod(shape)), offset=offset)
        getattr(layer, blob["group"])[blob["name"]] = array.reshape(shape).astype(np.float32)
        offset += size

    if offset != len(data):
        raise DataError(f"Trailing bytes after checkpoint payload in {path}", path=str(path))
    if not model.is_initialized:
        raise DataError(f"Checkpoint {path} is missing weights", path=str(path))
    logger.info(f"Loaded {model.name} model with {model.parameter_count()} parameters from {path}")
    return model, header.get("extra", {})
