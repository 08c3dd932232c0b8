#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Binary checkpoint format (see docs/FORMATS.md):

    magic         8 bytes   b"HGRDCKPT"
    version       uint32 LE
    header_len    uint32 LE
    header        header_len bytes of canonical UTF-8 JSON:
                  {"format_version", "config", "vocabulary", "parameters": [{"name", "shape"}]}
    blobs         float64 LE arrays, C order, in header order
"""
import json
import struct

import numpy as np

from headguard.autodiff.tensor import Tensor
from headguard.model.encoder import (
    ClassifierModel,
    ModelConfig,
    ModelConfigError,
    parameter_shapes,
)
from headguard.model.tokenizer import Vocabulary
from headguard.utils import atomic_write, canonical_json

MAGIC = b"HGRDCKPT"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")
_FLOAT = np.dtype("<f8")


class CheckpointFormatError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def dump_model(model):
    names = [name for name, _ in parameter_shapes(model.config)]
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "vocabulary": model.vocab.to_list(),
        "parameters": [
            {"name": name, "shape": list(model.params[name].shape)} for name in names
        ],
    }
    header_bytes = canonical_json(header).encode("utf8")
    chunks = [MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(header_bytes)), header_bytes]
    for name in names:
        chunks.append(np.ascontiguousarray(model.params[name].data, dtype=_FLOAT).tobytes())
    return b"".join(chunks)


def save_model(model, path):
    return atomic_write(path, dump_model(model), mode="wb")


def _read(raw, offset, size, what):
    if offset + size > len(raw):
        raise CheckpointFormatError(
            f"Truncated checkpoint while reading {what}: need {size} bytes, "
            f"{len(raw) - offset} left",
            offset,
        )
    return raw[offset : offset + size], offset + size


def parse_model(raw):
    offset = 0
    magic, offset = _read(raw, offset, len(MAGIC), "magic")
    if magic != MAGIC:
        raise CheckpointFormatError(f"Bad magic bytes {magic!r}", 0)

    chunk, offset = _read(raw, offset, _U32.size, "format version")
    (version,) = _U32.unpack(chunk)
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"Unsupported checkpoint version {version}, expected {FORMAT_VERSION}",
            offset - _U32.size,
        )

    chunk, offset = _read(raw, offset, _U32.size, "header length")
    (header_len,) = _U32.unpack(chunk)
    header_start = offset
    chunk, offset = _read(raw, offset, header_len, "header")
    try:
        header = json.loads(chunk.decode("utf8"))
        config = ModelConfig.from_dict(header["config"])
        vocab = Vocabulary(header["vocabulary"])
        manifest = header["parameters"]
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointFormatError(f"Invalid checkpoint header: {e}", header_start)

    params = {}
    for entry in manifest:
        name, shape = entry["name"], tuple(entry["shape"])
        size = int(np.prod(shape, dtype=np.int64)) * _FLOAT.itemsize
        start = offset
        chunk, offset = _read(raw, offset, size, f"parameter {name}")
        data = np.frombuffer(chunk, dtype=_FLOAT).reshape(shape).astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise CheckpointFormatError(f"Non-finite values in parameter {name}", start)
        params[name] = Tensor(data, requires_grad=True, name=name)

    if offset != len(raw):
        raise CheckpointFormatError(
            f"{len(raw) - offset} unexpected trailing bytes", offset
        )

    try:
        return ClassifierModel(config, vocab, params)
    except ModelConfigError as e:
        raise CheckpointFormatError(str(e), header_start)


def load_model(path):
    with open(path, "rb") as f:
        return parse_model(f.read())
