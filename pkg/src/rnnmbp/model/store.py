"""Single-file tensor container: JSON header followed by raw little-endian data.

Layout::

    8 bytes   magic  b"MBPSTORE"
    8 bytes   header length (little-endian uint64)
    N bytes   UTF-8 JSON header
    ...       tensor bytes, concatenated in header order

The header holds ``format_version``, an optional ``model_config``, a
``tensors`` table mapping name to ``{shape, dtype, offset, nbytes}`` (offsets
relative to the start of the data block) and a free ``extra`` mapping for
checkpoint metadata.
"""
import json
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np
import torch

MAGIC = b"MBPSTORE"
FORMAT_VERSION = 1
_DTYPES = {torch.float32: "<f4", torch.float64: "<f8", torch.int64: "<i8"}
_TORCH = {v: k for k, v in _DTYPES.items()}


def save_store(path, tensors: Mapping[str, torch.Tensor], model_config: Optional[dict] = None,
               extra: Optional[dict[str, Any]] = None, dtype=torch.float32):
    """Write ``tensors`` to ``path``.

    Floating tensors are stored as ``dtype`` (float32 by default); integer
    tensors keep int64.
    """
    table = OrderedDict()
    blobs = []
    offset = 0
    for name, t in tensors.items():
        t = t.detach().cpu()
        if t.is_floating_point():
            t = t.to(dtype)
        code = _DTYPES.get(t.dtype)
        if code is None:
            raise TypeError(f"tensor {name!r} has unsupported dtype {t.dtype}")
        raw = np.ascontiguousarray(t.numpy(), dtype=np.dtype(code)).tobytes()
        table[name] = {"shape": list(t.shape), "dtype": code, "offset": offset, "nbytes": len(raw)}
        blobs.append(raw)
        offset += len(raw)
    header = {"format_version": FORMAT_VERSION, "model_config": model_config,
              "tensors": table, "extra": extra or {}}
    head = json.dumps(header).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)
    tmp.replace(path)


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh, path)


def _read_header(fh, path):
    magic = fh.read(len(MAGIC))
    if magic != MAGIC:
        raise ValueError(f"{path} is not a parameter store (bad magic)")
    size = fh.read(8)
    if len(size) != 8:
        raise ValueError(f"{path} is truncated (no header length)")
    (n,) = struct.unpack("<Q", size)
    try:
        header = json.loads(fh.read(n).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path} has a corrupt header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {header.get('format_version')}")
    return header


def load_store(path) -> tuple["OrderedDict[str, torch.Tensor]", dict]:
    """Return ``(tensors, header)``."""
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        data = fh.read()
    tensors = OrderedDict()
    for name, entry in header["tensors"].items():
        start = entry["offset"]
        if start + entry["nbytes"] > len(data):
            raise ValueError(f"{path} is truncated: tensor {name!r} extends past the end of the file")
        arr = np.frombuffer(data, dtype=np.dtype(entry["dtype"]), count=int(np.prod(entry["shape"], dtype=np.int64)),
                            offset=start).reshape(entry["shape"])
        tensors[name] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="), copy=True)).to(_TORCH[entry["dtype"]])
    return tensors, header
