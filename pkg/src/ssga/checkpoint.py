"""Versioned binary checkpoint: magic string, JSON header with the full model
configuration and tensor manifest, then raw little-endian parameter blobs in
state-dict (declaration) order.
"""

import hashlib
import json
import struct

import numpy as np
import torch

from .config import SSGAConfig
from .refinement import SSGADetector

MAGIC = b"SSGA1"
VERSION = 1

_DTYPES = {"float32": np.float32, "float64": np.float64, "int64": np.int64}


def save_checkpoint(model: SSGADetector, path):
    state = model.state_dict()
    tensors = []
    blobs = []
    for name, tensor in state.items():
        array = tensor.detach().contiguous().cpu().numpy()
        dtype = str(array.dtype)
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported parameter dtype {dtype} for {name}")
        tensors.append({"name": name, "shape": list(array.shape), "dtype": dtype})
        blobs.append(array.tobytes())
    header = json.dumps({
        "version": VERSION,
        "config": model.config.to_dict(),
        "tensors": tensors,
    }).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> SSGADetector:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint (bad magic {magic!r})")
        version, header_len = struct.unpack("<HI", fh.read(6))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        config = SSGAConfig.from_dict(header["config"])
        model = SSGADetector(config)
        state = {}
        for meta in header["tensors"]:
            dtype = _DTYPES[meta["dtype"]]
            count = int(np.prod(meta["shape"])) if meta["shape"] else 1
            raw = fh.read(count * dtype().itemsize)
            array = np.frombuffer(raw, dtype=dtype).reshape(meta["shape"]).copy()
            state[meta["name"]] = torch.from_numpy(array)
        model.load_state_dict(state)
    return model


def weight_checksum(model: torch.nn.Module) -> str:
    """SHA-256 over all parameters and buffers, in declaration order."""
    digest = hashlib.sha256()
    for name, tensor in model.state_dict().items():
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().contiguous().cpu().numpy().tobytes())
    return digest.hexdigest()
