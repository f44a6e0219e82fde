"""
Model checkpoints.

Layout (little-endian): magic ``SSAC``, u32 version, u64 header length, a
UTF-8 JSON header, then the raw float64 payload of every tensor listed in
the header (parameters, batch-norm buffers, Adam moments) back to back.
The header carries both configs, the sha256 of the model architecture, the
epoch, the loss log and the training RNG state, so a run can resume exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .errors import FormatError, IncompatibleCheckpointError, TruncatedFileError
from .model import Model, ModelConfig, build_model

MAGIC = b"SSAC"
VERSION = 1


def config_hash(model_config):
    blob = json.dumps(asdict(model_config), sort_keys=True, default=list).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class Checkpoint:
    model: Model
    train_config: object
    epoch: int
    loss_log: list
    optimizers: dict
    rng_state: dict


def checkpoint_save(path, model, train_config, trainer=None, epoch=0, loss_log=()):
    tensors = []
    for name, p in model.parameters().items():
        tensors.append((f"param:{name}", p.data))
    for name, arr in model.buffers().items():
        tensors.append((f"buffer:{name}", arr))
    optimizers = {}
    rng_state = None
    if trainer is not None:
        for key, opt in (("gen", trainer.opt_g), ("disc", trainer.opt_d)):
            st = opt.state_dict()
            optimizers[key] = {k: st[k] for k in ("t", "lr", "beta1", "beta2", "eps")}
            for name in opt.params:
                tensors.append((f"adam:{key}:m:{name}", st["m"][name]))
                tensors.append((f"adam:{key}:v:{name}", st["v"][name]))
        rng_state = trainer.rng.bit_generator.state
    index = []
    offset = 0
    for name, arr in tensors:
        arr = np.asarray(arr, dtype="<f8")
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "model_config": asdict(model.config),
        "config_hash": config_hash(model.config),
        "train_config": asdict(train_config) if train_config is not None else None,
        "seed": model.seed,
        "extra": model.extra,
        "epoch": int(epoch),
        "loss_log": [list(r) for r in loss_log],
        "optimizers": optimizers,
        "rng_state": rng_state,
        "tensors": index,
    }
    blob = json.dumps(header, default=_json_default).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<IQ", VERSION, len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def _tuples(d):
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def checkpoint_load(path, expected=None):
    """Load a checkpoint; ``expected`` (a ModelConfig) must match its architecture."""
    from .training import TrainConfig

    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise TruncatedFileError("checkpoint header truncated", path, len(raw))
    if raw[:4] != MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}", path, 0)
    version, hlen = struct.unpack_from("<IQ", raw, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", path, 4)
    if len(raw) < 16 + hlen:
        raise TruncatedFileError("checkpoint header truncated", path, len(raw))
    try:
        header = json.loads(raw[16:16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint header ({exc})", path, 16) from None
    cfg = ModelConfig(**_tuples(header["model_config"]))
    if config_hash(cfg) != header["config_hash"]:
        raise IncompatibleCheckpointError(f"{path}: stored config hash does not match its config")
    if expected is not None and config_hash(expected) != header["config_hash"]:
        want = _tuples(asdict(expected))
        diff = {k: (v, want[k]) for k, v in asdict(cfg).items() if v != want[k]}
        raise IncompatibleCheckpointError(f"{path}: checkpoint architecture differs: {diff}")

    body = 16 + hlen
    arrays = {}
    for entry in header["tensors"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        start = body + entry["offset"]
        if start + 8 * n > len(raw):
            raise TruncatedFileError(f"tensor {entry['name']} runs past end of file", path, len(raw))
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8", count=n, offset=start).reshape(
            entry["shape"]).astype(np.float64)

    model = build_model(cfg, header["seed"])
    model.extra = dict(header.get("extra") or {})
    for name, p in model.parameters().items():
        key = f"param:{name}"
        if key not in arrays:
            raise IncompatibleCheckpointError(f"{path}: missing parameter {name}")
        p.data[...] = arrays[key]
    model.load_buffers({k[len("buffer:"):]: v for k, v in arrays.items() if k.startswith("buffer:")})

    optimizers = {}
    for key, scalars in header["optimizers"].items():
        st = dict(scalars)
        st["m"] = {k.split(":", 3)[3]: v for k, v in arrays.items() if k.startswith(f"adam:{key}:m:")}
        st["v"] = {k.split(":", 3)[3]: v for k, v in arrays.items() if k.startswith(f"adam:{key}:v:")}
        optimizers[key] = st
    tc = header.get("train_config")
    train_config = TrainConfig(**_tuples(tc)) if tc is not None else None
    return Checkpoint(model=model, train_config=train_config, epoch=header["epoch"],
                      loss_log=[tuple(r) for r in header["loss_log"]], optimizers=optimizers,
                      rng_state=header["rng_state"])
