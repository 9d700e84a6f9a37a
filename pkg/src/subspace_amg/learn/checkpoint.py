"""Binary checkpoints for trained models and CSV loss histories.

Layout: 8-byte magic, little-endian u64 header length, UTF-8 JSON header,
then raw little-endian float64 blobs (parameters, Adam m, Adam v) in the
order listed in the header.
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .mlp import Adam, MlpModel

MAGIC = b"SAMGCKP1"


def corpus_digest(matrices) -> str:
    """SHA-256 over the shapes and bytes of a sequence of arrays."""
    h = hashlib.sha256()
    for M in matrices:
        M = np.ascontiguousarray(np.asarray(getattr(M, "S", M), dtype="<f8"))
        h.update(struct.pack("<QQ", *M.shape))
        h.update(M.tobytes())
    return h.hexdigest()


def save_checkpoint(path, model: MlpModel, optimizer: Adam | None = None,
                    config: dict | None = None, manifest: dict | None = None) -> None:
    names = list(model.param_shapes())
    header = {
        "widths": list(model.widths),
        "params": [[name, list(model.params[name].shape)] for name in names],
        "has_optimizer": optimizer is not None,
        "adam": None if optimizer is None else {
            "t": optimizer.t, "lr": optimizer.lr, "beta1": optimizer.beta1,
            "beta2": optimizer.beta2, "eps": optimizer.eps},
        "config": config or {},
        "manifest": manifest or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        groups = [model.params]
        if optimizer is not None:
            groups += [optimizer.m, optimizer.v]
        for group in groups:
            for name in names:
                fh.write(np.ascontiguousarray(group[name], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Return ``(model, optimizer_or_None, header)``."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack_from("<Q", data, 8)
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    offset = 16 + hlen

    def read_group():
        nonlocal offset
        out = {}
        for name, shape in header["params"]:
            count = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
            out[name] = arr.reshape(shape).astype(np.float64)
            offset += 8 * count
        return out

    model = MlpModel(header["widths"], params=read_group())
    optimizer = None
    if header["has_optimizer"]:
        a = header["adam"]
        optimizer = Adam(model.params, lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"],
                         eps=a["eps"])
        optimizer.m, optimizer.v, optimizer.t = read_group(), read_group(), int(a["t"])
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes")
    return model, optimizer, header


def write_history(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        for i, loss in enumerate(history):
            w.writerow([i, repr(float(loss))])


def read_history(path) -> list[float]:
    with open(path, newline="") as fh:
        return [float(row["loss"]) for row in csv.DictReader(fh)]
