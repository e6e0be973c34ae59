"""Binary checkpoint format.

Layout: the magic ``b"LUNET1\\n"``, one JSON header line, then for every layer
the packed U, packed strict-lower L and b as little-endian float64, no padding.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .activation import from_spec, to_spec, LeakySoftplus
from .model import LULayer, LUNet
from .trilinalg import UnitLowerTriangular, UpperTriangular

MAGIC = b"LUNET1\n"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def _header(net: LUNet, gamma: float, init_seed: int) -> dict:
    alpha = next((l.act.alpha for l in net.layers if isinstance(l.act, LeakySoftplus)), None)
    return {
        "format_version": FORMAT_VERSION,
        "M": net.depth,
        "D": net.dim,
        "alpha": alpha,
        "gamma": gamma,
        "init_seed": init_seed,
        "activations": [to_spec(l.act) for l in net.layers],
    }


def dumps(net: LUNet, gamma: float = 1.0, init_seed: int = 0) -> bytes:
    head = json.dumps(_header(net, gamma, init_seed), sort_keys=True, separators=(",", ":"))
    parts = [MAGIC, head.encode("ascii"), b"\n"]
    for layer in net.layers:
        for p in layer.params():
            parts.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(raw: bytes) -> tuple[LUNet, dict]:
    if not raw.startswith(MAGIC):
        raise CheckpointError("bad magic: not an LU-Net checkpoint")
    end = raw.find(b"\n", len(MAGIC))
    if end < 0:
        raise CheckpointError("truncated checkpoint: header line is incomplete")
    try:
        header = json.loads(raw[len(MAGIC):end].decode("ascii"))
        m, d = int(header["M"]), int(header["D"])
        kinds = [from_spec(s) for s in header["activations"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format_version {header.get('format_version')}")
    if len(kinds) != m:
        raise CheckpointError("activation list does not match M")
    sizes = (d * (d + 1) // 2, d * (d - 1) // 2, d)
    body = raw[end + 1:]
    need = 8 * m * sum(sizes)
    if len(body) < need:
        raise CheckpointError(f"truncated checkpoint: {len(body)} of {need} payload bytes")
    if len(body) > need:
        raise CheckpointError(f"{len(body) - need} trailing bytes after the last layer")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    layers, pos = [], 0
    for kind in kinds:
        u, l, b = (values[pos:pos + sizes[0]], values[pos + sizes[0]:pos + sizes[0] + sizes[1]],
                   values[pos + sizes[0] + sizes[1]:pos + sum(sizes)])
        pos += sum(sizes)
        layers.append(LULayer(UpperTriangular(d, u.copy()), UnitLowerTriangular(d, l.copy()), b.copy(), kind))
    return LUNet(layers), header


def save(path, net: LUNet, gamma: float = 1.0, init_seed: int = 0) -> None:
    Path(path).write_bytes(dumps(net, gamma, init_seed))


def load(path) -> tuple[LUNet, dict]:
    return loads(Path(path).read_bytes())
