import json
import struct

import numpy as np
import pytest

from lunet.checkpoint import MAGIC, CheckpointError, dumps, load, loads, save
from lunet.model import init_net


def test_round_trip_is_exact(tmp_path):
    net = init_net(3, 4, seed=2)
    net.layers[1].b[:] = [0.1, -0.2, 1e-300, 3.0]
    save(tmp_path / "a.lunet", net, gamma=100.0, init_seed=2)
    back, header = load(tmp_path / "a.lunet")
    assert header["gamma"] == 100.0 and header["init_seed"] == 2 and header["M"] == 3
    for la, lb in zip(net.layers, back.layers):
        for pa, pb in zip(la.params(), lb.params()):
            assert np.array_equal(pa, pb)
        assert la.act == lb.act


def test_layout_is_magic_header_then_float64_le():
    net = init_net(2, 2, seed=0)
    raw = dumps(net)
    assert raw.startswith(b"LUNET1\n")
    head_end = raw.index(b"\n", len(MAGIC))
    header = json.loads(raw[len(MAGIC):head_end])
    assert header["format_version"] == 1 and header["D"] == 2
    body = raw[head_end + 1:]
    assert len(body) == 8 * 2 * (3 + 1 + 2)
    first_u = struct.unpack("<3d", body[:24])
    assert first_u == tuple(net.layers[0].U.upper)


def test_bytes_are_deterministic():
    assert dumps(init_net(3, 5, seed=1)) == dumps(init_net(3, 5, seed=1))


def test_rejects_bad_magic():
    with pytest.raises(CheckpointError, match="magic"):
        loads(b"LUNET2\n" + dumps(init_net(2, 2))[len(MAGIC):])


def test_rejects_truncation_and_trailing_bytes():
    raw = dumps(init_net(2, 3))
    with pytest.raises(CheckpointError, match="truncated"):
        loads(raw[:-1])
    with pytest.raises(CheckpointError, match="truncated"):
        loads(raw[:len(MAGIC) + 3])
    with pytest.raises(CheckpointError, match="trailing"):
        loads(raw + b"\x00")


def test_rejects_malformed_header():
    with pytest.raises(CheckpointError):
        loads(MAGIC + b"{not json}\n")
