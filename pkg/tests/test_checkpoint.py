import struct

import numpy as np
import pytest

from tribranch import ConvSpec, FpConvLayer, ThreeBranchLayer
from tribranch.checkpoint import parse_bmc, parse_fpw, serialize_bmc, serialize_fpw
from tribranch.errors import FormatError
from tribranch.layer import compress_stack, make_toy_teacher


def _f32_round(layers):
    """Layers whose reals are exactly representable in float32."""
    return [FpConvLayer(l.weight.astype(np.float32), l.bias.astype(np.float32), l.conv) for l in layers]


def _stack(seed=0):
    rng = np.random.default_rng(seed)
    return _f32_round(
        [
            *make_toy_teacher(seed, channels=(3, 5)).layers,
            FpConvLayer(rng.standard_normal((4, 70)), rng.standard_normal(4)),
        ]
    )


def test_fpw_round_trip():
    layers = _stack()
    data = serialize_fpw(layers)
    parsed = parse_fpw(data)
    assert serialize_fpw(parsed) == data
    for a, b in zip(layers, parsed):
        assert np.array_equal(a.weight, b.weight) and np.array_equal(a.bias, b.bias) and a.conv == b.conv


def test_fpw_layout_by_hand():
    layer = FpConvLayer(np.array([[1.0, 2.0, 3.0, 4.0]]), [0.5], ConvSpec(2, 2, 1, 1))
    expected = b"FPW0" + struct.pack("<IBII4B", 1, 1, 4, 1, 2, 2, 1, 1) + struct.pack("<5f", 1, 2, 3, 4, 0.5)
    assert serialize_fpw([layer]) == expected


def test_bmc_round_trip():
    layers, _ = compress_stack(_stack(1), rank=2)
    data = serialize_bmc(layers)
    parsed = parse_bmc(data)
    assert serialize_bmc(parsed) == data
    assert [type(l) for l in parsed] == [type(l) for l in layers]
    for a, b in zip(layers, parsed):
        if isinstance(a, ThreeBranchLayer):
            assert a.bmb.packed == b.bmb.packed
            assert np.array_equal(a.smb.rows, b.smb.rows) and np.array_equal(a.smb.cols, b.smb.cols)
            assert np.array_equal(a.smb.values.astype(np.float32), b.smb.values)
            assert b.bmb.latent is None


def test_bmc_layout_by_hand():
    layers, _ = compress_stack([FpConvLayer(np.array([[0.0, 0.0], [0.0, 0.0]]), [0.0, 0.0])], rank=1, sparsity_mult=0)
    data = serialize_bmc(layers)
    # magic, count, kind 0, m, n, r, B (2x1), A (1x2), k, packed (2 rows x 1 word), k_vec (2)
    assert data[:4] == b"BMC1"
    assert struct.unpack_from("<IBIII", data, 4) == (1, 0, 2, 2, 1)
    off = 4 + 4 + 1 + 12 + 4 * 4
    assert struct.unpack_from("<I", data, off) == (0,)
    assert struct.unpack_from("<2Q", data, off + 4) == (0b11, 0b11)
    assert len(data) == off + 4 + 16 + 8


@pytest.mark.parametrize("parse,good", [(parse_fpw, "fpw"), (parse_bmc, "bmc")])
def test_bad_magic(parse, good):
    with pytest.raises(FormatError) as exc:
        parse(b"XXXX\x00\x00\x00\x00")
    assert exc.value.offset == 0


@pytest.mark.parametrize("cut", [2, 7, 20, -1])
def test_truncation_reports_offset(cut):
    data = serialize_fpw(_stack())
    with pytest.raises(FormatError) as exc:
        parse_fpw(data[:cut])
    assert exc.value.offset is not None and 0 <= exc.value.offset <= len(data)
    assert "offset" in str(exc.value)


def test_bmc_truncation_and_trailing():
    layers, _ = compress_stack(_stack(), rank=2)
    data = serialize_bmc(layers)
    for cut in (10, len(data) // 2, len(data) - 1):
        with pytest.raises(FormatError):
            parse_bmc(data[:cut])
    with pytest.raises(FormatError) as exc:
        parse_bmc(data + b"\x00")
    assert exc.value.offset == len(data)


def test_unknown_kind():
    with pytest.raises(FormatError) as exc:
        parse_fpw(b"FPW0" + struct.pack("<IB", 1, 9))
    assert exc.value.offset == 8


def test_dirty_padding_rejected():
    layers, _ = compress_stack([FpConvLayer(-np.ones((1, 3)), [0.0])], rank=1, sparsity_mult=0)
    data = bytearray(serialize_bmc(layers))
    word_at = 4 + 4 + 1 + 8 + 4 + 3 * 4 + 4 + 4
    data[word_at] |= 0x80
    with pytest.raises(FormatError):
        parse_bmc(bytes(data))
