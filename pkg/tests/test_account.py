from fractions import Fraction

import numpy as np
import pytest

from tribranch import ConvSpec, FpConvLayer, LrmbParams, SmbParams, ToyModel
from tribranch import branch_freq_proportion, cost_report, psnr
from tribranch.account import CostReport, high_pass, layer_cost
from tribranch.data import textures
from tribranch.errors import ShapeError, UnsupportedLayerError
from tribranch.layer import compress_model, compress_stack, make_toy_teacher


def _fp(rng, c_in, c_out, conv):
    return FpConvLayer(rng.standard_normal((c_out, c_in * conv.window)), rng.standard_normal(c_out), conv)


def _hand_total(params_fp, params_bin, ops_fp, ops_bin):
    return params_fp + Fraction(params_bin, 32), ops_fp + Fraction(ops_bin, 64)


def test_single_linear_layer_1344(rng):
    fp = FpConvLayer(rng.standard_normal((64, 64)), np.zeros(64))
    (layer,), _ = compress_stack([fp], rank=8, sparsity_mult=2)
    assert layer.smb.k == 128
    cost = CostReport.from_layers([layer_cost(layer, tokens=10)])
    assert cost.params_total == 4096 / 32 + 64 * 8 * 2 + 128 + 64 == 1344


def test_toy_default_topology():
    student, _ = compress_model(make_toy_teacher(0))
    rep = cost_report(student)
    # head 27->3 and tail 288->3 (tail at 256x256), body 27->32, 288->32, 288->32
    # with r=8 and k = 2*max(m, n) = 64, 576, 576; 4096 LR tokens.
    params_fp = (27 * 3 + 3) + (8 * (27 + 32) + 64 + 32) + 2 * (8 * (288 + 32) + 576 + 32) + (288 * 3 + 3)
    params_bin = 27 * 32 + 2 * 288 * 32
    ops_fp = (
        4096 * 27 * 3
        + 4096 * (8 * 59 + 64 + 2 * 32)
        + 2 * 4096 * (8 * 320 + 576 + 2 * 32)
        + 65536 * 288 * 3
    )
    ops_bin = 4096 * (27 * 32 + 2 * 288 * 32)
    assert (rep.params_fp, rep.params_bin, rep.ops_fp, rep.ops_bin) == (params_fp, params_bin, ops_fp, ops_bin)
    assert (rep.params_total, rep.ops_total) == _hand_total(params_fp, params_bin, ops_fp, ops_bin)
    assert (rep.params_total, rep.ops_total) == (8458, 86861824)


def test_zero_binarized_layers(rng):
    model = ToyModel(_fp(rng, 3, 3, ConvSpec(1, 1)), [], _fp(rng, 3, 3, ConvSpec(3, 3, 1)), upsample=2)
    rep = cost_report(model, (3, 8, 8))
    assert rep.params_bin == 0 and rep.ops_bin == 0
    assert rep.params_total == (9 + 3) + (27 * 3 + 3)
    assert rep.ops_total == 64 * 9 + 256 * 81


def test_shrinking_conv_topology(rng):
    layers = [_fp(rng, 3, 8, ConvSpec(3, 3, 1)), _fp(rng, 8, 8, ConvSpec(3, 3, 0)), _fp(rng, 8, 3, ConvSpec(1, 1))]
    compressed, _ = compress_stack(layers, rank=2, sparsity_mult=1)
    rep = cost_report(ToyModel.from_layers(compressed, upsample=2), (3, 10, 10))
    # head: 100 tokens, body (pad 0): 64 tokens, m=72 n=8 k=72, tail: 16x16 = 256 tokens
    assert rep.params_total == 224 + (2 * 80 + 72 + 8) + 27 + Fraction(576, 32) == 509
    assert rep.ops_total == 100 * 216 + 64 * (2 * 80 + 72 + 16) + 256 * 24 + Fraction(64 * 576, 64) == 44192
    assert [l.tokens for l in rep.layers] == [100, 64, 256]


def test_batch_doubles_ops():
    student, _ = compress_model(make_toy_teacher(1))
    one = cost_report(student, (3, 16, 16), batch=1)
    two = cost_report(student, (3, 16, 16), batch=2)
    assert two.ops_total == 2 * one.ops_total
    assert two.params_total == one.params_total


def test_report_text_and_errors():
    student, _ = compress_model(make_toy_teacher(0))
    text = cost_report(student).to_text()
    lines = text.splitlines()
    assert lines[0] == "params_total 8458" and lines[1] == "ops_total 86861824"
    assert sum(l.startswith("layer ") for l in lines) == 5
    assert text == cost_report(student).to_text()
    with pytest.raises(ShapeError):
        cost_report(student, (1, 64, 64))


def test_psnr_examples(rng):
    a = rng.uniform(size=(1, 3, 8, 8))
    assert psnr(a, a) == 100.0
    assert psnr(np.zeros(4), np.full(4, 2.0), peak=2.0) == pytest.approx(0.0, abs=1e-12)
    assert psnr(a, a + 0.1, peak=1.0) == pytest.approx(20.0, rel=1e-12)
    b = rng.uniform(size=a.shape)
    assert psnr(a, b) == psnr(b, a)
    with pytest.raises(ShapeError):
        psnr(a, b[:, :2])


def test_high_pass_constant_is_exactly_zero():
    x = np.full((2, 3, 5, 7), 0.3)
    assert not np.any(high_pass(x))


def test_high_pass_box_blur_definition(rng):
    x = rng.standard_normal((1, 1, 6, 5))
    p = np.pad(x[0, 0], 1, mode="reflect")
    blur = np.array([[p[i:i + 3, j:j + 3].mean() for j in range(5)] for i in range(6)])
    np.testing.assert_allclose(high_pass(x)[0, 0], x[0, 0] - blur, rtol=1e-12, atol=1e-14)


def _freq_layer(rng, m, n, conv, bmb_only=False):
    layer, _ = compress_stack([FpConvLayer(rng.standard_normal((n, m)), np.zeros(n), conv)], 2, 1)
    layer = layer[0]
    if bmb_only:
        layer.lrmb = LrmbParams(np.zeros((m, 1)), np.zeros((1, n)))
        layer.smb = SmbParams.empty(m, n)
    return layer


def test_freq_constant_outputs_zero(rng):
    layer = _freq_layer(rng, 18, 4, ConvSpec(3, 3, 0))
    assert branch_freq_proportion(layer, np.full((1, 2, 9, 9), 0.7)) == (0.0, 0.0, 0.0)


def test_freq_bmb_only(rng):
    layer = _freq_layer(rng, 18, 4, ConvSpec(3, 3, 1), bmb_only=True)
    x = textures(rng, 1, size=16, channels=2) - 0.5
    assert branch_freq_proportion(layer, x) == (1.0, 0.0, 0.0)


def test_freq_proportions_sum_to_one(rng):
    layer = _freq_layer(rng, 72, 8, ConvSpec(3, 3, 1))
    p = branch_freq_proportion(layer, textures(rng, 2, size=16, channels=8) - 0.5)
    assert min(p) >= 0 and sum(p) == pytest.approx(1.0, abs=1e-12)


def test_freq_needs_spatial_three_branch_layer(rng):
    linear = _freq_layer(rng, 6, 4, None)
    with pytest.raises(UnsupportedLayerError):
        branch_freq_proportion(linear, np.ones((3, 6)))
    with pytest.raises(UnsupportedLayerError):
        branch_freq_proportion(_fp(rng, 2, 2, ConvSpec(1, 1)), np.ones((1, 2, 4, 4)))


