import copy

import numpy as np
import pytest

from oracles import signs
from tribranch import BmbParams, LrmbParams, SmbParams, bmb_forward, lrmb_forward, sign_quantize, smb_forward
from tribranch.branches import activation_scale
from tribranch.errors import InvalidParamsError, ShapeError


def _random_smb(rng, m, n, k):
    flat = np.sort(rng.choice(m * n, size=k, replace=False))
    return SmbParams(m, n, flat // n, flat % n, rng.standard_normal(k))


def test_lrmb_example():
    p = LrmbParams(np.array([[1.0], [0.0]]), np.array([[3.0, 4.0]]))
    assert lrmb_forward(p, [[1.0, 2.0]]).tolist() == [[3.0, 4.0]]


def test_lrmb_zero_factor():
    p = LrmbParams(np.zeros((5, 2)), np.ones((2, 3)))
    out = lrmb_forward(p, np.ones((4, 5)))
    assert out.shape == (4, 3) and not out.any()


def test_lrmb_matches_explicit_product(rng):
    p = LrmbParams(rng.standard_normal((64, 4)), rng.standard_normal((4, 64)))
    x = rng.standard_normal((16, 64))
    np.testing.assert_allclose(lrmb_forward(p, x), x @ (p.b_mat @ p.a_mat), rtol=1e-12, atol=1e-12)


def test_lrmb_invalid_rank():
    with pytest.raises(InvalidParamsError):
        LrmbParams(np.ones((2, 3)), np.ones((3, 2)))
    with pytest.raises(InvalidParamsError):
        LrmbParams(np.ones((2, 1)), np.ones((2, 2)))


def test_lrmb_shape_mismatch():
    p = LrmbParams(np.ones((2, 1)), np.ones((1, 2)))
    with pytest.raises(ShapeError):
        lrmb_forward(p, np.ones((1, 3)))


def test_smb_empty(backend):
    out = smb_forward(SmbParams.empty(3, 4), np.ones((2, 3)), backend)
    assert out.shape == (2, 4) and not out.any()


def test_smb_single_entry(backend):
    p = SmbParams(2, 2, [0], [1], [-3.0])
    assert p.entries == [(0, 1, -3.0)]
    assert smb_forward(p, [[2.0, 5.0]], backend).tolist() == [[0.0, -6.0]]


def test_smb_matches_dense(backend, rng):
    p = _random_smb(rng, 64, 64, 2 * max(64, 64))
    x = rng.standard_normal((10, 64))
    np.testing.assert_allclose(smb_forward(p, x, backend), x @ p.dense(), rtol=1e-12, atol=1e-12)


def test_smb_rectangular_with_repeated_columns(backend, rng):
    p = SmbParams(3, 2, [0, 1, 2], [1, 1, 1], [1.0, 2.0, 3.0])
    x = rng.standard_normal((4, 3))
    np.testing.assert_allclose(smb_forward(p, x, backend), x @ p.dense(), rtol=1e-12)


@pytest.mark.parametrize(
    "rows,cols",
    [([0], [2]), ([2], [0]), ([-1], [0]), ([1, 0], [0, 0]), ([0, 0], [1, 1])],
)
def test_smb_invalid_coordinates(rows, cols):
    with pytest.raises(InvalidParamsError):
        SmbParams(2, 2, rows, cols, np.ones(len(rows)))


def test_smb_shape_mismatch():
    with pytest.raises(ShapeError):
        smb_forward(SmbParams.empty(3, 3), np.ones((1, 2)))


def test_bmb_example(backend):
    p = BmbParams.from_latent([[1.0, -1.0]])
    assert activation_scale(np.array([[2.0, -4.0]])).tolist() == [3.0]
    assert p.k_vec.tolist() == [1.0]
    assert bmb_forward(p, [[2.0, -4.0]], backend).tolist() == [[6.0]]


def test_bmb_zero_input(backend, rng):
    p = BmbParams.from_latent(rng.standard_normal((5, 7)))
    out = bmb_forward(p, np.zeros((3, 7)), backend)
    assert out.shape == (3, 5) and not out.any()


def test_bmb_matches_dense_oracle(backend, rng):
    x = rng.standard_normal((8, 32))
    latent = rng.standard_normal((16, 32))
    p = BmbParams.from_latent(latent)
    a = np.abs(x).mean(axis=1)
    k = np.abs(latent).mean(axis=1)
    expected = (signs(x) @ signs(latent).T) * np.outer(a, k)
    np.testing.assert_allclose(bmb_forward(p, x, backend), expected, rtol=1e-12)


def test_bmb_invariants_after_set_latent(rng):
    p = BmbParams.from_latent(rng.standard_normal((4, 9)))
    new = rng.standard_normal((4, 9))
    p.set_latent(new)
    assert p.packed == sign_quantize(new)
    np.testing.assert_array_equal(p.k_vec, np.abs(new).mean(axis=1))
    with pytest.raises(ShapeError):
        p.set_latent(np.ones((3, 9)))


def test_bmb_dims_and_dense(rng):
    latent = rng.standard_normal((4, 9))
    p = BmbParams.from_latent(latent)
    assert p.dims == (9, 4)
    np.testing.assert_allclose(p.dense(), (signs(latent) * np.abs(latent).mean(axis=1)[:, None]).T)


def test_bmb_k_vec_validation():
    with pytest.raises(InvalidParamsError):
        BmbParams(sign_quantize(np.ones((2, 2))), [1.0])
    with pytest.raises(InvalidParamsError):
        BmbParams(sign_quantize(np.ones((2, 2))), [1.0, -1.0])


def test_bmb_sign_pattern_invariant_to_positive_scale(rng):
    x = rng.standard_normal((6, 20))
    p = BmbParams.from_latent(rng.standard_normal((3, 20)))
    assert sign_quantize(4.0 * x) == sign_quantize(x)
    np.testing.assert_allclose(bmb_forward(p, 4.0 * x), 4.0 * bmb_forward(p, x), rtol=1e-12)


def test_forwards_do_not_mutate(backend, rng):
    lrmb = LrmbParams(rng.standard_normal((6, 2)), rng.standard_normal((2, 5)))
    smb = _random_smb(rng, 6, 5, 7)
    bmb = BmbParams.from_latent(rng.standard_normal((5, 6)))
    before = copy.deepcopy((lrmb, smb, bmb))
    x = rng.standard_normal((3, 6))
    x_before = x.copy()
    lrmb_forward(lrmb, x)
    smb_forward(smb, x, backend)
    bmb_forward(bmb, x, backend)
    assert np.array_equal(x, x_before)
    assert np.array_equal(lrmb.b_mat, before[0].b_mat) and np.array_equal(lrmb.a_mat, before[0].a_mat)
    assert smb.entries == before[1].entries
    assert bmb.packed == before[2].packed
    assert np.array_equal(bmb.k_vec, before[2].k_vec) and np.array_equal(bmb.latent, before[2].latent)
