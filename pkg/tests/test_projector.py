import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semcom.projector import (
    Projector,
    flatten_patches,
    grid_to_index,
    index_to_grid,
    patchify,
    project,
    reassemble,
)
from semcom.tensor import Tensor


def test_toy_geometry():
    g = patchify(np.zeros((3, 32, 32)), 8)
    assert g.num_patches == 16 and (g.rows, g.cols) == (4, 4)


def test_wide_image_geometry():
    # 480 wide by 320 high with 8 x 8 patches
    g = patchify(np.zeros((3, 320, 480)), 8)
    assert g.num_patches == 2400 and (g.rows, g.cols) == (40, 60)


def test_indivisible_image():
    with pytest.raises(ValueError):
        patchify(np.zeros((3, 30, 32)), 8)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.sampled_from([1, 2, 4]), st.integers(0, 2**32 - 1))
def test_patchify_reassemble_identity(rows, cols, p, seed):
    img = np.random.default_rng(seed).random((3, rows * p, cols * p))
    assert reassemble(patchify(img, p)).tobytes() == img.tobytes()


def test_patch_order_is_row_major():
    img = np.zeros((3, 16, 16))
    img[:, 8:, 0:8] = 1.0  # bottom-left patch
    g = patchify(img, 8)
    assert np.flatnonzero(g.patches.reshape(4, -1).sum(axis=1)).tolist() == [2]


def test_index_mapping():
    assert index_to_grid(5, 4) == (1, 1)
    assert grid_to_index(0, 0, 4) == 0
    for i in range(16):
        assert grid_to_index(*index_to_grid(i, 4, 4), 4, 4) == i


@pytest.mark.parametrize("args", [(-1, 4, 4), (16, 4, 4)])
def test_index_out_of_range(args):
    with pytest.raises(ValueError):
        index_to_grid(*args)


def test_grid_out_of_range():
    with pytest.raises(ValueError):
        grid_to_index(0, 4, 4)


def test_flatten_is_channel_major():
    img = np.arange(3 * 2 * 2, dtype=np.float64).reshape(1, 3, 2, 2)
    cols = flatten_patches(img, 2)
    np.testing.assert_array_equal(cols[0, :, 0], np.arange(12))


def _zero_projector(dim=4, p=2, n=4):
    proj = Projector(dim, p, n, np.random.default_rng(0))
    proj.pos_embed.data[:] = 0
    proj.b.data[:] = 0
    return proj


def test_zero_image_gives_cls_and_zero_columns():
    proj = _zero_projector()
    z = proj(np.zeros((1, 3, 4, 4))).data[0]
    np.testing.assert_array_equal(z[:, 1:], 0)
    np.testing.assert_array_equal(z[:, 0], proj.cls_token.data)


def test_bias_only_projection():
    proj = _zero_projector()
    proj.w_proj.data[:] = 0
    proj.b.data[:] = 1
    z = proj(np.random.default_rng(1).random((1, 3, 4, 4))).data[0]
    np.testing.assert_array_equal(z[:, 1:], 1)


def test_single_patch_against_dense_multiply():
    rng = np.random.default_rng(2)
    proj = Projector(5, 2, 1, rng)
    proj.b.data[:] = rng.normal(size=5)
    img = rng.random((3, 2, 2))
    w = proj.w_proj.data.astype(np.float64)
    x = [img[c, i, j] for c in range(3) for i in range(2) for j in range(2)]
    expect = [sum(w[r, k] * x[k] for k in range(12)) + proj.b.data[r] + proj.pos_embed.data[r, 1] for r in range(5)]
    got = project(patchify(img, 2), proj).data
    np.testing.assert_allclose(got[:, 1], expect, atol=1e-6)
    np.testing.assert_allclose(got[:, 0], proj.cls_token.data + proj.pos_embed.data[:, 0], atol=1e-7)


def test_projection_is_affine():
    rng = np.random.default_rng(3)
    proj = Projector(6, 2, 4, rng)
    x1, x2 = rng.random((1, 3, 4, 4)), rng.random((1, 3, 4, 4))
    a, b = 0.7, -1.3
    zero = proj(np.zeros_like(x1)).data
    lhs = proj(a * x1 + b * x2).data - zero
    rhs = a * (proj(x1).data - zero) + b * (proj(x2).data - zero)
    np.testing.assert_allclose(lhs, rhs, atol=1e-5)


def test_embed_shape_mismatch():
    proj = Projector(4, 2, 4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        proj.embed(Tensor(np.zeros((1, 12, 5))))
