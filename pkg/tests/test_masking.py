import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_top
from semcom.masking import (
    SelectionMask,
    build_mask,
    cls_attention_grids,
    expand_mask,
    extract_cls_attention,
    load_mask,
    pack_bitmap,
    save_mask,
    unpack_bitmap,
)


def _stack(per_head_grids):
    """Attention stack (H, P+1, P+1) whose CLS rows carry the given grids."""
    h = len(per_head_grids)
    p = per_head_grids[0].size
    attn = np.zeros((h, p + 1, p + 1))
    for i, g in enumerate(per_head_grids):
        attn[i, 0, 1:] = g.reshape(-1)
        attn[i, 0, 0] = 0.123  # CLS self score, must be ignored
    return attn


def test_uniform_attention_grid():
    attn = np.full((1, 17, 17), 1 / 17)
    g = extract_cls_attention(attn, 4, 4)
    np.testing.assert_allclose(g.scores, 1 / 17)
    assert g.scores.shape == (4, 4)


def test_head_average():
    grid = np.random.default_rng(0).random((4, 4))
    g = extract_cls_attention(_stack([grid, 3 * grid]), 4, 4)
    np.testing.assert_allclose(g.scores, 2 * grid)


def test_index_mapping_of_patch_five():
    grid = np.zeros(16)
    grid[5] = 0.9
    g = extract_cls_attention(_stack([grid, grid]), 4, 4)
    assert g.scores[1, 1] == pytest.approx(0.9)
    assert g.scores.sum() == pytest.approx(0.9)


def test_extract_shape_mismatch():
    with pytest.raises(ValueError):
        extract_cls_attention(np.zeros((2, 16, 16)), 4, 4)


def test_batched_grids_match_single():
    attn = np.random.default_rng(1).random((3, 2, 17, 17))
    batch = cls_attention_grids(attn, 4, 4)
    for i in range(3):
        np.testing.assert_allclose(batch[i], extract_cls_attention(attn[i], 4, 4).scores)


def test_top_two():
    scores = np.array([0.5, 0.3] + [0.1] * 14).reshape(4, 4)
    m = build_mask(scores, 2, 1.0, seed=0)
    assert set(m.indices) == {0, 1}
    assert m.threshold == pytest.approx(0.3)


def test_half_threshold_half_random():
    scores = np.random.default_rng(2).random((4, 4))
    m = build_mask(scores, 4, 0.5, seed=9)
    assert m.n_selected == 4 and m.n_top == 2
    top2 = set(np.argsort(-scores.reshape(-1))[:2])
    assert top2 <= set(m.indices)


def test_full_budget_is_all_ones():
    m = build_mask(np.random.default_rng(3).random((4, 4)), 16, 1.0, seed=0)
    assert m.flat.all()


def test_ties_go_to_lower_index():
    m = build_mask(np.zeros((4, 4)), 3, 1.0, seed=0)
    assert m.indices.tolist() == [0, 1, 2]


def test_budget_out_of_range():
    with pytest.raises(ValueError):
        build_mask(np.zeros((4, 4)), 17, 1.0, seed=0)


def test_alpha_out_of_range():
    with pytest.raises(ValueError):
        build_mask(np.zeros((4, 4)), 4, 1.5, seed=0)


def test_zero_alpha_is_all_random():
    m = build_mask(np.arange(16.0).reshape(4, 4), 5, 0.0, seed=4)
    assert m.n_top == 0 and m.threshold is None and m.n_selected == 5


scores_4x4 = arrays(np.float64, (4, 4), elements=st.floats(0, 1, allow_nan=False))


@settings(max_examples=100, deadline=None)
@given(scores_4x4, st.integers(0, 16), st.sampled_from([0.0, 0.5, 0.85, 1.0]), st.integers(0, 2**32 - 1))
def test_threshold_stage_is_monotone(scores, n, alpha, seed):
    m = build_mask(scores, n, alpha, seed)
    flat = scores.reshape(-1)
    order = np.argsort(-flat, kind="stable")
    top = set(order[: m.n_top].tolist())
    assert top == brute_top(flat.tolist(), alpha, n)
    if top:
        lowest_top = min(flat[i] for i in top)
        assert all(flat[j] <= lowest_top for j in range(16) if j not in top)
    assert m.n_selected == n


@settings(max_examples=100, deadline=None)
@given(scores_4x4, st.integers(0, 16), st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_selection_is_scale_invariant(scores, n, c, seed):
    a = build_mask(scores, n, 0.85, seed)
    b = build_mask(scores * c, n, 0.85, seed)
    np.testing.assert_array_equal(a.flat, b.flat)


def test_build_mask_is_deterministic():
    s = np.random.default_rng(5).random((4, 4))
    assert build_mask(s, 8, 0.5, 11).flat.tolist() == build_mask(s, 8, 0.5, 11).flat.tolist()


def test_expand_single_cell():
    flat = np.zeros(16, dtype=bool)
    flat[0] = True
    px = expand_mask(SelectionMask(flat, 4, 4), 8)
    assert px.shape == (32, 32)
    assert px[:8, :8].all() and px.sum() == 64


def test_expand_full_and_empty():
    assert expand_mask(SelectionMask.full(4, 4), 8).all()
    assert not expand_mask(SelectionMask(np.zeros(16, bool), 4, 4), 8).any()


@settings(max_examples=50, deadline=None)
@given(arrays(bool, 16))
def test_expand_blocks(flat):
    m = SelectionMask(flat, 4, 4)
    px = expand_mask(m, 4)
    assert px.sum() == m.n_selected * 16
    for i in range(16):
        r, c = divmod(i, 4)
        assert (px[r * 4 : r * 4 + 4, c * 4 : c * 4 + 4] == flat[i]).all()


def test_bitmap_layout():
    flat = np.zeros(10, dtype=bool)
    flat[[0, 3, 9]] = True
    data = pack_bitmap(flat)
    assert data == bytes([0b00001001, 0b00000010])
    np.testing.assert_array_equal(unpack_bitmap(data, 10), flat)


def test_bitmap_rejects_stray_bits():
    with pytest.raises(ValueError):
        unpack_bitmap(bytes([0, 0b100]), 10)
    with pytest.raises(ValueError):
        unpack_bitmap(bytes([0]), 10)


def test_mask_sidecar_roundtrip(tmp_path):
    m = SelectionMask(np.random.default_rng(6).random(16) < 0.5, 4, 4)
    save_mask(m, tmp_path / "m.semm")
    back = load_mask(tmp_path / "m.semm")
    np.testing.assert_array_equal(back.flat, m.flat)
    assert (back.rows, back.cols) == (4, 4)


def test_mask_length_must_fit_grid():
    with pytest.raises(ValueError):
        SelectionMask(np.ones(15, bool), 4, 4)
