import math

import numpy as np
import pytest

from setok import clusterer, fixtures, metrics
from setok.errors import (
    EmptyInput,
    NotNormalized,
    PairingSizeMismatch,
    ShapeMismatch,
)
from setok.types import MaskStack, ReferenceMasks, TokenizerConfig


def _soft_stack(masks, seeds=None):
    masks = np.asarray(masks, dtype=np.float64)
    seeds = seeds or [(0, i) for i in range(masks.shape[0])]
    return MaskStack(masks=masks, seeds=seeds, mode="soft",
                     config_used=TokenizerConfig())


def _hard_stack(masks, seeds=None):
    masks = np.asarray(masks, dtype=np.float64)
    seeds = seeds or [(0, i) for i in range(masks.shape[0])]
    return MaskStack(masks=masks, seeds=seeds, mode="hard",
                     config_used=TokenizerConfig())


def _refs(pi):
    return ReferenceMasks(pi=np.asarray(pi, dtype=np.float64))


def test_kl_identical_is_zero():
    masks = np.stack([np.full((2, 2), 0.3), np.full((2, 2), 0.7)])
    stack = _soft_stack(masks)
    refs = _refs(np.transpose(masks, (1, 2, 0)))
    assert metrics.kl_mask_consistency(stack, refs, [0, 1]) == pytest.approx(0.0, abs=1e-9)


def test_kl_hand_value_log2():
    stack = _soft_stack(np.array([[[1.0]], [[0.0]]]))
    refs = _refs(np.array([[[0.5, 0.5]]]))
    got = metrics.kl_mask_consistency(stack, refs, [0, 1])
    assert got == pytest.approx(math.log(2.0), rel=1e-6)


def test_kl_nonnegative_random(rng):
    for _ in range(10):
        k, h, w = 3, 4, 4
        m = rng.uniform(0.01, 1.0, size=(k, h, w))
        m /= m.sum(axis=0)
        p = rng.uniform(0.01, 1.0, size=(h, w, k))
        p /= p.sum(axis=2, keepdims=True)
        got = metrics.kl_mask_consistency(_soft_stack(m), _refs(p), [2, 0, 1])
        assert got >= -1e-12


def test_kl_pairing_must_be_injection():
    stack = _soft_stack(np.ones((2, 1, 1)) * 0.5)
    refs = _refs(np.full((1, 1, 2), 0.5))
    with pytest.raises(PairingSizeMismatch):
        metrics.kl_mask_consistency(stack, refs, [0])
    with pytest.raises(PairingSizeMismatch):
        metrics.kl_mask_consistency(stack, refs, [1, 1])


def test_kl_requires_normalized_masks():
    stack = _soft_stack(np.full((2, 1, 1), 0.4))
    refs = _refs(np.full((1, 1, 2), 0.5))
    with pytest.raises(NotNormalized):
        metrics.kl_mask_consistency(stack, refs, [0, 1])


def test_kl_subset_pairing_renormalizes():
    # masks pair onto 2 of 3 reference columns; selected columns are
    # renormalized per location, making the comparison (0.5,0.5) again
    stack = _soft_stack(np.array([[[1.0]], [[0.0]]]))
    refs = _refs(np.array([[[0.25, 0.25, 0.5]]]))
    got = metrics.kl_mask_consistency(stack, refs, [0, 1])
    assert got == pytest.approx(math.log(2.0), rel=1e-6)


def test_bce_perfect_prediction_near_zero():
    target = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert metrics.bce_mask(target, target) < 1e-7


def test_bce_uniform_predictor_ln2(rng):
    mask = np.full((3, 3), 0.5)
    target = (rng.uniform(size=(3, 3)) > 0.5).astype(np.float64)
    assert metrics.bce_mask(mask, target) == pytest.approx(math.log(2.0), abs=1e-6)


def test_bce_hand_value():
    mask = np.array([[0.9]])
    target = np.array([[1.0]])
    assert metrics.bce_mask(mask, target) == pytest.approx(-math.log(0.9), rel=1e-9)


def test_bce_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        metrics.bce_mask(np.zeros((2, 2)), np.zeros((2, 3)))


def test_dice_perfect_overlap_zero():
    m = np.zeros((4, 4))
    m[:2] = 1.0
    assert metrics.dice_loss(m, m) == pytest.approx(0.0, abs=1e-12)


def test_dice_disjoint_hand_value():
    m = np.zeros((4, 4))
    t = np.zeros((4, 4))
    m[:2] = 1.0  # mass 8
    t[2:] = 1.0  # mass 8, disjoint
    assert metrics.dice_loss(m, t) == pytest.approx(1.0 - 1.0 / 17.0, rel=1e-9)


def test_dice_both_empty_zero():
    z = np.zeros((3, 3))
    assert metrics.dice_loss(z, z) == 0.0


def test_dice_symmetric_binary(rng):
    m = (rng.uniform(size=(5, 5)) > 0.5).astype(np.float64)
    t = (rng.uniform(size=(5, 5)) > 0.5).astype(np.float64)
    assert metrics.dice_loss(m, t) == pytest.approx(metrics.dice_loss(t, m), rel=1e-12)


def test_miou_identical():
    masks = np.zeros((2, 2, 2))
    masks[0, 0] = 1.0
    masks[1, 1] = 1.0
    stack = _hard_stack(masks)
    refs = _refs(np.transpose(masks, (1, 2, 0)))
    report = metrics.match_and_miou(stack, refs)
    assert report["mean_iou"] == 1.0
    assert report["ciou"] == 1.0


def test_miou_recovers_swapped_order():
    masks = np.zeros((2, 2, 2))
    masks[0, 0] = 1.0
    masks[1, 1] = 1.0
    stack = _hard_stack(masks)
    refs = _refs(np.transpose(masks[::-1], (1, 2, 0)))
    report = metrics.match_and_miou(stack, refs)
    assert report["mean_iou"] == 1.0
    assert sorted(report["pairing"]) == [(0, 1), (1, 0)]


def test_miou_unpaired_masks_count_as_zero():
    pred = np.zeros((1, 2, 2))
    pred[0] = 1.0
    refs_pi = np.zeros((2, 2, 3))
    refs_pi[:, :, 0] = 1.0  # refs harden to [all-ones, empty, empty]
    report = metrics.match_and_miou(_hard_stack(pred), _refs(refs_pi))
    assert report["mean_iou"] == pytest.approx(1.0 / 3.0)


def test_miou_permutation_invariant(rng):
    grid, refs, _, _ = fixtures.make_fixture(10, 10, 4, 3, seed=3)
    stack = clusterer.cluster(grid, TokenizerConfig())
    base = metrics.match_and_miou(stack, refs)["mean_iou"]
    perm = rng.permutation(stack.k)
    shuffled = MaskStack(masks=stack.masks[perm],
                         seeds=[stack.seeds[i] for i in perm],
                         mode="hard", config_used=stack.config_used)
    assert metrics.match_and_miou(shuffled, refs)["mean_iou"] == pytest.approx(base)


def test_miou_on_blob_fixture():
    grid, refs, _, _ = fixtures.make_fixture(16, 16, 8, 3, seed=21)
    stack = clusterer.cluster(grid, TokenizerConfig())
    report = metrics.match_and_miou(stack, refs)
    assert report["mean_iou"] >= 0.95


def test_miou_empty_input():
    refs = _refs(np.ones((1, 1, 1)))
    empty = MaskStack(masks=np.zeros((0, 1, 1)), seeds=[], mode="hard",
                      config_used=TokenizerConfig())
    with pytest.raises(EmptyInput):
        metrics.match_and_miou(empty, refs)


def test_evaluate_identity_report():
    masks = np.zeros((3, 4, 4))
    masks[0, :2] = 1.0
    masks[1, 2:, :2] = 1.0
    masks[2, 2:, 2:] = 1.0
    stack = _hard_stack(masks)
    refs = _refs(np.transpose(masks, (1, 2, 0)))
    report = metrics.evaluate(stack, refs)
    assert report["miou"] == 1.0
    assert report["dice"] == pytest.approx(0.0, abs=1e-9)
    assert report["kl"] == pytest.approx(0.0, abs=1e-9)
    assert report["k_pred"] == 3 and report["k_ref"] == 3
