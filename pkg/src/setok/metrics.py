"""Mask-quality metrics: KL consistency, BCE, dice, and matched IoU.

Pure evaluation functions. Predicted masks are matched to reference
masks one-to-one by maximizing total IoU (Hungarian assignment); the KL
term then compares the per-location distributions over matched pairs.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    EmptyInput,
    MaskModeError,
    NotNormalized,
    PairingSizeMismatch,
    ShapeMismatch,
)
from .types import MaskStack, ReferenceMasks

_EPS = 1e-8
_DICE_SMOOTH = 1.0


def _check_reference(pi: ReferenceMasks) -> None:
    sums = pi.pi.sum(axis=2)
    if np.abs(sums - 1.0).max() > 1e-6:
        raise NotNormalized(
            f"reference per-location sums deviate from 1 by up to "
            f"{np.abs(sums - 1.0).max():.3g}"
        )


def kl_mask_consistency(stack: MaskStack, pi: ReferenceMasks, pairing: list) -> float:
    """Mean over locations of sum_k M_k log(M_k / pi_pair(k)).

    ``pairing`` maps every mask index to a distinct reference index.
    When the pairing covers only part of the reference stack, the
    selected reference columns are renormalized per location so both
    sides are distributions.
    """
    masks = stack.masks  # (k, h, w)
    k = masks.shape[0]
    if len(pairing) != k:
        raise PairingSizeMismatch(f"pairing has {len(pairing)} entries for {k} masks")
    if len(set(pairing)) != k or any(p < 0 or p >= pi.n for p in pairing):
        raise PairingSizeMismatch(f"pairing {pairing} is not an injection into {pi.n} masks")
    _check_reference(pi)
    sums = masks.sum(axis=0)
    if np.abs(sums - 1.0).max() > 1e-6:
        raise NotNormalized(
            f"mask per-location sums deviate from 1 by up to {np.abs(sums - 1.0).max():.3g}"
        )

    ref = pi.pi[:, :, pairing].transpose(2, 0, 1)  # (k, h, w)
    ref_sum = ref.sum(axis=0)
    ref = ref / np.maximum(ref_sum, _EPS)
    per_loc = masks * np.log(np.maximum(masks, _EPS) / np.maximum(ref, _EPS))
    return float(per_loc.sum(axis=0).mean())


def bce_mask(mask: np.ndarray, target: np.ndarray) -> float:
    """Mean binary cross-entropy of a [0,1] mask against a {0,1} target."""
    if mask.shape != target.shape:
        raise ShapeMismatch(f"mask {mask.shape} vs target {target.shape}")
    m = np.clip(mask, _EPS, 1.0 - _EPS)
    t = target
    return float(-(t * np.log(m) + (1.0 - t) * np.log(1.0 - m)).mean())


def dice_loss(mask: np.ndarray, target: np.ndarray) -> float:
    """1 - (2 |M.t| + 1) / (|M| + |t| + 1), smoothed so empty/empty is 0."""
    if mask.shape != target.shape:
        raise ShapeMismatch(f"mask {mask.shape} vs target {target.shape}")
    inter = float((mask * target).sum())
    total = float(mask.sum() + target.sum())
    return 1.0 - (2.0 * inter + _DICE_SMOOTH) / (total + _DICE_SMOOTH)


def harden_reference(pi: ReferenceMasks) -> np.ndarray:
    """Argmax one-hot of the reference stack, as (n, h, w) binary."""
    winners = np.argmax(pi.pi, axis=2)
    n = pi.n
    return (winners[None, ...] == np.arange(n)[:, None, None]).astype(np.float64)


def _iou_matrix(pred: np.ndarray, ref: np.ndarray) -> np.ndarray:
    k, n = pred.shape[0], ref.shape[0]
    p = pred.reshape(k, -1)
    r = ref.reshape(n, -1)
    inter = p @ r.T
    union = p.sum(axis=1)[:, None] + r.sum(axis=1)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, inter / np.maximum(union, 1e-300), 0.0)
    return iou


def match_and_miou(stack: MaskStack, pi: ReferenceMasks) -> dict:
    """Optimal pairing of hard predicted masks to hardened references.

    Returns the pairing, mean IoU over all masks (unmatched ones score
    zero), and the cumulative IoU (intersection sum over union sum
    across matched pairs).
    """
    if stack.k == 0 or pi.n == 0:
        raise EmptyInput("need at least one mask on each side")
    if stack.mode != "hard":
        raise MaskModeError("match_and_miou expects a hard stack")
    pred = stack.masks
    ref = harden_reference(pi)
    if pred.shape[1:] != ref.shape[1:]:
        raise ShapeMismatch(f"mask grids differ: {pred.shape[1:]} vs {ref.shape[1:]}")

    iou = _iou_matrix(pred, ref)
    rows, cols = linear_sum_assignment(-iou)
    pairing = list(zip(rows.tolist(), cols.tolist()))

    total_iou = float(iou[rows, cols].sum())
    mean_iou = total_iou / max(stack.k, pi.n)

    inter_sum = 0.0
    union_sum = 0.0
    for r, c in pairing:
        inter = float((pred[r] * ref[c]).sum())
        union = float(pred[r].sum() + ref[c].sum()) - inter
        inter_sum += inter
        union_sum += union
    ciou = inter_sum / union_sum if union_sum > 0 else 1.0

    return {
        "pairing": pairing,
        "mean_iou": mean_iou,
        "ciou": ciou,
        "per_pair_iou": [float(iou[r, c]) for r, c in pairing],
    }


def evaluate(stack: MaskStack, pi: ReferenceMasks) -> dict:
    """Full report: match, then kl/bce/dice over matched pairs."""
    _check_reference(pi)
    if stack.mode == "hard":
        hard = stack
    else:
        from .clusterer import harden_masks

        hard = harden_masks(stack)
    match = match_and_miou(hard, pi)
    ref_hard = harden_reference(pi)

    bces = []
    dices = []
    for r, c in match["pairing"]:
        bces.append(bce_mask(hard.masks[r], ref_hard[c]))
        dices.append(dice_loss(hard.masks[r], ref_hard[c]))

    # KL needs every original mask paired injectively; match the
    # un-hardened stack directly when the reference side is big enough.
    if stack.k <= pi.n:
        rows, cols = linear_sum_assignment(-_iou_matrix(stack.masks, ref_hard))
        pairing = [0] * stack.k
        for r, c in zip(rows.tolist(), cols.tolist()):
            pairing[r] = c
        kl = kl_mask_consistency(stack, pi, pairing)
    else:
        kl = float("nan")

    return {
        "kl": kl,
        "bce": float(np.mean(bces)),
        "dice": float(np.mean(dices)),
        "miou": match["mean_iou"],
        "ciou": match["ciou"],
        "k_pred": stack.k_clusters,
        "k_ref": pi.n,
    }
