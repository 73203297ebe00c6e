"""Semantic-mask quality measures over grayscale predictions.

All four measures take a prediction in [0, 1] and a binary ground truth of
the same shape and return a value in [0, 1] (mae: lower is better, the rest
higher is better).

  * mae: mean absolute error.
  * s_measure: structure measure, alpha = 0.5 blend of an object-aware term
    (foreground/background mean-and-spread similarity) and a region-aware
    term (SSIM-like scores over the four quadrants split at the ground-truth
    centroid).
  * weighted_f_measure: F-score (beta^2 = 1) on dependency-weighted errors:
    errors propagate through a gaussian neighborhood and false positives are
    discounted with distance from the object.
  * e_measure_mean: enhanced-alignment score of the binarized prediction,
    averaged over the 256 thresholds (k+1)/256, k = 0..255. The per-pixel
    enhanced alignment is averaged over all pixels (plain mean).
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..core import BinaryMask, GrayMask
from ..errors import DimensionMismatch

_EPS = float(np.finfo(np.float64).eps)

E_MEASURE_THRESHOLDS = np.arange(1, 257) / 256.0


def _check_dims(pred: GrayMask, gt: BinaryMask) -> None:
    if pred.values.shape != gt.bits.shape:
        raise DimensionMismatch(
            f"prediction {pred.values.shape} vs ground truth {gt.bits.shape}"
        )


def mae(pred: GrayMask, gt: BinaryMask) -> float:
    """Mean over pixels of |pred - gt|."""
    _check_dims(pred, gt)
    return float(np.abs(pred.values - gt.bits.astype(np.float64)).mean())


# ---------------------------------------------------------------------------
# structure measure


def s_measure(pred: GrayMask, gt: BinaryMask) -> float:
    _check_dims(pred, gt)
    p = pred.values
    g = gt.bits
    y = g.mean()
    if y == 0:  # all-background gt: reward low prediction mass
        return float(1.0 - p.mean())
    if y == 1:
        return float(p.mean())
    score = 0.5 * _s_object(p, g) + 0.5 * _s_region(p, g)
    return float(max(0.0, score))


def _dissimilarity_score(vals: np.ndarray) -> float:
    x = float(vals.mean())
    # spread of the prediction inside the region; a single pixel has none
    sigma = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + _EPS)


def _s_object(p: np.ndarray, g: np.ndarray) -> float:
    u = float(g.mean())
    o_fg = _dissimilarity_score(p[g])
    o_bg = _dissimilarity_score(1.0 - p[~g])
    return u * o_fg + (1.0 - u) * o_bg


def _centroid(g: np.ndarray) -> tuple[int, int]:
    """Ground-truth centroid as 1-based column/row split positions."""
    rows, cols = g.shape
    total = g.sum()
    col_idx = np.arange(1, cols + 1, dtype=np.float64)
    row_idx = np.arange(1, rows + 1, dtype=np.float64)
    x = int(round(float((g.sum(axis=0) * col_idx).sum() / total)))
    y = int(round(float((g.sum(axis=1) * row_idx).sum() / total)))
    return x, y


def _quadrants(m: np.ndarray, x: int, y: int):
    return m[:y, :x], m[:y, x:], m[y:, :x], m[y:, x:]


def _ssim(pp: np.ndarray, gg: np.ndarray) -> float:
    n = pp.size
    x = float(pp.mean())
    y = float(gg.mean())
    sigma_x = float(((pp - x) ** 2).sum()) / (n - 1 + _EPS)
    sigma_y = float(((gg - y) ** 2).sum()) / (n - 1 + _EPS)
    sigma_xy = float(((pp - x) * (gg - y)).sum()) / (n - 1 + _EPS)
    alpha = 4.0 * x * y * sigma_xy
    beta = (x * x + y * y) * (sigma_x + sigma_y)
    if alpha != 0.0:
        return alpha / (beta + _EPS)
    if beta == 0.0:
        return 1.0
    return 0.0


def _s_region(p: np.ndarray, g: np.ndarray) -> float:
    rows, cols = g.shape
    x, y = _centroid(g)
    area = rows * cols
    weights = (
        x * y / area,
        (cols - x) * y / area,
        x * (rows - y) / area,
        (cols - x) * (rows - y) / area,
    )
    gf = g.astype(np.float64)
    score = 0.0
    for w, pp, gg in zip(weights, _quadrants(p, x, y), _quadrants(gf, x, y)):
        if pp.size == 0:  # boundary centroid: the region is empty and weighs 0
            continue
        score += w * _ssim(pp, gg)
    return score


# ---------------------------------------------------------------------------
# weighted F-measure


def _gaussian_kernel(size: int = 7, sigma: float = 5.0) -> np.ndarray:
    half = (size - 1) / 2
    y, x = np.ogrid[-half : half + 1, -half : half + 1]
    k = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    k[k < np.finfo(k.dtype).eps * k.max()] = 0.0
    return k / k.sum()


def weighted_f_measure(pred: GrayMask, gt: BinaryMask) -> float:
    _check_dims(pred, gt)
    g = gt.bits
    if not g.any():
        return 0.0  # no foreground to recall
    p = pred.values
    gf = g.astype(np.float64)

    err = np.abs(p - gf)
    dist, idx = ndimage.distance_transform_edt(~g, return_indices=True)
    # background errors inherit the error at the nearest foreground pixel
    err_t = err.copy()
    err_t[~g] = err_t[idx[0][~g], idx[1][~g]]
    smoothed = ndimage.convolve(err_t, _gaussian_kernel(), mode="constant", cval=0.0)
    min_err = np.where(g & (smoothed < err), smoothed, err)
    # importance decays with distance from the object on the background side
    importance = np.where(g, 1.0, 2.0 - np.exp(np.log(0.5) / 5.0 * dist))
    weighted = min_err * importance

    tp_w = gf.sum() - weighted[g].sum()
    fp_w = weighted[~g].sum()
    recall = 1.0 - weighted[g].mean()
    precision = tp_w / (tp_w + fp_w + _EPS)
    return float(2.0 * recall * precision / (recall + precision + _EPS))


# ---------------------------------------------------------------------------
# enhanced-alignment measure


def _alignment_from_counts(tp: int, fp: int, n_fg: int, n: int) -> float:
    """Mean enhanced alignment for a binary map given its confusion counts."""
    pred_fg = tp + fp
    if n_fg == 0:
        return (n - pred_fg) / n
    if n_fg == n:
        return pred_fg / n
    mu_fm = pred_fg / n
    mu_gt = n_fg / n
    combos = (
        (1.0, 1.0, tp),
        (1.0, 0.0, n_fg - tp),
        (0.0, 1.0, fp),
        (0.0, 0.0, n - n_fg - fp),
    )
    total = 0.0
    for g_val, f_val, count in combos:
        if count == 0:
            continue
        a_g = g_val - mu_gt
        a_f = f_val - mu_fm
        align = 2.0 * a_g * a_f / (a_g * a_g + a_f * a_f + _EPS)
        total += count * ((align + 1.0) ** 2 / 4.0)
    return total / n


def e_measure_mean(pred: GrayMask, gt: BinaryMask) -> float:
    _check_dims(pred, gt)
    p = pred.values
    g = gt.bits
    n = g.size
    n_fg = int(g.sum())
    fg_vals = np.sort(p[g])
    bg_vals = np.sort(p[~g])
    # #(values >= t) per threshold via binary search on the sorted values
    tp = fg_vals.size - np.searchsorted(fg_vals, E_MEASURE_THRESHOLDS, side="left")
    fp = bg_vals.size - np.searchsorted(bg_vals, E_MEASURE_THRESHOLDS, side="left")
    scores = [
        _alignment_from_counts(int(tp[i]), int(fp[i]), n_fg, n)
        for i in range(len(E_MEASURE_THRESHOLDS))
    ]
    return float(np.mean(scores))
