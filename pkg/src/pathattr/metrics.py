"""Saliency evaluation: insertion, AIC/SIC, MS-SSIM and localization scores."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.stats import rankdata

from . import models
from .errors import DegenerateInputError, InvalidParameterError
from .tensor import as_image, blur, compressed_size, make_gaussian_kernel

__all__ = [
    "AIC_BASE_RADIUS",
    "AIC_BASE_SIGMA",
    "MSSSIM_WEIGHTS",
    "CurveReport",
    "LocalizationScore",
    "aic_sic",
    "bokeh_image",
    "information_curves",
    "insertion_curve",
    "localization",
    "msssim",
    "normalized_entropy",
    "pixel_importance",
    "roc_auc",
    "ssim",
    "trapezoid_auc",
]

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
# a 20 px blur "radius" read as a kernel reaching 3 sigma
AIC_BASE_RADIUS = 20
AIC_BASE_SIGMA = AIC_BASE_RADIUS / 3.0
K1, K2 = 0.01, 0.03


@dataclass
class CurveReport:
    xs: np.ndarray
    ys: np.ndarray
    auc: float
    bins_occupied: int = 0
    warnings: dict = field(default_factory=dict)

    def rows(self):
        return list(zip(self.xs.tolist(), self.ys.tolist()))


@dataclass(frozen=True)
class LocalizationScore:
    f1: float
    roc_auc: float
    mae: float
    best_threshold: float


def trapezoid_auc(xs, ys) -> float:
    """Trapezoid area divided by the x-range."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise InvalidParameterError("xs and ys must be 1-D and of equal length")
    if len(xs) < 2:
        raise InvalidParameterError("need at least two curve points")
    dx = np.diff(xs)
    if np.any(dx <= 0):
        raise InvalidParameterError("xs must be strictly ascending")
    if np.all(ys == ys[0]):
        return float(ys[0])
    area = float(np.sum(dx * (ys[1:] + ys[:-1]) / 2.0))
    return area / float(xs[-1] - xs[0])


def _curve(xs, ys, **kw) -> CurveReport:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    return CurveReport(xs, ys, trapezoid_auc(xs, ys), **kw)


def pixel_importance(a, shift: bool = True, reduction: str = "signed") -> np.ndarray:
    """Per-pixel importance: attribution summed over channels.

    ``reduction="abs"`` ranks by the magnitude of that sum instead. With
    ``shift`` the minimum is moved to 0 so the result is nonnegative; ranking
    is unaffected.
    """
    if reduction not in ("signed", "abs"):
        raise InvalidParameterError(f"reduction must be 'signed' or 'abs', got {reduction!r}")
    v = np.asarray(getattr(a, "values", a), dtype=np.float64)
    if v.ndim == 3:
        v = v.sum(axis=2)
    if v.ndim != 2:
        raise InvalidParameterError(f"expected (H, W[, C]) attribution, got shape {v.shape}")
    if reduction == "abs":
        v = np.abs(v)
    if shift:
        v = v - v.min()
    return v


def _ranking(imp) -> np.ndarray:
    # descending; ties keep row-major order
    return np.argsort(-np.asarray(imp, dtype=np.float64).ravel(), kind="stable")


def insertion_curve(m, c: int, x, imp, step_fraction: float = 0.05) -> tuple[CurveReport, CurveReport]:
    """Insert pixels into a black canvas by decreasing importance.

    Returns:
        ``(probability, ratio)`` curves over the inserted fraction, where the
        ratio curve is divided by ``f_c(x)``. Both include 0% and 100%.
    """
    if not 0 < step_fraction <= 1:
        raise InvalidParameterError(f"step_fraction must be in (0, 1], got {step_fraction}")
    x = as_image(x)
    imp = np.asarray(imp, dtype=np.float64)
    H, W, C = x.shape
    if imp.shape != (H, W):
        raise InvalidParameterError(f"importance shape {imp.shape} != image {(H, W)}")
    order = _ranking(imp)
    n_levels = math.ceil(1.0 / step_fraction - 1e-9)
    fracs = np.minimum(np.arange(n_levels + 1) * step_fraction, 1.0)
    fracs[-1] = 1.0
    counts = np.round(fracs * H * W).astype(int)
    flat_x = x.reshape(H * W, C)
    canvases = np.zeros((len(fracs), H * W, C))
    for k, n in enumerate(counts):
        canvases[k, order[:n]] = flat_x[order[:n]]
    canvases = canvases.reshape(len(fracs), H, W, C)
    canvases[-1] = x
    probs = models.values_batch(m, canvases, c)
    f_x = probs[-1]
    prob_curve = _curve(fracs, probs)
    if f_x == 0:
        raise DegenerateInputError("f_c(x) is zero; ratio curve undefined")
    ratios = probs / f_x
    ratios[-1] = 1.0
    return prob_curve, _curve(fracs, ratios)


# ---------------------------------------------------------------------------
# structural similarity


def _window(sigma: float):
    k = make_gaussian_kernel(sigma)
    return k.profile, k.radius


def _filter_valid(img, profile, r):
    out = ndimage.correlate1d(img, profile, axis=0, mode="constant")
    out = ndimage.correlate1d(out, profile, axis=1, mode="constant")
    return out[r:-r, r:-r]


def _ssim_terms(x, y, window_sigma):
    profile, r = _window(window_sigma)
    if min(x.shape[:2]) < 2 * r + 1:
        raise InvalidParameterError(f"image {x.shape[:2]} smaller than the {2 * r + 1}px SSIM window")
    c1, c2 = K1**2, K2**2
    mu_x = _filter_valid(x, profile, r)
    mu_y = _filter_valid(y, profile, r)
    sxx = _filter_valid(x * x, profile, r) - mu_x * mu_x
    syy = _filter_valid(y * y, profile, r) - mu_y * mu_y
    sxy = _filter_valid(x * y, profile, r) - mu_x * mu_y
    lum = (2 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def _same_shape(x, y):
    x, y = as_image(x), as_image(y)
    if x.shape != y.shape:
        raise InvalidParameterError(f"shape mismatch {x.shape} vs {y.shape}")
    return x, y


def ssim(x, y, window_sigma: float = 1.5) -> float:
    """Mean local SSIM under a Gaussian window, dynamic range 1."""
    x, y = _same_shape(x, y)
    return _ssim_terms(x, y, window_sigma)[0]


def max_msssim_levels(shape, window_sigma: float = 1.5) -> int:
    win = 2 * make_gaussian_kernel(window_sigma).radius + 1
    side = min(shape[:2])
    levels = 0
    while side >= (2**levels) * win:
        levels += 1
    return levels


def msssim(x, y, levels: int = 5, window_sigma: float = 1.5, auto_reduce: bool = False,
           weights=MSSSIM_WEIGHTS) -> float:
    """Multi-scale SSIM with 2×2 average pooling between scales.

    The contrast-structure term of each scale, and the full SSIM at the
    coarsest scale, are clamped at 0 and raised to their exponent. If the
    image is too small for ``levels`` scales, ``auto_reduce`` uses as many as
    fit and renormalizes the leading exponents to sum to 1. Without it,
    :class:`InvalidParameterError` is raised.
    """
    x, y = _same_shape(x, y)
    if not 1 <= levels <= len(weights):
        raise InvalidParameterError(f"levels must be in 1..{len(weights)}")
    fit = max_msssim_levels(x.shape, window_sigma)
    w = np.asarray(weights[:levels], dtype=np.float64)
    if fit < levels:
        if not auto_reduce or fit < 1:
            raise InvalidParameterError(f"image {x.shape[:2]} too small for {levels} MS-SSIM levels (fits {fit})")
        levels = fit
        w = w[:levels] / w[:levels].sum()
    result = 1.0
    for i in range(levels):
        s, cs = _ssim_terms(x, y, window_sigma)
        term = s if i == levels - 1 else cs
        result *= max(term, 0.0) ** w[i]
        if i < levels - 1:
            h, wd = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
            x = x[:h, :wd].reshape(h // 2, 2, wd // 2, 2, -1).mean(axis=(1, 3))
            y = y[:h, :wd].reshape(h // 2, 2, wd // 2, 2, -1).mean(axis=(1, 3))
    return float(min(max(result, 0.0), 1.0))


def _entropy_ratio(bokeh, original) -> float:
    return compressed_size(bokeh) / compressed_size(original)


def normalized_entropy(bokeh, original) -> float:
    """Compressed size of ``bokeh`` relative to ``original``, clipped to [0, 1]."""
    bokeh, original = _same_shape(bokeh, original)
    return float(min(_entropy_ratio(bokeh, original), 1.0))


# ---------------------------------------------------------------------------
# information curves


def bokeh_image(x, base, order, fraction: float) -> np.ndarray:
    """``base`` with the top ``fraction`` of pixels (by ``order``) restored from ``x``."""
    H, W, C = x.shape
    n = int(round(fraction * H * W))
    out = base.reshape(H * W, C).copy()
    out[order[:n]] = x.reshape(H * W, C)[order[:n]]
    return out.reshape(H, W, C)


def information_curves(levels, correct, ratios, bins: int = 100) -> tuple[CurveReport, CurveReport]:
    """Bin bokeh images by information level and build the AIC and SIC curves.

    Args:
        levels: information level of each bokeh image, in [0, 1].
        correct: whether the model still predicts the target on each bokeh.
        ratios: ``f_c(bokeh)/f_c(x)`` clamped to [0, 1].
        bins: number of equal-width bins on [0, 1].

    Empty bins are linearly interpolated between the nearest occupied bins
    and held constant beyond the outermost ones.
    """
    if bins < 2:
        raise InvalidParameterError("need at least two bins")
    levels = np.clip(np.asarray(levels, dtype=np.float64), 0.0, 1.0)
    correct = np.asarray(correct, dtype=np.float64)
    ratios = np.asarray(ratios, dtype=np.float64)
    if not (levels.shape == correct.shape == ratios.shape) or levels.size == 0:
        raise InvalidParameterError("levels, correct and ratios must be equal-length and nonempty")
    idx = np.minimum((levels * bins).astype(int), bins - 1)
    centers = (np.arange(bins) + 0.5) / bins
    occupied = np.unique(idx)
    acc = np.array([correct[idx == b].mean() for b in occupied])
    med = np.array([np.median(ratios[idx == b]) for b in occupied])
    oc = centers[occupied]
    aic_y = np.interp(centers, oc, acc)
    sic_y = np.interp(centers, oc, med)
    n_occ = len(occupied)
    return _curve(centers, aic_y, bins_occupied=n_occ), _curve(centers, sic_y, bins_occupied=n_occ)


def bokeh_samples(m, c: int, x, imp, info: str = "msssim", thresholds: int = 25):
    """Information level, correctness and clamped probability ratio per bokeh image.

    Returns:
        ``(levels, correct, ratios, warnings)``.
    """
    if info not in ("entropy", "msssim"):
        raise InvalidParameterError(f"info level must be 'entropy' or 'msssim', got {info!r}")
    if thresholds < 2:
        raise InvalidParameterError("need at least two thresholds")
    x = as_image(x)
    imp = np.asarray(imp, dtype=np.float64)
    if imp.shape != x.shape[:2]:
        raise InvalidParameterError(f"importance shape {imp.shape} != image {x.shape[:2]}")
    f_x = models.value(m, x, c)
    if f_x == 0:
        raise DegenerateInputError("f_c(x) is zero; SIC ratio undefined")
    base = blur(x, AIC_BASE_SIGMA, AIC_BASE_RADIUS)
    order = _ranking(imp)
    percents = np.linspace(0.0, 100.0, thresholds)
    bokehs = np.stack([bokeh_image(x, base, order, p / 100.0) for p in percents])
    warnings = {"entropy_clipped": 0, "msssim_levels_reduced": 0}
    if info == "entropy":
        raw = np.array([_entropy_ratio(b, x) for b in bokehs])
        warnings["entropy_clipped"] = int(np.sum(raw > 1.0))
        levels = np.minimum(raw, 1.0)
    else:
        if max_msssim_levels(x.shape) < len(MSSSIM_WEIGHTS):
            warnings["msssim_levels_reduced"] = len(bokehs)
        levels = np.array([msssim(b, x, auto_reduce=True) for b in bokehs])
    if hasattr(m, "probabilities_batch"):
        probs = m.probabilities_batch(bokehs)
    else:
        probs = np.stack([m.probabilities(b) for b in bokehs])
    correct = np.argmax(probs, axis=1) == c
    ratios = np.clip(models.values_batch(m, bokehs, c) / f_x, 0.0, 1.0)
    return levels, correct, ratios, warnings


def aic_sic(m, c: int, x, imp, info: str = "msssim", thresholds: int = 25,
            bins: int = 100) -> tuple[CurveReport, CurveReport]:
    """Accuracy and softmax information curves for one image."""
    levels, correct, ratios, warnings = bokeh_samples(m, c, x, imp, info, thresholds)
    aic, sic = information_curves(levels, correct, ratios, bins)
    aic.warnings = dict(warnings)
    sic.warnings = dict(warnings)
    return aic, sic


# ---------------------------------------------------------------------------
# localization


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties count half)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InvalidParameterError("ROC-AUC needs both positive and negative pixels")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def localization(imp, mask, threshold_levels: int = 256) -> LocalizationScore:
    """Score importance against a ground-truth region.

    F1 is the best over ``threshold_levels`` evenly spaced thresholds in
    [0, 1] applied to min–max normalized importance (pixel positive when
    ``>= threshold``). MAE is measured at that best threshold.
    """
    imp = np.asarray(imp, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if imp.shape != mask.shape:
        raise InvalidParameterError(f"importance shape {imp.shape} != mask shape {mask.shape}")
    if mask.all() or not mask.any():
        raise InvalidParameterError("mask must contain both positive and negative pixels")
    if threshold_levels < 2:
        raise InvalidParameterError("need at least two threshold levels")
    auc = roc_auc(imp, mask)
    lo, hi = imp.min(), imp.max()
    norm = (imp - lo) / (hi - lo) if hi > lo else np.zeros_like(imp)
    thresholds = np.linspace(0.0, 1.0, threshold_levels)
    flat = norm.ravel()
    truth = mask.ravel()
    pred = flat[None, :] >= thresholds[:, None]
    tp = (pred & truth).sum(axis=1)
    fp = (pred & ~truth).sum(axis=1)
    fn = (~pred & truth).sum(axis=1)
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    best = int(np.argmax(f1))
    mae = float(np.mean(pred[best] != truth))
    return LocalizationScore(float(f1[best]), auc, mae, float(thresholds[best]))
