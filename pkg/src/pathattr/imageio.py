"""PNG input/output and grayscale heatmap rendering."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ArtifactIOError, InvalidParameterError
from .tensor import as_image, quantize

__all__ = ["heatmap_pixels", "read_mask", "read_png", "render_heatmap", "write_png"]

# modes that decode to 8 bits per sample without loss
_CONVERT = {"L": "L", "RGB": "RGB", "1": "L", "P": "RGB", "LA": "L", "RGBA": "RGB"}


def read_png(path) -> np.ndarray:
    """Read an 8-bit grayscale or RGB PNG into an ``(H, W, C)`` array in [0, 1].

    Alpha channels are dropped and palette images expanded to RGB.
    """
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise ArtifactIOError(f"{path}: not a PNG file ({im.format})")
            target = _CONVERT.get(im.mode)
            if target is None:
                raise ArtifactIOError(f"{path}: unsupported PNG mode {im.mode!r} (need 8-bit gray or RGB)")
            im.load()
            arr = np.asarray(im.convert(target), dtype=np.uint8)
    except (OSError, UnidentifiedImageError, SyntaxError, ValueError) as exc:
        if isinstance(exc, ArtifactIOError):
            raise
        raise ArtifactIOError(f"{path}: cannot read PNG: {exc}") from exc
    return as_image(arr.astype(np.float64) / 255.0)


def write_png(x, path) -> None:
    """Write ``x`` as an 8-bit PNG (grayscale for C=1, RGB for C=3)."""
    q = quantize(x)
    if q.shape[2] == 1:
        im = Image.fromarray(q[:, :, 0], mode="L")
    elif q.shape[2] == 3:
        im = Image.fromarray(q, mode="RGB")
    else:
        raise InvalidParameterError(f"PNG output needs 1 or 3 channels, got {q.shape[2]}")
    try:
        im.save(os.fspath(path), format="PNG")
    except OSError as exc:
        raise ArtifactIOError(f"{path}: cannot write PNG: {exc}") from exc


def read_mask(path) -> np.ndarray:
    """Binary ``(H, W)`` mask from a PNG; any nonzero sample is positive."""
    img = read_png(path)
    return np.any(img > 0, axis=2)


def heatmap_pixels(values) -> np.ndarray:
    """Map attributions to 8-bit intensities of per-pixel ``|Σ_c a|``.

    Min–max normalized; an all-equal map renders mid-gray (128).
    """
    a = np.asarray(getattr(values, "values", values), dtype=np.float64)
    if a.size == 0:
        raise InvalidParameterError("cannot render an empty attribution map")
    if a.ndim == 3:
        a = a.sum(axis=2)
    if a.ndim != 2:
        raise InvalidParameterError(f"expected (H, W[, C]) attribution, got shape {a.shape}")
    mag = np.abs(a)
    lo, hi = mag.min(), mag.max()
    if hi - lo <= 0:
        return np.full(mag.shape, 128, dtype=np.uint8)
    return np.round((mag - lo) / (hi - lo) * 255.0).astype(np.uint8)


def render_heatmap(attribution, path) -> None:
    """Render an attribution map (or raw array) as a grayscale PNG."""
    pix = heatmap_pixels(attribution)
    try:
        Image.fromarray(pix, mode="L").save(os.fspath(path), format="PNG")
    except OSError as exc:
        raise ArtifactIOError(f"{path}: cannot write heatmap: {exc}") from exc
