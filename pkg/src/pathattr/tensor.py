"""Dense image tensors, Gaussian blurring and the compression-size probe.

Images are plain ``numpy.ndarray`` objects of shape ``(H, W, C)`` holding
float64 intensities, nominally in ``[0, 1]``. :func:`as_image` validates and
normalizes anything array-like into that layout.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidParameterError

__all__ = [
    "GaussianKernel",
    "as_image",
    "blur",
    "compressed_size",
    "default_radius",
    "make_gaussian_kernel",
    "quantize",
]


def as_image(x, *, copy: bool = False) -> np.ndarray:
    """Return ``x`` as a finite float64 ``(H, W, C)`` array.

    2-D input is treated as a single-channel image.
    """
    arr = np.array(x, dtype=np.float64, copy=copy) if copy else np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise InvalidParameterError(f"expected an (H, W, C) image, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidParameterError("image has zero size")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError("image contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class GaussianKernel:
    """Normalized 2-D Gaussian weights of shape ``(2*radius+1, 2*radius+1)``.

    The variance parameter of the continuous kernel ``exp(-(p²+q²)/a)/(πa)``
    relates to ``sigma`` by ``a = 2·sigma²``.
    """

    sigma: float
    radius: int
    weights: np.ndarray

    @property
    def variance_param(self) -> float:
        return 2.0 * self.sigma**2

    @property
    def profile(self) -> np.ndarray:
        """The normalized 1-D factor; ``weights == outer(profile, profile)``."""
        return _gaussian_profile(self.sigma, self.radius)


def default_radius(sigma: float) -> int:
    """Truncation radius covering three standard deviations."""
    return max(1, math.ceil(3.0 * sigma))


def _gaussian_profile(sigma: float, radius: int) -> np.ndarray:
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return w / w.sum()


def make_gaussian_kernel(sigma: float, radius: int | None = None) -> GaussianKernel:
    if not sigma > 0 or not math.isfinite(sigma):
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    if radius is None:
        radius = default_radius(sigma)
    if radius < 1:
        raise InvalidParameterError(f"radius must be >= 1, got {radius}")
    p = _gaussian_profile(sigma, radius)
    w = np.outer(p, p)
    w /= w.sum()
    w.setflags(write=False)
    return GaussianKernel(sigma=float(sigma), radius=int(radius), weights=w)


def blur(x, sigma: float, radius: int | None = None) -> np.ndarray:
    """Gaussian-blur each channel of ``x`` with reflect padding.

    The 2-D kernel is separable, so it is applied as two 1-D passes. ``sigma``
    of zero returns an unmodified copy.
    """
    x = as_image(x)
    if sigma < 0 or not math.isfinite(sigma):
        raise InvalidParameterError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return x.copy()
    kernel = make_gaussian_kernel(sigma, radius)
    p = kernel.profile
    # scipy "mirror" is reflection without repeating the edge sample
    out = ndimage.correlate1d(x, p, axis=0, mode="mirror")
    return ndimage.correlate1d(out, p, axis=1, mode="mirror")


def quantize(x) -> np.ndarray:
    """8-bit quantization used for PNG output and compression."""
    x = as_image(x)
    return np.round(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)


def compressed_size(x) -> int:
    """Byte length of the DEFLATE-compressed, 8-bit quantized pixel buffer."""
    raw = np.ascontiguousarray(quantize(x)).tobytes()
    return len(zlib.compress(raw, 9))
