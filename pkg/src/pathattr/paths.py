"""Integration paths from a reference point to the explained input.

Three constructors are provided:

* :func:`straight_path` is the straight line used by Integrated Gradients.
* :func:`guided_path` is the greedy low-gradient-first path of Guided IG.
* :func:`blur_path` runs from a heavily blurred copy of the input back to
  the input itself (Blur IG).

Every path is ``N+1`` points whose first entry is the reference and whose
last entry is the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import models
from .errors import InvalidParameterError
from .tensor import as_image, blur

__all__ = [
    "DEFAULT_FRACTION",
    "DEFAULT_MAX_SIGMA",
    "DEFAULT_STEPS",
    "BlurSchedule",
    "PathPoints",
    "blur_path",
    "guided_path",
    "make_baseline",
    "straight_path",
]

DEFAULT_STEPS = 200
DEFAULT_MAX_SIGMA = 50.0
DEFAULT_FRACTION = 0.25
METHODS = ("ig", "gig", "blurig")


@dataclass(frozen=True)
class PathPoints:
    points: np.ndarray  # (N+1, H, W, C)
    alphas: np.ndarray  # (N+1,)
    method: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidParameterError(f"unknown path method {self.method!r}")
        if self.points.ndim != 4 or len(self.points) != len(self.alphas):
            raise InvalidParameterError("points and alphas must have matching length")
        if len(self.points) < 2:
            raise InvalidParameterError("a path needs at least two points")
        if np.any(np.diff(self.alphas) <= 0):
            raise InvalidParameterError("alphas must be strictly increasing")

    @property
    def steps(self) -> int:
        return len(self.points) - 1

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def __len__(self):
        return len(self.points)


def _check_steps(n: int) -> int:
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"number of steps must be a positive integer, got {n}")
    return int(n)


def _pair(x_ref, x):
    x_ref, x = as_image(x_ref), as_image(x)
    if x_ref.shape != x.shape:
        raise InvalidParameterError(f"baseline shape {x_ref.shape} != input shape {x.shape}")
    return x_ref, x


def make_baseline(kind, x) -> np.ndarray:
    """``"black"``, ``"white"`` or an explicit array of the input's shape."""
    x = as_image(x)
    if isinstance(kind, str):
        if kind == "black":
            return np.zeros_like(x)
        if kind == "white":
            return np.ones_like(x)
        raise InvalidParameterError(f"unknown baseline {kind!r}")
    ref = as_image(kind)
    if ref.shape != x.shape:
        raise InvalidParameterError(f"baseline shape {ref.shape} != input shape {x.shape}")
    return ref


def straight_path(x_ref, x, steps: int = DEFAULT_STEPS) -> PathPoints:
    """Points ``x' + (j/N)(x - x')`` for ``j = 0..N``."""
    n = _check_steps(steps)
    x_ref, x = _pair(x_ref, x)
    alphas = np.arange(n + 1, dtype=np.float64) / n
    points = x_ref[None] + alphas[:, None, None, None] * (x - x_ref)[None]
    points[-1] = x
    return PathPoints(points, alphas, "ig")


def guided_path(
    m,
    c: int,
    x_ref,
    x,
    steps: int = DEFAULT_STEPS,
    fraction_per_step: float = DEFAULT_FRACTION,
) -> PathPoints:
    """Greedy approximation of the minimum-absolute-gradient path.

    Each step spends an equal share of the remaining L1 distance,
    ``‖current − x‖₁ / (steps remaining)``. The gradient is taken at the
    current point and the unfinished coordinates are sorted by ``|g|``,
    smallest first. They are then moved toward ``x`` in chunks of
    ``ceil(fraction_per_step · unfinished)`` coordinates. A chunk that fits
    in the remaining budget moves all the way. Otherwise every coordinate in
    the chunk moves the same fraction of its own remaining distance, so the
    step consumes the budget exactly. With ``fraction_per_step=1`` this gives
    the straight line.
    """
    n = _check_steps(steps)
    if not 0 < fraction_per_step <= 1:
        raise InvalidParameterError(f"fraction_per_step must be in (0, 1], got {fraction_per_step}")
    x_ref, x = _pair(x_ref, x)
    target = x.ravel()
    cur = x_ref.ravel().copy()
    points = np.empty((n + 1,) + x.shape)
    points[0] = x_ref
    for j in range(n - 1):
        remaining = np.abs(target - cur)
        total = remaining.sum()
        if total == 0:
            points[j + 1 :] = x
            break
        budget = total / (n - j)
        g = np.abs(models.gradient(m, cur.reshape(x.shape), c)).ravel()
        open_idx = np.flatnonzero(remaining > 0)
        open_idx = open_idx[np.argsort(g[open_idx], kind="stable")]
        chunk = max(1, math.ceil(fraction_per_step * len(open_idx)))
        pos = 0
        while budget > 0 and pos < len(open_idx):
            idx = open_idx[pos : pos + chunk]
            need = remaining[idx].sum()
            if need <= budget:
                cur[idx] = target[idx]
                budget -= need
                pos += chunk
            else:
                share = budget / need
                cur[idx] += share * (target[idx] - cur[idx])
                budget = 0.0
        points[j + 1] = cur.reshape(x.shape)
    points[n] = x
    alphas = np.arange(n + 1, dtype=np.float64) / n
    return PathPoints(points, alphas, "gig")


@dataclass(frozen=True)
class BlurSchedule:
    """Strictly decreasing blur widths, ``sigmas[0] = max_sigma``, ``sigmas[-1] = 0``."""

    sigmas: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=np.float64)
        if s.ndim != 1 or len(s) < 2:
            raise InvalidParameterError("a blur schedule needs at least two sigmas")
        if np.any(np.diff(s) >= 0):
            raise InvalidParameterError("blur sigmas must be strictly decreasing")
        if s[-1] != 0 or s[0] <= 0:
            raise InvalidParameterError("blur sigmas must start positive and end at 0")
        object.__setattr__(self, "sigmas", s)

    @property
    def max_sigma(self) -> float:
        return float(self.sigmas[0])

    @property
    def steps(self) -> int:
        return len(self.sigmas) - 1

    @classmethod
    def quadratic(cls, max_sigma: float = DEFAULT_MAX_SIGMA, steps: int = DEFAULT_STEPS) -> "BlurSchedule":
        """Schedule whose variance ``sigma²`` falls linearly from ``max_sigma²`` to 0."""
        n = _check_steps(steps)
        if not max_sigma > 0:
            raise InvalidParameterError(f"max_sigma must be positive, got {max_sigma}")
        frac = 1.0 - np.arange(n + 1, dtype=np.float64) / n
        return cls(max_sigma * np.sqrt(frac))


def blur_path(x, schedule: BlurSchedule | None = None) -> PathPoints:
    """Blur path ordered from the most blurred image to ``x`` itself."""
    x = as_image(x)
    if schedule is None:
        schedule = BlurSchedule.quadratic()
    elif not isinstance(schedule, BlurSchedule):
        schedule = BlurSchedule(schedule)
    s = schedule.sigmas
    points = np.stack([blur(x, float(sig)) for sig in s])
    # alpha measures progress in variance, normalized to [0, 1]
    var = s**2
    alphas = 1.0 - var / var[0]
    return PathPoints(points, alphas, "blurig")
