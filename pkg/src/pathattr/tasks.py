"""Synthetic classification tasks whose class evidence sits in a known mask.

Only one family is provided, ``mask-quadrant``: a square is placed in one
of the image quadrants and the label is that quadrant's index (row-major,
0 = top-left). The square can be bright, dark, either at random, or a
bright/black checkerboard. The background is uniform noise, and optional dim
distractor squares go into other quadrants. The returned masks mark the
class square, which gives localization metrics a ground truth.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import InvalidParameterError

__all__ = ["PATTERNS", "PRESETS", "TASKS", "TaskSpec", "make_task", "sample"]

TASKS = ("mask-quadrant",)
PATTERNS = ("bright", "dark", "mixed", "checker")

# named task variants; "study" puts black pixels inside the class region
PRESETS = {
    "default": {},
    "study": {"pattern": "checker", "noise": 0.5, "distractors": 0},
}


@dataclass(frozen=True)
class TaskSpec:
    name: str = "mask-quadrant"
    height: int = 32
    width: int = 32
    channels: int = 3
    num_classes: int = 4
    square: int = 6
    noise: float = 0.3
    background: float = 0.0
    pattern: str = "bright"
    bright: tuple[float, float] = (0.65, 1.0)
    dark: tuple[float, float] = (0.0, 0.05)
    distractors: int = 1
    distractor_level: tuple[float, float] = (0.25, 0.45)

    def __post_init__(self):
        if self.name not in TASKS:
            raise InvalidParameterError(f"unknown task {self.name!r}; choose from {', '.join(TASKS + tuple(PRESETS))}")
        if not 2 <= self.num_classes <= 4:
            raise InvalidParameterError(f"mask-quadrant needs 2..4 classes, got {self.num_classes}")
        if self.height % 2 or self.width % 2:
            raise InvalidParameterError("image sides must be even")
        if not 1 <= self.square <= min(self.height, self.width) // 2:
            raise InvalidParameterError(f"square side {self.square} does not fit a quadrant")
        if self.channels not in (1, 3):
            raise InvalidParameterError("channels must be 1 or 3")
        if not 0 <= self.noise <= 1:
            raise InvalidParameterError("noise must be in [0, 1]")
        if not 0 <= self.background <= 1 - self.noise:
            raise InvalidParameterError("background + noise must stay within [0, 1]")
        if self.pattern not in PATTERNS:
            raise InvalidParameterError(f"pattern must be one of {PATTERNS}")
        if not 0 <= self.distractors <= 3:
            raise InvalidParameterError("distractors must be in 0..3")

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bright"] = list(self.bright)
        d["dark"] = list(self.dark)
        d["distractor_level"] = list(self.distractor_level)
        return d


def make_task(spec=None, **overrides) -> TaskSpec:
    """Build a :class:`TaskSpec` from a name, a dict, or keyword overrides."""
    if isinstance(spec, TaskSpec):
        data = spec.to_dict()
    elif isinstance(spec, str) and spec in PRESETS:
        data = dict(PRESETS[spec])
    elif isinstance(spec, str):
        data = {"name": spec}
    elif spec is None:
        data = {}
    else:
        data = dict(spec)
    data.update(overrides)
    known = {f.name for f in fields(TaskSpec)}
    unknown = set(data) - known
    if unknown:
        raise InvalidParameterError(f"unknown task fields: {sorted(unknown)}")
    for key in ("bright", "dark", "distractor_level"):
        if key in data:
            data[key] = tuple(float(v) for v in data[key])
    return TaskSpec(**data)


def _place(rng, task, quadrant):
    half_h, half_w = task.height // 2, task.width // 2
    r0 = (quadrant // 2) * half_h
    c0 = (quadrant % 2) * half_w
    r = r0 + int(rng.integers(0, half_h - task.square + 1))
    c = c0 + int(rng.integers(0, half_w - task.square + 1))
    return r, c


def sample(task: TaskSpec, n: int, seed: int):
    """Draw ``n`` labelled images.

    Returns:
        ``(images, labels, masks)`` with shapes ``(n, H, W, C)``, ``(n,)`` and
        ``(n, H, W)``.
    """
    if n < 1:
        raise InvalidParameterError("need at least one sample")
    rng = np.random.default_rng(seed)
    H, W, C = task.input_shape
    s = task.square
    images = task.background + rng.uniform(0.0, task.noise, size=(n, H, W, C))
    labels = rng.integers(0, task.num_classes, size=n)
    masks = np.zeros((n, H, W), dtype=bool)
    checker = (np.add.outer(np.arange(s), np.arange(s)) % 2).astype(bool)
    for k in range(n):
        q = int(labels[k])
        others = [o for o in range(4) if o != q]
        rng.shuffle(others)
        for o in others[: task.distractors]:
            r, c = _place(rng, task, o)
            images[k, r : r + s, c : c + s, :] = rng.uniform(*task.distractor_level, size=C)
        r, c = _place(rng, task, q)
        dark = task.pattern == "dark" or (task.pattern == "mixed" and rng.random() < 0.5)
        images[k, r : r + s, c : c + s, :] = rng.uniform(*(task.dark if dark else task.bright), size=C)
        if task.pattern == "checker":
            images[k, r : r + s, c : c + s, :][checker] = rng.uniform(*task.dark, size=C)
        masks[k, r : r + s, c : c + s] = True
    return images, labels.astype(np.int64), masks
