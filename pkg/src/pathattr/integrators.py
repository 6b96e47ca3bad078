"""Turn a path and a gradient oracle into an attribution map.

Two integrators share the same per-step quantities (:class:`StepRecord`):

* :func:`riemann_integrate` is the left Riemann sum
  ``Σ_j g(x_j) ⊙ (x_{j+1} − x_j)``. It gives IG, GIG or BlurIG depending on
  the path.
* :func:`idgi_integrate` keeps only the gradient direction. Each step adds
  ``g² · d / (g·g)`` with ``d = f_c(x_{j+1}) − f_c(x_j)``, so step ``j``
  accounts for exactly ``d``.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import models, paths
from .errors import ArtifactIOError, DegenerateStepError, FormatError, InvalidParameterError
from .tensor import as_image

__all__ = [
    "METHODS",
    "AttributionMap",
    "StepRecord",
    "attribute",
    "attribute_pair",
    "build_path",
    "idgi_integrate",
    "load_attribution",
    "project_to_hyperplane",
    "riemann_integrate",
    "save_attribution",
    "step_records",
    "vanilla_gradient",
]

log = logging.getLogger(__name__)

METHODS = ("vanilla", "ig", "gig", "blurig")
ATTRIBUTION_SCHEMA = "pathattr.attribution"
ATTRIBUTION_VERSION = 1


@dataclass
class AttributionMap:
    values: np.ndarray
    method: str
    idgi: bool = False
    steps: int = 0
    baseline: str = "none"
    target: int = 0
    degenerate_steps: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise InvalidParameterError("attribution contains NaN or Inf")

    @property
    def label(self) -> str:
        """Row label in comparison tables, e.g. ``IG`` or ``GIG+IDGI``."""
        name = {"vanilla": "VG", "ig": "IG", "gig": "GIG", "blurig": "BlurIG"}[self.method]
        return name + ("+IDGI" if self.idgi else "")

    @property
    def shape(self):
        return self.values.shape

    def metadata(self) -> dict:
        return {
            "schema": ATTRIBUTION_SCHEMA,
            "version": ATTRIBUTION_VERSION,
            "shape": list(self.values.shape),
            "dtype": "<f8",
            "method": self.method,
            "idgi": self.idgi,
            "steps": self.steps,
            "baseline": self.baseline,
            "target": self.target,
            "degenerate_steps": self.degenerate_steps,
            "extra": self.extra,
        }


@dataclass(frozen=True)
class StepRecord:
    """One Riemann step: gradient at ``x_j``, score change and path segment."""

    j: int
    g: np.ndarray
    d: float
    segment: np.ndarray

    @property
    def original(self) -> np.ndarray:
        """Per-feature contribution along the path segment."""
        return self.g * self.segment

    def important(self) -> np.ndarray:
        """Per-feature contribution along the gradient direction, summing to ``d``."""
        gg = float(np.vdot(self.g, self.g))
        if gg == 0:
            raise DegenerateStepError(f"step {self.j} has a zero gradient")
        return self.g * self.g * (self.d / gg)


def _path_and_oracle(m, c, path):
    if not isinstance(path, paths.PathPoints):
        raise InvalidParameterError("expected a PathPoints instance")
    if len(path) < 2:
        raise InvalidParameterError("path must have at least two points")
    if tuple(path.points.shape[1:]) != tuple(m.input_shape):
        raise InvalidParameterError(f"path shape {path.points.shape[1:]} != model input {tuple(m.input_shape)}")
    if not 0 <= int(c) < m.num_classes:
        raise InvalidParameterError(f"class {c} out of range")
    return int(c), path.points


def step_records(m, c: int, path: paths.PathPoints) -> list[StepRecord]:
    """Per-step gradient, score difference and segment along ``path``."""
    c, pts = _path_and_oracle(m, c, path)
    grads = models.gradients_batch(m, pts[:-1], c)
    f = models.values_batch(m, pts, c)
    seg = np.diff(pts, axis=0)
    d = np.diff(f)
    return [StepRecord(j, grads[j], float(d[j]), seg[j]) for j in range(len(seg))]


def _accumulate(terms) -> np.ndarray:
    # fixed left-to-right order keeps every route to the same sum bit-identical
    total = None
    for t in terms:
        total = t.copy() if total is None else total + t
    return total


def _riemann(records) -> np.ndarray:
    return _accumulate(r.g * r.segment for r in records)


def _idgi(records) -> tuple[np.ndarray, int]:
    total = np.zeros_like(records[0].g)
    degenerate = 0
    for r in records:
        gg = float(np.vdot(r.g, r.g))
        if gg == 0:
            if r.d != 0:
                degenerate += 1
            continue
        total += r.g * r.g * (r.d / gg)
    if degenerate:
        log.warning("IDGI dropped %d zero-gradient step(s) with nonzero score change", degenerate)
    return total, degenerate


def riemann_integrate(m, c: int, path: paths.PathPoints, **meta) -> AttributionMap:
    c, pts = _path_and_oracle(m, c, path)
    grads = models.gradients_batch(m, pts[:-1], c)
    values = _accumulate(grads * np.diff(pts, axis=0))
    return AttributionMap(values, path.method, idgi=False, steps=path.steps, target=c, **meta)


def idgi_integrate(m, c: int, path: paths.PathPoints, **meta) -> AttributionMap:
    """Important-direction integration over an arbitrary path.

    A step whose gradient is exactly zero carries no direction and is skipped.
    If its score change is nonzero, it is counted in ``degenerate_steps`` and
    that part of ``f_c(x) − f_c(x')`` goes unattributed.
    """
    records = step_records(m, c, path)
    values, degenerate = _idgi(records)
    return AttributionMap(values, path.method, idgi=True, steps=path.steps, target=int(c),
                          degenerate_steps=degenerate, **meta)


def project_to_hyperplane(x_j, g, d: float) -> np.ndarray:
    """Move ``x_j`` along ``g`` by ``d/|g|``, i.e. ``x_j + g·d/(g·g)``."""
    x_j = np.asarray(x_j, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != x_j.shape:
        raise InvalidParameterError(f"gradient shape {g.shape} != point shape {x_j.shape}")
    gg = float(np.vdot(g, g))
    if gg == 0:
        raise DegenerateStepError("cannot project along a zero gradient")
    return x_j + g * (d / gg)


def vanilla_gradient(m, c: int, x) -> AttributionMap:
    return AttributionMap(models.gradient(m, x, c), "vanilla", target=int(c))


def build_path(m, c: int, x, method: str, *, steps: int = paths.DEFAULT_STEPS, baseline="black",
               max_sigma: float = paths.DEFAULT_MAX_SIGMA,
               fraction_per_step: float = paths.DEFAULT_FRACTION) -> paths.PathPoints:
    x = as_image(x)
    if method == "ig":
        return paths.straight_path(paths.make_baseline(baseline, x), x, steps)
    if method == "gig":
        return paths.guided_path(m, c, paths.make_baseline(baseline, x), x, steps, fraction_per_step)
    if method == "blurig":
        return paths.blur_path(x, paths.BlurSchedule.quadratic(max_sigma, steps))
    raise InvalidParameterError(f"no path for method {method!r}")


def _baseline_tag(method, baseline, max_sigma):
    if method == "blurig":
        return f"blur:{max_sigma:g}"
    return baseline if isinstance(baseline, str) else "custom"


def attribute(m, c: int, x, method: str = "ig", idgi: bool = False, *, steps: int = paths.DEFAULT_STEPS,
              baseline="black", max_sigma: float = paths.DEFAULT_MAX_SIGMA,
              fraction_per_step: float = paths.DEFAULT_FRACTION) -> AttributionMap:
    """Explain class ``c`` at ``x`` with one of ``vanilla``, ``ig``, ``gig``, ``blurig``.

    ``idgi=True`` swaps the Riemann sum for important-direction integration
    over the same path. It is rejected for ``vanilla``, which has no path.
    """
    if method not in METHODS:
        raise InvalidParameterError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method == "vanilla":
        if idgi:
            raise InvalidParameterError("IDGI needs an integration path; vanilla gradient has none")
        return vanilla_gradient(m, c, x)
    path = build_path(m, c, x, method, steps=steps, baseline=baseline, max_sigma=max_sigma,
                      fraction_per_step=fraction_per_step)
    tag = _baseline_tag(method, baseline, max_sigma)
    if idgi:
        return idgi_integrate(m, c, path, baseline=tag)
    return riemann_integrate(m, c, path, baseline=tag)


def attribute_pair(m, c: int, x, method: str, **options) -> tuple[AttributionMap, AttributionMap]:
    """Plain and IDGI attributions from a single pass over one shared path.

    Equivalent to calling :func:`attribute` twice, but the path and the
    gradients are computed only once.
    """
    if method == "vanilla":
        raise InvalidParameterError("IDGI needs an integration path; vanilla gradient has none")
    path = build_path(m, c, x, method, **options)
    records = step_records(m, c, path)
    tag = _baseline_tag(method, options.get("baseline", "black"), options.get("max_sigma", paths.DEFAULT_MAX_SIGMA))
    plain = AttributionMap(_riemann(records), method, False, path.steps, tag, int(c))
    values, degenerate = _idgi(records)
    return plain, AttributionMap(values, method, True, path.steps, tag, int(c), degenerate)


# ---------------------------------------------------------------------------
# serialization: raw little-endian float64 plus a JSON sidecar


def save_attribution(a: AttributionMap, stem) -> tuple[str, str]:
    """Write ``<stem>.bin`` and ``<stem>.json``; returns both paths."""
    stem = os.fspath(stem)
    bin_path, meta_path = stem + ".bin", stem + ".json"
    try:
        with open(bin_path, "wb") as fh:
            fh.write(np.ascontiguousarray(a.values, dtype="<f8").tobytes())
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump(a.metadata(), fh, sort_keys=True, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise ArtifactIOError(f"{stem}: cannot write attribution: {exc}") from exc
    return bin_path, meta_path


def load_attribution(stem) -> AttributionMap:
    stem = os.fspath(stem)
    if stem.endswith((".bin", ".json")):
        stem = stem.rsplit(".", 1)[0]
    try:
        with open(stem + ".json", encoding="utf-8") as fh:
            meta = json.load(fh)
        raw = np.fromfile(stem + ".bin", dtype="<f8")
    except OSError as exc:
        raise ArtifactIOError(f"{stem}: cannot read attribution: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{stem}.json: invalid JSON: {exc}") from exc
    if meta.get("schema") != ATTRIBUTION_SCHEMA or meta.get("version") != ATTRIBUTION_VERSION:
        raise FormatError(f"{stem}.json: unsupported attribution schema/version {meta.get('version')!r}")
    shape = tuple(meta["shape"])
    if raw.size != int(np.prod(shape)):
        raise FormatError(f"{stem}.bin holds {raw.size} values, sidecar says shape {shape}")
    return AttributionMap(
        raw.reshape(shape).astype(np.float64),
        meta["method"],
        bool(meta["idgi"]),
        int(meta["steps"]),
        meta["baseline"],
        int(meta["target"]),
        int(meta.get("degenerate_steps", 0)),
        meta.get("extra", {}),
    )
