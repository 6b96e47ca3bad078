"""Run configuration, the evaluation battery over image sets, and report files.

An evaluation report is a JSON document with per-image records (one per
image × method row), aggregate mean/median per row and metric, the aggregate
curves, warning counters, and a config echo. Wall-clock time lives only in
the ``timestamp`` field, so two runs of the same config differ in that field
alone.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import glob
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, integrators, metrics, models, paths, plotting, tasks
from .errors import ArtifactIOError, FormatError, InvalidParameterError
from .imageio import read_mask, read_png

log = logging.getLogger(__name__)

REPORT_SCHEMA = "pathattr.eval-report"
REPORT_VERSION = 1
METRICS = ("insertion", "aic-sic", "loc")
INFO_LEVELS = ("entropy", "msssim", "both")
ROW_ORDER = ("IG", "IG+IDGI", "GIG", "GIG+IDGI", "BlurIG", "BlurIG+IDGI", "VG")
LOWER_IS_BETTER = {"loc_mae"}
# config keys that change metric values; merged reports that differ here get a warning
RESULT_KEYS = ("model", "steps", "baseline", "max_sigma", "fraction", "info_level", "thresholds", "bins",
               "step_fraction", "threshold_levels", "importance", "target", "seed", "synthetic")


@dataclass
class RunConfig:
    command: str = "eval"
    model: str | None = None
    images: list = field(default_factory=list)
    masks: str | None = None
    attributions: str | None = None
    synthetic: int = 0
    task: object = None
    methods: list = field(default_factory=lambda: ["ig", "gig", "blurig", "vanilla"])
    idgi: bool = False
    pair: bool = False
    steps: int = paths.DEFAULT_STEPS
    baseline: str = "black"
    max_sigma: float = paths.DEFAULT_MAX_SIGMA
    fraction: float = paths.DEFAULT_FRACTION
    metrics: list = field(default_factory=lambda: list(METRICS))
    info_level: str = "msssim"
    thresholds: int = 25
    bins: int = 100
    step_fraction: float = 0.05
    threshold_levels: int = 256
    importance: str = "signed"
    target: object = "predicted"
    seed: int = 0
    jobs: int = 1
    out: str = "out"
    train: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        for m in self.methods:
            if m not in integrators.METHODS:
                raise InvalidParameterError(f"unknown method {m!r}")
        if not self.methods:
            raise InvalidParameterError("no methods selected")
        for m in self.metrics:
            if m not in METRICS:
                raise InvalidParameterError(f"unknown metric {m!r}; choose from {', '.join(METRICS)}")
        if self.command == "eval" and not self.metrics:
            raise InvalidParameterError("metric selection is empty")
        if self.info_level not in INFO_LEVELS:
            raise InvalidParameterError(f"info level must be one of {INFO_LEVELS}")
        if self.steps < 1:
            raise InvalidParameterError("steps must be >= 1")
        if not self.max_sigma > 0:
            raise InvalidParameterError("max_sigma must be positive")
        if not 0 < self.fraction <= 1:
            raise InvalidParameterError("fraction must be in (0, 1]")
        if not 0 < self.step_fraction <= 1:
            raise InvalidParameterError("step_fraction must be in (0, 1]")
        if self.thresholds < 2 or self.bins < 2 or self.threshold_levels < 2:
            raise InvalidParameterError("thresholds, bins and threshold_levels must be >= 2")
        if self.importance not in ("signed", "abs"):
            raise InvalidParameterError("importance must be 'signed' or 'abs'")
        if self.baseline not in ("black", "white") and not os.path.exists(str(self.baseline)):
            raise InvalidParameterError(f"baseline must be black, white or an existing PNG path, got {self.baseline!r}")
        if self.jobs < 1:
            raise InvalidParameterError("jobs must be >= 1")
        if self.synthetic < 0:
            raise InvalidParameterError("synthetic count must be >= 0")
        if not (self.target in ("predicted", "label") or isinstance(self.target, int)):
            raise InvalidParameterError("target must be 'predicted', 'label' or a class index")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if isinstance(self.task, tasks.TaskSpec):
            d["task"] = self.task.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ArtifactIOError(f"{path}: cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON config: {exc}") from exc
    if not isinstance(data, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    return data


# ---------------------------------------------------------------------------
# inputs


@dataclass
class Item:
    image_id: str
    x: np.ndarray
    mask: np.ndarray | None = None
    label: int | None = None


def _expand_images(specs) -> list[str]:
    found = []
    for spec in specs:
        spec = os.fspath(spec)
        if os.path.isdir(spec):
            found.extend(glob.glob(os.path.join(spec, "*.png")))
        elif any(ch in spec for ch in "*?["):
            found.extend(glob.glob(spec))
        elif os.path.exists(spec):
            found.append(spec)
        else:
            raise ArtifactIOError(f"{spec}: no such image")
    return sorted(set(found))


def load_items(cfg: RunConfig, weights: models.ToyModelWeights | None = None) -> list[Item]:
    """Images to evaluate, sorted by id: PNG files, or synthetic task draws."""
    items = []
    if cfg.synthetic:
        task_spec = cfg.task
        if task_spec is None and weights is not None:
            task_spec = weights.meta.get("task")
        task = tasks.make_task(task_spec)
        xs, labels, masks = tasks.sample(task, cfg.synthetic, cfg.seed)
        items = [Item(f"synthetic-{k:04d}", xs[k], masks[k], int(labels[k])) for k in range(cfg.synthetic)]
    for path in _expand_images(cfg.images):
        stem = Path(path).stem
        mask = None
        if cfg.masks:
            mpath = os.path.join(cfg.masks, stem + ".png")
            if os.path.exists(mpath):
                mask = read_mask(mpath)
        items.append(Item(stem, read_png(path), mask))
    if not items:
        raise InvalidParameterError("no images matched")
    if cfg.command == "eval" and "loc" in cfg.metrics and any(it.mask is None for it in items):
        missing = [it.image_id for it in items if it.mask is None]
        raise InvalidParameterError(f"localization needs masks; missing for {missing[:5]}")
    items.sort(key=lambda it: it.image_id)
    return items


def resolve_target(m, item: Item, target) -> int:
    if isinstance(target, int):
        return target
    if target == "label":
        if item.label is None:
            raise InvalidParameterError(f"{item.image_id}: no label available for target=label")
        return item.label
    return int(np.argmax(m.probabilities(item.x)))


def baseline_image(cfg: RunConfig):
    if cfg.baseline in ("black", "white"):
        return cfg.baseline
    return read_png(cfg.baseline)


def variants(methods) -> list[tuple[str, bool]]:
    """Table rows for the requested methods: plain and +IDGI for IG-family, plain for vanilla."""
    rows = []
    for m in integrators.METHODS:
        if m in methods:
            rows.append((m, False))
            if m != "vanilla":
                rows.append((m, True))
    return rows


def attribution_tag(method: str, idgi: bool) -> str:
    return method + ("+idgi" if idgi else "")


def compute_attributions(m, c, x, cfg: RunConfig) -> dict[tuple[str, bool], integrators.AttributionMap]:
    out = {}
    options = dict(steps=cfg.steps, baseline=baseline_image(cfg), max_sigma=cfg.max_sigma,
                   fraction_per_step=cfg.fraction)
    for method in integrators.METHODS:
        if method not in cfg.methods:
            continue
        if method == "vanilla":
            out[(method, False)] = integrators.vanilla_gradient(m, c, x)
        else:
            plain, idgi = integrators.attribute_pair(m, c, x, method, **options)
            out[(method, False)], out[(method, True)] = plain, idgi
    return out


# ---------------------------------------------------------------------------
# per-image evaluation


def _info_kinds(cfg):
    return ("entropy", "msssim") if cfg.info_level == "both" else (cfg.info_level,)


def evaluate_item(m, item: Item, cfg: RunConfig):
    """Metrics for every method row on one image.

    Returns:
        ``(records, samples)``. ``samples`` holds the raw curve data needed for
        aggregate curves, keyed by row label.
    """
    c = resolve_target(m, item, cfg.target)
    if cfg.attributions:
        maps = {}
        for method, idgi in variants(cfg.methods):
            stem = os.path.join(cfg.attributions, f"{item.image_id}__{attribution_tag(method, idgi)}")
            maps[(method, idgi)] = integrators.load_attribution(stem)
    else:
        maps = compute_attributions(m, c, item.x, cfg)
    records, samples = [], {}
    for (method, idgi), a in maps.items():
        imp = metrics.pixel_importance(a, reduction=cfg.importance)
        vals, smp, warn = {}, {}, {"degenerate_steps": a.degenerate_steps}
        if "insertion" in cfg.metrics:
            prob, ratio = metrics.insertion_curve(m, c, item.x, imp, cfg.step_fraction)
            vals["insertion_prob"] = prob.auc
            vals["insertion_ratio"] = ratio.auc
            smp["insertion"] = (prob.xs, prob.ys, ratio.ys)
        if "aic-sic" in cfg.metrics:
            for info in _info_kinds(cfg):
                levels, correct, ratios, w = metrics.bokeh_samples(m, c, item.x, imp, info, cfg.thresholds)
                aic, sic = metrics.information_curves(levels, correct, ratios, cfg.bins)
                vals[f"aic_{info}"] = aic.auc
                vals[f"sic_{info}"] = sic.auc
                smp[info] = (levels, correct, ratios)
                for k, v in w.items():
                    warn[k] = warn.get(k, 0) + v
        if "loc" in cfg.metrics:
            loc = metrics.localization(imp, item.mask, cfg.threshold_levels)
            vals["loc_f1"] = loc.f1
            vals["loc_roc_auc"] = loc.roc_auc
            vals["loc_mae"] = loc.mae
        records.append({
            "image": item.image_id,
            "target": c,
            "method": method,
            "idgi": idgi,
            "label": a.label,
            "metrics": vals,
            "warnings": warn,
        })
        samples[a.label] = smp
    return records, samples


_WORKER = {}


def _worker_init(weights_doc, cfg_dict):
    _WORKER["model"] = models.ToyModel(models.weights_from_dict(weights_doc))
    _WORKER["cfg"] = RunConfig.from_dict(cfg_dict)


def _worker_run(item):
    return evaluate_item(_WORKER["model"], item, _WORKER["cfg"])


def _row_key(label):
    return ROW_ORDER.index(label) if label in ROW_ORDER else len(ROW_ORDER)


def aggregate(records) -> dict:
    """Mean, median and count per row label and metric."""
    by_label = {}
    for r in records:
        for name, v in r["metrics"].items():
            by_label.setdefault(r["label"], {}).setdefault(name, []).append(v)
    out = {}
    for label in sorted(by_label, key=_row_key):
        out[label] = {
            name: {"mean": float(np.mean(vs)), "median": float(np.median(vs)), "n": len(vs)}
            for name, vs in sorted(by_label[label].items())
        }
    return out


def _curve_doc(xs, ys, auc, **extra):
    return {"x": [float(v) for v in xs], "y": [float(v) for v in ys], "auc": float(auc), **extra}


def aggregate_curves(all_samples, cfg: RunConfig) -> dict:
    """Mean insertion curves and pooled AIC/SIC curves per row label."""
    curves = {}
    labels = sorted({lab for s in all_samples for lab in s}, key=_row_key)
    for label in labels:
        per = [s[label] for s in all_samples if label in s]
        doc = {}
        if per and "insertion" in per[0]:
            xs = per[0]["insertion"][0]
            prob = np.mean([p["insertion"][1] for p in per], axis=0)
            ratio = np.mean([p["insertion"][2] for p in per], axis=0)
            doc["insertion_prob"] = _curve_doc(xs, prob, metrics.trapezoid_auc(xs, prob))
            doc["insertion_ratio"] = _curve_doc(xs, ratio, metrics.trapezoid_auc(xs, ratio))
        for info in _info_kinds(cfg):
            if per and info in per[0]:
                levels = np.concatenate([p[info][0] for p in per])
                correct = np.concatenate([p[info][1] for p in per])
                ratios = np.concatenate([p[info][2] for p in per])
                aic, sic = metrics.information_curves(levels, correct, ratios, cfg.bins)
                doc[f"aic_{info}"] = _curve_doc(aic.xs, aic.ys, aic.auc, bins_occupied=aic.bins_occupied)
                doc[f"sic_{info}"] = _curve_doc(sic.xs, sic.ys, sic.auc, bins_occupied=sic.bins_occupied)
                doc[f"levels_{info}"] = [float(v) for v in levels]
        curves[label] = doc
    return curves


def run_eval(cfg: RunConfig) -> dict:
    """Evaluate every selected method row over the image set and build the report."""
    cfg.validate()
    if not cfg.model:
        raise InvalidParameterError("eval needs a model weights file")
    weights = models.load_weights(cfg.model)
    m = models.ToyModel(weights)
    items = load_items(cfg, weights)
    if cfg.jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(cfg.jobs, initializer=_worker_init,
                                 initargs=(models.weights_to_dict(weights), cfg.to_dict())) as pool:
            results = list(pool.map(_worker_run, items))
    else:
        results = [evaluate_item(m, it, cfg) for it in items]
    records = [r for recs, _ in results for r in recs]
    records.sort(key=lambda r: (r["image"], _row_key(r["label"])))
    warnings = {}
    for r in records:
        for k, v in r["warnings"].items():
            warnings[k] = warnings.get(k, 0) + v
    config = cfg.to_dict()
    config.pop("jobs")
    config.pop("out")
    return {
        "schema": REPORT_SCHEMA,
        "version": REPORT_VERSION,
        "tool_version": __version__,
        "config": config,
        "records": records,
        "aggregates": aggregate(records),
        "curves": aggregate_curves([s for _, s in results], cfg),
        "warnings": dict(sorted(warnings.items())),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


# ---------------------------------------------------------------------------
# report files


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_report(report: dict, path) -> None:
    try:
        Path(path).write_text(dumps_report(report), encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(f"{path}: cannot write report: {exc}") from exc


def read_report(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ArtifactIOError(f"{path}: cannot read report: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != REPORT_SCHEMA:
        raise FormatError(f"{path}: not a pathattr evaluation report")
    if doc.get("version") != REPORT_VERSION:
        raise FormatError(f"{path}: report schema version {doc.get('version')!r} != {REPORT_VERSION}")
    return doc


def metric_names(table: dict) -> list[str]:
    names = {name for row in table.values() for name in row}
    return sorted(names)


def means_table(report: dict) -> dict:
    return {label: {k: v["mean"] for k, v in row.items()} for label, row in report["aggregates"].items()}


def format_table(table: dict, better: dict | None = None) -> str:
    """Fixed-width text table, one row per method label."""
    names = metric_names(table)
    head = ["method"] + names
    lines = ["  ".join(f"{h:>14}" for h in head)]
    for label in sorted(table, key=_row_key):
        cells = [f"{label:>14}"]
        for name in names:
            v = table[label].get(name)
            mark = "*" if better and better.get((label, name)) else " "
            cells.append(f"{v:13.4f}{mark}" if v is not None else f"{'-':>14}")
        lines.append("  ".join(cells))
    if better:
        lines.append("* better of the (method, method+IDGI) pair")
    return "\n".join(lines) + "\n"


def write_table_csv(table: dict, path, better: dict | None = None) -> None:
    names = metric_names(table)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["method"] + names
        if better is not None:
            header += [f"{n}_better" for n in names]
        w.writerow(header)
        for label in sorted(table, key=_row_key):
            row = [label] + [repr(table[label][n]) if n in table[label] else "" for n in names]
            if better is not None:
                row += [int(bool(better.get((label, n)))) for n in names]
            w.writerow(row)


def write_curve_csv(xs, ys, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        for x, y in zip(xs, ys):
            w.writerow([repr(float(x)), repr(float(y))])


def write_eval_outputs(report: dict, out_dir, figures: bool = True) -> dict[str, str]:
    """Report JSON, aggregate table (CSV/text), curve CSVs and figures."""
    out = Path(out_dir)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    files = {"report": str(out / "report.json")}
    write_report(report, files["report"])
    table = means_table(report)
    write_table_csv(table, out / "table.csv")
    (out / "table.txt").write_text(format_table(table), encoding="utf-8")
    files["table"] = str(out / "table.csv")
    groups = {}
    for label, docs in report["curves"].items():
        safe = label.replace("+", "_")
        for name, doc in docs.items():
            if name.startswith("levels_"):
                continue
            write_curve_csv(doc["x"], doc["y"], out / "curves" / f"{safe}__{name}.csv")
            groups.setdefault(name, {})[label] = (doc["x"], doc["y"], doc["auc"])
    if figures:
        titles = {
            "insertion_prob": ("Insertion", "inserted fraction", "probability"),
            "insertion_ratio": ("Insertion (normalized)", "inserted fraction", "probability ratio"),
        }
        for name, curves in groups.items():
            if name in titles:
                title, xl, yl = titles[name]
            else:
                kind, info = name.split("_", 1)
                title, xl, yl = f"{kind.upper()} ({info})", "information level", (
                    "accuracy" if kind == "aic" else "median probability ratio")
            path = out / f"{name}.png"
            plotting.plot_curves(curves, path, title, xl, yl)
            files[name] = str(path)
        levels = {}
        for docs in report["curves"].values():
            for name, vals in docs.items():
                if name.startswith("levels_"):
                    levels.setdefault(name[7:], []).extend(vals)
        if levels:
            path = out / "information_levels.png"
            plotting.plot_histogram(levels, path, report["config"]["bins"], "Bokeh information levels")
            files["levels"] = str(path)
    return files


def merge_reports(reports: list[dict]) -> tuple[dict, dict, list[str]]:
    """Union of aggregate rows over several reports.

    Returns:
        ``(table, better, warnings)``. ``table`` maps label -> metric -> mean.
        ``better`` flags the winning row of each (method, method+IDGI) pair per
        metric.
    """
    if not reports:
        raise InvalidParameterError("no reports to merge")
    warnings = []
    table = {}
    ref = reports[0]["config"]
    for k, rep in enumerate(reports):
        diffs = [key for key in RESULT_KEYS if rep["config"].get(key) != ref.get(key)]
        if diffs:
            warnings.append(f"report {k}: config differs from report 0 in {', '.join(diffs)}")
        for label, row in means_table(rep).items():
            if label in table:
                warnings.append(f"report {k}: duplicate row {label} ignored")
                continue
            table[label] = row
    better = {}
    for label in table:
        if label.endswith("+IDGI"):
            continue
        twin = label + "+IDGI"
        if twin not in table:
            continue
        for name in set(table[label]) & set(table[twin]):
            a, b = table[label][name], table[twin][name]
            if a == b:
                continue
            win = (b < a) if name in LOWER_IS_BETTER else (b > a)
            better[(twin if win else label, name)] = True
    return table, better, warnings
