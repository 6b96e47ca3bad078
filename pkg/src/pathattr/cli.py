"""``pathattr`` command line: attribute, eval, train-toy, report.

Settings are resolved as defaults < ``--config`` JSON < ``PATHATTR_SEED`` <
explicit flags. Exit codes: 0 success, 2 invalid parameter, 3 I/O or format
error, 4 training failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__, integrators, models, plotting
from .errors import (
    ArtifactIOError,
    DegenerateInputError,
    DegenerateStepError,
    FormatError,
    InvalidParameterError,
    TrainingFailure,
)
from .evaluation import (
    INFO_LEVELS,
    METRICS,
    RunConfig,
    attribution_tag,
    baseline_image,
    format_table,
    load_config,
    load_items,
    merge_reports,
    metric_names,
    read_report,
    resolve_target,
    run_eval,
    write_eval_outputs,
    write_table_csv,
)
from .imageio import render_heatmap, write_png

log = logging.getLogger("pathattr")

EXIT_OK, EXIT_PARAM, EXIT_IO, EXIT_TRAIN = 0, 2, 3, 4
SEED_ENV = "PATHATTR_SEED"
TRAIN_FLAGS = ("arch", "activation", "epochs", "n_train", "lr")


def _csv(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _target(text: str):
    return int(text) if text.lstrip("-").isdigit() else text


def _add_common(p, images=True):
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON file with run settings")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out", default=S, help="output directory")
    if images:
        p.add_argument("images", nargs="*", default=S, help="PNG files, directories or globs")
        p.add_argument("--model", default=S, help="toy model weights file")
        p.add_argument("--synthetic", type=int, default=S, metavar="N",
                       help="draw N images from the model's training task")
        p.add_argument("--preset", dest="task", default=S, help="task or preset for --synthetic")
        p.add_argument("--method", dest="methods", type=_csv, default=S,
                       help="comma list of vanilla, ig, gig, blurig")
        p.add_argument("--steps", type=int, default=S)
        p.add_argument("--baseline", default=S, help="black, white or a PNG path")
        p.add_argument("--max-sigma", dest="max_sigma", type=float, default=S)
        p.add_argument("--fraction", type=float, default=S, help="guided-path fraction per step")
        p.add_argument("--target", type=_target, default=S, help="predicted, label or a class index")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="pathattr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pathattr {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attribute", help="write attribution maps and heatmaps")
    _add_common(p)
    p.add_argument("--idgi", action="store_const", const=True, default=S,
                   help="integrate along the important direction")
    p.add_argument("--pair", action="store_const", const=True, default=S,
                   help="write both the plain and the IDGI map")

    p = sub.add_parser("eval", help="run the metric battery over an image set")
    _add_common(p)
    p.add_argument("--masks", default=S, help="directory of masks named like the images")
    p.add_argument("--attributions", default=S, help="directory written by 'attribute --pair'")
    p.add_argument("--metrics", type=_csv, default=S, help=f"comma list of {', '.join(METRICS)}")
    p.add_argument("--info-level", dest="info_level", choices=INFO_LEVELS, default=S)
    p.add_argument("--thresholds", type=int, default=S, help="bokeh thresholds per image")
    p.add_argument("--bins", type=int, default=S)
    p.add_argument("--importance", choices=("signed", "abs"), default=S)
    p.add_argument("--jobs", type=int, default=S)
    p.add_argument("--no-figures", dest="figures", action="store_false", default=True)

    p = sub.add_parser("train-toy", help="train a toy classifier on a synthetic task")
    _add_common(p, images=False)
    p.add_argument("--task", default=S, help="task name or preset")
    p.add_argument("--arch", default=S, choices=models.ARCHITECTURES)
    p.add_argument("--activation", default=S, choices=models.ACTIVATIONS)
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--n-train", dest="n_train", type=int, default=S)
    p.add_argument("--lr", type=float, default=S)

    p = sub.add_parser("report", help="merge evaluation reports into one table")
    p.add_argument("reports", nargs="*", help="report.json files")
    p.add_argument("--out", default="report", help="output directory")
    return parser


def resolve_config(args: argparse.Namespace, environ=None) -> RunConfig:
    """Merge defaults, the config file, the seed variable and explicit flags."""
    environ = os.environ if environ is None else environ
    data = {"command": args.command}
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "verbose", "figures", "config")}
    if "config" in args:
        data.update(load_config(args.config))
        data["command"] = args.command
    if SEED_ENV in environ:
        try:
            data["seed"] = int(environ[SEED_ENV])
        except ValueError:
            raise InvalidParameterError(f"{SEED_ENV} must be an integer, got {environ[SEED_ENV]!r}") from None
    train = dict(data.get("train", {}))
    for key in TRAIN_FLAGS:
        if key in flags:
            train[key] = flags.pop(key)
    data.update(flags)
    if args.command == "attribute":
        # a single map per image unless asked otherwise
        data.setdefault("methods", ["ig"])
    if train:
        data["train"] = train
    return RunConfig.from_dict(data)


def cmd_attribute(cfg: RunConfig) -> list[str]:
    cfg.validate()
    if not cfg.model:
        raise InvalidParameterError("attribute needs --model")
    if cfg.idgi and "vanilla" in cfg.methods and not cfg.pair:
        raise InvalidParameterError("IDGI needs an integration path; vanilla gradient has none")
    weights = models.load_weights(cfg.model)
    m = models.ToyModel(weights)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    options = dict(steps=cfg.steps, baseline=baseline_image(cfg), max_sigma=cfg.max_sigma,
                   fraction_per_step=cfg.fraction)
    written = []
    for item in load_items(cfg, weights):
        c = resolve_target(m, item, cfg.target)
        if cfg.synthetic:
            write_png(item.x, out / f"{item.image_id}.png")
        for method in cfg.methods:
            if method == "vanilla":
                maps = [integrators.vanilla_gradient(m, c, item.x)]
            elif cfg.pair:
                maps = list(integrators.attribute_pair(m, c, item.x, method, **options))
            else:
                maps = [integrators.attribute(m, c, item.x, method, cfg.idgi, **options)]
            for a in maps:
                stem = out / f"{item.image_id}__{attribution_tag(a.method, a.idgi)}"
                integrators.save_attribution(a, stem)
                render_heatmap(a.values, str(stem) + ".png")
                written.append(str(stem))
                print(f"{item.image_id}  {a.label:<12} class={c}  sum={a.values.sum():+.6f}  -> {stem}.bin")
    return written


def cmd_eval(cfg: RunConfig, figures: bool = True) -> dict:
    report = run_eval(cfg)
    write_eval_outputs(report, cfg.out, figures=figures)
    n_images = len({r["image"] for r in report["records"]})
    print(f"{n_images} images, {len(report['records'])} records -> {Path(cfg.out) / 'report.json'}")
    table = {label: {k: v["mean"] for k, v in row.items()} for label, row in report["aggregates"].items()}
    print(format_table(table), end="")
    for name, count in report["warnings"].items():
        if count:
            print(f"warning: {name} = {count}", file=sys.stderr)
    return report


def cmd_train_toy(cfg: RunConfig) -> str:
    train = dict(cfg.train)
    known = set(models.TrainConfig.__dataclass_fields__)
    unknown = set(train) - known
    if unknown:
        raise InvalidParameterError(f"unknown training settings: {sorted(unknown)}")
    if "hidden" in train:
        train["hidden"] = tuple(train["hidden"])
    config = models.TrainConfig(**train)
    out = Path(cfg.out)
    path = out if out.suffix == ".json" else out / "weights.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []

    def emit(line):
        lines.append(line)
        print(line)

    try:
        weights = models.train_toy(cfg.task, seed=cfg.seed, config=config, log=emit)
    finally:
        if lines:
            path.with_suffix(".log").write_text("\n".join(lines) + "\n", encoding="utf-8")
    models.save_weights(weights, path)
    emit(f"test_accuracy={weights.meta['test_accuracy']:.4f} -> {path}")
    path.with_suffix(".log").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def cmd_report(paths, out_dir) -> tuple[dict, dict, list[str]]:
    if not paths:
        raise InvalidParameterError("report needs at least one report file")
    reports = [read_report(p) for p in paths]
    table, better, warnings = merge_reports(reports)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_table_csv(table, out / "merged.csv", better)
    text = format_table(table, better)
    (out / "merged.txt").write_text(text, encoding="utf-8")
    plotting.plot_comparison(table, metric_names(table), out / "comparison.png")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(text, end="")
    return table, better, warnings


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            cmd_report(args.reports, args.out)
            return EXIT_OK
        cfg = resolve_config(args)
        if args.command == "attribute":
            cmd_attribute(cfg)
        elif args.command == "eval":
            cmd_eval(cfg, figures=args.figures)
        elif args.command == "train-toy":
            cmd_train_toy(cfg)
    except TrainingFailure as exc:
        print(f"pathattr: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except (ArtifactIOError, FormatError, OSError) as exc:
        print(f"pathattr: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InvalidParameterError, DegenerateInputError, DegenerateStepError) as exc:
        print(f"pathattr: {exc}", file=sys.stderr)
        return EXIT_PARAM
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
