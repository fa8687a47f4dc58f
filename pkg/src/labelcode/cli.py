"""Command-line entry point.

    labelcode gencode --kind unary --levels 8 --out code.txt
    labelcode design-sa --config sa.ini --out runs/sa
    labelcode design-ae --config ae.ini --out runs/ae
    labelcode eval-analytic code.txt [--config analytic.ini] --out mae.csv
    labelcode train --config train.ini --out runs/train
    labelcode sweep --config sweep.ini --out runs/sweep

Configs are INI files with one section per module config (``[sa]``, ``[ae]``,
``[ae_grid]``, ``[analytic]``, ``[task]``, ``[experiment]``, ``[sweep]``).
Keys are the dataclass field names; unknown keys are rejected. Every output
directory gets ``config.ini`` (the fully resolved config, replayable as-is)
and ``meta.json`` (timestamps and wall time, the only non-reproducible
output). Exit status: 0 success, 1 infrastructure error, 2 usage or config
error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import json
import sys
import time
import types
import typing
from pathlib import Path

from . import ae_designer, analytic, codebook, harness, sa_designer

EXIT_OK, EXIT_INFRA, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


# -- config files -------------------------------------------------------------


def _convert(raw: str, hint, where: str):
    text = raw.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        if text.lower() == "none":
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(raw, inner[0], where)
    if origin is tuple:
        items = [s for s in (p.strip() for p in text.split(",")) if s]
        elem = args[0] if args else str
        return tuple(_convert(s, elem, where) for s in items)
    try:
        if hint is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {hint.__name__}") from None
    if hint is str:
        return text
    raise ConfigError(f"{where}: unsupported field type {hint}")


def _fields(cls, exclude=()) -> dict:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls) if f.name not in exclude}


def section_to(cls, parser: configparser.ConfigParser, section: str, exclude=(), **overrides):
    """Build ``cls`` from ``[section]``; unknown keys are a :class:`ConfigError`."""
    known = _fields(cls, exclude)
    values = {}
    if parser.has_section(section):
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]; allowed: {', '.join(known)}")
            values[key] = _convert(raw, known[key], f"[{section}] {key}")
    values.update(overrides)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


GRID_KEYS = tuple(ae_designer.DEFAULT_GRID)


def read_config(path: str | None, allowed: set[str]) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    if path is None:
        return parser
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    for section in parser.sections():
        if section not in allowed:
            raise ConfigError(f"unknown section [{section}] in {path}; allowed: {', '.join(sorted(allowed))}")
    return parser


def _fmt_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt_value(x) for x in v)
    return str(v)


def format_config(sections: dict[str, dict]) -> str:
    """INI text for ``{section: {key: value}}``, keys in insertion order."""
    out = io.StringIO()
    for name, values in sections.items():
        out.write(f"[{name}]\n")
        for key, value in values.items():
            out.write(f"{key} = {_fmt_value(value)}\n")
        out.write("\n")
    return out.getvalue()


def _as_section(obj, exclude=()) -> dict:
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj) if f.name not in exclude}


# -- outputs ------------------------------------------------------------------


class Outputs:
    """Output directory writer; everything but ``meta.json`` is reproducible."""

    def __init__(self, root: str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.started = time.time()
        self._clock = time.perf_counter()
        self.files: list[str] = []

    def write(self, name: str, text: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        # newline="" keeps "\n" line endings on every platform
        with open(path, "w", newline="") as fh:
            fh.write(text)
        self.files.append(name)
        return path

    def finish(self, command: str, extra: dict | None = None) -> None:
        meta = {
            "command": command,
            "started_unix": self.started,
            "wall_secs": time.perf_counter() - self._clock,
            "files": sorted(self.files),
        }
        meta.update(extra or {})
        with open(self.root / "meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# -- commands -----------------------------------------------------------------


def cmd_gencode(args) -> int:
    if args.kind == "random":
        if args.bits is None:
            raise ConfigError("gencode random needs --bits")
        code = codebook.random_code(args.levels, args.bits, args.seed)
    else:
        if args.bits is not None:
            raise ConfigError(f"--bits is fixed by the {args.kind} construction")
        code = codebook.GENERATORS[args.kind](args.levels)
    codebook.write_code(code, args.out)
    return EXIT_OK


def cmd_design_sa(args) -> int:
    parser = read_config(args.config, {"sa"})
    overrides = {"seed": args.seed} if args.seed is not None else {}
    cfg = section_to(sa_designer.AnnealConfig, parser, "sa", **overrides)
    out = Outputs(args.out)
    best, trace = sa_designer.anneal(cfg)
    out.write("code.txt", codebook.format_code(best))
    out.write("trace.csv", trace.to_csv())
    out.write("config.ini", format_config({"sa": _as_section(cfg)}))
    out.finish("design-sa", {"best_energy": trace.records[-1].best_energy})
    return EXIT_OK


def cmd_design_ae(args) -> int:
    parser = read_config(args.config, {"ae", "ae_grid"})
    overrides = {"seed": args.seed} if args.seed is not None else {}
    base = section_to(ae_designer.AeConfig, parser, "ae", **overrides)
    out = Outputs(args.out)
    if parser.has_section("ae_grid"):
        grid = {}
        for key, raw in parser.items("ae_grid"):
            if key not in GRID_KEYS:
                raise ConfigError(f"unknown key {key!r} in [ae_grid]; allowed: {', '.join(GRID_KEYS)}")
            grid[key] = _convert(raw, tuple[float, ...], f"[ae_grid] {key}")
            if not grid[key]:
                raise ConfigError(f"[ae_grid] {key} needs at least one value")
        grid = {k: grid.get(k, ae_designer.DEFAULT_GRID[k]) for k in GRID_KEYS}
        best, points = ae_designer.grid_search(base, grid)
        rows = [[repr(p.cfg.margin / p.cfg.code_width), repr(p.cfg.margin), repr(p.cfg.pair_weight),
                 repr(p.cfg.l2_weight), p.transitions, int(p is best)] for p in points]
        header = ["margin_factor", "margin", "pair_weight", "l2_weight", "transitions", "selected"]
        out.write("grid.csv", _csv_text(header, rows))
        cfg, code, result = best.cfg, best.code, best.result
        sections = {"ae": _as_section(cfg), "ae_grid": grid}
    else:
        cfg = base
        code, result = ae_designer.design_code(cfg)
        sections = {"ae": _as_section(cfg)}
    out.write("code.txt", codebook.format_code(code))
    out.write("log.csv", result.log_csv())
    out.write("config.ini", format_config(sections))
    out.finish("design-ae", {"transitions": codebook.count_bit_transitions(code).total_bit_transitions})
    return EXIT_OK


@dataclasses.dataclass(frozen=True)
class AnalyticConfig:
    r: float = analytic.DEFAULT_R
    sigma: float = analytic.DEFAULT_SIGMA
    n_samples: int | None = None
    seeds: tuple[int, ...] = (0,)


def cmd_eval_analytic(args) -> int:
    parser = read_config(args.config, {"analytic"})
    cfg = section_to(AnalyticConfig, parser, "analytic")
    if not cfg.seeds:
        raise ConfigError("[analytic] seeds needs at least one value")
    rows = []
    for path in args.codes:
        code = codebook.read_code(path)
        model = analytic.build_error_model(code, cfg.r, cfg.sigma)
        for seed in cfg.seeds:
            est = analytic.estimate_mae(code, model, cfg.n_samples, seed)
            rows.append([path, code.n_levels, code.n_bits, repr(cfg.r), repr(cfg.sigma), seed, est.n_samples,
                         repr(est.mean_abs_error)])
    text = _csv_text(["code", "n_levels", "n_bits", "r", "sigma", "seed", "n_samples", "mean_abs_error"], rows)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        fh.write(text)
    return EXIT_OK


def _task_and_experiment(parser, require_seed: bool):
    if not parser.has_section("task"):
        raise ConfigError("config needs a [task] section describing the dataset")
    if require_seed and not parser.has_option("experiment", "seed"):
        raise ConfigError("[experiment] needs a seed key")
    exp = section_to(harness.ExperimentConfig, parser, "experiment")
    task_overrides = {} if parser.has_option("task", "seed") else {"seed": exp.seed}
    task = section_to(harness.SyntheticTask, parser, "task", **task_overrides)
    return task, exp


def cmd_train(args) -> int:
    parser = read_config(args.config, {"task", "experiment"})
    task, exp = _task_and_experiment(parser, require_seed=True)
    out = Outputs(args.out)
    report = harness.run_experiment(task, exp)
    out.write("report.csv", harness.reports_csv([report], wall_time=args.timing))
    out.write("predictions.csv", harness.predictions_csv(report))
    out.write("metrics.csv", harness.metrics_csv(report))
    out.write("train_loss.csv", _csv_text(["epoch", "train_loss"],
                                          [[i, repr(v)] for i, v in enumerate(report.train_loss, start=1)]))
    if report.diagnostics:
        out.write("pairs.csv", harness.pairs_csv(report))
    out.write("config.ini", format_config({"task": _as_section(task), "experiment": _as_section(exp)}))
    out.finish("train", {"status": report.status, "message": report.message, "run_wall_secs": report.wall_secs})
    return EXIT_OK


@dataclasses.dataclass(frozen=True)
class SweepConfig:
    axis: str = "alpha"
    values: tuple[float, ...] = ()
    seeds: tuple[int, ...] = ()
    methods: tuple[str, ...] = ()


def cmd_sweep(args) -> int:
    parser = read_config(args.config, {"task", "experiment", "sweep"})
    if not parser.has_option("sweep", "seeds"):
        raise ConfigError("[sweep] needs a seeds key")
    task, exp = _task_and_experiment(parser, require_seed=False)
    sw = section_to(SweepConfig, parser, "sweep")
    if sw.axis not in harness.SWEEP_AXES:
        raise ConfigError(f"[sweep] axis must be one of {harness.SWEEP_AXES}, got {sw.axis!r}")
    if not sw.values or not sw.seeds:
        raise ConfigError("[sweep] values and seeds need at least one entry each")
    unknown = [m for m in sw.methods if m not in harness.METHODS]
    if unknown:
        raise ConfigError(f"[sweep] unknown methods {unknown}; choose from {harness.METHODS}")

    out = Outputs(args.out)
    reports = harness.sweep(sw.axis, sw.values, task, exp, sw.seeds, sw.methods or None)
    out.write("reports.csv", harness.reports_csv(reports, wall_time=args.timing))
    out.write("aggregate.csv", harness.aggregate_csv(harness.aggregate(reports, sw.axis)))
    for r in reports:
        value = r.config["experiment"][sw.axis]
        stem = f"runs/{sw.axis}={_fmt_value(value)}_{r.method}_seed{r.seed}"
        out.write(f"{stem}_predictions.csv", harness.predictions_csv(r))
        if r.diagnostics:
            out.write(f"{stem}_metrics.csv", harness.metrics_csv(r))
    out.write("config.ini", format_config({
        # the sweep seeds override the task seed
        "task": {k: v for k, v in _as_section(task).items() if k != "seed"},
        "experiment": _as_section(exp),
        "sweep": _as_section(sw),
    }))
    failed = [f"{r.method}/seed{r.seed}: {r.message}" for r in reports if r.status != "ok"]
    out.finish("sweep", {"n_runs": len(reports), "flagged": failed,
                         "run_wall_secs": [r.wall_secs for r in reports]})
    return EXIT_OK


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="labelcode", description="Label-encoding regression toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gencode", help="write a unary, Johnson, Hadamard or random code file")
    g.add_argument("--kind", required=True, choices=sorted(codebook.GENERATORS) + ["random"])
    g.add_argument("--levels", type=int, required=True, help="number of quantization levels N")
    g.add_argument("--bits", type=int, help="code width M (random codes only)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gencode)

    for name, func, helptext in (("design-sa", cmd_design_sa, "simulated-annealing code design"),
                                 ("design-ae", cmd_design_ae, "autoencoder code design")):
        d = sub.add_parser(name, help=helptext)
        d.add_argument("--config")
        d.add_argument("--seed", type=int, help="overrides the config seed")
        d.add_argument("--out", required=True, help="output directory")
        d.set_defaults(func=func)

    e = sub.add_parser("eval-analytic", help="estimate a code's MAE under the analytic error model")
    e.add_argument("codes", nargs="+", help="code files")
    e.add_argument("--config")
    e.add_argument("--out", required=True, help="output CSV")
    e.set_defaults(func=cmd_eval_analytic)

    for name, func, helptext in (("train", cmd_train, "train one model on a synthetic task"),
                                 ("sweep", cmd_sweep, "sweep one hyperparameter over seeds and methods")):
        t = sub.add_parser(name, help=helptext)
        t.add_argument("--config", required=True)
        t.add_argument("--out", required=True, help="output directory")
        t.add_argument("--timing", action="store_true", help="fill the wall_secs CSV column (breaks byte reproducibility)")
        t.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, codebook.CodeFormatError) as exc:
        print(f"labelcode {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # invalid parameters surfacing from the library, e.g. mismatched N
        print(f"labelcode {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"labelcode {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())
