"""Command-line driver: ``generate``, ``train``, ``benchmark`` and ``report``.

Each verb reads an optional YAML/JSON config (``--config``); explicit flags
override file values.  Exit codes: 0 success, 1 validation error, 2 runtime
failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .data import load_csv, prepare
from .gp import KernelKind, generate_gp_timeset
from .models import MODELS, ConfigurationError, ModelConfig, build_model, save_checkpoint
from .training import RunResult, TrainConfig, append_results, read_results, train

log = logging.getLogger("timeflex_lab")

ALLOWED_HORIZONS = (96, 192, 336, 720)
EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class ValidationError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


# ---------------------------------------------------------------- model specs

# model-level overrides accepted in "kind:key=value,..." strings and flags
_SHORT_KEYS = {"fft": "fft_mode", "channel": "channel_mode"}
_MODEL_KEYS = {f.name for f in dataclasses.fields(ModelConfig)} - {"L_in", "L_out", "C"}


def _coerce(key: str, value):
    if key in ("revin", "jpp"):
        if isinstance(value, bool):
            return value
        s = str(value).lower()
        if s in ("on", "true", "1", "yes"):
            return True
        if s in ("off", "false", "0", "no"):
            return False
        raise ValidationError(f"{key}: expected on/off, got {value!r}")
    if key == "dilations":
        if isinstance(value, str):
            value = [int(v) for v in value.replace("-", " ").replace(";", " ").split()]
        return [int(v) for v in value]
    if key in ("dropout", "revin_eps"):
        return float(value)
    if key in ("ma_window", "hidden_channels", "skip_channels", "kernel_size"):
        return int(value)
    return str(value)


def normalize_overrides(raw: dict) -> dict:
    out = {}
    for key, value in raw.items():
        full = _SHORT_KEYS.get(key, key)
        if full not in _MODEL_KEYS:
            raise ValidationError(f"unknown model option {key!r}")
        out[full] = _coerce(full, value)
    return out


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    overrides: tuple = ()  # sorted (key, value) pairs, values hashable

    @classmethod
    def parse(cls, text: str, base: dict | None = None) -> "ModelSpec":
        kind, _, rest = text.partition(":")
        kind = kind.strip()
        if kind not in MODELS:
            raise ValidationError(f"unknown model {kind!r}; choose from {sorted(MODELS)}")
        raw = dict(base or {})
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, value = item.partition("=")
            if not eq:
                raise ValidationError(f"model option {item!r} must look like key=value")
            raw[key.strip()] = value.strip()
        ov = normalize_overrides(raw)
        return cls(kind, tuple(sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in ov.items())))

    def model_config(self, L_in: int, L_out: int, C: int) -> ModelConfig:
        kw = {k: list(v) if isinstance(v, tuple) else v for k, v in self.overrides}
        return ModelConfig(L_in=L_in, L_out=L_out, C=C, **kw)

    @property
    def label(self) -> str:
        """Stable name used in results: TimeFlex rows always carry their ablation axes."""
        if self.kind != "timeflex":
            return self.kind
        cfg = self.model_config(96, 96, 1)
        onoff = {True: "on", False: "off"}
        parts = [f"fft={cfg.fft_mode}", f"revin={onoff[cfg.revin]}", f"jpp={onoff[cfg.jpp]}", f"ch={cfg.channel_mode}"]
        extra = dict(self.overrides)
        for key in sorted(extra):
            if key not in ("fft_mode", "revin", "jpp", "channel_mode"):
                v = extra[key]
                parts.append(f"{key}={'-'.join(map(str, v)) if isinstance(v, tuple) else v}")
        return "timeflex+" + "+".join(parts)


# ---------------------------------------------------------------- configs


@dataclass
class GenerateConfig:
    out: str = "data"
    seed: int = 0
    kernels: list = field(default_factory=lambda: [k.value for k in KernelKind])
    n_points: int = 8760
    n_features: int = 4


@dataclass
class TrainCellConfig:
    data: str = ""
    model: str = "timeflex"
    horizon: int = 96
    seed: int = 0
    out: str = "runs"
    results: str = ""
    L_in: int = 96
    allow_any_horizon: bool = False
    model_options: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)


@dataclass
class BenchmarkConfig:
    data: list = field(default_factory=list)
    models: list = field(default_factory=lambda: ["timeflex", "dlinear", "nlinear", "rlinear"])
    horizons: list = field(default_factory=lambda: [96])
    seed: int = 0
    out: str = "runs"
    results: str = ""
    L_in: int = 96
    allow_any_horizon: bool = False
    workers: int = 1
    resume: bool = False
    checkpoints: bool = False
    model_options: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)


@dataclass
class ReportConfig:
    results: str = ""
    out: str = ""


def load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {path}")
    text = p.read_text()
    data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: top level must be a mapping")
    return data


def merge_config(cls, file_values: dict, flags: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(file_values) - names)
    if unknown:
        raise ValidationError(f"unknown config key(s): {', '.join(unknown)}")
    merged = dict(file_values)
    merged.update({k: v for k, v in flags.items() if v is not None})
    for key in ("model_options", "train"):
        if key in merged and not isinstance(merged[key], dict):
            raise ValidationError(f"config key {key!r} must be a mapping")
    return cls(**merged)


def make_train_config(values: dict, seed: int) -> TrainConfig:
    names = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ValidationError(f"unknown train option(s): {', '.join(unknown)}")
    try:
        return TrainConfig(**{"seed": seed, **values})
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"train options: {exc}") from exc


def check_horizons(horizons, allow_any: bool) -> list[int]:
    hs = [int(h) for h in horizons]
    for h in hs:
        if h < 1 or (not allow_any and h not in ALLOWED_HORIZONS):
            raise ValidationError(
                f"invalid horizon {h}: allowed {{{', '.join(map(str, ALLOWED_HORIZONS))}}} "
                "(pass --allow-any-horizon to override)"
            )
    return hs


def write_effective(out_dir: Path, verb: str, cfg) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"effective_config.{verb}.json"
    path.write_text(json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- cells


@dataclass(frozen=True)
class Cell:
    spec: ModelSpec
    data_path: str
    horizon: int
    L_in: int
    train_config: TrainConfig
    checkpoint_dir: str | None = None

    @property
    def dataset(self) -> str:
        return Path(self.data_path).stem

    @property
    def key(self) -> tuple:
        return (self.spec.label, self.dataset, self.horizon)


def run_cell(cell: Cell) -> RunResult:
    """Train and evaluate one (model, dataset, horizon) cell; failures become error rows."""
    try:
        frame = load_csv(cell.data_path)
        data = prepare(frame, cell.L_in, cell.horizon)
        cfg = cell.spec.model_config(cell.L_in, cell.horizon, frame.n_features)
        model = build_model(cell.spec.kind, cfg, seed=cell.train_config.seed)
        result = train(model, data, cell.train_config, dataset_name=cell.dataset)
        result.model = cell.spec.label
        if cell.checkpoint_dir:
            ckpt = Path(cell.checkpoint_dir) / f"{cell.spec.label}__{cell.dataset}__{cell.horizon}.npz"
            ckpt.parent.mkdir(parents=True, exist_ok=True)
            save_checkpoint(model, ckpt)
        return result
    except Exception as exc:  # a failing cell is recorded, never fatal for the grid
        log.error("cell %s failed: %s", cell.key, exc)
        reason = f"error:{type(exc).__name__}"
        return RunResult(cell.spec.label, cell.dataset, cell.horizon, math.nan, math.nan, 0, 0.0, reason)


def run_cells(cells: list[Cell], workers: int = 1) -> list[RunResult]:
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_cell, cells))
    return [run_cell(c) for c in cells]


# ---------------------------------------------------------------- markdown


def _fmt(v: float) -> str:
    return "nan" if not np.isfinite(v) else f"{v:.4f}"


def _mark(values: list[float]) -> list[str]:
    """Bold the best and underline the second best (lower is better)."""
    finite = sorted({v for v in values if np.isfinite(v)})
    best = finite[0] if finite else None
    second = finite[1] if len(finite) > 1 else None
    out = []
    for v in values:
        s = _fmt(v)
        if best is not None and v == best:
            s = f"**{s}**"
        elif second is not None and v == second:
            s = f"<u>{s}</u>"
        out.append(s)
    return out


def summary_table(rows: list[dict]) -> str:
    """Models as rows; one MSE and one MAE column per (dataset, horizon)."""
    models = sorted({r["model"] for r in rows})
    cols = sorted({(r["dataset"], r["horizon"]) for r in rows})
    lookup = {(r["model"], r["dataset"], r["horizon"]): r for r in rows}
    header = ["model"] + [f"{d} {h} {m}" for d, h in cols for m in ("MSE", "MAE")]
    cells = {m: [] for m in models}
    for d, h in cols:
        for metric in ("mse", "mae"):
            vals = [lookup.get((m, d, h), {}).get(metric, math.nan) for m in models]
            for m, s in zip(models, _mark(vals)):
                cells[m].append(s)
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for m in models:
        lines.append("| " + " | ".join([f"`{m}`"] + cells[m]) + " |")
    return "\n".join(lines) + "\n"


def _axes(label: str) -> dict | None:
    if not label.startswith("timeflex+"):
        return None
    return dict(part.split("=", 1) for part in label[len("timeflex+") :].split("+"))


def ablation_deltas(rows: list[dict]) -> list[tuple]:
    """Pairs of TimeFlex runs that differ in exactly one ablation axis: (dataset, h, axis, a, b, mae_a, mae_b)."""
    out = []
    tf = [(r, _axes(r["model"])) for r in rows if _axes(r["model"]) is not None]
    for i, (ra, aa) in enumerate(tf):
        for rb, ab in tf[i + 1 :]:
            if (ra["dataset"], ra["horizon"]) != (rb["dataset"], rb["horizon"]) or aa.keys() != ab.keys():
                continue
            diff = [k for k in aa if aa[k] != ab[k]]
            if len(diff) == 1:
                k = diff[0]
                a, b = (ra, rb) if aa[k] <= ab[k] else (rb, ra)
                out.append((a["dataset"], a["horizon"], k, a["model"], b["model"], a["mae"], b["mae"]))
    return sorted(out, key=lambda t: (t[0], t[1], t[2], t[3], t[4]))


def render_report(rows: list[dict]) -> tuple[str, str]:
    """Return (markdown report, runtime-vs-params plot data)."""
    plot = ["params\ttrain_seconds\tmodel\tdataset\thorizon"]
    if not rows:
        return "# Results report\n\n## No runs\n\nThe results file contains no runs.\n", "\n".join(plot) + "\n"
    md = ["# Results report", ""]
    for ds in sorted({r["dataset"] for r in rows}):
        sub = [r for r in rows if r["dataset"] == ds]
        md += [f"## Dataset `{ds}`", "", summary_table(sub)]
    deltas = ablation_deltas(rows)
    md += ["## Ablation deltas (MAE)", ""]
    if deltas:
        md += ["| dataset | horizon | axis | run A | run B | MAE A | MAE B | B - A |", "|---|---|---|---|---|---|---|---|"]
        for d, h, axis, a, b, ma, mb in deltas:
            md.append(f"| {d} | {h} | {axis} | `{a}` | `{b}` | {_fmt(ma)} | {_fmt(mb)} | {mb - ma:+.4f} |")
    else:
        md.append("No pairs of runs differ in exactly one ablation axis.")
    md += ["", "## Runtime versus parameter count", "", "See `runtime_vs_params.tsv`.", ""]
    for r in sorted(rows, key=lambda r: (r["params"], r["model"], r["dataset"], r["horizon"], r["train_seconds"])):
        plot.append(f"{r['params']}\t{r['train_seconds']:.3f}\t{r['model']}\t{r['dataset']}\t{r['horizon']}")
    return "\n".join(md), "\n".join(plot) + "\n"


# ---------------------------------------------------------------- verbs


def cmd_generate(args, file_cfg) -> int:
    flags = {"out": args.out, "seed": args.seed, "n_points": args.n_points, "n_features": args.n_features}
    if args.kernel:
        flags["kernels"] = args.kernel
    cfg = merge_config(GenerateConfig, file_cfg, flags)
    try:
        kinds = [KernelKind(k) for k in cfg.kernels]
    except ValueError as exc:
        raise ValidationError(f"{exc}; choose from {[k.value for k in KernelKind]}") from exc
    if cfg.n_points < 2 or cfg.n_features < 1:
        raise ValidationError("n_points must be >= 2 and n_features >= 1")
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = generate_gp_timeset(out, seed=cfg.seed, kinds=kinds, n_points=cfg.n_points, n_features=cfg.n_features)
    except OSError as exc:
        raise RuntimeError(f"cannot write to {out}: {exc}") from exc
    write_effective(out, "generate", cfg)
    print(path)
    return EXIT_OK


def _model_flags(args) -> dict:
    d = {}
    for key in ("fft", "revin", "jpp", "channel"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    return d


def _train_flags(args) -> dict:
    d = {}
    for key in ("epochs", "lr", "batch_size"):
        v = getattr(args, key, None)
        if v is not None:
            d["max_epochs" if key == "epochs" else key] = v
    return d


def cmd_train(args, file_cfg) -> int:
    flags = {
        "data": args.data, "model": args.model, "horizon": args.horizon, "seed": args.seed,
        "out": args.out, "results": args.results, "L_in": args.L_in,
        "allow_any_horizon": args.allow_any_horizon or None,
    }
    cfg = merge_config(TrainCellConfig, file_cfg, flags)
    cfg.model_options = {**cfg.model_options, **_model_flags(args)}
    cfg.train = {**cfg.train, **_train_flags(args)}
    if not cfg.data or not Path(cfg.data).is_file():
        raise ValidationError(f"data: file not found: {cfg.data!r}")
    (horizon,) = check_horizons([cfg.horizon], cfg.allow_any_horizon)
    spec = ModelSpec.parse(cfg.model, cfg.model_options)
    tcfg = make_train_config(cfg.train, cfg.seed)
    try:
        spec.model_config(cfg.L_in, horizon, 1)
    except ConfigurationError as exc:
        raise ValidationError(str(exc)) from exc
    out = Path(cfg.out)
    write_effective(out, "train", cfg)
    cell = Cell(spec, cfg.data, horizon, cfg.L_in, tcfg, checkpoint_dir=str(out))
    result = run_cell(cell)
    results = Path(cfg.results) if cfg.results else out / "results.csv"
    append_results(results, [result])
    print(result.csv_line(), end="")
    return EXIT_RUNTIME if result.stop_reason.startswith("error") else EXIT_OK


def cmd_benchmark(args, file_cfg) -> int:
    flags = {
        "data": args.data, "models": args.models, "horizons": args.horizons, "seed": args.seed,
        "out": args.out, "results": args.results, "L_in": args.L_in, "workers": args.workers,
        "resume": args.resume or None, "allow_any_horizon": args.allow_any_horizon or None,
        "checkpoints": args.checkpoints or None,
    }
    cfg = merge_config(BenchmarkConfig, file_cfg, flags)
    cfg.model_options = {**cfg.model_options, **_model_flags(args)}
    cfg.train = {**cfg.train, **_train_flags(args)}
    data_paths = []
    for entry in cfg.data:
        p = Path(entry)
        if p.is_dir():
            data_paths += sorted(str(q) for q in p.glob("*.csv"))
        elif p.is_file():
            data_paths.append(str(p))
        else:
            raise ValidationError(f"data: not found: {entry}")
    if not data_paths:
        raise ValidationError("data: no datasets given")
    horizons = check_horizons(cfg.horizons, cfg.allow_any_horizon)
    specs = [ModelSpec.parse(m, cfg.model_options) for m in cfg.models]
    tcfg = make_train_config(cfg.train, cfg.seed)
    if cfg.workers < 1:
        raise ValidationError("workers must be >= 1")
    out = Path(cfg.out)
    write_effective(out, "benchmark", cfg)
    results = Path(cfg.results) if cfg.results else out / "results.csv"
    ckpt = str(out / "checkpoints") if cfg.checkpoints else None
    cells = [Cell(s, d, h, cfg.L_in, tcfg, ckpt) for d in data_paths for h in horizons for s in specs]
    if cfg.resume and results.exists():
        done = {(r["model"], r["dataset"], r["horizon"]) for r in read_results(results)[0]}
        cells = [c for c in cells if c.key not in done]
    # cells run (possibly) in parallel; rows are appended here in grid order by this single writer
    new = run_cells(cells, cfg.workers)
    append_results(results, new)
    rows, _ = read_results(results)
    (out / "summary.md").write_text("# Benchmark summary\n\n" + (summary_table(rows) if rows else "No runs.\n"))
    print(results)
    return EXIT_OK


def cmd_report(args, file_cfg) -> int:
    cfg = merge_config(ReportConfig, file_cfg, {"results": args.results, "out": args.out})
    if not cfg.results or not Path(cfg.results).is_file():
        raise ValidationError(f"results: file not found: {cfg.results!r}")
    try:
        rows, warnings = read_results(cfg.results)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    for w in warnings:
        print(f"warning: skipped malformed {w}", file=sys.stderr)
    report, plot = render_report(rows)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.md").write_text(report)
        (out / "runtime_vs_params.tsv").write_text(plot)
        print(out / "report.md")
    else:
        sys.stdout.write(report)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="timeflex-lab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="sample the GP dataset collection")
    g.add_argument("--config")
    g.add_argument("--out")
    g.add_argument("--seed", type=int)
    g.add_argument("--kernel", action="append", help="kernel kind (repeatable); default all five")
    g.add_argument("--n-points", dest="n_points", type=int)
    g.add_argument("--n-features", dest="n_features", type=int)

    def model_train_flags(sp):
        sp.add_argument("--fft", choices=["none", "1d", "2d"])
        sp.add_argument("--revin", choices=["on", "off"])
        sp.add_argument("--jpp", choices=["on", "off"])
        sp.add_argument("--channel", choices=["ci", "cd"])
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--batch-size", dest="batch_size", type=int)
        sp.add_argument("--L-in", "--input-length", dest="L_in", type=int)
        sp.add_argument("--allow-any-horizon", action="store_true")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--results")
        sp.add_argument("--config")

    t = sub.add_parser("train", help="train one (model, dataset, horizon) cell")
    t.add_argument("--model")
    t.add_argument("--data")
    t.add_argument("--horizon", type=int)
    model_train_flags(t)

    b = sub.add_parser("benchmark", help="run a models x datasets x horizons grid")
    b.add_argument("--models", nargs="+")
    b.add_argument("--data", nargs="+", help="CSV files or directories of CSVs")
    b.add_argument("--horizons", nargs="+", type=int)
    b.add_argument("--workers", type=int)
    b.add_argument("--resume", action="store_true")
    b.add_argument("--checkpoints", action="store_true")
    model_train_flags(b)

    r = sub.add_parser("report", help="render markdown report and plot data from a results CSV")
    r.add_argument("results", nargs="?")
    r.add_argument("--out")
    r.add_argument("--config")
    return p


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "benchmark": cmd_benchmark, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args, load_config_file(args.config))
    except (ValidationError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
