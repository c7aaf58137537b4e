"""Command-line entry point: ``iin {gen,simulate,run,sweep,compare-init,eval}``.

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric error.
Config precedence for training options: flags > ``--config`` JSON > defaults.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .core import classify_blocks
from .errors import ConfigError, DataError, IINError
from .evaluation import (
    DEFAULT_RATES,
    compare_initializers,
    score,
    score_series,
    sweep_json,
    sweep_rows,
    sweep_missing_rates,
    write_csv_rows,
    write_ground_truth,
    write_report,
)
from .imputer import TrainConfig, run_cascade
from .ingest import (
    Mechanism,
    MissingSpec,
    holdout_position_copy,
    load_coordinates,
    load_csv,
    load_dense_csv,
    month_copy_periods,
    save_csv,
    simulate_missing,
)
from .initializers import SpatialTemporalCombo, parse_kind
from .nn.checkpoint import save_checkpoint
from .synthetic import GeneratorSpec, generate, header_comment

log = logging.getLogger("iin")

OUT_ENV = "IIN_OUT_DIR"

# flag dest -> TrainConfig field
CONFIG_FLAGS = {
    "iters": "iter_num",
    "cell": "cell_kind",
    "mode": "mode",
    "window": "w",
    "hidden": "hidden",
    "epochs": "max_epochs",
    "patience": "patience",
    "batch_size": "batch_size",
    "normalization": "normalization",
    "center": "include_center_input",
    "seed": "seed",
}


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "."))


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def resolve_config(args) -> TrainConfig:
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            values = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError("config file must hold a JSON object")
    for flag, name in CONFIG_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    return TrainConfig.from_dict(values)


def parse_rates(text: str) -> list:
    try:
        rates = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"rates must be comma-separated numbers, got {text!r}") from None
    if not rates or any(not 0.0 < r < 1.0 for r in rates):
        raise ConfigError("every rate must lie in (0, 1)")
    return rates


def _load_input(args):
    path = Path(args.input)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    truth = getattr(args, "truth", None)
    if truth and not Path(truth).is_file():
        raise DataError(f"ground-truth file not found: {truth}")
    return load_csv(path, truth_path=truth)


def _initializer(args):
    kind = parse_kind(getattr(args, "init", None) or "temporal_nearest")
    coords = getattr(args, "coords", None)
    if coords and isinstance(kind, SpatialTemporalCombo):
        kind = SpatialTemporalCombo(kind.idw_power, kind.ses_alpha, load_coordinates(coords))
    return kind


@contextlib.contextmanager
def _deterministic(enabled: bool):
    if not enabled:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        yield


class Manifest:
    """Run manifest, written on exit whether the command succeeds or not."""

    def __init__(self, out_dir: Path, command: str, argv):
        self.path = out_dir / "manifest.json"
        self.data = {
            "tool": "iin",
            "version": __version__,
            "command": command,
            "argv": list(argv),
            "started": _now(),
            "inputs": {},
            "artifacts": [],
            "status": "running",
        }

    def input(self, path):
        if path and Path(path).is_file():
            self.data["inputs"][str(path)] = _digest(path)

    def artifact(self, path):
        self.data["artifacts"].append(str(path))

    def write(self, error: Exception | None = None):
        self.data["finished"] = _now()
        if error is None:
            self.data["status"] = "ok"
        else:
            self.data["status"] = "error"
            self.data["error"] = {
                "category": type(error).__name__,
                "exit_code": getattr(error, "exit_code", 1),
                "message": str(error),
            }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def _with_manifest(command):
    def wrap(fn):
        def run(args):
            out = Path(args.out) if args.out else default_out() / command
            out.mkdir(parents=True, exist_ok=True)
            man = Manifest(out, command, args.argv)
            for name in ("input", "truth", "config", "coords"):
                man.input(getattr(args, name, None))
            try:
                with _deterministic(args.deterministic):
                    fn(args, out, man)
            except Exception as exc:
                man.write(exc)
                raise
            man.write()

        return run

    return wrap


# -- commands -----------------------------------------------------------------


def cmd_gen(args):
    spec = GeneratorSpec(
        sensors=args.sensors,
        steps=args.steps,
        seed=1 if args.seed is None else args.seed,
        noise=args.noise,
        amplitude_jitter=args.amplitude_jitter,
        phase_jitter=args.phase_jitter,
    )
    if spec.sensors < 1 or spec.steps < 1:
        raise ConfigError("--sensors and --steps must be >= 1")
    out = Path(args.out) if args.out else default_out() / "synthetic.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(generate(spec), out, comment=header_comment(spec))
    log.info("wrote %s", out)


def _period(text):
    a, _, b = text.partition(":")
    try:
        return int(a), int(b)
    except ValueError:
        raise ConfigError(f"bad period {text!r}; use START:STOP indices or YYYY-MM") from None


def cmd_simulate(args):
    ds = _load_input(args)
    try:
        mech = Mechanism(args.mechanism)
    except ValueError:
        raise ConfigError(f"unknown mechanism {args.mechanism!r}") from None
    if mech is Mechanism.POSITION_COPY:
        if not (args.source and args.target):
            raise ConfigError("position-copy needs --source and --target")
        if ":" in args.source:
            src, tgt = _period(args.source), _period(args.target)
        else:
            src, tgt = month_copy_periods(ds, args.source, args.target)
        out_ds = holdout_position_copy(ds, src, tgt)
    else:
        spec = MissingSpec(
            mechanism=mech,
            rate=args.rate,
            block_length_distribution=(args.block_min, args.block_max),
            seed=0 if args.seed is None else args.seed,
        )
        out_ds = simulate_missing(ds, spec)
    out = Path(args.out) if args.out else default_out() / "simulated.csv"
    truth = Path(args.truth_out) if args.truth_out else out.with_suffix(".truth.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(out_ds, out)
    write_ground_truth(out_ds, truth)
    log.info("wrote %s and %s (%d holdout entries)", out, truth, len(out_ds.ground_truth))


@_with_manifest("run")
def cmd_run(args, out: Path, man: Manifest):
    config = resolve_config(args)
    man.data["config"] = config.to_dict()
    man.data["seed"] = config.seed
    ds = _load_input(args)
    init = _initializer(args)
    run = run_cascade(ds, config, init)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    for i, T in enumerate(run.series):
        path = out / f"T_{i}.csv"
        save_csv(ds, path, dense=T)
        man.artifact(path)
    for rnd, models in enumerate(run.models, start=1):
        for label, model in models.items():
            path = ckpt_dir / f"round{rnd}_{label}.json"
            save_checkpoint(model, path, {"w": config.w, "round": rnd})
            man.artifact(path)
    man.data["val_mae"] = run.val_mae
    man.data["initializer"] = run.initializer
    if len(ds.ground_truth):
        blocks_len = args.block_length
        report = score(run, ds, classify_blocks(ds, blocks_len))
        write_report(report, out / "report.json", out / "report.csv")
        man.artifact(out / "report.json")
        man.artifact(out / "report.csv")
        log.info("final overall MAE %.5f (T_0 %.5f)", report.overall.mae, report.trajectory[0]["overall"].mae)
    else:
        log.info("no holdout entries: skipping scoring")


@_with_manifest("sweep")
def cmd_sweep(args, out: Path, man: Manifest):
    rates = parse_rates(args.rates) if args.rates else list(DEFAULT_RATES)
    config = resolve_config(args)
    man.data["config"] = config.to_dict()
    man.data["seed"] = config.seed
    man.data["rates"] = rates
    ds = _load_input(args)
    results = sweep_missing_rates(ds, rates, config, _initializer(args))
    (out / "sweep.json").write_text(sweep_json(results))
    write_csv_rows(sweep_rows(results), out / "sweep.csv")
    man.artifact(out / "sweep.json")
    man.artifact(out / "sweep.csv")
    for rate, rep in results:
        log.info("rate %.2f: overall MAE %.5f", rate, rep.overall.mae)


@_with_manifest("compare-init")
def cmd_compare_init(args, out: Path, man: Manifest):
    config = resolve_config(args)
    man.data["config"] = config.to_dict()
    ds = _load_input(args)
    kinds = [parse_kind(k) for k in args.kinds.split(",") if k.strip()]
    rows = compare_initializers(ds, kinds, config)
    (out / "compare_init.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    man.artifact(out / "compare_init.json")
    for r in rows:
        log.info("%s: %.5f -> %.5f", r["kind"], r["init_mae"], r["final_mae"])


@_with_manifest("eval")
def cmd_eval(args, out: Path, man: Manifest):
    ds = _load_input(args)
    if not args.dense:
        raise ConfigError("eval needs at least one --dense file")
    series = []
    for path in args.dense:
        man.input(path)
        series.append(load_dense_csv(path, ds))
    report = score_series(series, ds, classify_blocks(ds, args.block_length))
    write_report(report, out / "report.json", out / "report.csv")
    man.artifact(out / "report.json")


# -- parser -------------------------------------------------------------------


def _common(p):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON file with training options")
    p.add_argument("--out", default=None, help=f"output path (default from ${OUT_ENV})")
    p.add_argument("--deterministic", action="store_true", help="single-threaded BLAS")
    p.add_argument("-v", "--verbose", action="store_true")


def _train_flags(p):
    p.add_argument("--truth", default=None, help="ground-truth sidecar CSV")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--cell", choices=["standard", "phased"], default=None)
    p.add_argument("--mode", choices=["mixed", "separate"], default=None)
    p.add_argument("--window", type=int, default=None, help="half-window w")
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--normalization", default=None)
    p.add_argument("--center", action="store_const", const=True, default=None,
                   help="feed the center entry's current estimate to both stacks")
    p.add_argument("--init", default=None, help="initializer, e.g. temporal_nearest, window_mean:3")
    p.add_argument("--coords", default=None, help="sensor coordinates CSV (sensor_id,x,y)")
    p.add_argument("--block-length", type=int, default=11)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iin", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic multi-sensor CSV")
    _common(p)
    p.add_argument("--sensors", type=int, default=3)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--amplitude-jitter", type=float, default=0.1)
    p.add_argument("--phase-jitter", type=float, default=0.3)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("simulate", help="hold out observed entries as ground truth")
    _common(p)
    p.add_argument("input")
    p.add_argument("--truth", default=None, help="existing ground-truth sidecar to keep")
    p.add_argument("--mechanism", default="random-rate", choices=[m.value for m in Mechanism])
    p.add_argument("--rate", type=float, default=0.2)
    p.add_argument("--source", default=None, help="YYYY-MM or START:STOP")
    p.add_argument("--target", default=None, help="YYYY-MM or START:STOP")
    p.add_argument("--block-min", type=int, default=11)
    p.add_argument("--block-max", type=int, default=24)
    p.add_argument("--truth-out", default=None, help="sidecar path (default <out>.truth.csv)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="initialize, run the cascade and score")
    _common(p)
    p.add_argument("input")
    _train_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="score the cascade across missing rates")
    _common(p)
    p.add_argument("input")
    _train_flags(p)
    p.add_argument("--rates", default=None, help="comma-separated, default 0.1..0.6")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare-init", help="initializer alone vs. after the cascade")
    _common(p)
    p.add_argument("input")
    _train_flags(p)
    p.add_argument("--kinds", default="temporal_nearest,window_mean:3,global_mean,spatial_temporal_combo")
    p.set_defaults(func=cmd_compare_init)

    p = sub.add_parser("eval", help="score dense CSVs against a ground-truth sidecar")
    _common(p)
    p.add_argument("input")
    p.add_argument("--truth", required=True)
    p.add_argument("--dense", action="append", help="dense CSV, repeat in round order")
    p.add_argument("--block-length", type=int, default=11)
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors are config errors
        return exc.code
    args.argv = argv
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except IINError as exc:
        print(f"iin {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
