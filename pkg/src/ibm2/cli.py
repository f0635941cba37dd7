"""Command-line entry point: ``ibm2 {import,synth,run,ablate-r,ablate-sampling,report}``.

Failures print one JSON line ``{"error": <kind>, "message": ...}`` to
stderr.  Exit codes: 2 bad usage, 3 malformed config or input file,
4 missing file, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .episodes import run_experiment
from .features import FeatureFormatError, import_csv, l2_normalize, write_feature_file, synth_mixture, export_csv
from .presets import PRESETS, preset_spec
from .report import read_report, to_csv, to_text, write_report

EXIT_USAGE, EXIT_CONFIG, EXIT_MISSING = 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _lr_arg(text: str):
    if text in ("grid", "probe"):
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--lr takes a number, 'grid' or 'probe', got {text!r}") from None


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="RunConfig JSON document")
    p.add_argument("--seed", type=int, help="master seed (u64)")
    p.add_argument("--jobs", type=int, default=1, help="episode-level worker processes")
    p.add_argument("--mode", choices=["pfsl", "fsl"])
    p.add_argument("--method", choices=["baseline", "ibm2"])
    p.add_argument("--sampling", choices=["spherical", "ellipsoidal"])
    p.add_argument("--r", type=int, dest="R", help="virtual samples per instance")
    p.add_argument("--t", type=float, dest="t_init", help="initial accuracy threshold")
    p.add_argument("--lr", type=_lr_arg, help="initial LR, 'grid' or 'probe'")
    p.add_argument("--shots", type=_int_list)
    p.add_argument("--way", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--runs", type=int, help="number of seeds / repetitions")
    p.add_argument("--preset", choices=sorted(PRESETS), help="synthetic data instead of files")
    p.add_argument("--pool", type=Path, help="training pool feature file")
    p.add_argument("--test", type=Path, help="test feature file (pfsl)")
    p.add_argument("--cold-start", action="store_true", help="reinitialise the probe at every search step")
    p.add_argument("--resample-per-step", action="store_true", help="fresh noise at every search step")
    p.add_argument("--out", type=Path, help="report path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ibm2", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("import", help="convert label,f1..fd CSV to the binary feature format")
    s.add_argument("csv", type=Path)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--normalize", action="store_true", help="L2-normalise rows before writing")

    s = sub.add_parser("synth", help="write a synthetic mixture preset as train/test feature files")
    s.add_argument("--preset", choices=sorted(PRESETS), required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, default=Path("."), help="output directory")
    s.add_argument("--csv", action="store_true", help="also write CSV copies")

    s = sub.add_parser("run", help="run an experiment and write its JSON report")
    _add_run_flags(s)

    s = sub.add_parser("ablate-r", help="sweep the number of virtual samples per instance")
    _add_run_flags(s)
    s.add_argument("--values", type=_int_list, default=[1, 10, 50, 200, 400])

    s = sub.add_parser("ablate-sampling", help="baseline vs spherical vs ellipsoidal")
    _add_run_flags(s)

    s = sub.add_parser("report", help="render a JSON report as a text table or CSV")
    s.add_argument("report", type=Path)
    s.add_argument("--format", choices=["text", "csv"], default="text")
    s.add_argument("--out", type=Path)
    return p


def config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    for key in ("mode", "method", "sampling", "R", "t_init", "shots", "way", "episodes", "runs", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            changes[key] = value
    if args.preset:
        changes["data"] = {"preset": args.preset, "seed": args.seed or 0}
    elif args.pool:
        data = {"pool": str(args.pool)}
        if args.test:
            data["test"] = str(args.test)
        changes["data"] = data
    if args.lr is not None:
        if isinstance(args.lr, float):
            changes["lr"] = replace(cfg.lr, policy="fixed", value=args.lr)
        else:
            changes["lr"] = replace(cfg.lr, policy=args.lr)
    search = cfg.search
    if args.cold_start:
        search = replace(search, warm_start=False)
    if args.resample_per_step:
        search = replace(search, resample_per_step=True)
    changes["search"] = search
    cfg = replace(cfg, **changes)
    # round-trip through the dict form so CLI overrides get the same validation
    return config_from_dict(cfg.to_dict())


def _jobs(args) -> int:
    env = os.environ.get("IBM2_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"IBM2_THREADS must be an integer, got {env!r}") from None
    return max(1, args.jobs)


def _emit(doc: dict, out: Path | None) -> None:
    if out is None:
        from .report import dumps
        sys.stdout.write(dumps(doc))
    else:
        write_report(doc, out)


def _ablation(args, axis: str, variants: list[tuple[str, RunConfig]]) -> dict:
    start = time.perf_counter()
    reports = [{"value": v, "report": run_experiment(c, jobs=_jobs(args))} for v, c in variants]
    return {
        "artifact": "ibm2",
        "version": __version__,
        "ablation": axis,
        "reports": reports,
        "wall_clock_seconds": time.perf_counter() - start,
    }


def cmd_import(args) -> None:
    ds = import_csv(args.csv)
    if args.normalize:
        ds = l2_normalize(ds)
    write_feature_file(ds, args.out)


def cmd_synth(args) -> None:
    train, test = synth_mixture(preset_spec(args.preset, args.seed))
    args.out.mkdir(parents=True, exist_ok=True)
    write_feature_file(train, args.out / "train.feat")
    if test is not None:
        write_feature_file(test, args.out / "test.feat")
    if args.csv:
        export_csv(train, args.out / "train.csv")
        if test is not None:
            export_csv(test, args.out / "test.csv")


def cmd_run(args) -> None:
    _emit(run_experiment(config_from_args(args), jobs=_jobs(args)), args.out)


def cmd_ablate_r(args) -> None:
    base = config_from_args(args)
    if base.method != "ibm2":
        raise ConfigError("ablate-r needs method ibm2")
    variants = [(r, replace(base, R=r)) for r in args.values]
    _emit(_ablation(args, "R", variants), args.out)


def cmd_ablate_sampling(args) -> None:
    base = config_from_args(args)
    variants = [
        ("baseline", replace(base, method="baseline")),
        ("spherical", replace(base, method="ibm2", sampling="spherical")),
        ("ellipsoidal", replace(base, method="ibm2", sampling="ellipsoidal")),
    ]
    _emit(_ablation(args, "sampling", variants), args.out)


def cmd_report(args) -> None:
    try:
        doc = read_report(args.report)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.report}: invalid JSON ({exc})") from exc
    try:
        text = to_csv(doc) if args.format == "csv" else to_text(doc)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{args.report}: not an ibm2 report ({exc})") from exc
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)


COMMANDS = {
    "import": cmd_import,
    "synth": cmd_synth,
    "run": cmd_run,
    "ablate-r": cmd_ablate_r,
    "ablate-sampling": cmd_ablate_sampling,
    "report": cmd_report,
}


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": " ".join(str(message).split())}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    try:
        COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        return _fail("missing_file", f"{exc.filename}: no such file", EXIT_MISSING)
    except (ConfigError, FeatureFormatError) as exc:
        return _fail("malformed_config", exc, EXIT_CONFIG)
    except ValueError as exc:
        return _fail("invalid_input", exc, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
