"""Command-line pipeline: synth -> extract -> tune -> report.

Every subcommand takes all randomness from --seed (or the config file's seed
key), writes its declared outputs, and finishes by atomically writing a run
manifest with input hashes so runs can be audited and reproduced.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .data import (CorpusError, SynthConfig, load_recordings, make_splits,
                   segment_windows, synth_generate, write_corpus)
from .features import (FeatureConfig, FusionMode, extract_batch,
                       read_feature_csv, write_feature_csv)
from .nsga2 import OperatorParams
from .tuner import (SearchSpace, TuneConfig, load_report_dict, run_tuning)


class UsageError(ValueError):
    pass


def parse_kv_file(path: str) -> dict[str, str]:
    """Flat key=value config; blank lines and #-comments ignored."""
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _apply_schema(raw: dict[str, str], schema: dict, source: str) -> dict:
    values = {}
    for key, value in raw.items():
        if key not in schema:
            raise UsageError(f"{source}: unknown config key '{key}' "
                             f"(known: {', '.join(sorted(schema))})")
        conv = schema[key]
        try:
            values[key] = conv(value)
        except ValueError as exc:
            raise UsageError(f"{source}: bad value for '{key}': {exc}") from exc
    return values


def _to_bool(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _optional_int(value: str) -> int | None:
    return None if value.lower() in ("none", "all") else int(value)


SYNTH_SCHEMA = {"subjects": int, "positions": int, "classes": int, "trials": int,
                "duration_s": float, "sample_rate_hz": float, "channels": int}

EXTRACT_SCHEMA = {"window_ms": float, "stride_ms": float, "sample_rate_hz": float,
                  "power_lambda": float, "epsilon": float, "fusion_mode": str}

TUNE_SCHEMA = {"population": int, "generations": int,
               "crossover_prob": float, "eta_c": float,
               "mutation_prob": float, "eta_m": float,
               "log10_c_min": float, "log10_c_max": float,
               "log10_gamma_min": float, "log10_gamma_max": float,
               "holdout_fraction": float, "svm_tol": float,
               "per_class_ts1": _optional_int, "per_class_ts2": int,
               "seed": int, "objective_set": str,
               "ts2_allow_train_windows": _to_bool}


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_run_manifest(out_dir: str, command: str, config_path: str | None,
                       seed: int | None, inputs: list[str], outputs: list[str],
                       started: float) -> str:
    doc = {
        "command": command,
        "config": config_path,
        "seed": seed,
        "inputs": {os.path.abspath(p): sha256_file(p) for p in inputs},
        "outputs": sorted(os.path.abspath(p) for p in outputs),
        "tool_version": __version__,
        "started_utc": _iso(started),
        "finished_utc": _iso(time.time()),
    }
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "run_manifest.json")
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def _iso(ts: float) -> str:
    return datetime.datetime.fromtimestamp(ts, datetime.timezone.utc).isoformat()


def _validate_outputs(paths: list[str]) -> None:
    for path in paths:
        if not os.path.exists(path) or os.path.getsize(path) == 0:
            raise RuntimeError(f"declared output missing or empty: {path}")


def cmd_synth(args: argparse.Namespace) -> int:
    started = time.time()
    raw = parse_kv_file(args.config) if args.config else {}
    values = _apply_schema(raw, SYNTH_SCHEMA, args.config or "<defaults>")
    config = SynthConfig(**values)
    recordings = synth_generate(config, args.seed)
    manifest_path = write_corpus(recordings, args.out)
    outputs = [manifest_path] + [
        os.path.join(args.out, "signals", name)
        for name in sorted(os.listdir(os.path.join(args.out, "signals")))]
    _validate_outputs(outputs)
    write_run_manifest(args.out, "synth", args.config, args.seed,
                       [args.config] if args.config else [], outputs, started)
    print(f"synth: wrote {len(recordings)} recordings under {args.out}")
    return 0


def cmd_extract(args: argparse.Namespace) -> int:
    started = time.time()
    raw = parse_kv_file(args.config) if args.config else {}
    values = _apply_schema(raw, EXTRACT_SCHEMA, args.config or "<defaults>")
    window_ms = values.pop("window_ms", 100.0)
    stride_ms = values.pop("stride_ms", 25.0)
    sample_rate = values.pop("sample_rate_hz", 1000.0)
    if "fusion_mode" in values:
        values["fusion_mode"] = FusionMode(values["fusion_mode"])
    cfg = FeatureConfig(**values)
    recordings = load_recordings(args.manifest, sample_rate_hz=sample_rate)
    features = []
    for rec in recordings:
        features.extend(extract_batch(segment_windows(rec, window_ms, stride_ms), cfg))
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    write_feature_csv(features, args.out)
    _validate_outputs([args.out])
    write_run_manifest(os.path.dirname(os.path.abspath(args.out)), "extract",
                       args.config, None, [args.manifest], [args.out], started)
    print(f"extract: wrote {len(features)} feature rows to {args.out}")
    return 0


def cmd_tune(args: argparse.Namespace) -> int:
    started = time.time()
    raw = parse_kv_file(args.config) if args.config else {}
    values = _apply_schema(raw, TUNE_SCHEMA, args.config or "<defaults>")
    seed = args.seed if args.seed is not None else values.get("seed", 0)
    objective_set = args.objective_set or values.get("objective_set", "holdout")
    allow_train = args.ts2_allow_train_windows or values.get("ts2_allow_train_windows", False)

    operators = OperatorParams(pc=values.get("crossover_prob", 0.6),
                               eta_c=values.get("eta_c", 15.0),
                               pm=values.get("mutation_prob", 0.4),
                               eta_m=values.get("eta_m", 20.0))
    config = TuneConfig(population=values.get("population", 98),
                        generations=values.get("generations", 10),
                        operators=operators,
                        holdout_fraction=values.get("holdout_fraction", 0.2),
                        objective_set=objective_set,
                        svm_tol=values.get("svm_tol", 1e-3))
    space = SearchSpace(
        log10_c=(values.get("log10_c_min", -2.0), values.get("log10_c_max", 4.0)),
        log10_gamma=(values.get("log10_gamma_min", -5.0), values.get("log10_gamma_max", 2.0)))

    if not os.path.exists(args.features):
        raise UsageError(f"feature file not found: {args.features}")
    features = read_feature_csv(args.features)
    subjects = sorted({fv.subject_id for fv in features})
    outputs = []
    for subject in subjects:
        subject_features = [fv for fv in features if fv.subject_id == subject]
        split = make_splits(subject_features,
                            per_class_ts2=values.get("per_class_ts2", 880),
                            seed=seed,
                            per_class_ts1=values.get("per_class_ts1", 1521),
                            allow_train_windows=allow_train)
        run_dir = os.path.join(args.out, f"subject{subject:02d}_seed{seed}")
        run_tuning(split, config, space, seed, out_dir=run_dir, jobs=args.jobs,
                   subject_id=subject)
        outputs.append(os.path.join(run_dir, "report.json"))
        print(f"tune: subject {subject} done -> {run_dir}")
    _validate_outputs(outputs)
    write_run_manifest(args.out, "tune", args.config, seed,
                       [args.features] + ([args.config] if args.config else []),
                       outputs, started)
    return 0


SUMMARY_HEADER = ["tag", "test_set", "mean_accuracy", "mean_rest_fn",
                  "mean_rest_recall", "n_runs", "seeds"]


def cmd_report(args: argparse.Namespace) -> int:
    started = time.time()
    reports = []
    for run_dir in args.run_dirs:
        path = os.path.join(run_dir, "report.json")
        if not os.path.exists(path):
            raise UsageError(f"no report.json under {run_dir}")
        reports.append(load_report_dict(run_dir))
    seeds = sorted({doc["seed"] for doc in reports})
    if len(seeds) > 1 and not args.force:
        raise UsageError(
            f"run directories mix seeds {seeds}; pass --force to pool them anyway")
    lines = [",".join(SUMMARY_HEADER)]
    seed_text = ";".join(str(s) for s in seeds)
    for tag in ("accuracy_dominant", "fn_dominant"):
        for test_set in ("validation", "ts1", "ts2"):
            accs, fns, recalls = [], [], []
            for doc in reports:
                ev = doc["extremes"][tag]["evaluations"][test_set]
                accs.append(ev["accuracy"])
                fns.append(ev["rest_fn"])
                recalls.append(ev["rest_recall"])
            lines.append(",".join([tag, test_set,
                                   repr(float(np.mean(accs))),
                                   repr(float(np.mean(fns))),
                                   repr(float(np.mean(recalls))),
                                   str(len(reports)), seed_text]))
    with open(args.out, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    _validate_outputs([args.out])
    write_run_manifest(os.path.dirname(os.path.abspath(args.out)) or ".", "report",
                       None, None,
                       [os.path.join(d, "report.json") for d in args.run_dirs],
                       [args.out], started)
    print(f"report: summarized {len(reports)} runs -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emgopt",
        description="Multi-objective evolutionary tuning of an 8-class EMG SVM classifier")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus")
    p_synth.add_argument("--config", help="key=value synth config file")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True, help="output corpus directory")
    p_synth.set_defaults(func=cmd_synth)

    p_extract = sub.add_parser("extract", help="window a corpus and extract features")
    p_extract.add_argument("--manifest", required=True, help="corpus manifest CSV")
    p_extract.add_argument("--config", help="key=value feature/window config file")
    p_extract.add_argument("--out", required=True, help="output feature CSV")
    p_extract.set_defaults(func=cmd_extract)

    p_tune = sub.add_parser("tune", help="run per-subject NSGA-II hyperparameter tuning")
    p_tune.add_argument("--features", required=True, help="feature CSV from extract")
    p_tune.add_argument("--config", help="key=value tuning config file")
    p_tune.add_argument("--seed", type=int, default=None,
                        help="overrides the config file's seed")
    p_tune.add_argument("--out", required=True, help="output directory for run dirs")
    p_tune.add_argument("--jobs", type=int, default=1,
                        help="max concurrent objective evaluations")
    p_tune.add_argument("--objective-set", choices=["holdout", "ts2"], default=None)
    p_tune.add_argument("--ts2-allow-train-windows", action="store_true",
                        help="let TS2 sample training windows (original protocol)")
    p_tune.set_defaults(func=cmd_tune)

    p_report = sub.add_parser("report", help="average run metrics across subjects")
    p_report.add_argument("run_dirs", nargs="+", help="tuning run directories")
    p_report.add_argument("--out", required=True, help="output summary CSV")
    p_report.add_argument("--force", action="store_true",
                          help="pool run dirs even when their seeds differ")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, CorpusError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
