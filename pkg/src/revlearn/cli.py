"""Command-line front end.

Subcommands:
    analyze  per-RIR parameter tables -> rir_analysis.jsonl
    build    corpus -> manifest + feature shards + index
    train    dataset -> model file (RVLM) + history.json
    eval     model + dataset -> report.txt / report.json / scatter.csv
    report   re-render report.txt from an existing report.json

Exit codes: 0 success, 2 bad arguments, 3 data errors, 4 unexpected failures.
Every run writes its resolved configuration next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, jsonio
from .dataset import (
    DEFAULT_SNRS,
    Manifest,
    balance,
    build_dataset,
    build_manifest,
    load_dataset,
)
from .errors import RevlearnError
from .features import FeatureConfig
from .nn.model import load_model, save_model
from .nn.training import TrainConfig, fit
from .rir_analysis import PARAM_NAMES, analyze, validate
from .signal_core import load_audio, trim_to_onset

log = logging.getLogger("revlearn")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _write_config(out_dir: Path, name: str, args: argparse.Namespace):
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = {k: (str(v) if isinstance(v, Path) else v)
                for k, v in sorted(vars(args).items()) if k != "func"}
    with open(out_dir / f"config.{name}.json", "w", encoding="utf-8") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_snrs(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


# --- analyze ---

def cmd_analyze(args) -> int:
    out_dir = Path(args.out)
    _write_config(out_dir, "analyze", args)
    records = []
    failures = 0
    for path in args.rirs:
        record = {"rir_id": Path(path).name, "path": str(path),
                  "accepted": False, "reason": None, "params": None}
        try:
            h = trim_to_onset(load_audio(path))
            params = analyze(h)
        except RevlearnError as exc:
            record["reason"] = f"{type(exc).__name__}: {exc}"
            print(f"{path}: analysis failed: {record['reason']}")
            failures += 1
            records.append(record)
            continue
        verdict = validate(params)
        record["accepted"] = verdict.ok
        record["reason"] = verdict.reason
        record["params"] = params.to_dict()
        records.append(record)

        print(f"\nRIR: {path}")
        print(f"{'band_hz':>8} {'rt60_s':>8} {'c50_db':>8} {'c80_db':>8} {'drr_db':>8}")
        for center in sorted(params.per_band):
            b = params.per_band[center]
            print(f"{center:>8g} {b.rt60:>8.3f} {b.c50:>8.2f} "
                  f"{b.c80:>8.2f} {b.drr:>8.2f}")
        for center, reason in sorted(params.failed_bands.items()):
            print(f"{center:>8g} failed: {reason}")
        print(f"{'broad':>8} {params.rt60:>8.3f} {params.c50:>8.2f} "
              f"{params.c80:>8.2f} {params.drr:>8.2f}")
        if not verdict.ok:
            print(f"REJECTED: {verdict.reason}")

    with open(out_dir / "rir_analysis.jsonl", "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(jsonio.dumps(record) + "\n")
    if failures == len(args.rirs):
        raise RevlearnError("analysis failed for every input file")
    return EXIT_OK


# --- build ---

def cmd_build(args) -> int:
    out_dir = Path(args.out)
    _write_config(out_dir, "build", args)
    pairs = None if args.pairs_per_chunk in (0, None) else args.pairs_per_chunk
    config = FeatureConfig(n_coeffs=args.n_coeffs)
    manifest = build_manifest(
        args.audio_dir, args.rir_dir, seed=args.seed,
        audio_train_frac=args.audio_train_frac,
        rir_train_frac=args.rir_train_frac,
        rir_train_count=args.rir_train_count,
        chunk_seconds=args.chunk_seconds,
        pairs_per_chunk=pairs,
        feature_config=config,
        jobs=args.jobs,
    )
    if args.balance_bins > 0:
        manifest = balance(manifest, args.balance_bins)
    count = build_dataset(manifest, out_dir, snr_list=_parse_snrs(args.snr),
                          jobs=args.jobs)
    print(f"built {count} examples in {out_dir}")
    return EXIT_OK


# --- train ---

def cmd_train(args) -> int:
    model_path = Path(args.out)
    _write_config(model_path.parent, "train", args)
    data = load_dataset(args.dataset).subset("train")
    if len(data) == 0:
        raise RevlearnError("dataset has no training examples")
    config = TrainConfig(
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        patience=args.patience,
        max_epochs=args.max_epochs,
        seed=args.seed,
        val_fraction=args.val_fraction,
    )
    model, history = fit(args.arch, data.features, data.targets, config)
    model.feature_config = data.feature_config.to_dict()
    model.provenance["dataset"] = str(args.dataset)
    save_model(model_path, model)
    with open(model_path.parent / "history.json", "w", encoding="utf-8") as fh:
        json.dump(history, fh, indent=2)
        fh.write("\n")
    print(f"trained {args.arch}: {model.network.parameter_count()} parameters, "
          f"{len(history)} epochs, best val loss "
          f"{model.provenance['best_val_loss']:.5f}")
    print(f"model written to {model_path}")
    return EXIT_OK


# --- eval ---

def cmd_eval(args) -> int:
    out_dir = Path(args.out)
    _write_config(out_dir, "eval", args)
    data = load_dataset(args.dataset)
    model = None if args.oracle else load_model(args.model)
    model_name = "oracle" if args.oracle else model.spec.name

    splits = ["train", "test"] if args.split == "both" else [args.split]
    reports = {}
    for split in splits:
        subset = data.subset(split)
        if len(subset) == 0:
            log.warning("split %r is empty; skipped", split)
            continue
        if args.oracle:
            truth = subset.targets

            def predict_fn(feats, _truth=truth):
                return _truth
        else:
            predict_fn = model.predict
        reports[split] = evaluation.evaluate(
            predict_fn, subset.features, subset.targets, subset.snr_db)
        preds = np.asarray(predict_fn(subset.features), dtype=np.float64)
        evaluation.export_scatter(out_dir / f"scatter.{split}.csv",
                                  subset.example_ids, subset.targets, preds,
                                  subset.snr_db)
    if not reports:
        raise RevlearnError(f"no examples found for split {args.split!r}")

    text = evaluation.render_report(model_name, reports)
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    evaluation.write_report_json(out_dir / "report.json", model_name, reports)
    print(text)
    return EXIT_OK


# --- report ---

def cmd_report(args) -> int:
    payload = json.loads(Path(args.report_json).read_text())
    reports = {s: evaluation.EvalReport.from_dict(d)
               for s, d in payload["splits"].items()}
    print(evaluation.render_report(payload["model"], reports))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="revlearn",
        description="Room-acoustics analysis, dataset synthesis, and blind "
                    "acoustic parameter estimation.")
    parser.add_argument("--verbose", "-v", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="compute RT60/C50/C80/DRR from RIR WAVs")
    p.add_argument("rirs", nargs="+", help="RIR WAV files")
    p.add_argument("--out", default="analysis", help="output directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("build", help="synthesize a reverberant MFCC dataset")
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--rir-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snr", default=",".join(f"{s:g}" for s in DEFAULT_SNRS),
                   help="comma-separated SNR list in dB")
    p.add_argument("--chunk-seconds", type=float, default=8.0)
    p.add_argument("--pairs-per-chunk", type=int, default=4,
                   help="RIRs paired with each chunk; 0 pairs all")
    p.add_argument("--audio-train-frac", type=float, default=0.8)
    p.add_argument("--rir-train-frac", type=float, default=None)
    p.add_argument("--rir-train-count", type=int, default=None)
    p.add_argument("--balance-bins", type=int, default=0,
                   help="equalize training RT60 histogram over N bins (0: off)")
    p.add_argument("--n-coeffs", type=int, default=20)
    p.add_argument("--jobs", type=int,
                   default=int(os.environ.get("REVLEARN_JOBS", "1")),
                   help="worker threads (output is identical at any value)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("train", help="train an estimator on a built dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--arch", choices=["baseline", "crnn1", "crnn2"],
                   default="crnn2")
    p.add_argument("--out", required=True, help="model file path (.rvlm)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--patience", type=int, default=15)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a dataset")
    p.add_argument("--model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=["train", "test", "both"], default="both")
    p.add_argument("--oracle", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="re-render a report.json as text")
    p.add_argument("report_json")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "eval" and not args.oracle and not args.model:
        print("error: --model is required unless --oracle is set",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except RevlearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - report and exit nonzero
        log.exception("unexpected failure: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
