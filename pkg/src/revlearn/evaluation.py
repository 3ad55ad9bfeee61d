"""Evaluation metrics and report rendering.

MAPE (percent) and RMSE per parameter, overall and broken down by the SNR
recorded in example metadata. Rendered tables follow the conventions of the
published comparisons: integer percent for MAPE, one decimal for RMSE.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import MetricError

PARAM_NAMES = ("rt60", "c50", "c80", "drr")
PARAM_LABELS = {"rt60": "T60", "c50": "C50", "c80": "C80", "drr": "DRR"}
NEAR_ZERO_DB = 1.0  # dB truths this close to zero make MAPE hard to read


def mape(pred, truth) -> float:
    """Mean absolute percentage error: (100/n) * sum |(pred-truth)/truth|.

    Rejects truths within 1e-9 of zero (the ratio blows up); the error lists
    the offending indices.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise MetricError("pred and truth lengths differ")
    if pred.size == 0:
        raise MetricError("empty input")
    bad = np.nonzero(np.abs(truth) < 1e-9)[0]
    if bad.size:
        raise MetricError(
            f"MAPE undefined: |truth| < 1e-9 at indices {bad.tolist()}",
            indices=bad.tolist())
    return float(100.0 * np.mean(np.abs((pred - truth) / truth)))


def rmse(pred, truth) -> float:
    """Root mean square error, same unit as the inputs."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise MetricError("pred and truth lengths differ")
    if pred.size == 0:
        raise MetricError("empty input")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


@dataclass(frozen=True)
class ParamMetrics:
    mape: float
    rmse: float


@dataclass(frozen=True)
class EvalReport:
    n: int
    overall: dict[str, ParamMetrics]
    per_snr: dict[float, dict[str, ParamMetrics]]
    near_zero_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "overall": {p: {"mape": m.mape, "rmse": m.rmse}
                        for p, m in self.overall.items()},
            "per_snr": {f"{snr:g}": {p: {"mape": m.mape, "rmse": m.rmse}
                                     for p, m in group.items()}
                        for snr, group in self.per_snr.items()},
            "near_zero_counts": self.near_zero_counts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            n=d["n"],
            overall={p: ParamMetrics(**m) for p, m in d["overall"].items()},
            per_snr={float(s): {p: ParamMetrics(**m) for p, m in g.items()}
                     for s, g in d["per_snr"].items()},
            near_zero_counts=dict(d["near_zero_counts"]),
        )


def _group_metrics(pred: np.ndarray, truth: np.ndarray) -> dict[str, ParamMetrics]:
    out = {}
    for j, name in enumerate(PARAM_NAMES):
        out[name] = ParamMetrics(mape(pred[:, j], truth[:, j]),
                                 rmse(pred[:, j], truth[:, j]))
    return out


def evaluate(predict_fn, features: np.ndarray, targets: np.ndarray,
             snr_db: np.ndarray) -> EvalReport:
    """Metrics for `predict_fn` over a test set.

    `predict_fn` maps a (n, frames, coeffs) batch to (n, 4) predictions in
    physical units. SNR groups are reported in descending order.
    """
    targets = np.asarray(targets, dtype=np.float64)
    snr_db = np.asarray(snr_db, dtype=np.float64)
    if len(targets) == 0:
        raise MetricError("empty evaluation set")
    pred = np.asarray(predict_fn(features), dtype=np.float64)
    overall = _group_metrics(pred, targets)
    per_snr = {}
    for snr in sorted(set(snr_db.tolist()), reverse=True):
        mask = snr_db == snr
        per_snr[snr] = _group_metrics(pred[mask], targets[mask])
    near_zero = {
        name: int(np.count_nonzero(np.abs(targets[:, j]) < NEAR_ZERO_DB))
        for j, name in enumerate(PARAM_NAMES) if name != "rt60"
    }
    return EvalReport(len(targets), overall, per_snr, near_zero)


def format_mape(value: float) -> str:
    return f"{value:.0f}"


def format_rmse(value: float) -> str:
    return f"{value:.1f}"


def _table(rows: list[tuple[str, dict[str, ParamMetrics]]]) -> list[str]:
    header1 = f"{'Method':<12}" + "".join(f"{PARAM_LABELS[p]:>14}" for p in PARAM_NAMES)
    header2 = f"{'':<12}" + "".join(f"{'eM':>7}{'eR':>7}" for _ in PARAM_NAMES)
    lines = [header1, header2, "-" * len(header2)]
    for name, metrics in rows:
        cells = "".join(f"{format_mape(metrics[p].mape):>7}"
                        f"{format_rmse(metrics[p].rmse):>7}" for p in PARAM_NAMES)
        lines.append(f"{name:<12}" + cells)
    return lines


def render_report(model_name: str, reports: dict[str, EvalReport]) -> str:
    """Human-readable report; eM in percent, eR in s (T60) or dB (others)."""
    lines = []
    for split, report in reports.items():
        lines.append(f"== {split} split ({report.n} examples) ==")
        lines.extend(_table([(model_name, report.overall)]))
        if len(report.per_snr) > 1:
            lines.append("")
            lines.append("per-SNR breakdown:")
            lines.extend(_table([(f"{snr:g} dB", group)
                                 for snr, group in report.per_snr.items()]))
        noted = {p: c for p, c in report.near_zero_counts.items() if c}
        if noted:
            lines.append("")
            lines.append(
                "examples with |truth| < 1 dB (MAPE inflates near zero): "
                + ", ".join(f"{PARAM_LABELS[p]}={c}" for p, c in noted.items()))
        lines.append("")
    return "\n".join(lines)


def write_report_json(path, model_name: str, reports: dict[str, EvalReport]):
    payload = {"model": model_name,
               "splits": {s: r.to_dict() for s, r in reports.items()}}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def export_scatter(path, example_ids, truths: np.ndarray, preds: np.ndarray,
                   snr_db: np.ndarray):
    """CSV with one row per (example, parameter) for external plotting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["example_id", "parameter", "truth", "prediction", "snr_db"])
        for i, ex_id in enumerate(example_ids):
            for j, name in enumerate(PARAM_NAMES):
                writer.writerow([ex_id, name, repr(float(truths[i, j])),
                                 repr(float(preds[i, j])), f"{snr_db[i]:g}"])
