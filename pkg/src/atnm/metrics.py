"""Masked multi-label F1 evaluation.

Predictions are binarized at a threshold and counted only where the label
is known. Per-class F1 is 2tp/(2tp+fp+fn), zero when the denominator is
zero; the macro score averages over classes that saw at least one known
label. Count accumulation is an associative merge, so parallel shards can
be combined exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError


@dataclass
class ClassCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    known: np.ndarray

    @classmethod
    def zeros(cls, classes: int) -> "ClassCounts":
        z = lambda: np.zeros(classes, dtype=np.int64)
        return cls(tp=z(), fp=z(), fn=z(), known=z())

    @property
    def classes(self) -> int:
        return self.tp.shape[0]

    def merge(self, other: "ClassCounts") -> "ClassCounts":
        if other.classes != self.classes:
            raise DimensionError(
                f"cannot merge counts over {self.classes} and {other.classes} classes"
            )
        return ClassCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            known=self.known + other.known,
        )


def accumulate(counts: ClassCounts, pred, label, mask, threshold: float = 0.5) -> None:
    """Update counts in place; accepts single (C,) rows or (B, C) blocks."""
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    label = np.atleast_2d(np.asarray(label, dtype=np.float64))
    mask = np.atleast_2d(np.asarray(mask, dtype=bool))
    if pred.shape != label.shape or pred.shape != mask.shape:
        raise DimensionError(
            f"shape mismatch: pred {pred.shape}, label {label.shape}, mask {mask.shape}"
        )
    hat = pred >= threshold
    pos = label >= 0.5
    counts.known += mask.sum(axis=0)
    counts.tp += (hat & pos & mask).sum(axis=0)
    counts.fp += (hat & ~pos & mask).sum(axis=0)
    counts.fn += (~hat & pos & mask).sum(axis=0)


def f1_per_class(counts: ClassCounts) -> np.ndarray:
    denom = 2 * counts.tp + counts.fp + counts.fn
    out = np.zeros(counts.classes, dtype=np.float64)
    nz = denom > 0
    out[nz] = 2.0 * counts.tp[nz] / denom[nz]
    return out


def macro_f1(counts: ClassCounts) -> float:
    seen = counts.known > 0
    if not seen.any():
        return 0.0
    return float(f1_per_class(counts)[seen].mean())


def seed_average(tables: list, n_seeds: int | None = None) -> np.ndarray:
    """Cell-wise arithmetic mean of per-seed F1 tables."""
    arrays = [np.asarray(t, dtype=np.float64) for t in tables]
    if n_seeds is not None and len(arrays) != n_seeds:
        raise DimensionError(f"expected {n_seeds} tables, got {len(arrays)}")
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise DimensionError(f"table shapes differ: {shape} vs {a.shape}")
    return np.mean(arrays, axis=0)


def metrics_report(counts: ClassCounts, class_names: list) -> dict:
    if len(class_names) != counts.classes:
        raise DimensionError(
            f"{len(class_names)} names for {counts.classes} classes"
        )
    scores = f1_per_class(counts)
    rows = [
        {
            "class": name,
            "f1": float(scores[i]),
            "tp": int(counts.tp[i]),
            "fp": int(counts.fp[i]),
            "fn": int(counts.fn[i]),
            "known": int(counts.known[i]),
        }
        for i, name in enumerate(class_names)
    ]
    return {"classes": rows, "macro_f1": macro_f1(counts)}


def write_report_csv(report: dict, path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "f1", "tp", "fp", "fn", "known"])
        total = {"tp": 0, "fp": 0, "fn": 0, "known": 0}
        for row in report["classes"]:
            writer.writerow([row["class"], repr(row["f1"]), row["tp"], row["fp"], row["fn"], row["known"]])
            for key in total:
                total[key] += row[key]
        writer.writerow(["macro", repr(report["macro_f1"]), total["tp"], total["fp"], total["fn"], total["known"]])


def write_report_json(report: dict, path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
