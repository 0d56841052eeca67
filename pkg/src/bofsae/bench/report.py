"""Run reports: human-readable text, CSV and JSON-lines, plus confusion CSVs.

Wall-clock timings live in a separate ``*_timing.json`` so the report files
themselves are a pure function of data, config and seeds.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plots


@dataclass
class RunReport:
    accuracy: float
    per_class_accuracy: np.ndarray
    confusion: object
    timing: dict = field(default_factory=dict)
    config: str = ""
    split: str = ""

    @property
    def class_names(self):
        names = self.confusion.class_names
        return names or tuple(str(i) for i in range(len(self.confusion.counts)))

    def to_text(self):
        cm = self.confusion
        lines = [
            f"split: {self.split}",
            f"accuracy: {self.accuracy:.6f} ({int(np.trace(cm.counts))}/{cm.total})",
            "",
            "per-class accuracy:",
        ]
        support = cm.counts.sum(axis=1)
        for name, acc, n in zip(self.class_names, self.per_class_accuracy, support):
            lines.append(f"  {name:>12s}  {acc:.4f}  (n={n})")
        lines += ["", "config:"]
        lines += [f"  {line}" for line in self.config.splitlines()]
        return "\n".join(lines) + "\n"

    def to_record(self):
        return {
            "split": self.split,
            "accuracy": self.accuracy,
            "correct": int(np.trace(self.confusion.counts)),
            "total": self.confusion.total,
            "per_class_accuracy": {
                n: (None if np.isnan(a) else float(a))
                for n, a in zip(self.class_names, self.per_class_accuracy)
            },
            "config": dict(
                line.split(" = ", 1) for line in self.config.splitlines() if " = " in line
            ),
        }


def write_table(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row[c]) for c in columns])


def _cell(value):
    return repr(value) if isinstance(value, float) else value


def write_timing(path, timing):
    Path(path).write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")


def write_run_report(rep, out_dir, stem):
    out = Path(out_dir)
    (out / f"{stem}_report.txt").write_text(rep.to_text())
    support = rep.confusion.counts.sum(axis=1)
    rows = [
        {"class": n, "support": int(s), "correct": int(c), "accuracy": float(a)}
        for n, s, c, a in zip(rep.class_names, support, np.diag(rep.confusion.counts),
                              rep.per_class_accuracy)
    ]
    rows.append({"class": "__overall__", "support": rep.confusion.total,
                 "correct": int(np.trace(rep.confusion.counts)), "accuracy": rep.accuracy})
    write_table(out / f"{stem}_report.csv", rows, ("class", "support", "correct", "accuracy"))
    with open(out / f"{stem}_report.jsonl", "w") as fh:
        fh.write(json.dumps(rep.to_record(), sort_keys=True) + "\n")
    rep.confusion.write_csv(out / f"{stem}_confusion.csv")
    write_timing(out / f"{stem}_timing.json", rep.timing)
    plots.plot_confusion(rep.confusion, out / f"{stem}_confusion.png",
                         title=f"{rep.split} accuracy {100 * rep.accuracy:.1f}%")
