"""Render comparison results as TSV, JSON and figures."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .evaluate import ComparisonRow


def comparison_tsv(rows: list[ComparisonRow]) -> str:
    """One line per system: overall cell plus one cell per bucket, each
    cell formatted A_c|A_f|A_o in percent."""
    buckets = sorted({b for row in rows for b in row.by_bucket})
    header = ["system", "overall"] + buckets + ["macro_p", "macro_r", "macro_f1"]
    lines = ["\t".join(header)]
    for row in rows:
        cells = [row.system, row.overall.cell()]
        for b in buckets:
            cells.append(row.by_bucket[b].cell() if b in row.by_bucket else "-")
        cells += [
            f"{row.overall.macro_precision:.3f}",
            f"{row.overall.macro_recall:.3f}",
            f"{row.overall.macro_f1:.3f}",
        ]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def comparison_json(rows: list[ComparisonRow]) -> str:
    doc = [
        {
            "system": row.system,
            "overall": asdict(row.overall),
            "by_bucket": {b: asdict(rep) for b, rep in row.by_bucket.items()},
        }
        for row in rows
    ]
    return json.dumps(doc, indent=2) + "\n"


def _accuracy_figure(rows: list[ComparisonRow], path: Path) -> None:
    systems = [r.system for r in rows]
    metrics = {
        "A_c": [r.overall.a_c for r in rows],
        "A_f": [r.overall.a_f for r in rows],
        "A_o": [r.overall.a_o for r in rows],
    }
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.25
    for i, (name, vals) in enumerate(metrics.items()):
        xs = [j + (i - 1) * width for j in range(len(systems))]
        ax.bar(xs, vals, width=width, label=name)
    ax.set_xticks(range(len(systems)))
    ax.set_xticklabels(systems, rotation=15)
    ax.set_ylim(0, 1)
    ax.set_ylabel("accuracy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _bucket_figure(rows: list[ComparisonRow], path: Path) -> None:
    buckets = sorted({b for row in rows for b in row.by_bucket})
    fig, ax = plt.subplots(figsize=(7, 4))
    for row in rows:
        ys = [row.by_bucket[b].a_f if b in row.by_bucket else float("nan") for b in buckets]
        ax.plot(range(len(buckets)), ys, marker="o", label=row.system)
    ax.set_xticks(range(len(buckets)))
    ax.set_xticklabels(buckets)
    ax.set_ylim(0, 1)
    ax.set_xlabel("predictability bucket")
    ax.set_ylabel("A_f")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def write_report(rows: list[ComparisonRow], out_dir: str | Path) -> list[Path]:
    """Write report.tsv, report.json and the accuracy figures; returns
    the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    tsv = out / "report.tsv"
    tsv.write_text(comparison_tsv(rows))
    paths.append(tsv)

    js = out / "report.json"
    js.write_text(comparison_json(rows))
    paths.append(js)

    fig1 = out / "accuracy.png"
    _accuracy_figure(rows, fig1)
    paths.append(fig1)

    if any(row.by_bucket for row in rows):
        fig2 = out / "buckets.png"
        _bucket_figure(rows, fig2)
        paths.append(fig2)
    return paths
