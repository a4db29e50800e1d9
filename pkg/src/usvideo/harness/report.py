"""CSV artifacts, the text summary and the accuracy@D SVG plot.

The summary copies numbers verbatim from the per-step CSVs; nothing is
recomputed at report time.
"""

from __future__ import annotations

import csv
import xml.etree.ElementTree as ET
from pathlib import Path

from usvideo.classifier.metrics import METRIC_NAMES, ClassificationMetrics
from usvideo.errors import DataError

ACCURACY_CSV = "accuracy_at_d.csv"
FOLD_CSV = "fold_metrics.csv"
ABLATION_CSV = "ablation.csv"
REPORT_INPUTS = (FOLD_CSV, ACCURACY_CSV, ABLATION_CSV)


def fmt(x) -> str:
    """Shortest round-trip text for floats, so CSVs are bitwise reproducible."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path} is empty")
    return rows[0], rows[1:]


def metric_row(m: ClassificationMetrics) -> list:
    return [getattr(m, k) for k in METRIC_NAMES] + [m.tp, m.fp, m.tn, m.fn, ";".join(m.undefined)]


METRIC_HEADER = [*METRIC_NAMES, "tp", "fp", "tn", "fn", "undefined"]


def write_fold_metrics(path, per_fold: list[ClassificationMetrics], mean: dict[str, float]) -> Path:
    rows = [[str(i), *metric_row(m)] for i, m in enumerate(per_fold)]
    rows.append(["mean", *[mean[k] for k in METRIC_NAMES], "", "", "", "", ""])
    return write_csv(path, ["fold", *METRIC_HEADER], rows)


def write_epoch_log(path, entries, with_motion: bool, prefix_header=(), prefix=()) -> Path:
    """Per-epoch losses; the l_motion column only exists for attention models."""
    header = [*prefix_header, "epoch", "lr", "l_cls"] + (["l_motion"] if with_motion else []) + ["total"]
    rows = []
    for pre, e in entries:
        rows.append([*pre, e.epoch, e.lr, e.l_cls] + ([e.l_motion] if with_motion else []) + [e.total])
    return write_csv(path, header, rows)


def write_accuracy_curve(path, curve) -> Path:
    return write_csv(path, ["D", "accuracy"], [[d, a] for d, a in curve])


def write_ablation(path, rows) -> Path:
    out = []
    for r in rows:
        mean = r.result.mean
        out.append([r.sampling, "spp" if r.spp else "flatten", "on" if r.attention else "off", *[mean[k] for k in METRIC_NAMES]])
    return write_csv(path, ["sampling", "pooling", "attention", *METRIC_NAMES], out)


def _table(header: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    return [line(header), line(["-" * w for w in widths]), *(line(r) for r in rows)]


def accuracy_svg(curve: list[tuple[str, str]], title: str = "Key-frame localization accuracy@D") -> ET.ElementTree:
    """Line plot of accuracy against tolerance D; values are parsed only for placement."""
    width, height, margin = 480, 320, 48
    pts = [(float(d), float(a)) for d, a in curve]
    d_max = max((d for d, _ in pts), default=1.0) or 1.0
    sx = lambda d: margin + (width - 2 * margin) * d / d_max
    sy = lambda a: height - margin - (height - 2 * margin) * a
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(width), height=str(height),
                     viewBox=f"0 0 {width} {height}")
    ET.SubElement(svg, "title").text = title
    ET.SubElement(svg, "rect", x="0", y="0", width=str(width), height=str(height), fill="white")
    axis = dict(stroke="black", **{"stroke-width": "1"})
    ET.SubElement(svg, "line", x1=str(margin), y1=str(sy(0)), x2=str(sx(d_max)), y2=str(sy(0)), **axis)
    ET.SubElement(svg, "line", x1=str(margin), y1=str(sy(0)), x2=str(margin), y2=str(sy(1)), **axis)
    for a in (0.0, 0.5, 1.0):
        t = ET.SubElement(svg, "text", x=str(margin - 6), y=str(sy(a) + 4), **{"text-anchor": "end", "font-size": "11"})
        t.text = f"{a:.1f}"
    for d in range(0, int(d_max) + 1, max(1, int(d_max) // 8)):
        t = ET.SubElement(svg, "text", x=str(sx(d)), y=str(sy(0) + 16), **{"text-anchor": "middle", "font-size": "11"})
        t.text = str(d)
    xl = ET.SubElement(svg, "text", x=str(width / 2), y=str(height - 8), **{"text-anchor": "middle", "font-size": "12"})
    xl.text = "frame distance tolerance D"
    yl = ET.SubElement(svg, "text", x="14", y=str(height / 2), transform=f"rotate(-90 14 {height / 2})",
                       **{"text-anchor": "middle", "font-size": "12"})
    yl.text = "accuracy"
    if pts:
        ET.SubElement(svg, "polyline", fill="none", stroke="#1f5fa8", **{"stroke-width": "2"},
                      points=" ".join(f"{sx(d):.2f},{sy(a):.2f}" for d, a in pts))
    return ET.ElementTree(svg)


def emit_report(run_dir) -> dict[str, Path]:
    """Write ``summary.txt``, ``summary.csv`` and ``accuracy_at_d.svg`` into ``run_dir``."""
    run_dir = Path(run_dir)
    missing = [name for name in REPORT_INPUTS if not (run_dir / name).is_file()]
    if missing:
        raise DataError(f"report inputs missing from {run_dir}: {', '.join(missing)}")
    fold_header, fold_rows = read_csv(run_dir / FOLD_CSV)
    acc_header, acc_rows = read_csv(run_dir / ACCURACY_CSV)
    abl_header, abl_rows = read_csv(run_dir / ABLATION_CSV)

    lines = ["Cross-validated classification (malignant = positive)", ""]
    lines += _table(fold_header[:6], [r[:6] for r in fold_rows])
    lines += ["", "Key-frame localization accuracy@D", ""]
    lines += _table(acc_header, acc_rows)
    lines += ["", "Ablation (mean over folds)", ""]
    lines += _table(abl_header, abl_rows)
    summary = run_dir / "summary.txt"
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")

    rows = [["crossval", r[0], *r[1:6]] for r in fold_rows]
    rows += [["ablation", "/".join(r[:3]), *r[3:8]] for r in abl_rows]
    rows += [["accuracy_at_d", r[0], r[1], "", "", "", ""] for r in acc_rows]
    table = write_csv(run_dir / "summary.csv", ["section", "row", *METRIC_NAMES], rows)

    svg = run_dir / "accuracy_at_d.svg"
    accuracy_svg([(r[0], r[1]) for r in acc_rows]).write(svg, encoding="utf-8", xml_declaration=True)
    return {"summary": summary, "csv": table, "svg": svg}
