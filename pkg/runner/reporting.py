from __future__ import annotations

import csv
import io
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Sequence

from uqbench.types import RobustnessRecord, UncertaintyRecord

from .storage import load_json, write_json

logger = logging.getLogger(__name__)

ReportFormat = Literal["csv", "markdown"]

EXTENSIONS = {"csv": ".csv", "markdown": ".md"}

VOTE_COLUMNS = ["Image", "Ground Truth", "Member Votes", "Majority", "Plurality", "Ensemble"]
ACCURACY_COLUMNS = ["Model", "Correct", "Total", "Accuracy"]
UNCERTAINTY_COLUMNS = ["Ground Truth", "Ensemble", "Avg Probability", "Variance", "Entropy"]
ROBUSTNESS_COLUMNS = [
    "Image",
    "Ground Truth",
    "Original class",
    "Perturbation added",
    "Perturbed class",
    "Flipped",
    "Originally correct",
    "Perturbed correct",
]
ERROR_COLUMNS = ["Image", "Experiment", "Stage", "Error"]


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _columns_for(records: Sequence[Mapping[str, Any]], columns: Optional[Sequence[str]]) -> List[str]:
    if columns is not None:
        cols = list(columns)
    elif records:
        cols = list(records[0].keys())
    else:
        raise ValueError("Cannot infer columns from an empty record list; pass columns=")
    for i, r in enumerate(records):
        if list(r.keys()) != cols:
            raise ValueError(f"Record {i} is not homogeneous with columns {cols}: {list(r.keys())}")
    return cols


def render_table(records: Sequence[Mapping[str, Any]], fmt: ReportFormat, columns: Optional[Sequence[str]] = None) -> str:
    cols = _columns_for(records, columns)
    rows = [[format_cell(r[c]) for c in cols] for r in records]

    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        w.writerows(rows)
        return buf.getvalue()
    if fmt == "markdown":
        esc = lambda s: s.replace("|", "\\|")  # noqa: E731
        lines = ["| " + " | ".join(esc(c) for c in cols) + " |", "|" + "|".join("---" for _ in cols) + "|"]
        lines.extend("| " + " | ".join(esc(v) for v in row) + " |" for row in rows)
        return "\n".join(lines) + "\n"
    raise ValueError(f"Unknown report format: {fmt!r}")


def emit_report(
    records: Sequence[Mapping[str, Any]],
    fmt: ReportFormat,
    path: Path,
    *,
    columns: Optional[Sequence[str]] = None,
) -> Path:
    """Write records as a CSV or Markdown table; floats use 6 decimals."""
    text = render_table(records, fmt, columns)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise OSError(f"Cannot write report {path}: {e}") from e
    return path


def save_table(
    out_dir: Path,
    name: str,
    columns: Sequence[str],
    rows: Sequence[Mapping[str, Any]],
    fmt: ReportFormat,
) -> List[Path]:
    """Persist rows as ``<name>.json`` and render ``<name>.csv`` / ``<name>.md``."""
    json_path = out_dir / f"{name}.json"
    write_json(json_path, {"columns": list(columns), "rows": [dict(r) for r in rows]})
    table_path = emit_report(rows, fmt, out_dir / f"{name}{EXTENSIONS[fmt]}", columns=columns)
    return [json_path, table_path]


def load_table(path: Path) -> tuple[List[str], List[Dict[str, Any]]]:
    data = load_json(path)
    columns = list(data["columns"])
    rows = [{c: row.get(c) for c in columns} for row in data["rows"]]
    return columns, rows


def uncertainty_rows(records: Sequence[UncertaintyRecord]) -> List[Dict[str, Any]]:
    return [
        {
            "Ground Truth": r.ground_truth,
            "Ensemble": r.ensemble_name,
            "Avg Probability": float(r.avg_probability),
            "Variance": float(r.variance),
            "Entropy": float(r.entropy_bits),
        }
        for r in records
    ]


def robustness_rows(records: Sequence[RobustnessRecord]) -> List[Dict[str, Any]]:
    return [
        {
            "Image": r.image_id,
            "Ground Truth": r.ground_truth,
            "Original class": r.original_prediction.class_name,
            "Perturbation added": r.spec.label(),
            "Perturbed class": r.perturbed_prediction.class_name,
            "Flipped": r.flipped,
            "Originally correct": r.originally_correct,
            "Perturbed correct": r.perturbed_correct,
        }
        for r in records
    ]


def generate_pdf_summary(
    *,
    out_path: Path,
    title: str,
    tables: Mapping[str, tuple[Sequence[str], Sequence[Mapping[str, Any]]]],
    images: Sequence[Path] = (),
    extra_lines: Sequence[str] = (),
) -> None:
    """Run summary PDF: one section per table plus saliency thumbnails.

    Rendered in reportlab's invariant mode so identical inputs give identical bytes.
    """
    from reportlab.lib.pagesizes import A4
    from reportlab.lib.units import mm
    from reportlab.lib.utils import ImageReader
    from reportlab.pdfgen import canvas

    out_path.parent.mkdir(parents=True, exist_ok=True)
    c = canvas.Canvas(str(out_path), pagesize=A4, invariant=1)
    w, h = A4
    y = h - 20 * mm

    def ensure_room(needed: float) -> None:
        nonlocal y
        if y - needed < 20 * mm:
            c.showPage()
            y = h - 20 * mm

    c.setFont("Helvetica-Bold", 16)
    c.drawString(20 * mm, y, title)
    y -= 8 * mm
    c.setFont("Helvetica", 10)
    for line in extra_lines:
        c.drawString(20 * mm, y, line)
        y -= 5 * mm

    for name, (columns, rows) in tables.items():
        ensure_room(20 * mm)
        y -= 4 * mm
        c.setFont("Helvetica-Bold", 12)
        c.drawString(20 * mm, y, name)
        y -= 6 * mm
        col_w = (w - 40 * mm) / max(1, len(columns))
        c.setFont("Helvetica-Bold", 8)
        for i, col in enumerate(columns):
            c.drawString(20 * mm + i * col_w, y, str(col)[:22])
        y -= 5 * mm
        c.setFont("Helvetica", 8)
        for row in rows:
            ensure_room(5 * mm)
            for i, col in enumerate(columns):
                c.drawString(20 * mm + i * col_w, y, format_cell(row.get(col))[:24])
            y -= 4.5 * mm

    box = 55 * mm
    for i, img_path in enumerate(images):
        if i % 3 == 0:
            ensure_room(box + 12 * mm)
            y -= box + 6 * mm
        try:
            c.drawImage(ImageReader(str(img_path)), 20 * mm + (i % 3) * (box + 4 * mm), y, width=box, height=box, preserveAspectRatio=True, mask="auto")
            c.setFont("Helvetica", 7)
            c.drawString(20 * mm + (i % 3) * (box + 4 * mm), y - 4 * mm, img_path.stem[:40])
        except Exception as e:
            logger.warning("Skipping unreadable saliency image %s: %s", img_path, e)

    c.showPage()
    c.save()


TABLE_ORDER = ["exp1_predictions", "exp1_votes", "exp1_accuracy", "exp2_uncertainty", "exp2_detail", "exp3_robustness"]


def regenerate_report(out_dir: Path, fmt: ReportFormat, *, title: str = "uqbench run summary") -> List[Path]:
    """Re-render every stored table in ``fmt`` and write ``summary.pdf``."""
    if not out_dir.is_dir():
        raise FileNotFoundError(f"Results directory not found: {out_dir}")
    stored = {p.stem: p for p in out_dir.glob("*.json")}
    names = [n for n in TABLE_ORDER if n in stored] + sorted(n for n in stored if n not in TABLE_ORDER)
    if not names:
        raise ValueError(f"No stored tables (*.json) in {out_dir}")

    written: List[Path] = []
    tables = {}
    for name in names:
        try:
            columns, rows = load_table(stored[name])
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError(f"Stored table {stored[name]} is malformed: {e}") from e
        tables[name] = (columns, rows)
        written.append(emit_report(rows, fmt, out_dir / f"{name}{EXTENSIONS[fmt]}", columns=columns))

    images = sorted((out_dir / "saliency").glob("*.png"))
    pdf_path = out_dir / "summary.pdf"
    generate_pdf_summary(
        out_path=pdf_path,
        title=title,
        tables=tables,
        images=images,
        extra_lines=[f"Tables: {len(tables)}", f"Saliency images: {len(images)}"],
    )
    written.append(pdf_path)
    return written
