"""CSV / markdown table writers and minimal SVG plots."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Sequence

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def markdown_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    for r in rows:
        lines.append("| " + " | ".join(_fmt(v) for v in r) + " |")
    return "\n".join(lines) + "\n"


def write_table(out_dir: Path, name: str, header: Sequence[str], rows: Sequence[Sequence]) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, md_path = out_dir / f"{name}.csv", out_dir / f"{name}.md"
    csv_path.write_text(csv_text(header, rows))
    md_path.write_text(markdown_text(header, rows))
    return csv_path, md_path


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]


def scatter_svg(points: np.ndarray, groups: Sequence[int], size: int = 400, title: str = "") -> str:
    """Points in [0, 1]^2 (y down, as in image coordinates), coloured by group."""
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 20}">',
             f'<rect x="0" y="20" width="{size}" height="{size}" fill="white" stroke="black"/>',
             f'<text x="4" y="14" font-size="12">{title}</text>']
    for (x, y), g in zip(points, groups):
        parts.append(f'<circle cx="{x * size:.2f}" cy="{20 + y * size:.2f}" r="2.5" '
                     f'fill="{_PALETTE[int(g) % len(_PALETTE)]}" fill-opacity="0.7"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def histogram_svg(counts: Sequence[int], width: int = 400, height: int = 200, title: str = "") -> str:
    counts = list(counts)
    top = max(max(counts), 1)
    bar = width / len(counts)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height + 20}">',
             f'<text x="4" y="14" font-size="12">{title}</text>']
    for i, c in enumerate(counts):
        h = height * c / top
        parts.append(f'<rect x="{i * bar:.2f}" y="{20 + height - h:.2f}" width="{bar - 1:.2f}" '
                     f'height="{h:.2f}" fill="#1f77b4"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
