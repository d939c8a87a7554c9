"""CSV tables, atomic file output and SVG polyline rendering from CSV."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nestedlog import NestedLogNumber

INCONCLUSIVE = "Inconclusive"


def fmt(value) -> str:
    """Shortest round-trip text for reals; nested numbers in tower form."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(value, NestedLogNumber):
        return str(value)
    return str(value)


@dataclass
class Table:
    name: str
    header: list[str]
    rows: list[list] = field(default_factory=list)
    comment: str | None = None

    def add(self, *row) -> None:
        if len(row) != len(self.header):
            raise ValueError(f"{self.name}: expected {len(self.header)} columns, got {len(row)}")
        self.rows.append(list(row))

    def render(self) -> str:
        buf = io.StringIO()
        if self.comment:
            buf.write(f"# {self.comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for r in self.rows:
            w.writerow([fmt(v) for v in r])
        return buf.getvalue()

    def has_inconclusive(self) -> bool:
        cols = [i for i, h in enumerate(self.header) if "verdict" in h or h == "label"]
        return any(fmt(r[i]) == INCONCLUSIVE for r in self.rows for i in cols)


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_tables(out_dir: Path, tables: list[Table]) -> list[Path]:
    """Render every table first, then move each into place."""
    rendered = [(Path(out_dir) / f"{t.name}.csv", t.render()) for t in tables]
    for path, text in rendered:
        write_atomic(path, text)
    return [p for p, _ in rendered]


# -- SVG -----------------------------------------------------------------------------

_W, _H, _PAD = 640, 400, 48
_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return (rows[0], rows[1:]) if rows else ([], [])


def _numeric_columns(header, rows):
    cols = {}
    for j, h in enumerate(header):
        vals = []
        for r in rows:
            try:
                vals.append(float(r[j]))
            except (ValueError, IndexError):
                vals = None
                break
        if vals is not None and rows:
            cols[h] = np.array(vals)
    return cols


def _num(v: float) -> str:
    return f"{v:.2f}"


def svg_from_csv(path: Path) -> str | None:
    """Line plot of every numeric column against the first numeric column, or None when nothing plots."""
    header, rows = read_csv(path)
    cols = _numeric_columns(header, rows)
    names = list(cols)
    if len(names) < 2 or len(rows) < 2:
        return None
    xname = names[0]
    x = cols[xname]
    series = [(n, cols[n]) for n in names[1:]]
    finite_y = np.concatenate([y[np.isfinite(y) & np.isfinite(x)] for _, y in series])
    fx = x[np.isfinite(x)]
    if finite_y.size == 0 or fx.size == 0:
        return None
    x0, x1 = float(fx.min()), float(fx.max())
    y0, y1 = float(finite_y.min()), float(finite_y.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(v):
        return _PAD + (v - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def py(v):
        return _H - _PAD - (v - y0) / (y1 - y0) * (_H - 2 * _PAD)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" fill="none" stroke="black"/>',
        f'<text x="{_W // 2}" y="{_H - 12}" text-anchor="middle" font-size="12">{xname}</text>',
        f'<text x="{_PAD}" y="{_PAD - 8}" font-size="10">[{y0:.6g}, {y1:.6g}]</text>',
        f'<text x="{_W - _PAD}" y="{_H - _PAD + 14}" text-anchor="end" font-size="10">{x1:.6g}</text>',
        f'<text x="{_PAD}" y="{_H - _PAD + 14}" font-size="10">{x0:.6g}</text>',
    ]
    for i, (name, y) in enumerate(series):
        c = _COLOURS[i % len(_COLOURS)]
        ok = np.isfinite(x) & np.isfinite(y)
        pts = " ".join(f"{_num(px(a))},{_num(py(b))}" for a, b in zip(x[ok], y[ok]))
        if pts:
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{_W - _PAD - 4}" y="{_PAD + 14 + 14 * i}" text-anchor="end" font-size="11" fill="{c}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_directory(out_dir: Path) -> list[Path]:
    written = []
    for csv_path in sorted(Path(out_dir).glob("*.csv")):
        svg = svg_from_csv(csv_path)
        if svg is None:
            continue
        target = csv_path.with_suffix(".svg")
        write_atomic(target, svg)
        written.append(target)
    return written
