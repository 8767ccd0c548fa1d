"""CSV and plot-data writers shared by the report types."""

from __future__ import annotations

import csv
from pathlib import Path

from . import __version__


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def version_comment(seed=None, extra: str | None = None) -> str:
    parts = [f"markovarb {__version__}"]
    if seed is not None:
        parts.append(f"seed={seed}")
    if extra:
        parts.append(extra)
    return " ".join(parts)


def write_csv(path, header, rows, comment: str | None = None) -> Path:
    """Write ``rows`` under ``header`` with a leading ``#`` comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# {comment or version_comment()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def write_plot_data(path, xs, ys, comment: str | None = None) -> Path:
    """Two-column whitespace-separated data, gnuplot-ready."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(f"# {comment or version_comment()}\n")
        for x, y in zip(xs, ys):
            fh.write(f"{_fmt(float(x))} {_fmt(float(y))}\n")
    return path
