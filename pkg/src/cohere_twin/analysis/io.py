"""CSV export of visibility curves."""

from __future__ import annotations

import csv
from pathlib import Path

from .visibility import VisibilityPoint


def format_visibility_csv(points: list[VisibilityPoint]) -> str:
    coord = points[0].coordinate if points else "delta_y"
    column = "delta_y_m" if coord == "delta_y" else "delta_y_reduced"
    rows = [f"{column},visibility,uncertainty"]
    rows += [f"{p.x:.17g},{p.visibility:.17g},{p.uncertainty:.17g}" for p in points]
    return "\n".join(rows) + "\n"


def write_visibility_csv(points: list[VisibilityPoint], path) -> None:
    Path(path).write_text(format_visibility_csv(points))


def read_visibility_csv(path) -> list[VisibilityPoint]:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[1:] != ["visibility", "uncertainty"] or header[0] not in ("delta_y_m", "delta_y_reduced"):
            raise ValueError(f"{path}: unexpected visibility header {header}")
        coord = "delta_y" if header[0] == "delta_y_m" else "delta_y_reduced"
        points = []
        for line_no, row in enumerate(reader, start=2):
            try:
                x, v, s = (float(c) for c in row)
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from None
            points.append(VisibilityPoint(x, v, s, coord))
    return points
