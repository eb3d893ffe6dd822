"""Rasterize flagged windows onto a local metric grid.

Positions are projected with a local equirectangular approximation
around the south-west corner of the data's bounding box, binned into
square cells, and written as a plain-text grid of counts plus a JSON
sidecar describing the georeference.  Row 0 of the grid is the
southernmost row; column 0 the westernmost.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .covariates import DEFAULT_RULES

#: meters per degree of latitude (spherical approximation)
M_PER_DEG_LAT = 111320.0


class HeatmapError(ValueError):
    pass


@dataclass
class HeatmapMeta:
    variable: str
    cell_size_m: float
    origin_lat: float
    origin_lon: float
    nx: int
    ny: int
    n_flagged: int
    n_positioned: int
    row_order: str = "south_to_north"
    col_order: str = "west_to_east"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _project(lat, lon, lat0, lon0):
    x = (lon - lon0) * M_PER_DEG_LAT * math.cos(math.radians(lat0))
    y = (lat - lat0) * M_PER_DEG_LAT
    return x, y


def heatmap_grid(described, variable, cell_size_m=25.0, rules=None):
    """Count flagged windows per grid cell.

    ``described`` is an iterable with ``record``, ``lat``, ``lon``
    attributes.  The grid covers the bounding box of every positioned
    window (flagged or not), so grids of different variables over the
    same data align.  Returns ``(grid, meta)``.
    """
    rules = rules or DEFAULT_RULES
    if variable not in rules:
        raise HeatmapError(
            f"unknown variable {variable!r}; available: {', '.join(sorted(rules))}"
        )
    if cell_size_m <= 0:
        raise HeatmapError("cell size must be positive")
    rule = rules[variable]
    pts = [(d.lat, d.lon, bool(rule(d.record))) for d in described
           if math.isfinite(d.lat) and math.isfinite(d.lon)]
    if not pts:
        raise HeatmapError("no positioned windows to rasterize")
    lat0 = min(p[0] for p in pts)
    lon0 = min(p[1] for p in pts)
    xy = [_project(lat, lon, lat0, lon0) for lat, lon, _ in pts]
    nx = max(1, int(max(x for x, _ in xy) // cell_size_m) + 1)
    ny = max(1, int(max(y for _, y in xy) // cell_size_m) + 1)
    grid = np.zeros((ny, nx), dtype=int)
    n_flagged = 0
    for (x, y), (_, _, flagged) in zip(xy, pts):
        if not flagged:
            continue
        grid[int(y // cell_size_m), int(x // cell_size_m)] += 1
        n_flagged += 1
    meta = HeatmapMeta(
        variable=variable, cell_size_m=float(cell_size_m),
        origin_lat=lat0, origin_lon=lon0, nx=nx, ny=ny,
        n_flagged=n_flagged, n_positioned=len(pts),
    )
    return grid, meta


def heatmap_export(described, variable, out_path, cell_size_m=25.0, rules=None):
    """Write the grid as whitespace-separated counts plus a ``.json``
    sidecar next to it.  Returns ``(grid, meta)``."""
    grid, meta = heatmap_grid(described, variable, cell_size_m, rules)
    out_path = Path(out_path)
    lines = [" ".join(str(int(v)) for v in row) for row in grid]
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    sidecar = out_path.with_suffix(out_path.suffix + ".json")
    sidecar.write_text(json.dumps(meta.to_dict(), indent=2) + "\n",
                       encoding="utf-8")
    return grid, meta
