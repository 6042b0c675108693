"""RSRP coverage grids at fixed altitudes and their CSV / PGM exports."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import inside_any
from .radio import rsrp_many

SENTINEL = -np.inf
PGM_RANGE = (-120.0, -60.0)


@dataclass
class CoverageGrid:
    altitude: float
    origin: tuple[float, float]
    cell_size: float
    width: int
    height: int
    values: np.ndarray  # (height, width) dBm, -inf inside buildings
    best_gbs_ids: np.ndarray  # (height, width), -1 inside buildings

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        self.values = np.asarray(self.values, dtype=float).reshape(self.height, self.width)
        self.best_gbs_ids = np.asarray(self.best_gbs_ids, dtype=int).reshape(self.height, self.width)

    def cell_centers(self) -> np.ndarray:
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.cell_size
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, self.altitude)], axis=1)

    def free_mean(self) -> float:
        free = np.isfinite(self.values)
        return float(self.values[free].mean()) if free.any() else float("nan")


def compute_coverage_grid(scenario, altitude: float, cell_size: float) -> CoverageGrid:
    """Best-server RSRP sampled at cell centers over the scenario area."""
    if not scenario.gbs_list:
        raise ValueError("scenario has no GBS")
    if not cell_size > 0:
        raise ValueError(f"cell_size must be positive, got {cell_size}")
    w, h = scenario.area
    nx, ny = max(int(np.ceil(w / cell_size)), 1), max(int(np.ceil(h / cell_size)), 1)
    grid = CoverageGrid(float(altitude), (0.0, 0.0), float(cell_size), nx, ny,
                        np.zeros((ny, nx)), np.zeros((ny, nx), dtype=int))
    pts = grid.cell_centers()
    blocked = inside_any(scenario, pts)
    free = pts[~blocked]
    values = np.full(len(pts), SENTINEL)
    ids = np.full(len(pts), -1, dtype=int)
    if len(free):
        # gbs_list is sorted by id, so argmax's first-max rule gives lowest-id ties
        per_gbs = np.stack([rsrp_many(g, scenario, free) for g in scenario.gbs_list])
        best = per_gbs.argmax(axis=0)
        values[~blocked] = per_gbs[best, np.arange(len(free))]
        ids[~blocked] = np.asarray(scenario.gbs_ids)[best]
    grid.values = values.reshape(ny, nx)
    grid.best_gbs_ids = ids.reshape(ny, nx)
    return grid


def to_pixels(values: np.ndarray, lo: float = PGM_RANGE[0], hi: float = PGM_RANGE[1]) -> np.ndarray:
    """Linear dBm-to-gray mapping, half-to-even rounding, sentinel cells black."""
    v = np.asarray(values, dtype=float)
    scaled = np.clip((v - lo) / (hi - lo) * 255.0, 0.0, 255.0)
    px = np.rint(np.where(np.isfinite(v), scaled, 0.0))
    return px.astype(np.uint8)


def export_grid(grid: CoverageGrid, path, format: str = "csv") -> None:
    path = Path(path)
    if format == "csv":
        lines = [
            f"# altitude={grid.altitude!r},origin_x={grid.origin[0]!r},origin_y={grid.origin[1]!r},"
            f"cell_size={grid.cell_size!r},width={grid.width},height={grid.height}"
        ]
        for row in grid.values:
            lines.append(",".join(repr(float(v)) if np.isfinite(v) else "-inf" for v in row))
        path.write_text("\n".join(lines) + "\n")
    elif format == "pgm":
        header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
        path.write_bytes(header + to_pixels(grid.values).tobytes())
    else:
        raise ValueError(f"unknown export format {format!r}")


def read_grid_csv(path) -> CoverageGrid:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing coverage metadata header")
    meta = dict(kv.split("=", 1) for kv in lines[0][1:].strip().split(","))
    width, height = int(meta["width"]), int(meta["height"])
    values = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:1 + height]])
    return CoverageGrid(
        float(meta["altitude"]),
        (float(meta["origin_x"]), float(meta["origin_y"])),
        float(meta["cell_size"]),
        width,
        height,
        values,
        np.full((height, width), -1),
    )
