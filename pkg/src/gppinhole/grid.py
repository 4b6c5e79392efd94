"""Ordered corner lattices for one checkerboard view."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True, eq=False)
class CornerGrid:
    """``rows * cols`` corner observations stored row-major in ``points``."""

    rows: int
    cols: int
    points: np.ndarray
    board_id: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid dimensions must be positive, got {self.rows}x{self.cols}")
        if len(pts) != self.rows * self.cols:
            raise ValueError(
                f"board {self.board_id!r}: expected {self.rows * self.cols} corners, got {len(pts)}"
            )
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"board {self.board_id!r}: non-finite corner coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def lattice(self) -> np.ndarray:
        """Points as a ``(rows, cols, 2)`` view."""
        return self.points.reshape(self.rows, self.cols, 2)

    def row(self, i: int) -> np.ndarray:
        return self.lattice[i]

    def col(self, j: int) -> np.ndarray:
        return self.lattice[:, j]

    def with_points(self, points) -> "CornerGrid":
        return replace(self, points=np.asarray(points, dtype=float))


def model_grid(rows: int, cols: int, square_size: float = 1.0, board_id: str = "model") -> CornerGrid:
    """Planar board model: corner (r, c) sits at ``(c, r) * square_size``."""
    c, r = np.meshgrid(np.arange(cols, dtype=float), np.arange(rows, dtype=float))
    return CornerGrid(rows, cols, np.stack([c.ravel(), r.ravel()], axis=1) * square_size, board_id)


def check_ordering(grid: CornerGrid) -> None:
    """Reject boards whose corners are not a consistent row-major lattice.

    Every step along a row must point roughly the same way as the row's mean
    step and be the nearest lattice neighbour in that row; same for columns.
    Raises ValueError naming the first offending row or column.
    """
    L = grid.lattice
    for axis, name in ((1, "row"), (0, "column")):
        steps = np.diff(L, axis=axis)
        if steps.size == 0:
            continue
        lines = steps if axis == 1 else steps.transpose(1, 0, 2)
        for k, s in enumerate(lines):
            mean = s.mean(axis=0)
            if not np.linalg.norm(mean) > 0:
                raise ValueError(f"board {grid.board_id!r}: {name} {k} has coincident corners")
            if np.any(s @ mean <= 0):
                raise ValueError(f"board {grid.board_id!r}: {name} {k} is not monotonic")
            pts = L[k] if axis == 1 else L[:, k]
            # nearest-neighbour chain: each point's closest peer on its line is adjacent
            d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
            np.fill_diagonal(d, np.inf)
            nearest = np.argmin(d, axis=1)
            if np.any(np.abs(nearest - np.arange(len(pts))) != 1):
                raise ValueError(f"board {grid.board_id!r}: {name} {k} breaks the neighbour chain")
    rdir = np.diff(L, axis=1).reshape(-1, 2).mean(axis=0)
    cdir = np.diff(L, axis=0).reshape(-1, 2).mean(axis=0)
    if L.shape[0] > 1 and L.shape[1] > 1:
        cross = abs(rdir[0] * cdir[1] - rdir[1] * cdir[0])
        if not cross > 1e-9 * np.linalg.norm(rdir) * np.linalg.norm(cdir):
            raise ValueError(f"board {grid.board_id!r}: rows and columns are parallel")
