"""Validation metrics for the virtual pinhole camera.

* collinearity error: per row/column, RMS perpendicular distance to the
  total-least-squares line divided by the row/column end-point distance;
* reprojection error: RMS distance between model corners projected through
  ``K [R | t]`` and the observed (mapped) corners, in grid-square units;
* ray bundle: for a grid of virtual pixels, the 3D points hit on every board
  are fitted with a line, which must pass through the camera centre.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .geometry import Homography, apply_homography, fit_line_2d, fit_line_3d_ransac
from .grid import CornerGrid


@dataclass(frozen=True, eq=False)
class BoardCollinearity:
    board_id: str
    rows: np.ndarray
    cols: np.ndarray

    @property
    def average(self) -> float:
        return float(np.mean(np.concatenate([self.rows, self.cols])))


@dataclass(frozen=True, eq=False)
class CollinearityReport:
    boards: list

    @property
    def board_averages(self) -> np.ndarray:
        return np.array([b.average for b in self.boards])

    @property
    def dataset_average(self) -> float:
        return float(np.mean(self.board_averages))

    def to_dict(self) -> dict:
        return {
            "dataset_average": self.dataset_average,
            "boards": [
                {"board_id": b.board_id, "average": b.average,
                 "rows": b.rows.tolist(), "cols": b.cols.tolist()}
                for b in self.boards
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["board_id", "collinearity_error", "max_row", "max_col"])
        for b in self.boards:
            w.writerow([b.board_id, repr(b.average), repr(float(b.rows.max())), repr(float(b.cols.max()))])
        return buf.getvalue()


def scaled_line_rms(points) -> float:
    """RMS distance to the best-fit line over the end-point distance."""
    p = np.asarray(points, dtype=float)
    _, d = fit_line_2d(p)
    span = np.linalg.norm(p[-1] - p[0])
    return float(np.sqrt(np.mean(d**2)) / span)


def board_collinearity(board: CornerGrid) -> BoardCollinearity:
    if board.rows < 2 or board.cols < 2:
        raise ValueError("collinearity needs at least 2 rows and 2 columns")
    L = board.lattice
    rows = np.array([scaled_line_rms(L[i]) for i in range(board.rows)])
    cols = np.array([scaled_line_rms(L[:, j]) for j in range(board.cols)])
    return BoardCollinearity(board.board_id, rows, cols)


def collinearity_error(boards) -> CollinearityReport:
    """Collinearity report for one board or a list of boards."""
    if isinstance(boards, CornerGrid):
        boards = [boards]
    return CollinearityReport([board_collinearity(b) for b in boards])


def project_model(K, pose, model: CornerGrid) -> np.ndarray:
    Kmat = K.K if hasattr(K, "K") else np.asarray(K, dtype=float)
    X = np.column_stack([model.points, np.zeros(len(model.points))])
    q = (X @ pose.R.T + pose.t) @ Kmat.T
    return q[:, :2] / q[:, 2:]


def reprojection_residuals(K, poses, model: CornerGrid, observed) -> list:
    poses, observed = list(poses), list(observed)
    if len(poses) != len(observed):
        raise ValueError(f"{len(poses)} poses but {len(observed)} observed boards")
    out = []
    for pose, obs in zip(poses, observed):
        if obs.points.shape != model.points.shape:
            raise ValueError(f"board {obs.board_id!r} does not match the model grid dimensions")
        out.append(np.linalg.norm(project_model(K, pose, model) - obs.points, axis=1))
    return out


def reprojection_error(K, poses, model: CornerGrid, observed, square_edge: float = 1.0) -> float:
    """RMS reprojection distance over all corners, divided by ``square_edge``."""
    r = np.concatenate(reprojection_residuals(K, poses, model, observed))
    return float(np.sqrt(np.mean(r**2)) / square_edge)


@dataclass(frozen=True, eq=False)
class RayBundleReport:
    pixels: np.ndarray
    lines: list
    origin_distances: np.ndarray
    inlier_counts: np.ndarray

    @property
    def max_distance(self) -> float:
        return float(np.max(self.origin_distances))

    @property
    def rms_distance(self) -> float:
        return float(np.sqrt(np.mean(self.origin_distances**2)))

    def to_dict(self) -> dict:
        return {
            "max_origin_distance": self.max_distance,
            "rms_origin_distance": self.rms_distance,
            "rays": [
                {"pixel": p.tolist(), "direction": ln.direction.tolist(),
                 "point": ln.point.tolist(), "origin_distance": float(d), "inliers": int(c)}
                for p, ln, d, c in zip(self.pixels, self.lines, self.origin_distances,
                                       self.inlier_counts)
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "dir_x", "dir_y", "dir_z", "origin_distance", "inliers"])
        for p, ln, d, c in zip(self.pixels, self.lines, self.origin_distances, self.inlier_counts):
            w.writerow([repr(float(p[0])), repr(float(p[1])), *(repr(float(v)) for v in ln.direction),
                        repr(float(d)), int(c)])
        return buf.getvalue()


def pixel_grid(cols: int, rows: int, n: int = 10) -> np.ndarray:
    """``n x n`` virtual pixels spread over the reference lattice ``[0, cols-1] x [0, rows-1]``."""
    x, y = np.meshgrid(np.linspace(0, cols - 1, n), np.linspace(0, rows - 1, n))
    return np.stack([x.ravel(), y.ravel()], axis=1)


def pinhole_bundle_check(K, poses, pixels, homographies=None, inlier_threshold: float = 1e-3,
                         iterations: int = 500, seed: int = 42) -> RayBundleReport:
    """Fit one 3D line per virtual pixel through its hits on every board.

    Each pixel is mapped onto board ``n``'s plane with the inverse of that
    board's homography (composed from ``K`` and the pose when
    ``homographies`` is None) and placed in camera coordinates with the
    board's pose. For a central camera every line passes through the origin.
    """
    poses = list(poses)
    if len(poses) < 2:
        raise ValueError("ray bundle check needs at least two boards")
    if homographies is None:
        homographies = [Homography(p.plane_homography(K)) for p in poses]
    homographies = list(homographies)
    if len(homographies) != len(poses):
        raise ValueError("one homography per pose required")
    pixels = np.atleast_2d(np.asarray(pixels, dtype=float))

    hits = np.empty((len(pixels), len(poses), 3))
    for n, (pose, H) in enumerate(zip(poses, homographies)):
        Hm = H.H if isinstance(H, Homography) else np.asarray(H, dtype=float)
        XY = apply_homography(np.linalg.inv(Hm), pixels)
        hits[:, n] = XY[:, :1] * pose.R[:, 0] + XY[:, 1:] * pose.R[:, 1] + pose.t

    lines, dists, counts = [], [], []
    for pts in hits:
        line, mask = fit_line_3d_ransac(pts, inlier_threshold, iterations, seed)
        lines.append(line)
        dists.append(line.distance_to_origin())
        counts.append(int(mask.sum()))
    return RayBundleReport(pixels, lines, np.array(dists), np.array(counts))

