"""End-to-end steps: train the map, calibrate the GP-camera, score it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics
from .calibration import calibrate
from .formats import METRICS_SCHEMA, CalibrationFile, Dataset
from .geometry import estimate_homography
from .grid import model_grid
from .virtual_camera import map_board, train_virtual_camera


def calibrate_dataset(dataset: Dataset, reference_board: int = 0,
                      method: str = "simplified", exact_corners: bool = False) -> CalibrationFile:
    """Train on one board, map every board to the virtual plane and calibrate."""
    if not 0 <= reference_board < len(dataset.boards):
        raise IndexError(f"reference board {reference_board} out of range 0..{len(dataset.boards) - 1}")
    vmap = train_virtual_camera(dataset.boards[reference_board], dataset.image_size,
                                exact_corners)
    mapped = [map_board(vmap, b) for b in dataset.boards]
    unit = model_grid(dataset.rows, dataset.cols, 1.0)
    res = calibrate(mapped, unit, method)
    return CalibrationFile(method, reference_board, dataset.board_ids, res.intrinsics, res.poses,
                           res.homographies, res.sigma_min, res.sigma_second, vmap)


class BoardMismatch(ValueError):
    """Dataset and calibration describe different boards."""


@dataclass(frozen=True, eq=False)
class Evaluation:
    collinearity: metrics.CollinearityReport
    reprojection_error: float
    rays: metrics.RayBundleReport
    max_pair_residual: float

    def to_dict(self) -> dict:
        return {
            "schema": METRICS_SCHEMA,
            "collinearity_error": self.collinearity.dataset_average,
            "reprojection_error": self.reprojection_error,
            "ray_max_origin_distance": self.rays.max_distance,
            "ray_rms_origin_distance": self.rays.rms_distance,
            "max_pairwise_homography_residual": (
                None if np.isnan(self.max_pair_residual) else self.max_pair_residual),
            "collinearity": self.collinearity.to_dict(),
            "rays": self.rays.to_dict(),
        }


def pairwise_homography_residual(boards) -> float:
    """Largest transfer error of one homography fitted between any two boards."""
    worst = 0.0
    for i in range(len(boards)):
        for j in range(i + 1, len(boards)):
            H = estimate_homography(boards[i].points, boards[j].points)
            q = boards[i].points @ H.H[:, :2].T + H.H[:, 2]
            q = q[:, :2] / q[:, 2:]
            worst = max(worst, float(np.max(np.linalg.norm(q - boards[j].points, axis=1))))
    return worst


def evaluate(dataset: Dataset, calib: CalibrationFile, grid: int = 10,
             pairwise: bool = True) -> Evaluation:
    if len(dataset.boards) != len(calib.poses):
        raise BoardMismatch(
            f"dataset has {len(dataset.boards)} boards, calibration has {len(calib.poses)} poses"
        )
    if dataset.board_ids != list(calib.board_ids):
        raise BoardMismatch("dataset board ids differ from those in the calibration")
    vm = calib.virtual_camera
    mapped = [map_board(vm, b) for b in dataset.boards]
    unit = model_grid(dataset.rows, dataset.cols, 1.0)
    ce = metrics.collinearity_error(mapped)
    re = metrics.reprojection_error(calib.intrinsics, calib.poses, unit, mapped)
    pixels = metrics.pixel_grid(vm.reference_cols, vm.reference_rows, grid)
    rays = metrics.pinhole_bundle_check(calib.intrinsics, calib.poses, pixels, calib.homographies)
    pair = pairwise_homography_residual(mapped) if pairwise else float("nan")
    return Evaluation(ce, re, rays, pair)
