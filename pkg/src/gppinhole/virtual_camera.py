"""The GP-camera: a learned map from image pixels to a square-pixel plane.

One view of a checkerboard is enough. Its detected corners are paired with
their lattice indices (column, row), origin at the first corner in row-major
order, unit equal to one square edge. Two independent scalar GPs learn
``(u, v) -> x`` and ``(u, v) -> y``; composing the physical camera with this
map gives a virtual camera whose image plane is the reference board.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import gp
from .errors import DegenerateGrid, InsufficientCorners
from .grid import CornerGrid

SCHEMA = "gppinhole/virtual-camera/1"
MIN_CORNERS = 4
CHUNK = 65536


@dataclass(frozen=True, eq=False)
class VirtualCameraMap:
    gp_x: gp.GpModel
    gp_y: gp.GpModel
    reference_rows: int
    reference_cols: int

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "reference_rows": self.reference_rows,
            "reference_cols": self.reference_cols,
            "gp_x": self.gp_x.to_dict(),
            "gp_y": self.gp_y.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "VirtualCameraMap":
        if doc.get("schema") != SCHEMA:
            raise ValueError(f"unrecognised virtual camera schema {doc.get('schema')!r}")
        return cls(gp.GpModel.from_dict(doc["gp_x"]), gp.GpModel.from_dict(doc["gp_y"]),
                   int(doc["reference_rows"]), int(doc["reference_cols"]))

    @property
    def signal_std(self) -> float:
        """Prior standard deviation of the combined 2D prediction."""
        return float(np.sqrt(self.gp_x.hyperparams.signal_variance
                             + self.gp_y.hyperparams.signal_variance))


@dataclass(frozen=True, eq=False)
class MappedPoints:
    xy: np.ndarray
    sigma: np.ndarray


def lattice_targets(rows: int, cols: int) -> np.ndarray:
    c, r = np.meshgrid(np.arange(cols, dtype=float), np.arange(rows, dtype=float))
    return np.stack([c.ravel(), r.ravel()], axis=1)


def train_virtual_camera(reference: CornerGrid, image_size=None,
                         exact_corners: bool = False) -> VirtualCameraMap:
    """Fit the pixel-to-lattice GPs on one board's corners.

    By default the observation noise is estimated with the other
    hyperparameters. With ``exact_corners`` it is pinned to zero, so the map
    interpolates the reference corners; use it for noise-free input only.

    If ``image_size`` (w, h) is given, warns when the corners' bounding box
    covers less than half the image: the map is only trustworthy where the
    reference board was seen.
    """
    if reference.rows < MIN_CORNERS or reference.cols < MIN_CORNERS:
        raise InsufficientCorners(
            f"reference board has {reference.rows}x{reference.cols} corners; "
            f"need at least {MIN_CORNERS}x{MIN_CORNERS}"
        )
    uv = reference.points
    s = np.linalg.svd(uv - uv.mean(axis=0), compute_uv=False)
    if not s[1] > 1e-9 * s[0]:
        raise DegenerateGrid("reference corners are collinear")

    if image_size is not None:
        w, h = image_size
        span = uv.max(axis=0) - uv.min(axis=0)
        if span[0] * span[1] < 0.5 * w * h:
            warnings.warn(
                f"reference corners cover {100 * span[0] * span[1] / (w * h):.0f}% of the image; "
                "predictions outside the board footprint fall back on the prior",
                stacklevel=2,
            )

    targets = lattice_targets(reference.rows, reference.cols)
    noise = 0.0 if exact_corners else None
    gp_x = gp.fit(uv, targets[:, 0], noise_variance=noise)
    gp_y = gp.fit(uv, targets[:, 1], noise_variance=noise)
    return VirtualCameraMap(gp_x, gp_y, reference.rows, reference.cols)


def map_points(vmap: VirtualCameraMap, uv, with_sigma: bool = True) -> MappedPoints:
    """Predict virtual-plane coordinates and a combined standard deviation."""
    uv = np.atleast_2d(np.asarray(uv, dtype=float))
    xy = np.empty_like(uv)
    sigma = np.empty(len(uv))
    for lo in range(0, len(uv), CHUNK):
        part = uv[lo:lo + CHUNK]
        if with_sigma:
            mx, vx = gp.predict(vmap.gp_x, part)
            my, vy = gp.predict(vmap.gp_y, part)
            sigma[lo:lo + CHUNK] = np.sqrt(vx + vy)
        else:
            mx = gp.predict_mean(vmap.gp_x, part)
            my = gp.predict_mean(vmap.gp_y, part)
        xy[lo:lo + CHUNK, 0] = mx
        xy[lo:lo + CHUNK, 1] = my
    if not with_sigma:
        sigma[:] = np.nan
    return MappedPoints(xy, sigma)


def map_board(vmap: VirtualCameraMap, board: CornerGrid) -> CornerGrid:
    """The board's corners expressed on the virtual image plane."""
    return board.with_points(map_points(vmap, board.points, with_sigma=False).xy)
