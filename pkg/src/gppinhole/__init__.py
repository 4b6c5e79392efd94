"""Virtual pinhole cameras from Gaussian-process image maps.

A single checkerboard view trains two GPs that send image pixels onto the
board's own square lattice. Seen through that map the camera is an ideal
pinhole with square pixels, which a four-parameter Zhang calibration then
recovers in closed form.
"""

from .calibration import (
    CalibrationResult,
    FullIntrinsics,
    Pose,
    SimplifiedIntrinsics,
    calibrate,
    calibrate_full_linear,
    calibrate_simplified,
    recover_extrinsics,
)
from .errors import PinholeError
from .geometry import Homography, estimate_homography
from .gp import GpModel, Hyperparams, fit, log_marginal_likelihood, predict
from .grid import CornerGrid, model_grid
from .metrics import collinearity_error, pinhole_bundle_check, reprojection_error
from .raster import RasterImage, read_image, write_image
from .undistort import UndistortOptions, sample_edges, undistort_image
from .virtual_camera import VirtualCameraMap, map_board, map_points, train_virtual_camera

__version__ = "0.1.0"
