"""Calibrate the GP-camera on a distorted synthetic dataset, step by step.

    python demos/pinhole_walkthrough.py [preset]

Trains the pixel-to-lattice map on the first board, maps every board onto
the virtual plane, runs the simplified Zhang calibration and compares the
result with the known virtual camera.
"""

import sys

import numpy as np

from gppinhole import formats, metrics, synth
from gppinhole.pipeline import calibrate_dataset, evaluate
from gppinhole.virtual_camera import map_board


def main(name="unity-barrel"):
    spec = synth.preset(name)
    boards, truth = synth.generate_dataset(spec)
    print(f"{name}: {len(boards)} boards of {spec.rows}x{spec.cols} corners, "
          f"image {spec.image_size[0]}x{spec.image_size[1]}")

    raw = metrics.collinearity_error(boards).dataset_average
    print(f"collinearity of the raw pixel corners: {raw:.3e}")

    dataset = formats.dataset_from_scenario(spec, boards)
    calib = calibrate_dataset(dataset, exact_corners=True)
    vmap = calib.virtual_camera
    h = vmap.gp_x.hyperparams
    print(f"x-GP: signal variance {h.signal_variance:.3g}, length scale {h.length_scale:.3g} "
          "(normalised inputs)")

    mapped = [map_board(vmap, b) for b in boards]
    print(f"collinearity after mapping:          {metrics.collinearity_error(mapped).dataset_average:.3e}")

    est, true = calib.intrinsics, truth.virtual_intrinsics
    print(f"f  estimated {est.f:.8f}  true {true.f:.8f}")
    print(f"pp estimated ({est.u_c:.6f}, {est.v_c:.6f})  true ({true.u_c:.6f}, {true.v_c:.6f})")

    ev = evaluate(dataset, calib)
    print(f"reprojection error {ev.reprojection_error:.3e} grid units")
    print(f"ray bundle: max distance of the 10x10 rays from the origin {ev.rays.max_distance:.3e}")
    worst = int(np.argmax(ev.rays.origin_distances))
    print(f"  worst ray at virtual pixel {ev.rays.pixels[worst]}")


if __name__ == "__main__":
    main(*sys.argv[1:])
