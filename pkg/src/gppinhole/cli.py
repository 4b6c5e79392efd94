"""``gp-pinhole`` command line.

Exit codes:
  0  success
  2  invalid input (unknown preset, bad scenario or dataset, bad options)
  3  calibration failed (too few boards, degenerate or non-physical solution)
  4  dataset and calibration do not match
  5  image missing, unreadable or unsupported
"""

from __future__ import annotations

import argparse
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from . import formats, synth
from .errors import DatasetError, EmptyOutput, NonInjectiveWarp, PinholeError
from .pipeline import BoardMismatch, calibrate_dataset, evaluate
from .raster import ImageReadError, RasterImage, read_image, write_image
from .undistort import UndistortOptions, undistort_image
from .virtual_camera import train_virtual_camera

EXIT_OK, EXIT_INPUT, EXIT_CALIBRATION, EXIT_MISMATCH, EXIT_IMAGE = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fail(code: int, message: str):
    raise CliError(code, message)


def cmd_generate(args) -> int:
    if (args.preset is None) == (args.spec is None):
        _fail(EXIT_INPUT, "give exactly one of --preset or --spec")
    try:
        if args.preset is not None:
            kwargs = {"noise_sigma": args.noise, "seed": args.seed}
            if args.boards is not None:
                kwargs["n_boards"] = args.boards
            if args.image_size is not None:
                kwargs["image_size"] = tuple(args.image_size)
            spec = synth.preset(args.preset, **kwargs)
        else:
            spec = formats.scenario_from_dict(formats.read_json(args.spec))
        boards, truth = synth.generate_dataset(spec)
    except (ValueError, KeyError, TypeError, NonInjectiveWarp, DatasetError, RuntimeError) as exc:
        _fail(EXIT_INPUT, f"invalid scenario: {exc}")

    out = Path(args.output)
    formats.write_json(formats.dataset_from_scenario(spec, boards).to_dict(), out)
    formats.write_json(formats.truth_to_dict(spec, truth), formats.truth_path(out))
    if args.render is not None:
        index, path = int(args.render[0]), args.render[1]
        if not 0 <= index < len(spec.poses):
            _fail(EXIT_INPUT, f"--render board {index} out of range")
        img = synth.render_checkerboard(spec, index, args.supersample)
        if Path(path).suffix.lower() == ".ppm":
            img = RasterImage(img.data[..., None].repeat(3, axis=2))
        try:
            write_image(img, path)
        except ValueError as exc:
            _fail(EXIT_INPUT, str(exc))
        except OSError as exc:
            _fail(EXIT_IMAGE, f"cannot write image: {exc}")
    print(f"wrote {len(boards)} boards of {spec.rows}x{spec.cols} corners to {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        dataset = formats.load_dataset(args.dataset)
    except DatasetError as exc:
        _fail(EXIT_INPUT, str(exc))
    if not 0 <= args.reference_board < len(dataset.boards):
        _fail(EXIT_INPUT, f"--reference-board {args.reference_board} out of range "
                          f"(dataset has {len(dataset.boards)} boards)")
    try:
        calib = calibrate_dataset(dataset, args.reference_board, args.method, args.exact_corners)
    except (PinholeError, ValueError) as exc:
        _fail(EXIT_CALIBRATION, f"calibration failed: {type(exc).__name__}: {exc}")
    formats.write_json(calib.to_dict(), args.output)
    intr = calib.intrinsics
    if args.method == "simplified":
        print(f"f = {intr.f!r}  principal point = ({intr.u_c!r}, {intr.v_c!r})  "
              f"sigma_min = {calib.sigma_min:.3e}")
    else:
        print(f"fx = {intr.fx!r}  fy = {intr.fy!r}  skew = {intr.skew!r}  "
              f"principal point = ({intr.u_c!r}, {intr.v_c!r})")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        dataset = formats.load_dataset(args.dataset)
        calib = formats.load_calibration(args.calibration)
    except DatasetError as exc:
        _fail(EXIT_INPUT, str(exc))
    try:
        ev = evaluate(dataset, calib, grid=args.grid)
    except BoardMismatch as exc:
        _fail(EXIT_MISMATCH, str(exc))
    except ValueError as exc:
        _fail(EXIT_MISMATCH, f"dataset does not match calibration: {exc}")
    out = Path(args.output)
    formats.write_json(ev.to_dict(), out)
    out.with_name(out.stem + ".boards.csv").write_text(ev.collinearity.to_csv())
    out.with_name(out.stem + ".rays.csv").write_text(ev.rays.to_csv())
    print(f"CE = {ev.collinearity.dataset_average:.3e}  RE = {ev.reprojection_error:.3e}  "
          f"max ray distance = {ev.rays.max_distance:.3e}")
    return EXIT_OK


def cmd_undistort(args) -> int:
    try:
        src = read_image(args.image)
    except ImageReadError as exc:
        _fail(EXIT_IMAGE, str(exc))
    if (args.map is None) == (args.dataset is None):
        _fail(EXIT_INPUT, "give exactly one of --map or --dataset")
    try:
        if args.map is not None:
            vmap = formats.load_virtual_camera(args.map)
        else:
            dataset = formats.load_dataset(args.dataset)
            if not 0 <= args.reference_board < len(dataset.boards):
                _fail(EXIT_INPUT, f"--reference-board {args.reference_board} out of range")
            vmap = train_virtual_camera(dataset.boards[args.reference_board], dataset.image_size,
                                        args.exact_corners)
        opts = UndistortOptions(
            scale=args.scale,
            fill_radius=args.fill_radius,
            sigma_threshold=None if args.no_mask else args.sigma_threshold,
            framing=tuple(args.framing) if args.framing else None,
        )
    except (DatasetError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))
    try:
        out, mask, stats = undistort_image(vmap, src, opts, return_stats=True)
    except EmptyOutput as exc:
        _fail(EXIT_INPUT, str(exc))

    output = Path(args.output)
    mask_path = Path(args.mask) if args.mask else output.with_name(output.stem + ".mask.pgm")
    try:
        write_image(out, output)
        write_image(RasterImage(mask.astype("uint8") * 255), mask_path)
    except ValueError as exc:
        _fail(EXIT_INPUT, str(exc))
    except OSError as exc:
        _fail(EXIT_IMAGE, f"cannot write image: {exc}")
    print(f"{out.width}x{out.height} output, {stats.covered} covered pixels "
          f"({stats.filled} filled, {stats.holes} holes)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gp-pinhole", description=__doc__.splitlines()[0],
                                epilog="GP_PINHOLE_THREADS caps the BLAS thread pool.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset and its ground truth")
    g.add_argument("--preset", help=f"one of {', '.join(synth.PRESETS)}")
    g.add_argument("--spec", help="scenario JSON file")
    g.add_argument("-o", "--output", required=True)
    g.add_argument("--noise", type=float, default=0.0, help="corner noise sigma in pixels")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--boards", type=int)
    g.add_argument("--image-size", type=int, nargs=2, metavar=("W", "H"))
    g.add_argument("--render", nargs=2, metavar=("BOARD", "IMAGE"),
                   help="also rasterise one board to an image file")
    g.add_argument("--supersample", type=int, default=4)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("calibrate", help="train the map and calibrate the GP-camera")
    c.add_argument("dataset")
    c.add_argument("-o", "--output", required=True)
    c.add_argument("--reference-board", type=int, default=0)
    c.add_argument("--method", choices=("simplified", "full-linear"), default="simplified")
    c.add_argument("--exact-corners", action="store_true",
                   help="corners are noise-free: interpolate them instead of estimating a noise level")
    c.set_defaults(func=cmd_calibrate)

    e = sub.add_parser("evaluate", help="collinearity, reprojection and ray bundle metrics")
    e.add_argument("dataset")
    e.add_argument("calibration")
    e.add_argument("-o", "--output", required=True)
    e.add_argument("--grid", type=int, default=10, help="virtual pixels per side for the ray check")
    e.set_defaults(func=cmd_evaluate)

    u = sub.add_parser("undistort", help="rectify an image through the virtual camera map")
    u.add_argument("image")
    u.add_argument("-o", "--output", required=True)
    u.add_argument("--map", help="calibration or virtual camera JSON")
    u.add_argument("--dataset", help="train the map from this dataset instead")
    u.add_argument("--reference-board", type=int, default=0)
    u.add_argument("--exact-corners", action="store_true",
                   help="corners are noise-free: interpolate them instead of estimating a noise level")
    u.add_argument("--scale", type=float, default=40.0, help="output pixels per grid square")
    u.add_argument("--fill-radius", type=int, default=1)
    u.add_argument("--sigma-threshold", type=float, default=0.1)
    u.add_argument("--no-mask", action="store_true", help="keep uncertain pixels")
    u.add_argument("--framing", type=float, nargs=4, metavar=("X0", "Y0", "X1", "Y1"))
    u.add_argument("--mask", help="coverage mask path (default: <output>.mask.pgm)")
    u.set_defaults(func=cmd_undistort)
    return p


def _thread_limit():
    n = os.environ.get("GP_PINHOLE_THREADS")
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(n)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with _thread_limit():
            return args.func(args)
    except CliError as exc:
        print(f"gp-pinhole {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
