"""Versioned JSON documents for datasets, scenarios, calibrations and metrics.

Every document carries a ``"schema"`` string. Floats are written with
Python's shortest round-trip representation, so reloading reproduces every
value bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import (
    FullIntrinsics,
    Pose,
    intrinsics_from_dict,
)
from .errors import DatasetError
from .geometry import Homography
from .grid import CornerGrid, check_ordering, model_grid
from .synth import DistortionField, GroundTruth, ScenarioSpec, preset
from .virtual_camera import VirtualCameraMap

DATASET_SCHEMA = "gppinhole/dataset/1"
TRUTH_SCHEMA = "gppinhole/ground-truth/1"
SCENARIO_SCHEMA = "gppinhole/scenario/1"
CALIBRATION_SCHEMA = "gppinhole/calibration/1"
METRICS_SCHEMA = "gppinhole/metrics/1"


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def write_json(doc: dict, path) -> None:
    Path(path).write_text(dumps(doc))


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read JSON from {path}: {exc}") from exc


def _expect_schema(doc: dict, schema: str) -> None:
    if not isinstance(doc, dict) or doc.get("schema") != schema:
        got = doc.get("schema") if isinstance(doc, dict) else type(doc).__name__
        raise DatasetError(f"expected schema {schema!r}, got {got!r}")


@dataclass(frozen=True, eq=False)
class Dataset:
    rows: int
    cols: int
    square_size: float
    image_size: tuple
    boards: list
    name: str = ""
    ground_truth: dict | None = field(default=None)

    @property
    def model(self) -> CornerGrid:
        return model_grid(self.rows, self.cols, self.square_size)

    @property
    def board_ids(self) -> list:
        return [b.board_id for b in self.boards]

    def to_dict(self) -> dict:
        doc = {
            "schema": DATASET_SCHEMA,
            "name": self.name,
            "image_size": [int(v) for v in self.image_size],
            "grid": {"rows": self.rows, "cols": self.cols, "square_size": self.square_size},
            "boards": [{"board_id": b.board_id, "corners": b.points.tolist()} for b in self.boards],
        }
        if self.ground_truth is not None:
            doc["ground_truth"] = self.ground_truth
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Dataset":
        _expect_schema(doc, DATASET_SCHEMA)
        try:
            grid = doc["grid"]
            rows, cols = int(grid["rows"]), int(grid["cols"])
            square = float(grid["square_size"])
            image_size = tuple(int(v) for v in doc["image_size"])
            entries = doc["boards"]
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"malformed dataset header: {exc}") from exc
        boards = []
        for k, entry in enumerate(entries):
            bid = str(entry.get("board_id", f"board_{k:02d}"))
            corners = np.asarray(entry.get("corners", []), dtype=float)
            if corners.shape != (rows * cols, 2):
                raise DatasetError(
                    f"board {bid!r} has {corners.size // 2 if corners.ndim else 0} corners, "
                    f"expected {rows}x{cols} = {rows * cols}"
                )
            try:
                board = CornerGrid(rows, cols, corners, bid)
                check_ordering(board)
            except ValueError as exc:
                raise DatasetError(str(exc)) from exc
            boards.append(board)
        return cls(rows, cols, square, image_size, boards, str(doc.get("name", "")),
                   doc.get("ground_truth"))


def load_dataset(path) -> Dataset:
    return Dataset.from_dict(read_json(path))


def truth_path(dataset_path) -> Path:
    p = Path(dataset_path)
    return p.with_name(p.stem + ".truth.json")


# scenarios ---------------------------------------------------------------

def scenario_to_dict(spec: ScenarioSpec) -> dict:
    return {
        "schema": SCENARIO_SCHEMA,
        "name": spec.name,
        "intrinsics": spec.intrinsics.to_dict(),
        "image_size": list(spec.image_size),
        "grid": {"rows": spec.rows, "cols": spec.cols, "square_size": spec.square_size},
        "poses": [p.to_dict() for p in spec.poses],
        "distortion": spec.distortion.to_dict(),
        "noise_sigma": spec.noise_sigma,
        "seed": spec.seed,
    }


def scenario_from_dict(doc: dict) -> ScenarioSpec:
    """Full scenario document, or ``{"preset": name, ...}`` with preset keyword overrides."""
    if "preset" in doc:
        kwargs = {k: v for k, v in doc.items() if k not in ("preset", "schema")}
        if "image_size" in kwargs:
            kwargs["image_size"] = tuple(kwargs["image_size"])
        return preset(doc["preset"], **kwargs)
    _expect_schema(doc, SCENARIO_SCHEMA)
    intr = intrinsics_from_dict(doc["intrinsics"])
    if not isinstance(intr, FullIntrinsics):
        intr = FullIntrinsics(intr.f, intr.f, 0.0, intr.u_c, intr.v_c)
    grid = doc["grid"]
    return ScenarioSpec(
        intr,
        tuple(doc["image_size"]),
        int(grid["rows"]),
        int(grid["cols"]),
        float(grid["square_size"]),
        tuple(Pose.from_dict(p) for p in doc["poses"]),
        DistortionField.from_dict(doc.get("distortion", {"variant": "none"})),
        float(doc.get("noise_sigma", 0.0)),
        int(doc.get("seed", 0)),
        str(doc.get("name", "custom")),
    )


def dataset_from_scenario(spec: ScenarioSpec, boards) -> Dataset:
    return Dataset(spec.rows, spec.cols, spec.square_size, tuple(spec.image_size), list(boards),
                   spec.name)


def truth_to_dict(spec: ScenarioSpec, truth: GroundTruth) -> dict:
    return {"schema": TRUTH_SCHEMA, "scenario": scenario_to_dict(spec), **truth.to_dict()}


def truth_virtual_intrinsics(doc: dict):
    """Ground-truth virtual camera intrinsics from a truth document."""
    _expect_schema(doc, TRUTH_SCHEMA)
    return intrinsics_from_dict(doc["virtual_camera"]["intrinsics"])


def truth_virtual_poses(doc: dict) -> list:
    _expect_schema(doc, TRUTH_SCHEMA)
    return [Pose.from_dict(p) for p in doc["virtual_camera"]["poses"]]


# calibration -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CalibrationFile:
    method: str
    reference_board: int
    board_ids: list
    intrinsics: object
    poses: list
    homographies: list
    sigma_min: float
    sigma_second: float
    virtual_camera: VirtualCameraMap

    def to_dict(self) -> dict:
        return {
            "schema": CALIBRATION_SCHEMA,
            "method": self.method,
            "reference_board": self.reference_board,
            "board_ids": list(self.board_ids),
            "intrinsics": self.intrinsics.to_dict(),
            "poses": [p.to_dict() for p in self.poses],
            "homographies": [H.H.tolist() for H in self.homographies],
            "homography_rms_residuals": [H.rms_residual for H in self.homographies],
            "sigma_min": self.sigma_min,
            "sigma_second": self.sigma_second,
            "virtual_camera": self.virtual_camera.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CalibrationFile":
        _expect_schema(doc, CALIBRATION_SCHEMA)
        try:
            Hs = [Homography(np.asarray(H), float(r))
                  for H, r in zip(doc["homographies"], doc["homography_rms_residuals"])]
            return cls(
                doc["method"],
                int(doc["reference_board"]),
                list(doc["board_ids"]),
                intrinsics_from_dict(doc["intrinsics"]),
                [Pose.from_dict(p) for p in doc["poses"]],
                Hs,
                float(doc["sigma_min"]),
                float(doc["sigma_second"]),
                VirtualCameraMap.from_dict(doc["virtual_camera"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"malformed calibration document: {exc}") from exc


def load_calibration(path) -> CalibrationFile:
    return CalibrationFile.from_dict(read_json(path))


def load_virtual_camera(path) -> VirtualCameraMap:
    """A bare virtual camera document or the one embedded in a calibration."""
    doc = read_json(path)
    if isinstance(doc, dict) and doc.get("schema") == CALIBRATION_SCHEMA:
        doc = doc["virtual_camera"]
    try:
        return VirtualCameraMap.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{path}: {exc}") from exc
