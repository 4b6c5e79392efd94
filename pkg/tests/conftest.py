import time
from functools import lru_cache

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from gppinhole import formats, synth
from gppinhole.calibration import Pose
from gppinhole.pipeline import calibrate_dataset, evaluate

SUITE_BUDGET_S = 300.0
_session = {"start": None}
ACCEPTANCE: dict = {}


def random_poses(n, seed=0, depth=(8.0, 14.0), max_tilt_deg=40.0, center=(7.0, 4.0), min_tilt_deg=5.0):
    """Tilted poses looking at a board of roughly 14x8 units, all in front of the camera."""
    rng = np.random.default_rng(seed)
    poses = []
    for _ in range(n):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = np.deg2rad(rng.uniform(min_tilt_deg, max_tilt_deg))
        R = Rotation.from_rotvec(axis * angle).as_matrix()
        c = np.array([center[0], center[1], 0.0])
        t = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(*depth)]) - R @ c
        poses.append(Pose(R, t))
    return poses


@lru_cache(maxsize=None)
def pipeline_run(name, noise=0.0, seed=0, n_boards=30):
    """Generate, calibrate and evaluate one preset; cached across tests."""
    t0 = time.perf_counter()
    spec = synth.preset(name, noise_sigma=noise, seed=seed, n_boards=n_boards)
    boards, truth = synth.generate_dataset(spec)
    ds = formats.dataset_from_scenario(spec, boards)
    # noise-free corners are interpolated; noisy ones get an estimated noise level
    calib = calibrate_dataset(ds, exact_corners=noise == 0)
    ev = evaluate(ds, calib)
    return {"spec": spec, "boards": boards, "truth": truth, "dataset": ds, "calib": calib,
            "eval": ev, "seconds": time.perf_counter() - t0}


@pytest.fixture
def record_criterion():
    """Store a one-line verdict for an acceptance criterion (printed at the end)."""
    def record(number, ok, detail):
        prev = ACCEPTANCE.get(number)
        if prev is not None:
            ok = ok and prev[0]
            detail = prev[1] + "; " + detail
        ACCEPTANCE[number] = (bool(ok), detail)
    return record


def pytest_sessionstart(session):
    _session["start"] = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - _session["start"]
    _session["elapsed"] = elapsed
    if ACCEPTANCE and elapsed > SUITE_BUDGET_S and session.exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    elapsed = _session.get("elapsed", time.perf_counter() - _session["start"])
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        if number == 8:
            ok = ok and elapsed < SUITE_BUDGET_S
            detail += f"; full suite {elapsed:.0f} s (< {SUITE_BUDGET_S:.0f} s)"
        tr.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
