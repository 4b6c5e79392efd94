import json
import subprocess
import sys

import numpy as np
import pytest

from gppinhole import cli, formats, metrics, synth
from gppinhole.errors import DatasetError
from gppinhole.grid import model_grid
from gppinhole.raster import RasterImage, read_image, write_image
from gppinhole.undistort import sample_edges
from gppinhole.virtual_camera import train_virtual_camera


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pinhole(tmp_path_factory):
    d = tmp_path_factory.mktemp("pinhole")
    assert run("generate", "--preset", "unity-pinhole", "-o", d / "ds.json") == 0
    assert run("calibrate", d / "ds.json", "-o", d / "calib.json", "--exact-corners") == 0
    assert run("evaluate", d / "ds.json", d / "calib.json", "-o", d / "metrics.json") == 0
    return d


def test_generate_pinhole_dataset(pinhole):
    ds = formats.load_dataset(pinhole / "ds.json")
    assert len(ds.boards) == 30
    assert all(b.points.shape == (135, 2) for b in ds.boards)
    truth = formats.read_json(pinhole / "ds.truth.json")
    assert truth["schema"] == formats.TRUTH_SCHEMA


def test_generate_unknown_preset(tmp_path, capsys):
    assert run("generate", "--preset", "no-such-camera", "-o", tmp_path / "x.json") == 2
    assert "no-such-camera" in capsys.readouterr().err
    assert not (tmp_path / "x.json").exists()


def test_generate_needs_exactly_one_source(tmp_path):
    assert run("generate", "-o", tmp_path / "x.json") == 2


def test_generate_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run("generate", "--preset", "unity-barrel", "--noise", "0.05", "--seed", "3",
                   "--boards", "4", "-o", tmp_path / f"{name}.json") == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.truth.json").read_bytes() == (tmp_path / "b.truth.json").read_bytes()
    run("generate", "--preset", "unity-barrel", "--noise", "0.05", "--seed", "4",
        "--boards", "4", "-o", tmp_path / "c.json")
    assert (tmp_path / "a.json").read_bytes() != (tmp_path / "c.json").read_bytes()


def test_generate_from_scenario_file(tmp_path):
    spec = synth.preset("mirror-warp", n_boards=3)
    formats.write_json(formats.scenario_to_dict(spec), tmp_path / "scene.json")
    assert run("generate", "--spec", tmp_path / "scene.json", "-o", tmp_path / "ds.json") == 0
    ds = formats.load_dataset(tmp_path / "ds.json")
    boards, _ = synth.generate_dataset(spec)
    assert all(np.array_equal(a.points, b.points) for a, b in zip(ds.boards, boards))
    formats.write_json({"preset": "unity-pinhole", "n_boards": 2}, tmp_path / "short.json")
    assert run("generate", "--spec", tmp_path / "short.json", "-o", tmp_path / "ds2.json") == 0
    assert len(formats.load_dataset(tmp_path / "ds2.json").boards) == 2


def test_invalid_scenario_names_invariant(tmp_path, capsys):
    spec = synth.preset("unity-pinhole", n_boards=3)
    doc = formats.scenario_to_dict(spec)
    doc["poses"] = [doc["poses"][0]] * 3
    formats.write_json(doc, tmp_path / "bad.json")
    assert run("generate", "--spec", tmp_path / "bad.json", "-o", tmp_path / "ds.json") == 2
    assert "parallel" in capsys.readouterr().err


def test_calibrate_recovers_truth(pinhole):
    calib = formats.load_calibration(pinhole / "calib.json")
    truth = formats.truth_virtual_intrinsics(formats.read_json(pinhole / "ds.truth.json"))
    assert abs(calib.intrinsics.f - truth.f) / truth.f < 1e-3
    assert len(calib.poses) == 30


def test_evaluate_perfect_pipeline(pinhole):
    doc = formats.read_json(pinhole / "metrics.json")
    assert doc["collinearity_error"] < 1e-6
    assert doc["reprojection_error"] < 1e-5
    assert doc["ray_max_origin_distance"] < 1e-6
    boards_csv = (pinhole / "metrics.boards.csv").read_text().splitlines()
    rays_csv = (pinhole / "metrics.rays.csv").read_text().splitlines()
    assert len(boards_csv) == 31 and len(rays_csv) == 101


def test_calibrate_too_few_boards(tmp_path, capsys):
    run("generate", "--preset", "unity-pinhole", "--boards", "1", "-o", tmp_path / "one.json")
    assert run("calibrate", tmp_path / "one.json", "-o", tmp_path / "c.json") == 3
    assert "InsufficientBoards" in capsys.readouterr().err
    run("generate", "--preset", "unity-pinhole", "--boards", "2", "-o", tmp_path / "two.json")
    assert run("calibrate", tmp_path / "two.json", "-o", tmp_path / "c.json",
               "--method", "full-linear") == 3
    assert "InsufficientBoards" in capsys.readouterr().err


def test_calibrate_bad_reference_board(pinhole, tmp_path):
    assert run("calibrate", pinhole / "ds.json", "-o", tmp_path / "c.json",
               "--reference-board", "99") == 2


def test_noisy_barrel_order_of_magnitude(tmp_path):
    run("generate", "--preset", "unity-barrel", "--noise", "0.05", "--seed", "1", "-o", tmp_path / "ds.json")
    assert run("calibrate", tmp_path / "ds.json", "-o", tmp_path / "c.json") == 0
    assert run("evaluate", tmp_path / "ds.json", tmp_path / "c.json", "-o", tmp_path / "m.json") == 0
    doc = formats.read_json(tmp_path / "m.json")
    assert np.isfinite(doc["collinearity_error"]) and np.isfinite(doc["reprojection_error"])
    assert 1.334e-5 < doc["collinearity_error"] < 1.334e-3


def test_evaluate_mismatch(pinhole, tmp_path):
    run("generate", "--preset", "unity-pinhole", "--boards", "5", "-o", tmp_path / "small.json")
    assert run("evaluate", tmp_path / "small.json", pinhole / "calib.json", "-o", tmp_path / "m.json") == 4


def test_bad_dataset_is_input_error(tmp_path):
    (tmp_path / "junk.json").write_text("{not json")
    assert run("calibrate", tmp_path / "junk.json", "-o", tmp_path / "c.json") == 2
    formats.write_json({"schema": "other/1"}, tmp_path / "other.json")
    assert run("calibrate", tmp_path / "other.json", "-o", tmp_path / "c.json") == 2


def test_dataset_ordering_is_validated(pinhole):
    doc = formats.read_json(pinhole / "ds.json")
    corners = doc["boards"][3]["corners"]
    corners[0], corners[1] = corners[1], corners[0]
    with pytest.raises(DatasetError, match="board_03"):
        formats.Dataset.from_dict(doc)
    doc["boards"][3]["corners"] = corners[:-1]
    with pytest.raises(DatasetError, match="135"):
        formats.Dataset.from_dict(doc)


def test_undistort_rendered_barrel(tmp_path):
    ds, img, out = tmp_path / "ds.json", tmp_path / "board.pgm", tmp_path / "flat.pgm"
    assert run("generate", "--preset", "unity-barrel", "--boards", "2", "--image-size", "960", "540",
               "--render", "0", img, "-o", ds) == 0
    assert run("undistort", img, "-o", out, "--dataset", ds) == 0
    flat, mask = read_image(out), read_image(tmp_path / "flat.mask.pgm").data > 0
    chains = sample_edges(flat, threshold=60, mask=mask, min_length=20)
    assert chains
    assert np.mean([metrics.scaled_line_rms(c) for c in chains]) < 1e-2


def test_undistort_identity_map(tmp_path):
    vmap = train_virtual_camera(model_grid(6, 8, 10.0), exact_corners=True)
    formats.write_json(vmap.to_dict(), tmp_path / "map.json")
    data = np.random.default_rng(0).integers(0, 256, (51, 71, 3), dtype=np.uint8)
    write_image(RasterImage(data), tmp_path / "in.png")
    assert run("undistort", tmp_path / "in.png", "-o", tmp_path / "out.png", "--map", tmp_path / "map.json",
               "--scale", "10", "--framing", "0", "0", "7", "5", "--no-mask") == 0
    assert np.array_equal(read_image(tmp_path / "out.png").data, data)


def test_undistort_errors(pinhole, tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"\x89PNG\r\n\x1a\n" + bytes(40))
    assert run("undistort", bad, "-o", tmp_path / "o.png", "--map", pinhole / "calib.json") == 5
    assert run("undistort", tmp_path / "nope.pgm", "-o", tmp_path / "o.png",
               "--map", pinhole / "calib.json") == 5
    good = tmp_path / "g.pgm"
    write_image(RasterImage(np.zeros((20, 20), dtype=np.uint8)), good)
    assert run("undistort", good, "-o", tmp_path / "o.pgm") == 2
    assert run("undistort", good, "-o", tmp_path / "o.pgm", "--map", pinhole / "calib.json",
               "--scale", "-1") == 2
    # a 20x20 image maps nowhere near the board: empty output is an input error
    assert run("undistort", good, "-o", tmp_path / "o.pgm", "--map", pinhole / "calib.json",
               "--framing", "500", "500", "501", "501") == 2


def test_argparse_errors_exit_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("calibrate")
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run("calibrate", tmp_path / "x.json", "-o", tmp_path / "c.json", "--method", "magic")
    assert exc.value.code == 2


def test_outputs_round_trip_byte_identical(pinhole):
    ds_text = (pinhole / "ds.json").read_text()
    assert formats.dumps(formats.load_dataset(pinhole / "ds.json").to_dict()) == ds_text
    cal_text = (pinhole / "calib.json").read_text()
    assert formats.dumps(formats.load_calibration(pinhole / "calib.json").to_dict()) == cal_text
    vmap = formats.load_virtual_camera(pinhole / "calib.json")
    assert vmap.to_dict() == json.loads(cal_text)["virtual_camera"]
    for name in ("ds.truth.json", "metrics.json"):
        text = (pinhole / name).read_text()
        assert formats.dumps(json.loads(text)) == text
    spec = synth.preset("unity-barrel", n_boards=3)
    assert formats.scenario_to_dict(formats.scenario_from_dict(formats.scenario_to_dict(spec))) == \
        formats.scenario_to_dict(spec)


def test_reloaded_calibration_evaluates_identically(pinhole, tmp_path):
    assert run("evaluate", pinhole / "ds.json", pinhole / "calib.json", "-o", tmp_path / "again.json") == 0
    assert (tmp_path / "again.json").read_bytes() == (pinhole / "metrics.json").read_bytes()
    assert (tmp_path / "again.rays.csv").read_bytes() == (pinhole / "metrics.rays.csv").read_bytes()


def test_thread_limit_env(monkeypatch, tmp_path):
    import threadpoolctl

    seen = []
    real = threadpoolctl.threadpool_limits

    def spy(limits=None, **kw):
        seen.append(limits)
        return real(limits=limits, **kw)

    monkeypatch.setattr(threadpoolctl, "threadpool_limits", spy)
    monkeypatch.setenv("GP_PINHOLE_THREADS", "1")
    assert run("generate", "--preset", "unity-pinhole", "--boards", "2", "-o", tmp_path / "d.json") == 0
    assert seen == [1]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "gppinhole", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for command in ("generate", "calibrate", "evaluate", "undistort"):
        assert command in res.stdout


def test_unwritable_image_is_image_error(tmp_path):
    vmap = train_virtual_camera(model_grid(6, 8, 10.0), exact_corners=True)
    formats.write_json(vmap.to_dict(), tmp_path / "map.json")
    good = tmp_path / "g.pgm"
    write_image(RasterImage(np.full((51, 71), 9, dtype=np.uint8)), good)
    missing_dir = tmp_path / "no" / "such" / "dir"
    assert run("undistort", good, "-o", missing_dir / "o.pgm", "--map", tmp_path / "map.json",
               "--scale", "10", "--no-mask") == 5
    assert run("generate", "--preset", "unity-pinhole", "--boards", "2", "--render", "0",
               missing_dir / "b.pgm", "-o", tmp_path / "d.json") == 5
