# -*- coding: utf-8 -*-

import json

import pytest

from aircraft_fusion import __version__
from aircraft_fusion.backend import DETS_DIR, TILES_DIR, read_detections
from aircraft_fusion.cli import (
    FUSED_NAME,
    REPORT_JSON,
    REPORT_TEXT,
    RESIDUAL_NAME,
    TRACE_NAME,
    main,
)
from aircraft_fusion.raster import read_pmap, write_pmap
from aircraft_fusion.simulate import DETECTION_DIR, SEGMENTATION_DIR


def tree_bytes(root):
    return {
        path.relative_to(root).as_posix(): path.read_bytes()
        for path in sorted(root.rglob("*"))
        if path.is_file()
    }


@pytest.fixture(scope="module")
def scenes_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("scenes")
    status = main(
        ["simulate", "--out", str(root), "--preset", "noiseless", "--scenes", "2"]
    )
    assert status == 0
    return root


@pytest.fixture(scope="module")
def run_dir(scenes_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    argv = ["run", "--scene", str(scenes_dir / "scene-00"), "--out", str(out)]
    assert main(argv) == 0
    return out


class TestSimulate(object):

    def test_layout(self, scenes_dir):
        assert sorted(path.name for path in scenes_dir.iterdir()) == [
            "scene-00",
            "scene-01",
        ]
        assert (scenes_dir / "scene-01" / "scene.yaml").is_file()

    def test_bad_preset(self, tmp_path, capsys):
        with pytest.raises(SystemExit):
            main(["simulate", "--out", str(tmp_path), "--preset", "table9"])

        assert "invalid choice" in capsys.readouterr().err

    def test_same_seed_same_files(self, tmp_path):
        argv = [
            "simulate",
            "--scenes",
            "1",
            "--width",
            "1024",
            "--height",
            "1024",
            "--aircraft",
            "25",
            "--seed",
            "7",
        ]

        assert main(argv + ["--out", str(tmp_path / "first")]) == 0
        assert main(argv + ["--out", str(tmp_path / "second")]) == 0
        first = tree_bytes(tmp_path / "first")
        assert "scene-00/scene.yaml" in first
        assert first == tree_bytes(tmp_path / "second")

    def test_noise_flags(self, tmp_path, taxonomy):
        argv = ["simulate", "--out", str(tmp_path), "--preset", "noiseless"]
        argv += ["--scenes", "1", "--det-miss-rate", "1", "--jitter", "2"]

        assert main(argv) == 0
        dets = sorted((tmp_path / "scene-00" / DETECTION_DIR / DETS_DIR).iterdir())
        assert len(dets) == 9
        assert all(read_detections(path, taxonomy) == [] for path in dets)
        tiles = (tmp_path / "scene-00" / SEGMENTATION_DIR / TILES_DIR).iterdir()
        assert max(1 - read_pmap(path)[:, :, 0].min() for path in tiles) > 0.5

    def test_noise_section_of_config(self, tmp_path):
        config = tmp_path / "config.yaml"
        config.write_text("noise:\n  segmentation:\n    miss_rate: 1.0\n")
        out = tmp_path / "scenes"

        argv = ["--config", str(config), "simulate", "--out", str(out)]
        status = main(argv + ["--preset", "noiseless", "--scenes", "1"])

        assert status == 0
        tiles = (out / "scene-00" / SEGMENTATION_DIR / TILES_DIR).iterdir()
        assert max(1 - read_pmap(path)[:, :, 0].min() for path in tiles) < 0.5

    def test_unknown_noise_key(self, tmp_path, capsys):
        config = tmp_path / "config.yaml"
        config.write_text("noise:\n  detection:\n    blur: 2\n")

        status = main(["--config", str(config), "simulate", "--out", str(tmp_path)])

        assert status == 1
        assert "Unknown noise key `blur`." in capsys.readouterr().err

    def test_bad_noise_value(self, tmp_path, capsys):
        status = main(["simulate", "--out", str(tmp_path), "--seg-miss-rate", "2"])

        assert status == 1
        assert "`miss_rate` not in [0, 1]: 2.0" in capsys.readouterr().err


class TestRun(object):

    def test_outputs(self, run_dir, taxonomy):
        detections = read_detections(run_dir / FUSED_NAME, taxonomy)

        assert len(detections) == 25
        assert all(d.label.level == 3 for d in detections)
        assert read_pmap(run_dir / RESIDUAL_NAME).max() == 0.0
        trace = json.loads((run_dir / TRACE_NAME).read_text())
        assert trace["stages"][-1] == "nms"
        assert len(trace["tiles"]) == 9

    def test_same_inputs_same_files(self, scenes_dir, run_dir, tmp_path):
        argv = ["run", "--scene", str(scenes_dir / "scene-00"), "--out", str(tmp_path)]

        assert main(argv) == 0
        for name in (FUSED_NAME, TRACE_NAME):
            assert (tmp_path / name).read_bytes() == (run_dir / name).read_bytes()

    def test_missing_backend(self, scenes_dir, tmp_path, capsys):
        status = main(
            [
                "run",
                "--scene",
                str(scenes_dir / "scene-00"),
                "--det-backend",
                str(tmp_path / "nowhere"),
                "--out",
                str(tmp_path / "out"),
            ]
        )

        assert status == 1
        err = capsys.readouterr().err
        assert err.startswith("aircraft-fusion: error: Stage `load`")
        assert "Backend directory" in err

    def test_bad_recovery_flag(self, scenes_dir, tmp_path, capsys):
        with pytest.raises(SystemExit):
            main(
                [
                    "run",
                    "--scene",
                    str(scenes_dir / "scene-00"),
                    "--out",
                    str(tmp_path),
                    "--recovery",
                    "maybe",
                ]
            )

        assert "expected `on` or `off`" in capsys.readouterr().err


class TestEvaluateAndCompare(object):

    def test_evaluate(self, scenes_dir, run_dir, tmp_path, capsys):
        out = tmp_path / "fused.json"

        status = main(
            [
                "evaluate",
                "--scene",
                str(scenes_dir / "scene-00"),
                "--detections",
                str(run_dir / FUSED_NAME),
                "--out",
                str(out),
            ]
        )

        assert status == 0
        assert capsys.readouterr().out.splitlines()[1].startswith("fused ")
        document = json.loads(out.read_text())
        assert document["name"] == "fused"
        assert document["recall"] == 1.0
        assert document["precision"] == 1.0

    def test_compare_reports(self, scenes_dir, run_dir, tmp_path, capsys):
        reports = []
        for name in ("fused", "segmentation"):
            out = tmp_path / (name + ".json")
            main(
                [
                    "evaluate",
                    "--scene",
                    str(scenes_dir / "scene-00"),
                    "--detections",
                    str(run_dir / (name + ".txt")),
                    "--out",
                    str(out),
                ]
            )
            reports += ["--report", "{}={}".format(name, out)]
        capsys.readouterr()

        status = main(["compare"] + reports + ["--out", str(tmp_path / "cmp.json")])

        assert status == 0
        assert "fused dominates segmentation" in capsys.readouterr().out
        document = json.loads((tmp_path / "cmp.json").read_text())
        assert document["dominant"] == "fused"

    def test_compare_needs_boards(self, capsys):
        assert main(["compare"]) == 1
        assert capsys.readouterr().err == (
            "aircraft-fusion: error: Give `--report NAME=FILE` at least twice, "
            "or `--catalog`.\n"
        )

    def test_compare_bad_report_argument(self, capsys):
        with pytest.raises(SystemExit):
            main(["compare", "--report", "fused.json"])

        assert "expected NAME=FILE" in capsys.readouterr().err


class TestEndToEnd(object):

    def test_report_and_catalog(self, scenes_dir, tmp_path, capsys):
        out = tmp_path / "e2e"
        catalog = "sqlite:///{}".format(tmp_path / "catalog.db")

        status = main(
            [
                "end-to-end",
                "--scenes",
                str(scenes_dir),
                "--out",
                str(out),
                "--catalog",
                catalog,
            ]
        )

        assert status == 0
        printed = capsys.readouterr().out
        assert printed == (out / REPORT_TEXT).read_text()
        assert "fused dominates segmentation" in printed
        document = json.loads((out / REPORT_JSON).read_text())
        assert [system["name"] for system in document["systems"]] == [
            "segmentation",
            "detection",
            "fused",
        ]
        assert (out / "scene-01" / FUSED_NAME).is_file()

        status = main(["compare", "--catalog", catalog])

        assert status == 0
        printed = capsys.readouterr().out
        assert printed.splitlines()[1].startswith("e2e:segmentation")

        status = main(
            [
                "compare",
                "--catalog",
                catalog,
                "--filter",
                json.dumps({"field": "scene", "value": "scene-01"}),
                "--sort",
                json.dumps({"field": "system", "direction": "asc"}),
            ]
        )

        assert status == 0
        rows = capsys.readouterr().out.splitlines()[1:4]
        assert [row.split()[0] for row in rows] == [
            "e2e:detection:scene-01",
            "e2e:fused:scene-01",
            "e2e:segmentation:scene-01",
        ]

    def test_config_file(self, scenes_dir, tmp_path, capsys):
        config = tmp_path / "config.yaml"
        config.write_text(
            "mode: recall\nscenes: {}\noutput: {}\n".format(
                scenes_dir / "scene-00", tmp_path / "e2e"
            )
        )

        status = main(["--config", str(config), "end-to-end"])

        assert status == 0
        assert (tmp_path / "e2e" / "scene-00" / TRACE_NAME).is_file()

    def test_same_inputs_same_reports(self, scenes_dir, tmp_path, capsys):
        for name in ("first", "second"):
            argv = ["end-to-end", "--scenes", str(scenes_dir)]
            assert main(argv + ["--out", str(tmp_path / name)]) == 0

        first = tree_bytes(tmp_path / "first")
        assert {REPORT_TEXT, REPORT_JSON, "scene-01/" + FUSED_NAME} <= set(first)
        assert first == tree_bytes(tmp_path / "second")

    def test_without_output(self, scenes_dir, capsys):
        status = main(["end-to-end", "--scenes", str(scenes_dir)])

        assert status == 1
        assert "No output directory" in capsys.readouterr().err


class TestTools(object):

    def test_tile_and_stitch(self, scenes_dir, tmp_path, capsys):
        tiles = scenes_dir / "scene-00" / "segmentation" / TILES_DIR
        out = tmp_path / "stitched.pmap"

        status = main(
            [
                "stitch",
                str(tiles),
                "--width",
                "1024",
                "--height",
                "1024",
                "--out",
                str(out),
            ]
        )

        assert status == 0
        assert read_pmap(out).shape == (1024, 1024, 2)

        image = tmp_path / "image.pmap"
        write_pmap(image, read_pmap(out))

        assert main(["tile", str(image), "--out", str(tmp_path / "tiles")]) == 0
        assert len(list((tmp_path / "tiles").glob("*.pmap"))) == 9

    def test_arch_check(self, capsys):
        assert main(["arch-check"]) == 0
        assert "anchors total: 196560" in capsys.readouterr().out

    def test_arch_check_violation(self, tmp_path, capsys):
        spec = tmp_path / "arch.yaml"
        spec.write_text("unet:\n  base_filters: 0\n")

        assert main(["arch-check", "--spec", str(spec)]) == 1
        assert capsys.readouterr().out == "violation: `base_filters` must be positive\n"

    def test_help_shows_defaults(self, capsys):
        with pytest.raises(SystemExit):
            main(["end-to-end", "--help"])

        text = " ".join(capsys.readouterr().out.split())
        for default in (
            "512",
            "128",
            "3",
            "0.35",
            "200.0",
            "over_target",
            "mean",
            "balanced",
        ):
            assert "(default: {})".format(default) in text
        assert "default: None" not in text

    def test_simulate_help(self, capsys):
        with pytest.raises(SystemExit):
            main(["simulate", "--help"])

        text = " ".join(capsys.readouterr().out.split())
        assert "(default: table2)" in text
        assert "--seg-miss-rate" in text
        assert "default: None" not in text

    def test_version(self, capsys):
        with pytest.raises(SystemExit):
            main(["--version"])

        assert capsys.readouterr().out.strip() == __version__
