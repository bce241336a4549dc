"""Command line surface: config merging, the stage chain, exit codes."""

import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from pelvimark.cli import main
from pelvimark.config import RunConfig, load_run_config, merge_config
from pelvimark.errors import ConfigurationError
from pelvimark.labelgen.export import BOX_FORMAT, parse_detection_labels
from pelvimark.pipeline import load_predictions


def _err(capsys):
    text = capsys.readouterr().err.strip()
    return json.loads(text.splitlines()[-1])


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.registry_file == Path("data") / "registry.json"
        assert cfg.out_root == Path("data")

    def test_explicit_paths_win(self):
        cfg = RunConfig(registry_path=Path("r.json"), output_root=Path("out"))
        assert cfg.registry_file == Path("r.json")
        assert cfg.out_root == Path("out")

    @pytest.mark.parametrize(
        "field,value",
        [
            ("input_side", 0),
            ("jobs", 0),
            ("confidence_threshold", 1.5),
            ("mask_threshold", -0.1),
            ("threshold_mm", 0.0),
        ],
    )
    def test_validation(self, field, value):
        with pytest.raises(ConfigurationError):
            RunConfig(**{field: value})


class TestMergeConfig:
    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError, match=r"somewhere: unknown config keys \['zeed'\]"):
            merge_config(RunConfig(), {"zeed": 1}, origin="somewhere")

    def test_none_values_skipped(self):
        base = RunConfig(seed=9, jobs=2)
        merged = merge_config(base, {"seed": None, "jobs": None})
        assert merged.seed == 9 and merged.jobs == 2

    def test_path_fields_cast(self):
        merged = merge_config(RunConfig(), {"data_root": "elsewhere", "detector_model": "d.pt"})
        assert merged.data_root == Path("elsewhere")
        assert merged.detector_model == Path("d.pt")

    def test_stub_drop_comma_string(self):
        merged = merge_config(RunConfig(), {"stub_drop": "F01_r,O02"})
        assert merged.stub_drop == ("F01_r", "O02")

    def test_stub_drop_list(self):
        merged = merge_config(RunConfig(), {"stub_drop": ["A01_l"]})
        assert merged.stub_drop == ("A01_l",)

    def test_stub_drop_empty_string(self):
        merged = merge_config(RunConfig(), {"stub_drop": ""})
        assert merged.stub_drop == ()

    def test_invalid_value_surfaces_as_configuration_error(self):
        with pytest.raises(ConfigurationError):
            merge_config(RunConfig(), {"jobs": 0})


class TestLoadRunConfig:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text(json.dumps({"seed": 3, "data_root": "d", "stub_drop": "F01_r"}), "utf-8")
        cfg = load_run_config(p)
        assert cfg.seed == 3
        assert cfg.data_root == Path("d")
        assert cfg.stub_drop == ("F01_r",)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            load_run_config(tmp_path / "nope.json")

    def test_bad_json(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text("{oops", "utf-8")
        with pytest.raises(ConfigurationError, match="not valid JSON"):
            load_run_config(p)

    def test_non_object(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text("[1, 2]", "utf-8")
        with pytest.raises(ConfigurationError, match="JSON object"):
            load_run_config(p)

    def test_unknown_key_names_file(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text(json.dumps({"sede": 1}), "utf-8")
        with pytest.raises(ConfigurationError, match="run.json"):
            load_run_config(p)


@pytest.fixture(scope="module")
def chain_root(tmp_path_factory):
    """Full happy-path stage chain over a tiny synthetic dataset."""
    root = tmp_path_factory.mktemp("cli") / "data"
    base = ["--data-root", str(root)]
    assert main(base + ["synth", "--n", "3", "--seed", "7"]) == 0
    assert main(base + ["split", "--counts", "2,0,1", "--seed", "3"]) == 0
    assert main(base + ["labels"]) == 0
    assert main(base + ["predict", "--backend", "stub"]) == 0
    assert main(base + ["evaluate"]) == 0
    return root


class TestStageChain:
    def test_synth_layout(self, chain_root):
        assert (chain_root / "registry.json").is_file()
        assert len(list((chain_root / "images").glob("*.dcm"))) == 3
        assert len(list((chain_root / "annotations").glob("*.json"))) == 3

    def test_split_manifest(self, chain_root):
        lines = (chain_root / "split.txt").read_text("utf-8").splitlines()
        assert lines[0] == "# seed: 3"
        assert lines[1] == "# counts: train=2 val=0 test=1"
        assert len(lines) == 5

    def test_label_outputs(self, chain_root):
        for sub in ("bundles", "labels/boxes", "labels/polygons"):
            files = list((chain_root / sub).iterdir())
            assert len(files) == 3, sub

    def test_box_labels_parse(self, chain_root):
        text = (chain_root / "labels" / "boxes" / "synth-0000.txt").read_text("utf-8")
        rows = parse_detection_labels(text, BOX_FORMAT)
        assert len(rows) == 90
        assert [cid for cid, _ in rows] == sorted(cid for cid, _ in rows)

    def test_predictions_written(self, chain_root):
        files = sorted((chain_root / "predictions").glob("*.json"))
        assert [p.stem for p in files] == ["synth-0000", "synth-0001", "synth-0002"]
        pred = load_predictions(files[0])
        assert pred.missing == set()
        csv_lines = (chain_root / "predictions.csv").read_text("utf-8").splitlines()
        assert csv_lines[0] == "image_id,class,x_mm,y_mm,confidence"
        assert len(csv_lines) == 1 + 3 * 72

    def test_no_failure_artifacts(self, chain_root):
        assert not (chain_root / "predict-failures.json").exists()

    def test_reports_written(self, chain_root):
        report = json.loads((chain_root / "report" / "report.json").read_text("utf-8"))
        assert report["summary"]["landmark_error_mm"]["mean"] == pytest.approx(0.0, abs=1e-9)
        assert (chain_root / "report" / "report.csv").is_file()
        assert (chain_root / "report" / "report.md").is_file()

    def test_evaluate_echoes_markdown(self, chain_root, tmp_path, capsys):
        rc = main(["--data-root", str(chain_root), "evaluate", "--out", str(tmp_path / "rep")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "# Evaluation report" in out
        assert "reports written to" in out

    def test_predict_reruns_byte_identical(self, chain_root, tmp_path):
        base = ["--data-root", str(chain_root), "predict", "--backend", "stub",
                "--seed", "5", "--center-jitter-px", "2.0", "--scale-jitter", "0.05",
                "--confidence-penalty", "0.1"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(base + ["--out", str(a)]) == 0
        assert main(base + ["--out", str(b)]) == 0
        names = sorted(p.name for p in a.iterdir())
        assert names == sorted(p.name for p in b.iterdir())
        for name in names:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_landmarks_via_segmentation_flag(self, chain_root, tmp_path):
        rc = main(["--data-root", str(chain_root), "predict", "--backend", "stub",
                   "--landmarks-via-segmentation", "--out", str(tmp_path / "p")])
        assert rc == 0

    def test_dropped_class_goes_missing(self, chain_root, tmp_path):
        out = tmp_path / "p"
        rc = main(["--data-root", str(chain_root), "predict", "--backend", "stub",
                   "--drop", "F01_r", "--out", str(out)])
        assert rc == 0
        pred = load_predictions(out / "synth-0000.json")
        assert 0 in pred.missing


class TestIngest:
    def test_mixed_inputs(self, chain_root, tmp_path, capsys):
        raw_images = tmp_path / "raw-images"
        raw_ann = tmp_path / "raw-ann"
        raw_images.mkdir()
        raw_ann.mkdir()
        shutil.copy(chain_root / "images" / "synth-0000.dcm", raw_images / "good.dcm")
        (raw_images / "bad.dcm").write_bytes(b"this is not a radiograph")
        shutil.copy(chain_root / "annotations" / "synth-0000.json", raw_ann / "good.json")
        (raw_ann / "bad.json").write_text("{truncated", "utf-8")

        store = tmp_path / "store"
        store.mkdir()
        shutil.copy(chain_root / "registry.json", store / "registry.json")
        rc = main(["--data-root", str(store), "ingest", str(raw_images), str(raw_ann)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "REJECTED  bad.dcm" in out
        assert "REJECTED  bad.json" in out

        report = json.loads((store / "ingest-report.json").read_text("utf-8"))
        assert {e["status"] for e in report["images"]} == {"ok", "rejected"}
        assert {e["status"] for e in report["annotations"]} == {"ok", "rejected"}
        # image ids come from file stems, annotation ids from the document itself
        assert (store / "images" / "good.dcm").is_file()
        assert (store / "annotations" / "synth-0000.json").is_file()

    def test_nothing_valid_fails(self, chain_root, tmp_path, capsys):
        raw_images = tmp_path / "raw-images"
        raw_ann = tmp_path / "raw-ann"
        raw_images.mkdir()
        raw_ann.mkdir()
        (raw_images / "bad.dcm").write_bytes(b"junk")
        store = tmp_path / "store"
        store.mkdir()
        shutil.copy(chain_root / "registry.json", store / "registry.json")
        rc = main(["--data-root", str(store), "ingest", str(raw_images), str(raw_ann)])
        assert rc == 1
        assert _err(capsys)["error"] == "IngestionError"


class TestErrorPaths:
    def test_split_sum_mismatch(self, chain_root, capsys):
        rc = main(["--data-root", str(chain_root), "split", "--counts", "1,1,5", "--seed", "1"])
        assert rc == 1
        payload = _err(capsys)
        assert payload["error"] == "ConfigurationError"
        assert "sum" in payload["message"]

    def test_split_without_seed(self, chain_root, capsys):
        rc = main(["--data-root", str(chain_root), "split"])
        assert rc == 1
        payload = _err(capsys)
        assert payload["error"] == "ConfigurationError"
        assert "--seed" in payload["message"]

    def test_split_bad_counts(self, chain_root, capsys):
        rc = main(["--data-root", str(chain_root), "split", "--counts", "1,two,0", "--seed", "1"])
        assert rc == 1
        assert "comma-separated" in _err(capsys)["message"]

    def test_missing_registry(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        rc = main(["--data-root", str(empty), "labels"])
        assert rc == 1
        payload = _err(capsys)
        assert payload["error"] == "ConfigurationError"
        assert "registry" in payload["message"]

    def test_model_backend_needs_paths(self, chain_root, capsys):
        rc = main(["--data-root", str(chain_root), "predict", "--backend", "model"])
        assert rc == 1
        assert "--detector" in _err(capsys)["message"]

    def test_model_backend_bad_archive_exit_3(self, chain_root, tmp_path, capsys):
        pytest.importorskip("torch")
        det = tmp_path / "det.pt"
        seg = tmp_path / "seg.pt"
        det.write_bytes(b"junk")
        seg.write_bytes(b"junk")
        rc = main(["--data-root", str(chain_root), "predict", "--backend", "model",
                   "--detector", str(det), "--segmenter", str(seg)])
        assert rc == 3
        assert _err(capsys)["error"] == "BackendError"

    def test_stub_jitter_without_seed(self, chain_root, capsys):
        rc = main(["--data-root", str(chain_root), "predict", "--backend", "stub",
                   "--center-jitter-px", "2.0"])
        assert rc == 1
        assert "--seed" in _err(capsys)["message"]

    def test_stub_missing_annotation(self, chain_root, tmp_path, capsys):
        clone = tmp_path / "clone"
        shutil.copytree(chain_root / "images", clone / "images")
        shutil.copytree(chain_root / "annotations", clone / "annotations")
        shutil.copy(chain_root / "registry.json", clone / "registry.json")
        (clone / "annotations" / "synth-0002.json").unlink()
        rc = main(["--data-root", str(clone), "predict", "--backend", "stub"])
        assert rc == 1
        assert "synth-0002" in _err(capsys)["message"]

    def test_evaluate_without_predictions(self, chain_root, tmp_path, capsys):
        rc = main(["--data-root", str(chain_root), "evaluate", str(tmp_path / "nope"), str(chain_root)])
        assert rc == 1
        assert "prediction directory" in _err(capsys)["message"]

    def test_synth_nonpositive_n(self, tmp_path, capsys):
        rc = main(["--data-root", str(tmp_path), "synth", "--n", "0", "--seed", "1"])
        assert rc == 1
        assert "positive" in _err(capsys)["message"]

    def test_unknown_command_is_usage_error(self, capsys):
        rc = main(["frobnicate"])
        assert rc == 1
        assert _err(capsys)["error"] == "usage"

    def test_unknown_option_is_usage_error(self, chain_root, capsys):
        rc = main(["--data-root", str(chain_root), "split", "--bogus"])
        assert rc == 1
        assert _err(capsys)["error"] == "usage"

    def test_serve_without_config(self, capsys, monkeypatch):
        for key in list(__import__("os").environ):
            if key.startswith("PELVIMARK_"):
                monkeypatch.delenv(key)
        rc = main(["serve"])
        assert rc == 1
        assert "missing required keys" in _err(capsys)["message"]


class TestConfigFile:
    def test_seed_comes_from_file(self, chain_root, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"seed": 3, "data_root": str(chain_root),
                                   "output_root": str(tmp_path / "out")}), "utf-8")
        rc = main(["--config", str(cfg), "split", "--counts", "2,0,1"])
        assert rc == 0
        assert (tmp_path / "out" / "split.txt").is_file()

    def test_flag_overrides_file(self, chain_root, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"data_root": "/nonexistent"}), "utf-8")
        rc = main(["--config", str(cfg), "--data-root", str(chain_root),
                   "split", "--counts", "2,0,1", "--seed", "1"])
        assert rc == 0

    def test_unknown_key_in_file(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"sead": 1}), "utf-8")
        rc = main(["--config", str(cfg), "synth", "--n", "1", "--seed", "1"])
        assert rc == 1
        assert "unknown config keys" in _err(capsys)["message"]

    def test_malformed_file(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text("{oops", "utf-8")
        rc = main(["--config", str(cfg), "synth", "--n", "1", "--seed", "1"])
        assert rc == 1
        assert "not valid JSON" in _err(capsys)["message"]


class TestEntryPoints:
    def test_version_flag(self, capsys):
        assert main(["--version"]) == 0
        assert "pelvimark" in capsys.readouterr().out

    def test_module_runs_as_script(self):
        proc = subprocess.run(
            [sys.executable, "-m", "pelvimark.cli", "--version"],
            capture_output=True, text=True, timeout=60,
        )
        assert proc.returncode == 0
        assert "pelvimark" in proc.stdout

    def test_console_script_installed(self):
        assert shutil.which("pelvimark") is not None
