import json

import numpy as np
import pytest

from spheremap.cli import PRESETS, main, resolve_config
from spheremap.errors import ConfigError
from spheremap.projection import read_smr1
from spheremap.synthbench import SpheroidSpec, generate_dataset, write_dataset


class TestPresets:
    def test_fixed_values(self):
        half = PRESETS["paper-delta-0.5"]
        full = PRESETS["paper-delta-1.0"]
        assert (half["delta"], half["sigma"], half["beta"]) == (0.5, 2.5, 5.0)
        assert (full["delta"], full["sigma"], full["beta"]) == (1.0, 1.25, 2.5)
        for p in (half, full):
            assert (p["h_min"], p["h_max"]) == (0.235, 0.765)
            assert p["p_t"] == 0.33
            assert p["f"] == 10.0
            assert p["split_fraction"] == 0.8
            assert p["lr"] is None  # defers to the per-mode training defaults

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            resolve_config("nope", None, {})


class TestResolution:
    def test_layering(self, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"sigma": 9.0}))
        cfg = resolve_config("paper-delta-0.5", str(cfg_file), {"seed": 42})
        assert cfg["sigma"] == 9.0  # file overrides preset
        assert cfg["beta"] == 5.0  # preset survives
        assert cfg["seed"] == 42  # flag overrides everything

    def test_unknown_keys_rejected(self, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"sgima": 9.0}))
        with pytest.raises(ConfigError, match="sgima"):
            resolve_config(None, str(cfg_file), {})


class TestExitCodes:
    def test_config_error(self, capsys):
        assert main(["--preset", "nope", "gradcheck"]) == 2

    def test_missing_file(self, capsys):
        assert main(["project", "/does/not/exist.ply"]) == 3

    def test_bad_config_json(self, tmp_path, capsys):
        bad = tmp_path / "c.json"
        bad.write_text("{not json")
        assert main(["--config", str(bad), "gradcheck"]) == 2


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    from spheremap.projection import ProjectionConfig
    out = tmp_path_factory.mktemp("ds")
    cfg = ProjectionConfig(delta=1.0, h_min=0.235, h_max=0.765)
    samples, manifest = generate_dataset(
        6, {"n_features": (30, 40)}, seed=3,
        base_spec=SpheroidSpec(sample_count=20000))
    write_dataset(samples, manifest, out, cfg)
    return out


class TestCommands:
    def test_project_idempotent(self, tiny_dataset, tmp_path, capsys):
        out = tmp_path / "r.smr1"
        args = ["--preset", "desk", "--out", str(out), "project",
                str(tiny_dataset / "000.ply")]
        assert main(args) == 0
        first = out.read_bytes()
        assert main(args) == 0
        assert out.read_bytes() == first
        data, names = read_smr1(out)
        assert data.shape == (5, 96, 360)
        assert names == ["nx", "ny", "nz", "rho", "occupancy"]

    def test_maps_outputs(self, tiny_dataset, tmp_path, capsys):
        out = tmp_path / "maps"
        assert main(["--preset", "desk", "--out", str(out), "maps",
                     str(tiny_dataset / "000.json")]) == 0
        gauss, _ = read_smr1(out / "gaussian_fixed.smr1")
        dens, _ = read_smr1(out / "density.smr1")
        assert gauss.max() == pytest.approx(1.0)
        n = len(json.loads((tiny_dataset / "000.json").read_text())["points"])
        assert dens.sum() == pytest.approx(n, rel=1e-4)

    def test_train_predict_eval_cycle(self, tiny_dataset, tmp_path, capsys):
        run = tmp_path / "run"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"max_epochs": 2, "base_width": 4}))
        assert main(["--preset", "desk", "--config", str(cfg), "--out",
                     str(run), "train", str(tiny_dataset)]) == 0
        assert (run / "model.smw1").exists()
        assert (run / "metrics.csv").exists()

        raster = tmp_path / "r.smr1"
        assert main(["--preset", "desk", "--out", str(raster), "project",
                     str(tiny_dataset / "001.ply")]) == 0
        count = tmp_path / "count.json"
        assert main(["--out", str(count), "predict", str(raster),
                     "--run", str(run)]) == 0
        payload = json.loads(count.read_text())
        assert payload["method"] == "gaussian_cluster"

        report = tmp_path / "report"
        assert main(["--preset", "desk", "--out", str(report), "eval",
                     str(tiny_dataset), "--run", str(run)]) == 0
        text = (report / "metrics.csv").read_text()
        assert "gnet_a" in text and "nms" in text

    def test_synth_roundtrip(self, tmp_path, capsys):
        out = tmp_path / "ds"
        ranges = tmp_path / "ranges.json"
        ranges.write_text(json.dumps({"n_features": [20, 30]}))
        assert main(["--preset", "desk", "--seed", "4", "--out", str(out),
                     "synth", "--n", "2", "--ranges", str(ranges)]) == 0
        assert (out / "manifest.json").exists()
        specs = json.loads((out / "manifest.json").read_text())["specs"]
        assert all(20 <= s["n_features"] <= 30 for s in specs)

    def test_gradcheck_passes(self, capsys):
        assert main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert "conv2d" in out and "pass" in out
