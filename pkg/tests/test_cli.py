import csv
import json

import pytest

from weatherformer.cli import run
from weatherformer.config import ConfigError, load_config
from weatherformer.svg import line_chart, nice_ticks
from weatherformer.weather import read_store

QUICK_PRETRAIN = ["--synth", "--model", "tiny", "--epochs", "2", "--batch-size", "16"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def pretrain_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("pre") / "run"
    assert run(["pretrain", *QUICK_PRETRAIN, "--out", str(out)]) == 0
    return out


class TestUsage:
    def test_help(self, capsys):
        assert run(["--help"]) == 0
        assert "finetune-yield" in capsys.readouterr().out

    @pytest.mark.parametrize("argv", [["bogus"], ["pretrain", "--no-such-flag"], [], ["pretrain", "--task", "ar"]])
    def test_usage_errors(self, argv, capsys):
        assert run(argv) == 2
        assert "usage" in capsys.readouterr().err

    def test_missing_input_is_runtime_failure(self, tmp_path, capsys):
        assert run(["derive", "--input", str(tmp_path / "none.wfds"), "--out", str(tmp_path / "o")]) == 1
        assert "not found" in capsys.readouterr().err

    def test_missing_required_option(self, tmp_path):
        assert run(["derive", "--out", str(tmp_path)]) == 2
        assert run(["export"]) == 2

    def test_data_or_synth(self, tmp_path):
        assert run(["pretrain", "--out", str(tmp_path)]) == 2


class TestConfig:
    def test_include_and_override(self, tmp_path):
        (tmp_path / "base.toml").write_text('epochs = 9\nmodel = "tiny"\nlr = 1\n')
        (tmp_path / "run.toml").write_text('include = "base.toml"\nepochs = 3\nbatch_size = 8\n')
        cfg = load_config(tmp_path / "run.toml")
        assert cfg == {"epochs": 3, "model": "tiny", "lr": 1, "batch_size": 8}

    def test_cycle(self, tmp_path):
        (tmp_path / "a.toml").write_text('include = "b.toml"\n')
        (tmp_path / "b.toml").write_text('include = "a.toml"\n')
        with pytest.raises(ConfigError, match="cycle"):
            load_config(tmp_path / "a.toml")

    def test_nested_rejected(self, tmp_path):
        (tmp_path / "n.toml").write_text("[model]\nd = 1\n")
        with pytest.raises(ConfigError, match="flat"):
            load_config(tmp_path / "n.toml")

    @pytest.mark.parametrize("body", ['epochs = "three"\n', 'unknown_key = 1\n', 'epochs = \n', 'synth = 1\n'])
    def test_invalid_config_exit_2(self, tmp_path, body):
        (tmp_path / "c.toml").write_text(body)
        assert run(["pretrain", "--config", str(tmp_path / "c.toml"), "--out", str(tmp_path / "o")]) == 2

    def test_flags_override_file(self, tmp_path):
        (tmp_path / "c.toml").write_text('synth = true\nmodel = "tiny"\nepochs = 5\nbatch_size = 16\n')
        out = tmp_path / "o"
        assert run(["pretrain", "--config", str(tmp_path / "c.toml"), "--epochs", "1", "--out", str(out)]) == 0
        snap = json.loads((out / "config.json").read_text())
        assert snap["epochs"] == 1 and snap["model"] == "tiny" and snap["synth"] is True
        assert len(_rows(out / "losses.csv")) == 1


class TestPipeline:
    def test_synth_derive_aggregate(self, tmp_path):
        assert run(["synth", "--tiles", "2", "--coords", "2", "--years", "2000", "2000", "--out", str(tmp_path / "s")]) == 0
        assert run(["derive", "--input", str(tmp_path / "s/tiles.wfds"), "--out", str(tmp_path / "d")]) == 0
        assert run(["aggregate", "--input", str(tmp_path / "d/tiles.wfds"), "--granularity", "30",
                    "--out", str(tmp_path / "m")]) == 0
        tiles = read_store(tmp_path / "m/tiles.wfds")
        assert len(tiles) == 2 and tiles[0].values.shape == (2, 12, 31) and tiles[0].granularity_days == 30

    def test_fetch_offline(self, tmp_path):
        assert run(["fetch", "--offline", "--out", str(tmp_path)]) == 0
        assert read_store(tmp_path / "tiles.wfds")[0].values.shape == (1, 365, 31)

    def test_pretrain_from_store(self, tmp_path):
        assert run(["synth", "--tiles", "2", "--coords", "2", "--years", "2000", "2000", "--out", str(tmp_path / "s")]) == 0
        assert run(["pretrain", "--data", str(tmp_path / "s/tiles.wfds"), "--model", "tiny", "--epochs", "1",
                    "--windows", "7:52", "--out", str(tmp_path / "p")]) == 0
        assert _rows(tmp_path / "p/metrics.csv")[0]["train_sequences"] == "2"

    def test_pretrain_artifacts(self, pretrain_run):
        for name in ("config.json", "losses.csv", "checkpoint.wfck", "metrics.csv"):
            assert (pretrain_run / name).is_file()
        assert [r["epoch"] for r in _rows(pretrain_run / "losses.csv")] == ["0", "1"]

    def test_rerun_from_snapshot_is_identical(self, pretrain_run, tmp_path):
        assert run(["pretrain", "--config", str(pretrain_run / "config.json"), "--out", str(tmp_path)]) == 0
        assert (tmp_path / "losses.csv").read_text() == (pretrain_run / "losses.csv").read_text()

    def test_mlm_by_task_flag_only(self, tmp_path):
        assert run(["pretrain", *QUICK_PRETRAIN, "--task", "mlm", "--out", str(tmp_path)]) == 0
        assert _rows(tmp_path / "metrics.csv")[0]["task"] == "mlm"

    def test_evaluate(self, pretrain_run, tmp_path):
        assert run(["evaluate", "--checkpoint", str(pretrain_run / "checkpoint.wfck"), "--synth",
                    "--out", str(tmp_path)]) == 0
        assert [r["task"] for r in _rows(tmp_path / "metrics.csv")] == ["masked-feature", "mlm"]

    def test_export(self, pretrain_run):
        assert run(["export", "--run", str(pretrain_run)]) == 0
        svg = (pretrain_run / "export/loss_curve.svg").read_text()
        assert svg.startswith("<svg") and "val_loss" in svg
        rows = _rows(pretrain_run / "export/metrics.csv")
        assert {r["series"] for r in rows} == {"batch_loss", "train_loss", "val_loss"}

    def test_finetune_yield_linear(self, tmp_path):
        assert run(["finetune-yield", "--synth", "--variant", "linear", "--out", str(tmp_path)]) == 0
        rows = _rows(tmp_path / "metrics.csv")
        assert [r["fold"] for r in rows] == ["0", "1", "2", "3", "4", "mean"]

    def test_finetune_yield_with_encoder(self, pretrain_run, tmp_path):
        assert run(["finetune-yield", "--synth", "--variant", "wf-linear", "--history", "1", "--folds", "1",
                    "--epochs", "1", "--encoder", str(pretrain_run / "checkpoint.wfck"), "--out", str(tmp_path)]) == 0
        assert run(["export", "--run", str(tmp_path)]) == 0

    def test_finetune_flu(self, tmp_path):
        assert run(["finetune-flu", "--synth", "--variant", "linreg", "--out", str(tmp_path / "lin")]) == 0
        rows = _rows(tmp_path / "lin/metrics.csv")
        assert [r["validation_year"] for r in rows] == ["2016", "2017", "2018", "2019", "mean"]
        assert run(["finetune-flu", "--synth", "--variant", "no-weather", "--years", "2016", "--epochs", "1",
                    "--d-model", "16", "--layers", "1", "--out", str(tmp_path / "nw")]) == 0
        assert set(_rows(tmp_path / "nw/metrics.csv")[0]) == {"validation_year", "mae_1", "mae_5", "mae_10"}


class TestSvg:
    def test_ticks(self):
        assert nice_ticks(0.0, 1.0) == [0.0, 0.25, 0.5, 0.75, 1.0]
        assert nice_ticks(3.0, 3.0)[0] <= 3.0

    def test_chart(self):
        svg = line_chart({"a": ([0, 1, 2], [3.0, 2.0, float("nan")])}, title="t<1>")
        assert "t&lt;1&gt;" in svg and svg.count("<path") == 1

    def test_log_axis_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            line_chart({"a": ([0, 1], [1.0, 0.0])}, log_y=True)
