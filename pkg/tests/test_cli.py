"""Config validation, presets, experiment orchestration, CLI surface."""

import json
import os

import numpy as np
import pytest

from pea import cli, experiment, gradcheck, presets
from pea.config import load_config_file, parse_config
from pea.errors import ConfigError


def _doc(**overrides):
    doc = presets.get_preset("baseline-relu")
    doc["data"].update({"n": 256, "val_fraction": 0.25, "image_size": 8})
    doc["model"].update({"channels": [4, 4, 4], "image_size": 8})
    doc["train"].update({"epochs": 2, "batch_size": 64, "warmup_epochs": 0,
                         "lr_schedule": {"kind": "constant"}, "augment": None})
    for key, val in overrides.items():
        section, _, field = key.partition(".")
        doc[section][field] = val
    return doc


def _small_pea_doc():
    doc = _doc()
    doc["model"]["activation"] = {"slot": "ensemble", "mode": "weighted", "sota": "gelu"}
    doc["train"]["epochs"] = 3
    doc["train"]["pea"] = {"init_end": 1, "trans_end": 2}
    return doc


class TestConfigValidation:
    def test_valid_doc_parses(self):
        exp = parse_config(_doc())
        assert exp.model.architecture == "small_cnn"
        assert exp.train.epochs == 2

    def test_missing_epochs_names_field(self):
        doc = _doc()
        del doc["train"]["epochs"]
        with pytest.raises(ConfigError, match=r"config\.train\.epochs"):
            parse_config(doc)

    def test_unknown_key_names_path(self):
        doc = _doc()
        doc["train"]["epochz"] = 3
        with pytest.raises(ConfigError, match=r"config\.train\.epochz"):
            parse_config(doc)
        doc = _doc()
        doc["model"]["hidden_layers"] = [1]
        with pytest.raises(ConfigError, match=r"config\.model\.hidden_layers"):
            parse_config(doc)

    def test_type_errors_name_path(self):
        with pytest.raises(ConfigError, match=r"config\.train\.epochs"):
            parse_config(_doc(**{"train.epochs": "twelve"}))

    def test_class_count_cross_check(self):
        with pytest.raises(ConfigError, match="num_classes"):
            parse_config(_doc(**{"data.num_classes": 7}))

    def test_pea_boundaries_validated(self):
        doc = _small_pea_doc()
        doc["train"]["pea"]["trans_end"] = 99
        with pytest.raises(ConfigError, match=r"config\.train\.pea"):
            parse_config(doc)

    def test_invalid_json_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            load_config_file(p)


class TestPresets:
    def test_all_presets_parse(self):
        for name in presets.PRESETS:
            parse_config(presets.get_preset(name))

    def test_expected_names_exist(self):
        names = set(presets.PRESETS)
        assert {"baseline-relu", "upper-limit-gelu", "upper-limit-swish",
                "upper-limit-mish", "upper-limit-elu"} <= names
        for m in "ws":
            for s in "gsm":
                assert f"pea-{m}{s}-90" in names
                assert f"pea-{m}{s}-115" in names
                assert f"pea-{m}{s}" in names

    def test_unknown_preset_lists_options(self):
        with pytest.raises(ConfigError, match="baseline-relu"):
            presets.get_preset("nope")

    def test_pea_presets_scale_ratios(self):
        doc = presets.get_preset("pea-sg-90")
        assert doc["train"]["epochs"] == 24
        assert doc["train"]["pea"]["trans_end"] == 18  # 24 * 90/120
        doc = presets.get_preset("pea-wm-115")
        assert doc["train"]["pea"]["trans_end"] == 23  # 24 * 115/120


class TestRunExperiment:
    def test_single_run_summary(self, tmp_path):
        exp = parse_config(_doc())
        summary = experiment.run_experiment(exp, 1, str(tmp_path / "out"))
        assert summary["n_runs"] == 1
        assert summary["best_val_acc_std"] == 0.0
        assert (tmp_path / "out" / "metrics.csv").exists()
        assert (tmp_path / "out" / "summary.json").exists()
        assert (tmp_path / "out" / "run_0" / "best.ckpt").exists()

    def test_forced_same_seed_zero_std(self, tmp_path):
        exp = parse_config(_doc())
        summary = experiment.run_experiment(exp, 3, str(tmp_path / "out"),
                                            distinct_seeds=False)
        assert summary["best_val_acc_std"] == 0.0
        accs = [r["best_val_acc"] for r in summary["runs"]]
        assert len(set(accs)) == 1

    def test_distinct_seeds_and_mean_in_range(self, tmp_path):
        exp = parse_config(_doc())
        summary = experiment.run_experiment(exp, 3, str(tmp_path / "out"))
        accs = [r["best_val_acc"] for r in summary["runs"]]
        assert min(accs) <= summary["best_val_acc_mean"] <= max(accs)
        assert [r["seed"] for r in summary["runs"]] == [0, 1, 2]

    def test_pea_selection_after_transition_and_export(self, tmp_path):
        exp = parse_config(_small_pea_doc())
        summary = experiment.run_experiment(exp, 2, str(tmp_path / "out"))
        for run in summary["runs"]:
            assert run["best_epoch"] >= 2  # only alpha==1 epochs eligible
            assert os.path.exists(run["collapsed_export"])

    def test_compare_self_is_zero_and_inconclusive(self, tmp_path):
        exp = parse_config(_doc())
        report = experiment.compare(exp, exp, 2, str(tmp_path / "cmp"))
        assert report["mean_delta"] == 0.0
        assert report["inconclusive"] is True


class TestCliCommands:
    def test_train_same_seed_identical_rows(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(_doc()))
        rc = cli.main(["train", "-c", str(cfg), "--runs", "2", "--same-seed",
                       "--out", str(tmp_path / "o")])
        assert rc == 0
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        a, b = summary["runs"]
        assert a["best_val_acc"] == b["best_val_acc"]
        assert a["final_val_acc"] == b["final_val_acc"]
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["config_sha256"]
        assert manifest["seeds"] == [0, 0]

    def test_train_preset_with_overrides(self, tmp_path):
        rc = cli.main([
            "train", "--preset", "pea-wg-90",
            "--set", "train.epochs=3", "--set", "train.pea.trans_end=2",
            "--set", "train.pea.init_end=1",
            "--set", "train.warmup_epochs=0",
            "--set", "train.lr_schedule={\"kind\":\"constant\"}",
            "--set", "data.n=256", "--set", "data.image_size=8",
            "--set", "model.image_size=8", "--set", "model.channels=[4,4,4]",
            "--set", "train.augment=null",
            "--out", str(tmp_path / "o"),
        ])
        assert rc == 0
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert os.path.exists(summary["runs"][0]["collapsed_export"])

    def test_malformed_config_exit_1_names_field(self, tmp_path, capsys):
        doc = _doc()
        del doc["train"]["epochs"]
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps(doc))
        rc = cli.main(["train", "-c", str(cfg), "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "epochs" in capsys.readouterr().err

    def test_eval_checkpoint_and_export(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(_small_pea_doc()))
        assert cli.main(["train", "-c", str(cfg), "--out", str(tmp_path / "o")]) == 0
        ckpt = str(tmp_path / "o" / "run_0" / "best.ckpt")
        capsys.readouterr()
        assert cli.main(["eval", "-c", str(cfg), "--checkpoint", ckpt]) == 0
        out = json.loads(capsys.readouterr().out)
        assert 0.0 <= out["val"]["acc"] <= 1.0

        exported = str(tmp_path / "o" / "m.peam")
        assert cli.main(["export-model", "--checkpoint", ckpt, "--out", exported]) == 0
        capsys.readouterr()
        assert cli.main(["eval", "-c", str(cfg), "--model", exported]) == 0
        out2 = json.loads(capsys.readouterr().out)
        assert out2["val"]["acc"] == out["val"]["acc"]

    def test_inspect_checkpoint(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(_doc()))
        cli.main(["train", "-c", str(cfg), "--out", str(tmp_path / "o")])
        capsys.readouterr()
        rc = cli.main(["inspect-checkpoint", str(tmp_path / "o" / "run_0" / "best.ckpt")])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["meta"]["kind"] == "checkpoint"
        assert any(k.startswith("param/") for k in doc["blobs"])

    def test_compare_command(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(_doc()))
        rc = cli.main(["compare", str(cfg), str(cfg), "--runs", "2",
                       "--out", str(tmp_path / "cmp")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "INCONCLUSIVE" in out

    def test_export_schedule_stdout(self, capsys):
        rc = cli.main(["export-schedule", "--init-end", "5", "--trans-end", "115",
                       "--epochs", "120"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "epoch,alpha"
        assert len(lines) == 121

    def test_export_schedule_file_with_manifest(self, tmp_path):
        out = tmp_path / "sched.csv"
        rc = cli.main(["export-schedule", "--out", str(out)])
        assert rc == 0
        assert out.exists()
        assert (tmp_path / "manifest.json").exists()

    def test_version_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as ei:
            cli.main(["--version"])
        assert ei.value.code == 0


class TestGradCheckCommand:
    def test_filtered_run_passes(self, capsys):
        rc = cli.main(["grad-check", "--arch", "mlp", "--activation", "mish"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "activation/mish" in out
        assert "mlp/plain-mish" in out
        assert "gelu" not in out  # restricted to mish paths

    def test_broken_derivative_fails_nonzero(self, monkeypatch, capsys):
        import pea.activations as act

        true_deriv = act.derivative

        def broken(kind, x):
            d = true_deriv(kind, x)
            return d * 1.5 if kind.name == "mish" else d

        monkeypatch.setattr(act, "derivative", broken)
        rc = cli.main(["grad-check", "--arch", "mlp", "--activation", "mish"])
        assert rc == 2
