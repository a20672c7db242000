"""Adapter CLI: emit and finetune subcommands, exit codes."""
import json

import pytest

from modeladapters.cli import main

from test_emit import validate_with_engine
from conftest import make_training_dir


class TestEmitCommand:
    def test_emit_writes_valid_records(self, sample_images, classes_path, tmp_path, capsys):
        store = tmp_path / "store"
        rc = main([
            "emit", "--images", str(sample_images),
            "--classes", str(classes_path), "--out", str(store),
        ])
        assert rc == 0
        assert "emitted 3 interchange records" in capsys.readouterr().out
        proc = validate_with_engine(store)
        assert proc.returncode == 0, proc.stdout + proc.stderr

    def test_bad_label_exits_one(self, sample_images, classes_path, tmp_path, capsys):
        rc = main([
            "emit", "--images", str(sample_images),
            "--classes", str(classes_path), "--out", str(tmp_path / "s"),
            "--labels", "dragon",
        ])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestFinetuneCommand:
    def test_dry_run_echoes_recipe(self, classes_path, tmp_path, capsys):
        data = make_training_dir(tmp_path, num_images=6)
        rc = main([
            "finetune", "--data", str(data), "--classes", str(classes_path),
            "--out", str(tmp_path / "ckpt.pt"), "--dry-run",
        ])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["steps_run"] == 0
        assert doc["config"] == {
            "optimizer": "adamw",
            "learning_rate": 2e-5,
            "weight_decay": 0.7,
            "batch_size": 32,
            "lr_schedule": "cosine",
            "epochs": 50,
            "seed": 0,
            "augmentations": ["horizontal_flip"],
        }


class TestUsage:
    def test_no_subcommand_is_usage_error(self, capsys):
        assert main([]) == 64
        capsys.readouterr()

    def test_unknown_flag_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["emit", "--frobnicate"])
        assert exc.value.code == 64
        capsys.readouterr()
