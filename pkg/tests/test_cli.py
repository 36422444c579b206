import json
import subprocess
import sys
from pathlib import Path

import pytest

from transrom.cli import main

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


class TestCliSurface:
    def test_list_names_registry(self, capsys):
        assert main(["list"]) == 0
        out = capsys.readouterr().out
        for key in ("kolmogorov-demo", "burgers-riemann", "euler-sod"):
            assert key in out

    def test_unknown_experiment_exit_2(self, capsys):
        assert main(["snapshots", "no-such-experiment"]) == 2
        assert "config error" in capsys.readouterr().err

    def test_malformed_config_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[experiment]\nexperiment = \"kolmogorov-demo\"\nepochs = -3\n")
        assert main(["train", str(bad)]) == 2

    def test_spectrum_subcommand(self, tmp_path, capsys):
        code = main(["spectrum", "kolmogorov-demo", "--out", str(tmp_path), "--no-figures"])
        assert code == 0
        out_dir = tmp_path / "kolmogorov-demo-desk"
        assert (out_dir / "spectrum_original.csv").exists()
        assert (out_dir / "spectrum_transformed.csv").exists()
        assert not (out_dir / "spectrum.png").exists()

    def test_snapshots_subcommand_writes_container(self, tmp_path):
        code = main([
            "snapshots", "burgers-riemann", "--out", str(tmp_path), "--seed", "5", "--no-figures",
        ])
        assert code == 0
        out_dir = tmp_path / "burgers-riemann-desk"
        assert (out_dir / "snapshots" / "train.bin").exists()
        sidecar = json.loads((out_dir / "snapshots" / "train.bin.json").read_text())
        assert sidecar["law"] == "burgers"
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["seed"] == 5

    def test_training_divergence_exit_4(self, tmp_path):
        from transrom.config import save_config
        from transrom.experiments import get_config

        cfg = get_config(
            "adv1d-basis", scale="desk", nx_offline=40, epochs=2,
            learning_rate=1e200, figures=False,
        )
        cfg.out_dir = str(tmp_path)
        path = tmp_path / "diverge.toml"
        save_config(path, cfg)
        assert main(["train", str(path)]) == 4

    def test_console_script_installed(self):
        proc = subprocess.run(
            [sys.executable, "-m", "transrom.cli", "list"], capture_output=True, text=True
        )
        assert proc.returncode == 0
        assert "adv1d-inhomogeneous" in proc.stdout
