import json
from pathlib import Path

import numpy as np
import pytest

from transrom.config import ExperimentConfig, config_hash, dumps_config, load_config, loads_config
from transrom.errors import ConfigError
from transrom.experiments import (
    REGISTRY,
    Experiment,
    compare_modes,
    get_config,
    kolmogorov_matrices,
    parse_dt_rule,
    resolve_test_parameters,
    run_experiment,
)
from transrom.metrics import singular_spectrum

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


class TestConfigSerialization:
    def test_round_trip_every_registry_profile(self):
        for entry in REGISTRY.values():
            for scale in ("paper", "desk"):
                cfg = entry.config(scale)
                back = loads_config(dumps_config(cfg))
                assert back == cfg

    def test_catalog_files_match_registry(self):
        for key, entry in REGISTRY.items():
            path = CONFIG_DIR / f"{key}.toml"
            assert path.exists(), f"missing catalog config {path}"
            assert load_config(path) == entry.config("paper")

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError):
            loads_config('[experiment]\nexperiment = "kolmogorov-demo"\nbogus = 1\n')

    def test_t_train_bound(self):
        with pytest.raises(ConfigError):
            loads_config('[experiment]\nexperiment = "x"\nt_train = 2.0\nt_end = 1.0\n')

    def test_hash_stable(self):
        cfg = REGISTRY["kolmogorov-demo"].config("desk")
        assert config_hash(cfg) == config_hash(REGISTRY["kolmogorov-demo"].config("desk"))


class TestRegistry:
    def test_expected_entries(self):
        assert set(REGISTRY) == {
            "kolmogorov-demo",
            "adv1d-basis",
            "adv1d-moving-mesh",
            "adv1d-inhomogeneous",
            "burgers-riemann",
            "burgers-smooth",
            "euler-sod",
        }

    def test_published_problem_sizes(self):
        paper = {k: REGISTRY[k].config("paper") for k in REGISTRY}
        assert paper["adv1d-inhomogeneous"].nx_offline == 500
        assert paper["adv1d-inhomogeneous"].dt_rule == "2dx"
        assert len(paper["adv1d-inhomogeneous"].mu_train) == 11 * 21
        assert paper["adv1d-inhomogeneous"].n_test_random == 20
        assert paper["burgers-riemann"].nx_offline == 400
        assert paper["burgers-riemann"].t_train == 0.25
        assert paper["burgers-riemann"].t_end == 0.5
        assert [m[0] for m in paper["burgers-riemann"].mu_train] == [i / 10 for i in range(11)]
        assert len(paper["burgers-riemann"].mu_test) == 20
        assert paper["burgers-riemann"].epochs == 150
        assert paper["burgers-smooth"].dt_rule == "0.25dx"
        assert paper["burgers-smooth"].epochs == 100
        assert paper["euler-sod"].nx_offline == 1500
        assert paper["euler-sod"].dt_rule == "cfl:0.6"
        assert paper["euler-sod"].epochs == 100
        assert paper["adv1d-moving-mesh"].r_values == [5, 10, 15, 20, 25]

    def test_get_config_by_id_and_overrides(self):
        cfg = get_config("burgers-riemann", scale="desk", seed=99)
        assert cfg.seed == 99
        assert cfg.scale == "desk"
        with pytest.raises(ConfigError):
            get_config("not-an-experiment")

    def test_dt_rules(self):
        assert parse_dt_rule("dx", 0.01) == 0.01
        assert parse_dt_rule("2dx", 0.01) == 0.02
        assert parse_dt_rule("0.25dx", 0.01) == 0.0025
        assert parse_dt_rule("h_coarse", 0.5) == pytest.approx(1 / 125)
        with pytest.raises(ConfigError):
            parse_dt_rule("sometimes", 0.01)

    def test_resolve_test_parameters_seeded(self):
        from transrom.experiments import inhomogeneous_problem

        cfg = REGISTRY["adv1d-inhomogeneous"].config("desk")
        prob = inhomogeneous_problem()
        a = resolve_test_parameters(cfg, prob)
        b = resolve_test_parameters(cfg, prob)
        assert np.array_equal(a, b)
        assert a.shape == (cfg.n_test_random, 2)
        box = prob.parameter_domain
        assert np.all(a[:, 0] >= box[0][0]) and np.all(a[:, 0] <= box[0][1])
        assert np.all(a[:, 1] >= box[1][0]) and np.all(a[:, 1] <= box[1][1])


class TestKolmogorovDemo:
    def test_matrices(self):
        original, transformed = kolmogorov_matrices()
        sv_o = singular_spectrum(original)
        sv_t = singular_spectrum(transformed)
        assert sv_o[9] / sv_o[0] > 0.05
        assert sv_t[1] / sv_t[0] <= 1e-12

    def test_pipeline_writes_spectra(self, tmp_path):
        cfg = get_config("kolmogorov-demo", scale="desk", figures=False)
        out = run_experiment(cfg, out_root=tmp_path)
        a = np.loadtxt(out / "spectrum_original.csv", delimiter=",", skiprows=1)
        b = np.loadtxt(out / "spectrum_transformed.csv", delimiter=",", skiprows=1)
        assert a[9, 1] / a[0, 1] > 0.05
        assert b[1, 1] / b[0, 1] <= 1e-12
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["experiment"] == "kolmogorov-demo"


class TestPipelineDeskMini:
    """A shrunken inhomogeneous run exercising every stage end to end."""

    @pytest.fixture(scope="class")
    def mini_out(self, tmp_path_factory):
        cfg = get_config(
            "adv1d-inhomogeneous",
            scale="desk",
            nx_offline=100,
            mu_train=[[0.0, 2.0], [0.25, 3.0], [0.5, 4.0]],
            n_test_random=2,
            r_values=[6],
            epochs=8,
            figures=True,
        )
        root = tmp_path_factory.mktemp("mini")
        out = run_experiment(cfg, out_root=root)
        return cfg, out

    def test_outputs_exist(self, mini_out):
        cfg, out = mini_out
        assert (out / "snapshots" / "train.bin").exists()
        assert (out / "models" / "model_r6.json").exists()
        assert (out / "pod" / "basis_r6.bin").exists()
        assert (out / "rom" / "nx100_r6_lp-galerkin" / "errors_mu0.csv").exists()
        assert (out / "rom" / "nx100_r6_pod" / "timing.json").exists()
        assert (out / "compare" / "e_average.csv").exists()
        assert (out / "compare" / "e_average.png").exists()

    def test_e_average_table_rows(self, mini_out):
        cfg, out = mini_out
        text = (out / "compare" / "e_average.csv").read_text().strip().split("\n")
        assert text[0] == "r,mode,e_average"
        modes = {line.split(",")[1] for line in text[1:]}
        assert modes == {"lp-galerkin", "pod", "learning"}

    def test_idempotent_rerun_skips(self, mini_out):
        cfg, out = mini_out
        manifest_before = (out / "manifest.json").read_text()
        run_experiment(cfg, out_root=out.parent)  # same root -> same out dir
        assert (out / "manifest.json").read_text() == manifest_before

    def test_timing_ledger_keys(self, mini_out):
        cfg, out = mini_out
        ledger = json.loads((out / "rom" / "nx100_r6_lp-galerkin" / "timing.json").read_text())
        assert set(ledger) == {"basis_eval_s", "projection_solve_s", "total_s"}


class TestPipelineSmoke:
    """Tiny-scale end-to-end runs of the remaining registry entries."""

    def test_euler_pipeline(self, tmp_path):
        cfg = get_config("euler-sod", scale="desk", nx_offline=80, epochs=4, r_values=[4], figures=False)
        out = run_experiment(cfg, out_root=tmp_path)
        for c in ("density", "momentum", "energy"):
            assert (out / "snapshots" / f"train_{c}.bin").exists()
            assert (out / "models" / f"model_r4_{c}.json").exists()
            assert (out / "rom" / "nx80_r4_lp-explicit" / f"errors_{c}.csv").exists()
        table = (out / "compare" / "e_average.csv").read_text()
        assert "lp-explicit" in table and "learning" in table

    def test_moving_mesh_pipeline(self, tmp_path):
        cfg = get_config(
            "adv1d-moving-mesh", scale="desk", epochs=3, r_values=[4],
            t_train=0.04, t_end=0.08, figures=False,
        )
        out = run_experiment(cfg, out_root=tmp_path)
        assert (out / "rom" / "moving_r4_lp-galerkin" / "errors.csv").exists()
        assert (out / "rom" / "moving_r4_learning" / "errors.csv").exists()

    def test_burgers_smooth_pipeline(self, tmp_path):
        cfg = get_config(
            "burgers-smooth", scale="desk", nx_offline=60, epochs=4, r_values=[4],
            t_train=0.1, t_end=0.15, figures=False,
        )
        out = run_experiment(cfg, out_root=tmp_path)
        assert (out / "rom" / "nx60_r4_lp-galerkin" / "errors_mu0.csv").exists()
        assert (out / "rom" / "nx60_r4_pod" / "errors_mu0.csv").exists()

    def test_cross_mesh_rom_without_retraining(self, tmp_path):
        # online evaluation on a mesh the model never saw
        cfg = get_config(
            "adv1d-inhomogeneous", scale="desk", nx_offline=100, nx_online=[100, 150],
            mu_train=[[0.0, 2.0], [0.5, 4.0]], n_test_random=1, r_values=[5],
            epochs=6, figures=False,
        )
        out = run_experiment(cfg, out_root=tmp_path)
        assert (out / "rom" / "nx150_r5_lp-galerkin" / "errors_mu0.csv").exists()
        # static POD bases are tied to the offline mesh, so no nx150 pod run
        assert not (out / "rom" / "nx150_r5_pod").exists()


class TestCompareModes:
    def test_single_mode_matches_own_report(self):
        from transrom.online import RomRunResult

        res = RomRunResult(
            times=np.array([0.0, 0.1, 0.2]),
            alphas=np.zeros((3, 2)),
            reconstructions=np.zeros((3, 4)),
            l2_errors=np.array([0.0, 1.0, 2.0]),
            relative_errors=np.array([0.01, 0.02, 0.03]),
            timing={},
            metadata={"r": 2, "mode": "pod"},
        )
        rows = compare_modes([res])
        assert rows == [(2, "pod", 0.03)]

    def test_known_ordering_recovered(self):
        from transrom.online import RomRunResult

        def make(mode, r, peak):
            return RomRunResult(
                times=np.array([0.0, 0.1]),
                alphas=np.zeros((2, r)),
                reconstructions=np.zeros((2, 4)),
                l2_errors=np.zeros(2),
                relative_errors=np.array([peak / 2, peak]),
                timing={},
                metadata={"r": r, "mode": mode},
            )

        rows = compare_modes([make("lp-galerkin", 5, 0.01), make("pod", 5, 0.05), make("learning", 5, 0.03)])
        table = {mode: e for _, mode, e in rows}
        assert table["lp-galerkin"] < table["learning"] < table["pod"]

    def test_mismatched_windows_rejected(self):
        from transrom.online import RomRunResult

        a = RomRunResult(np.array([0.0, 0.1]), np.zeros((2, 1)), np.zeros((2, 2)),
                         np.zeros(2), np.zeros(2), {}, {"r": 1, "mode": "pod"})
        b = RomRunResult(np.array([0.0, 0.2]), np.zeros((2, 1)), np.zeros((2, 2)),
                         np.zeros(2), np.zeros(2), {}, {"r": 1, "mode": "pod"})
        with pytest.raises(ValueError):
            compare_modes([a, b])
