"""Experiment registry and the config-driven pipeline runner.

Each registry entry builds one of the bundled 1D studies at two scales:
the published problem sizes ("paper") and a shrunk profile ("desk") that
runs the full pipeline in minutes on a laptop CPU. Stages are idempotent:
a stage is skipped when its outputs already exist under a manifest with
the same config hash (use force=True to redo).

Stage order: snapshots -> train -> pod -> rom -> compare. The singular
value demonstration uses the dedicated "spectrum" stage.
"""

from __future__ import annotations

import json
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fom, metrics, pod
from .config import ExperimentConfig, config_hash, dumps_config
from .errors import ConfigError
from .euler import EULER_VARIABLES, run_fom_euler, sod_problem
from .linalg import gmres
from .model import TrainConfig, load_model, new_model, save_model, train_offline
from .online import (
    ModelBasisSource,
    StaticBasisSource,
    basis_shift_deviation,
    evaluate_basis,
    online_step_galerkin,
    run_rom,
    run_rom_euler,
    run_rom_moving_mesh,
)
from .snapshots import SnapshotSet, load_snapshots, save_basis, save_snapshots


def parse_dt_rule(rule: str, dx: float) -> float:
    """Time-step rules: 'dx', '<factor>dx', 'h_coarse', or 'cfl:<number>'."""
    rule = rule.strip()
    if rule == "dx":
        return dx
    if rule == "h_coarse":
        return fom.MOVING_MESH_H_COARSE
    if rule.startswith("cfl:"):
        raise ConfigError("cfl rules are resolved inside the explicit driver")
    if rule.endswith("dx"):
        try:
            return float(rule[:-2]) * dx
        except ValueError as exc:
            raise ConfigError(f"bad dt rule {rule!r}") from exc
    raise ConfigError(f"bad dt rule {rule!r}")


# ---------------------------------------------------------------------------
# problem builders


def _box(lo, hi, height):
    return lambda x: np.where((np.asarray(x) >= lo) & (np.asarray(x) <= hi), float(height), 0.0)


def kolmogorov_matrices():
    """The slow/fast singular-value decay pair for unit-speed advection.

    A box profile advected across [0, 2] sampled on a 0.01 space-time
    lattice gives the slowly decaying snapshot matrix; aligning the frame
    with the wave (x -> x - t) collapses it to rank one.
    """
    u0 = _box(0.25, 0.5, 1.0)
    mesh = fom.Mesh1D.uniform(0.0, 2.0, 200)
    times = np.arange(101) * 0.01
    S = np.empty((mesh.n_nodes, times.size))
    for j, t in enumerate(times):
        S[:, j] = fom.exact_advection(u0, mesh.nodes, t)
    original = pod.SnapshotMatrix(S, mesh.nodes, times, np.zeros((1, 0)))
    transformed = pod.transformed_snapshot_matrix(u0, mesh.nodes, times)
    return original, transformed


def advection_basis_problem() -> fom.FomProblem:
    u0 = _box(0.5, 1.5, 2.0)
    return fom.FomProblem(
        law="linear_advection",
        initial_condition=lambda x, mu: u0(x),
        boundary="zero_inflow",
        advection_speed=1.0,
        descriptor={"name": "adv1d-basis"},
    )


def moving_mesh_problem() -> fom.FomProblem:
    def ic(x, mu):
        x = np.asarray(x)
        return np.where((x > 0.6) & (x < 1.4), 2.0, 0.0)

    return fom.FomProblem(
        law="linear_advection",
        initial_condition=ic,
        boundary="zero_inflow",
        advection_speed=1.0,
        descriptor={"name": "adv1d-moving-mesh"},
    )


def inhomogeneous_problem() -> fom.FomProblem:
    def speed(x, mu):
        return 1.25 + mu[0] * np.sin(mu[1] * np.pi * np.asarray(x))

    def ic(x, mu):
        x = np.asarray(x)
        return np.where((x >= 0.05) & (x <= 0.45), 0.5 + 0.5 * np.cos(5 * np.pi * (x - 0.25)), 0.0)

    return fom.FomProblem(
        law="variable_advection",
        initial_condition=ic,
        boundary="zero_inflow",
        speed_field=speed,
        parameter_domain=np.array([[0.0, 0.5], [2.0, 4.0]]),
        descriptor={"name": "adv1d-inhomogeneous"},
    )


def burgers_riemann_problem() -> fom.FomProblem:
    def ic(x, mu):
        x = np.asarray(x)
        return np.where((x >= 0.5) & (x <= 0.75), 1.0 + mu[0], 0.0)

    return fom.FomProblem(
        law="burgers",
        initial_condition=ic,
        boundary="zero_inflow",
        parameter_domain=np.array([[0.0, 1.0]]),
        descriptor={"name": "burgers-riemann"},
    )


def burgers_smooth_problem() -> fom.FomProblem:
    def ic(x, mu):
        return 0.25 + 0.5 * np.sin(np.pi * np.asarray(x))

    return fom.FomProblem(
        law="burgers",
        initial_condition=ic,
        boundary="periodic",
        descriptor={"name": "burgers-smooth"},
    )


# ---------------------------------------------------------------------------
# registry


@dataclass
class ExperimentRegistryEntry:
    id: str
    description: str
    paper: ExperimentConfig
    desk: ExperimentConfig

    def config(self, scale: str) -> ExperimentConfig:
        if scale == "paper":
            return ExperimentConfig(**vars(self.paper))
        if scale == "desk":
            return ExperimentConfig(**vars(self.desk))
        raise ConfigError(f"unknown scale {scale!r}")


def _grid(mu1_values, mu2_values):
    return [[float(a), float(b)] for a in mu1_values for b in mu2_values]


def _build_registry() -> dict:
    entries = []
    entries.append(
        ExperimentRegistryEntry(
            "kolmogorov-demo",
            "Singular-value decay of raw vs wave-aligned advection snapshots",
            paper=ExperimentConfig(
                experiment="kolmogorov-demo", scale="paper", nx_offline=200, dt_rule="dx",
                t_train=1.0, t_end=1.0, r_values=[1], modes=[], epochs=0,
            ),
            desk=ExperimentConfig(
                experiment="kolmogorov-demo", scale="desk", nx_offline=200, dt_rule="dx",
                t_train=1.0, t_end=1.0, r_values=[1], modes=[], epochs=0,
            ),
        )
    )
    entries.append(
        ExperimentRegistryEntry(
            "adv1d-basis",
            "Constant-speed advection: do trained basis functions travel with the wave?",
            paper=ExperimentConfig(
                experiment="adv1d-basis", scale="paper", nx_offline=500, dt_rule="dx",
                t_train=0.75, t_end=0.75, r_values=[3], modes=["learning"],
                epochs=600, learning_rate=3e-3, lr_decay=0.997, seed=21,
            ),
            desk=ExperimentConfig(
                experiment="adv1d-basis", scale="desk", nx_offline=250, dt_rule="0.5dx",
                t_train=0.75, t_end=0.75, r_values=[3], modes=["learning"],
                epochs=600, learning_rate=3e-3, lr_decay=0.997, seed=21,
            ),
        )
    )
    entries.append(
        ExperimentRegistryEntry(
            "adv1d-moving-mesh",
            "Advection on a discontinuity-tracking moving mesh (reduced run reuses the remap)",
            paper=ExperimentConfig(
                experiment="adv1d-moving-mesh", scale="paper", nx_offline=1000, dt_rule="h_coarse",
                t_train=0.752, t_end=1.504, r_values=[5, 10, 15, 20, 25],
                modes=["lp-galerkin", "learning"], epochs=30, seed=41,
            ),
            desk=ExperimentConfig(
                experiment="adv1d-moving-mesh", scale="desk", nx_offline=1000, dt_rule="h_coarse",
                t_train=0.752, t_end=1.0, r_values=[15], modes=["lp-galerkin", "learning"],
                epochs=80, learning_rate=2e-3, lr_decay=0.995, seed=41,
            ),
        )
    )
    entries.append(
        ExperimentRegistryEntry(
            "adv1d-inhomogeneous",
            "Variable-speed advection in inhomogeneous media, parameterized speed field",
            paper=ExperimentConfig(
                experiment="adv1d-inhomogeneous", scale="paper", nx_offline=500, dt_rule="2dx",
                t_train=1.0, t_end=1.0,
                mu_train=_grid([i / 20 for i in range(11)], [2 + j / 10 for j in range(21)]),
                n_test_random=20, r_values=[5, 10, 15, 20, 25],
                modes=["lp-galerkin", "pod", "learning"], epochs=30, seed=11,
            ),
            desk=ExperimentConfig(
                experiment="adv1d-inhomogeneous", scale="desk", nx_offline=200,
                nx_online=[200, 1000], dt_rule="2dx", t_train=1.0, t_end=1.0,
                mu_train=_grid([0.0, 0.25, 0.5], [2.0, 2.5, 3.0, 3.5, 4.0]),
                n_test_random=5, r_values=[25], modes=["lp-galerkin", "pod", "learning"],
                epochs=400, learning_rate=2e-3, lr_decay=0.995, seed=11,
            ),
        )
    )
    entries.append(
        ExperimentRegistryEntry(
            "burgers-riemann",
            "Burgers with a parameterized Riemann initial state: rarefaction plus moving shock",
            paper=ExperimentConfig(
                experiment="burgers-riemann", scale="paper", nx_offline=400, dt_rule="dx",
                t_train=0.25, t_end=0.5,
                mu_train=[[i / 10] for i in range(11)],
                mu_test=[[round(c + d, 2)] for c in [0.05 + 0.1 * k for k in range(10)] for d in (-0.01, 0.01)],
                r_values=[5, 10, 15, 20, 25], modes=["lp-galerkin", "pod", "learning"],
                epochs=150, seed=31,
            ),
            desk=ExperimentConfig(
                experiment="burgers-riemann", scale="desk", nx_offline=200, dt_rule="0.25dx",
                t_train=0.25, t_end=0.5,
                mu_train=[[i / 10] for i in range(11)],
                mu_test=[[0.14], [0.36], [0.56], [0.74], [0.96]],
                r_values=[15, 25], modes=["lp-galerkin", "pod", "learning"],
                epochs=300, learning_rate=2e-3, lr_decay=0.995, seed=31,
            ),
        )
    )
    entries.append(
        ExperimentRegistryEntry(
            "burgers-smooth",
            "Burgers from a smooth profile through shock formation; future-time prediction",
            paper=ExperimentConfig(
                experiment="burgers-smooth", scale="paper", nx_offline=400, dt_rule="0.25dx",
                t_train=1.1, t_end=1.6, variant="shock-seen",
                r_values=[5, 10, 15, 20, 25], modes=["lp-galerkin", "pod", "learning"],
                epochs=100, seed=51,
            ),
            desk=ExperimentConfig(
                experiment="burgers-smooth", scale="desk", nx_offline=200, dt_rule="0.25dx",
                t_train=0.6, t_end=1.0, variant="preshock",
                r_values=[15], modes=["lp-galerkin", "pod", "learning"],
                epochs=150, learning_rate=2e-3, lr_decay=0.995, seed=51,
            ),
        )
    )
    entries.append(
        ExperimentRegistryEntry(
            "euler-sod",
            "Shock tube for the compressible gas-dynamics system (explicit reduced stepping)",
            paper=ExperimentConfig(
                experiment="euler-sod", scale="paper", nx_offline=1500, dt_rule="cfl:0.6",
                t_train=0.2, t_end=0.25, r_values=[20, 30], modes=["lp-explicit", "learning"],
                epochs=100, seed=61,
            ),
            desk=ExperimentConfig(
                experiment="euler-sod", scale="desk", nx_offline=300, dt_rule="cfl:0.6",
                t_train=0.2, t_end=0.25, r_values=[20], modes=["lp-explicit", "learning"],
                epochs=80, learning_rate=2e-3, lr_decay=0.995, seed=61,
            ),
        )
    )
    return {e.id: e for e in entries}


REGISTRY = _build_registry()

_PROBLEM_BUILDERS = {
    "adv1d-basis": advection_basis_problem,
    "adv1d-moving-mesh": moving_mesh_problem,
    "adv1d-inhomogeneous": inhomogeneous_problem,
    "burgers-riemann": burgers_riemann_problem,
    "burgers-smooth": burgers_smooth_problem,
    "euler-sod": lambda: sod_problem(gamma=3.0),
}

_SCHEMES = {
    "adv1d-basis": "backward_euler",
    "adv1d-moving-mesh": "backward_euler",
    "adv1d-inhomogeneous": "crank_nicolson",
    "burgers-riemann": "backward_euler",
    "burgers-smooth": "backward_euler",
}


def get_config(name_or_path, scale: str | None = None, **overrides) -> ExperimentConfig:
    """Resolve a registry id (profile picked by ``scale``) or a TOML file.

    A file is taken as-is (its own scale field applies); ``scale`` only
    selects registry profiles. Keyword overrides patch individual fields.
    """
    from .config import load_config

    p = Path(str(name_or_path))
    if p.suffix == ".toml" or p.exists():
        cfg = load_config(p)
    elif str(name_or_path) in REGISTRY:
        cfg = REGISTRY[str(name_or_path)].config(scale or "desk")
    else:
        raise ConfigError(
            f"unknown experiment {name_or_path!r}; registry has {sorted(REGISTRY)}"
        )
    for key, value in overrides.items():
        if value is None:
            continue
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown config field {key!r}")
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


def resolve_test_parameters(cfg: ExperimentConfig, problem) -> np.ndarray:
    """Explicit test set, or a seeded draw from the parameter box."""
    if cfg.mu_test:
        return np.asarray(cfg.mu_test, dtype=float)
    if cfg.n_test_random and problem.parameter_domain is not None:
        box = np.asarray(problem.parameter_domain, dtype=float)
        rng = np.random.default_rng(cfg.seed + 2013)
        return np.column_stack([rng.uniform(lo, hi, cfg.n_test_random) for lo, hi in box])
    return np.zeros((1, 0))


# ---------------------------------------------------------------------------
# pipeline


class Experiment:
    """Filesystem-backed pipeline for one config."""

    def __init__(self, cfg: ExperimentConfig, out_root=None, force: bool = False):
        cfg.validate()
        if cfg.experiment not in REGISTRY:
            raise ConfigError(f"unknown experiment {cfg.experiment!r}; registry has {sorted(REGISTRY)}")
        self.cfg = cfg
        self.force = force
        base = Path(out_root) if out_root else Path(cfg.out_dir or "out")
        self.out = base / f"{cfg.experiment}-{cfg.scale}"
        self.out.mkdir(parents=True, exist_ok=True)
        self.hash = config_hash(cfg)
        self.manifest_path = self.out / "manifest.json"
        self.manifest = self._load_manifest()
        self.problem = _PROBLEM_BUILDERS.get(cfg.experiment, lambda: None)()
        self.is_euler = cfg.experiment == "euler-sod"
        self.is_moving = cfg.experiment == "adv1d-moving-mesh"

    # -- manifest bookkeeping ------------------------------------------------

    def _load_manifest(self):
        if self.manifest_path.exists():
            with open(self.manifest_path) as fh:
                m = json.load(fh)
            if m.get("config_hash") == self.hash:
                return m
        return {
            "experiment": self.cfg.experiment,
            "scale": self.cfg.scale,
            "config_hash": self.hash,
            "seed": self.cfg.seed,
            "config": dumps_config(self.cfg),
            "stages": {},
        }

    def _save_manifest(self):
        with open(self.manifest_path, "w") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def _stage_done(self, stage: str) -> bool:
        if self.force:
            return False
        rec = self.manifest["stages"].get(stage)
        if not rec:
            return False
        return all((self.out / f).exists() for f in rec.get("outputs", []))

    def _record_stage(self, stage: str, outputs):
        self.manifest["stages"][stage] = {
            "outputs": sorted(str(Path(o).relative_to(self.out)) for o in outputs),
            "wrote_at": _time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
        self._save_manifest()

    # -- mesh / dt helpers ----------------------------------------------------

    def offline_mesh(self):
        if self.cfg.experiment == "adv1d-basis":
            return fom.Mesh1D.uniform(0.0, 5.0, self.cfg.nx_offline)
        if self.cfg.experiment == "adv1d-inhomogeneous":
            return fom.Mesh1D.uniform(0.0, 2.5, self.cfg.nx_offline)
        if self.cfg.experiment == "burgers-riemann":
            return fom.Mesh1D.uniform(0.0, 8.0, self.cfg.nx_offline)
        if self.cfg.experiment == "burgers-smooth":
            return fom.Mesh1D.uniform(-1.0, 1.0, self.cfg.nx_offline)
        if self.cfg.experiment == "euler-sod":
            return fom.Mesh1D.uniform(-1.5, 1.5, self.cfg.nx_offline)
        raise ConfigError(f"{self.cfg.experiment} has no single offline mesh")

    def online_mesh(self, nx: int):
        m = self.offline_mesh()
        return fom.Mesh1D.uniform(m.nodes[0], m.nodes[-1], nx)

    def dt_for(self, mesh) -> float:
        return parse_dt_rule(self.cfg.dt_rule, mesh.spacing)

    # -- stages ----------------------------------------------------------------

    def run(self, stages=("snapshots", "train", "pod", "rom", "compare")):
        if self.cfg.experiment == "kolmogorov-demo":
            self.stage_spectrum()
            return self.out
        for stage in stages:
            getattr(self, f"stage_{stage}")()
        return self.out

    def stage_spectrum(self):
        """Singular value spectra; for the demo entry also the aligned matrix."""
        if self._stage_done("spectrum"):
            return
        outputs = []
        if self.cfg.experiment == "kolmogorov-demo":
            original, transformed = kolmogorov_matrices()
            for tag, mat in (("original", original), ("transformed", transformed)):
                sigma = metrics.singular_spectrum(mat)
                path = self.out / f"spectrum_{tag}.csv"
                metrics.write_spectrum_csv(path, sigma)
                outputs.append(path)
            if self.cfg.figures:
                from . import figures

                fig = self.out / "spectrum.png"
                figures.spectrum_figure(
                    fig,
                    {
                        "original": np.loadtxt(outputs[0], delimiter=",", skiprows=1)[:, 1],
                        "transformed": np.loadtxt(outputs[1], delimiter=",", skiprows=1)[:, 1],
                    },
                )
                outputs.append(fig)
        else:
            train = self._load_train_snapshots()
            if self.is_euler:
                raise ConfigError("spectrum stage expects a scalar snapshot set")
            sigma = metrics.singular_spectrum(pod.assemble_snapshot_matrix(train))
            path = self.out / "spectrum_training.csv"
            metrics.write_spectrum_csv(path, sigma)
            outputs.append(path)
            if self.cfg.figures:
                from . import figures

                fig = self.out / "spectrum.png"
                figures.spectrum_figure(fig, {"training": sigma})
                outputs.append(fig)
        self._record_stage("spectrum", outputs)

    def _snapshot_paths(self):
        d = self.out / "snapshots"
        if self.is_euler:
            train = {c: d / f"train_{c}.bin" for c in EULER_VARIABLES}
            test = {c: d / f"test_{c}.bin" for c in EULER_VARIABLES}
            return d, train, test
        return d, d / "train.bin", {nx: d / f"test_nx{nx}.bin" for nx in self.cfg.resolved_nx_online()}

    def stage_snapshots(self):
        if self._stage_done("snapshots"):
            return
        d, train_path, test_paths = self._snapshot_paths()
        d.mkdir(exist_ok=True)
        outputs = []
        cfg = self.cfg
        if self.is_euler:
            mesh = self.offline_mesh()
            cfl = float(cfg.dt_rule.split(":")[1])
            sets = run_fom_euler(self.problem, mesh, cfg.t_end, cfl=cfl, record_stride=cfg.snapshot_stride)
            for c in EULER_VARIABLES:
                full = sets[c]
                j_train = int(np.searchsorted(full.times, cfg.t_train + 1e-12))
                train = SnapshotSet(
                    full.nodes, full.times[:j_train], full.parameters,
                    full.values[:, :j_train], full.problem,
                )
                save_snapshots(train_path[c], train)
                save_snapshots(test_paths[c], full)
                outputs += [train_path[c], test_paths[c]]
        elif self.is_moving:
            dt = fom.MOVING_MESH_H_COARSE
            full = fom.run_fom_moving_mesh(self.problem, dt, cfg.t_end)
            j_train = int(np.searchsorted(full.times, cfg.t_train + 1e-12))
            train = SnapshotSet(
                full.nodes[:j_train], full.times[:j_train], full.parameters,
                full.values[:, :j_train], full.problem, per_time_meshes=True,
            )
            save_snapshots(train_path, train)
            test_path = list(test_paths.values())[0]
            save_snapshots(test_path, full)
            outputs += [train_path, test_path]
        elif cfg.experiment == "adv1d-basis":
            mesh = self.offline_mesh()
            dt = self.dt_for(mesh)
            n = int(round(cfg.t_train / dt))
            times = np.arange(n + 1) * dt
            u0 = _box(0.5, 1.5, 2.0)
            train = fom.exact_advection_snapshots(u0, mesh, times, problem_descriptor=self.problem.descriptor)
            save_snapshots(train_path, train)
            outputs.append(train_path)
            # the learning-mode study stays inside the training window, so the
            # exact trajectory doubles as the reference
            for path in test_paths.values():
                save_snapshots(path, train)
                outputs.append(path)
        else:
            mesh = self.offline_mesh()
            dt = self.dt_for(mesh)
            mu_train = np.asarray(cfg.mu_train, dtype=float) if cfg.mu_train else np.zeros((1, 0))
            train = fom.run_fom(
                self.problem, mesh, mu_train, dt, cfg.t_train,
                scheme=_SCHEMES[cfg.experiment], record_stride=cfg.snapshot_stride,
                threads=cfg.threads,
            )
            save_snapshots(train_path, train)
            outputs.append(train_path)
            mu_test = resolve_test_parameters(cfg, self.problem)
            self.manifest["mu_test"] = mu_test.tolist()
            for nx, path in test_paths.items():
                m = self.online_mesh(nx)
                test = fom.run_fom(
                    self.problem, m, mu_test, self.dt_for(m), cfg.t_end,
                    scheme=_SCHEMES[cfg.experiment], threads=cfg.threads,
                )
                save_snapshots(path, test)
                outputs.append(path)
        self._record_stage("snapshots", outputs)

    def _load_train_snapshots(self):
        _, train_path, _ = self._snapshot_paths()
        if self.is_euler:
            return {c: load_snapshots(train_path[c]) for c in EULER_VARIABLES}
        return load_snapshots(train_path)

    def _load_test_snapshots(self):
        _, _, test_paths = self._snapshot_paths()
        if self.is_euler:
            return {c: load_snapshots(test_paths[c]) for c in EULER_VARIABLES}
        return {nx: load_snapshots(p) for nx, p in test_paths.items()}

    def _model_path(self, r: int, variable: str | None = None):
        d = self.out / "models"
        name = f"model_r{r}.json" if variable is None else f"model_r{r}_{variable}.json"
        return d / name

    def stage_train(self):
        if self._stage_done("train") or not self.cfg.modes:
            return
        (self.out / "models").mkdir(exist_ok=True)
        cfg = self.cfg
        train = self._load_train_snapshots()
        outputs = []
        tc = TrainConfig(
            epochs=cfg.epochs, learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
            seed=cfg.seed + 1, lr_decay=cfg.lr_decay,
        )
        for r in cfg.r_values:
            if self.is_euler:
                for c in EULER_VARIABLES:
                    model = new_model(train[c], r=r, seed=cfg.seed + r,
                                      basis_hidden=cfg.basis_hidden, coeff_hidden=cfg.coeff_hidden)
                    model, _ = train_offline(model, train[c], tc)
                    path = self._model_path(r, c)
                    save_model(path, model)
                    outputs.append(path)
            else:
                model = new_model(train, r=r, seed=cfg.seed + r,
                                  basis_hidden=cfg.basis_hidden, coeff_hidden=cfg.coeff_hidden)
                model, _ = train_offline(model, train, tc)
                path = self._model_path(r)
                save_model(path, model)
                outputs.append(path)
        self._record_stage("train", outputs)

    def stage_pod(self):
        wants_pod = any(m == "pod" for m in self.cfg.modes)
        if self._stage_done("pod") or not wants_pod:
            return
        (self.out / "pod").mkdir(exist_ok=True)
        train = self._load_train_snapshots()
        outputs = []
        for r in self.cfg.r_values:
            if self.is_euler:
                for c in EULER_VARIABLES:
                    basis = pod.pod_basis(pod.assemble_snapshot_matrix(train[c]), r)
                    path = self.out / "pod" / f"basis_r{r}_{c}.bin"
                    save_basis(path, basis.Phi, basis.singular_values, basis.nodes)
                    outputs.append(path)
            else:
                basis = pod.pod_basis(pod.assemble_snapshot_matrix(train), r)
                path = self.out / "pod" / f"basis_r{r}.bin"
                save_basis(path, basis.Phi, basis.singular_values, basis.nodes)
                outputs.append(path)
        self._record_stage("pod", outputs)

    def _rom_window(self):
        if self.cfg.experiment in ("burgers-smooth", "euler-sod", "adv1d-moving-mesh"):
            return self.cfg.t_train, self.cfg.t_end  # predict beyond the window
        return 0.0, self.cfg.t_end

    def stage_rom(self):
        if self._stage_done("rom") or not self.cfg.modes:
            return
        from .snapshots import load_basis as _lb

        cfg = self.cfg
        outputs = []
        rom_dir = self.out / "rom"
        rom_dir.mkdir(exist_ok=True)
        if self.is_euler:
            outputs += self._rom_euler(rom_dir)
        elif self.is_moving:
            outputs += self._rom_moving(rom_dir)
        else:
            tests = self._load_test_snapshots()
            t0, t1 = self._rom_window()
            for nx, test in tests.items():
                mesh = self.online_mesh(nx)
                for r in cfg.r_values:
                    sources = {}
                    for mode in cfg.modes:
                        if mode == "pod":
                            if nx != cfg.nx_offline:
                                continue  # static bases are tied to their mesh
                            Phi, sv, nodes = _lb(self.out / "pod" / f"basis_r{r}.bin")
                            sources[mode] = StaticBasisSource(Phi, nodes)
                        else:
                            sources[mode] = ModelBasisSource(load_model(self._model_path(r)))
                    for mode, src in sources.items():
                        runs = []
                        for mu in test.parameters:
                            cache = {}

                            def fac(dtv, mu=mu, mesh=mesh):
                                key = round(dtv, 15)
                                if key not in cache:
                                    cache[key] = fom.build_step_operator(
                                        self.problem, mesh, dtv, mu, _SCHEMES[cfg.experiment]
                                    )
                                return cache[key]

                            # the earliest reference time at/after the window start
                            start = test.times[int(np.searchsorted(test.times, t0 - 1e-12))]
                            runs.append(run_rom(fac, src, test, mu, float(start), float(test.times[-1]), mode=mode))
                        outputs += self._write_runs(rom_dir, nx, r, mode, runs, test)
            if cfg.experiment == "adv1d-basis":
                outputs += self._basis_deviation_outputs(rom_dir)
        self._record_stage("rom", outputs)

    def _write_runs(self, rom_dir, nx, r, mode, runs, test):
        outputs = []
        d = rom_dir / f"nx{nx}_r{r}_{mode}"
        d.mkdir(parents=True, exist_ok=True)
        timing_acc = {"basis_eval_s": 0.0, "projection_solve_s": 0.0, "total_s": 0.0}
        for i, res in enumerate(runs):
            path = d / f"errors_mu{i}.csv"
            metrics.write_error_history_csv(path, res.times, res.l2_errors, res.relative_errors)
            outputs.append(path)
            for key in timing_acc:
                timing_acc[key] += res.timing[key]
        # final-time reconstructed profiles for the first test parameter
        if runs:
            res = runs[0]
            nodes = test.nodes_at(test.n_times - 1) if test.per_time_meshes else test.nodes
            sol = d / "solution_final.csv"
            metrics.write_solutions_csv(
                sol, nodes,
                {"full_order": test.values[0, test.time_index(res.times[-1])], "reduced": res.reconstructions[-1]},
            )
            outputs.append(sol)
        tpath = d / "timing.json"
        with open(tpath, "w") as fh:
            json.dump(timing_acc, fh, indent=2)
            fh.write("\n")
        outputs.append(tpath)
        return outputs

    def _rom_euler(self, rom_dir):
        from .snapshots import load_basis as _lb

        cfg = self.cfg
        outputs = []
        tests = self._load_test_snapshots()
        t0, t1 = self._rom_window()
        mesh = self.offline_mesh()
        start = tests[EULER_VARIABLES[0]].times[
            int(np.searchsorted(tests[EULER_VARIABLES[0]].times, t0 - 1e-12))
        ]
        for r in cfg.r_values:
            for mode in cfg.modes:
                if mode == "pod":
                    sources = {}
                    for c in EULER_VARIABLES:
                        Phi, _sv, nodes = _lb(self.out / "pod" / f"basis_r{r}_{c}.bin")
                        sources[c] = StaticBasisSource(Phi, nodes)
                    run_mode = "lp-explicit"
                elif mode in ("lp-explicit", "learning"):
                    sources = {c: ModelBasisSource(load_model(self._model_path(r, c))) for c in EULER_VARIABLES}
                    run_mode = mode
                else:
                    continue
                results = run_rom_euler(
                    self.problem, mesh, sources, tests, float(start), float(tests[EULER_VARIABLES[0]].times[-1]),
                    mode=run_mode,
                )
                d = rom_dir / f"nx{cfg.nx_offline}_r{r}_{mode}"
                d.mkdir(parents=True, exist_ok=True)
                for c, res in results.items():
                    path = d / f"errors_{c}.csv"
                    metrics.write_error_history_csv(path, res.times, res.l2_errors, res.relative_errors)
                    outputs.append(path)
                sol = d / "solution_final.csv"
                metrics.write_solutions_csv(
                    sol, mesh.nodes,
                    {
                        **{f"full_{c}": tests[c].values[0, -1] for c in EULER_VARIABLES},
                        **{f"reduced_{c}": results[c].reconstructions[-1] for c in EULER_VARIABLES},
                    },
                )
                outputs.append(sol)
                tpath = d / "timing.json"
                with open(tpath, "w") as fh:
                    json.dump(results[EULER_VARIABLES[0]].timing, fh, indent=2)
                    fh.write("\n")
                outputs.append(tpath)
        return outputs

    def _rom_moving(self, rom_dir):
        cfg = self.cfg
        outputs = []
        test = list(self._load_test_snapshots().values())[0]
        t0, _ = self._rom_window()
        start = test.times[int(np.searchsorted(test.times, t0 - 1e-12))]
        for r in cfg.r_values:
            model = load_model(self._model_path(r))
            src = ModelBasisSource(model)
            for mode in cfg.modes:
                if mode not in ("lp-galerkin", "learning"):
                    continue
                res = run_rom_moving_mesh(
                    self.problem, src, test, float(start), float(test.times[-1]), mode=mode
                )
                d = rom_dir / f"moving_r{r}_{mode}"
                d.mkdir(parents=True, exist_ok=True)
                path = d / "errors.csv"
                metrics.write_error_history_csv(path, res.times, res.l2_errors, res.relative_errors)
                outputs.append(path)
                tpath = d / "timing.json"
                with open(tpath, "w") as fh:
                    json.dump(res.timing, fh, indent=2)
                    fh.write("\n")
                outputs.append(tpath)
        return outputs

    def _basis_deviation_outputs(self, rom_dir):
        model = load_model(self._model_path(self.cfg.r_values[0]))
        mesh = self.offline_mesh()
        times = np.linspace(0.0, self.cfg.t_train, 6)
        rows = []
        for t in times:
            dev = basis_shift_deviation(model, self.problem.advection_speed, float(t), mesh.nodes)
            rows.append((t, dev))
        path = rom_dir / "basis_shift_deviation.csv"
        with open(path, "w") as fh:
            r = rows[0][1].size
            fh.write("t," + ",".join(f"deviation_{i+1}" for i in range(r)) + ",mean\n")
            for t, dev in rows:
                fh.write(f"{t!r}," + ",".join(repr(float(v)) for v in dev) + f",{float(dev.mean())!r}\n")
        # basis profiles at a few times for plotting
        prof = rom_dir / "basis_profiles.csv"
        cols = {}
        for t in (0.0, 0.5 * self.cfg.t_train, self.cfg.t_train):
            Phi = evaluate_basis(model, mesh.nodes, float(t), ())
            for i in range(Phi.r):
                cols[f"phi{i+1}_t{t:g}"] = Phi.Phi[:, i]
        metrics.write_solutions_csv(prof, mesh.nodes, cols)
        out = [path, prof]
        if self.cfg.figures:
            from . import figures

            fig = rom_dir / "basis_profiles.png"
            figures.basis_profiles_figure(fig, mesh.nodes, cols)
            out.append(fig)
        return out

    def stage_compare(self):
        if self._stage_done("compare") or not self.cfg.modes:
            return
        cfg = self.cfg
        d = self.out / "compare"
        d.mkdir(exist_ok=True)
        outputs = []
        rows = []
        histories = {}
        rom_dir = self.out / "rom"
        for r in cfg.r_values:
            for mode in cfg.modes:
                if self.is_moving:
                    run_dir = rom_dir / f"moving_r{r}_{mode}"
                    files = [run_dir / "errors.csv"]
                elif self.is_euler:
                    run_dir = rom_dir / f"nx{cfg.nx_offline}_r{r}_{mode}"
                    files = sorted(run_dir.glob("errors_*.csv"))
                else:
                    run_dir = rom_dir / f"nx{cfg.nx_offline}_r{r}_{mode}"
                    files = sorted(run_dir.glob("errors_mu*.csv"))
                if not files or not run_dir.exists():
                    continue
                hs = []
                for f in files:
                    data = np.loadtxt(f, delimiter=",", skiprows=1, ndmin=2)
                    hs.append(data[:, 3])
                    histories[(r, mode, f.stem)] = (data[:, 1], data[:, 3])
                e_avg = metrics.average_relative_error(hs, 0, len(hs[0]) - 1)
                rows.append((r, mode, e_avg))
        table = d / "e_average.csv"
        metrics.write_error_table_csv(table, rows)
        outputs.append(table)
        if cfg.figures and rows:
            from . import figures

            fig = d / "e_average.png"
            figures.error_vs_r_figure(fig, rows)
            outputs.append(fig)
            fig2 = d / "error_history.png"
            figures.error_history_figure(fig2, histories)
            outputs.append(fig2)
        self._record_stage("compare", outputs)


def run_experiment(cfg: ExperimentConfig, stages=None, out_root=None, force=False) -> Path:
    """Execute the requested stages (default: the full pipeline) idempotently."""
    exp = Experiment(cfg, out_root=out_root, force=force)
    if stages is None:
        return exp.run()
    return exp.run(tuple(stages))


def compare_modes(results) -> list:
    """(r, mode, E_average) rows from in-memory run results.

    All runs must share the same time window; runs are grouped by
    (reduced order, mode) and averaged over their test parameters.
    """
    if not results:
        raise ValueError("no results to compare")
    window = (results[0].times[0], results[0].times[-1])
    groups = {}
    for res in results:
        if abs(res.times[0] - window[0]) > 1e-9 or abs(res.times[-1] - window[1]) > 1e-9:
            raise ValueError(
                f"mismatched windows: {(res.times[0], res.times[-1])} vs {window}"
            )
        key = (res.metadata.get("r"), res.metadata.get("mode"))
        groups.setdefault(key, []).append(res.relative_errors)
    rows = []
    for (r, mode), hs in sorted(groups.items()):
        rows.append((r, mode, metrics.average_relative_error(hs, 0, len(hs[0]) - 1)))
    return rows


def measure_step_timing(nx_values, r: int = 20, model=None, mu=(0.23, 3.56), repeats: int = 40):
    """Per-step wall-time study on the inhomogeneous-advection operator.

    For each online resolution: median basis-evaluation time, median
    projected-step time (reduced assembly + r-by-r solve + reconstruction),
    and median full-order one-step GMRES solve time. BLAS pools are pinned
    to one thread for the measurement (multithreaded BLAS on tall-skinny
    shapes is noisy and often slower). Returns a list of dicts.
    """
    from threadpoolctl import threadpool_limits

    with threadpool_limits(1):
        return _measure_step_timing(nx_values, r, model, mu, repeats)


def _measure_step_timing(nx_values, r, model, mu, repeats):
    problem = inhomogeneous_problem()
    mu = np.asarray(mu, dtype=float)
    out = []
    for nx in nx_values:
        mesh = fom.Mesh1D.uniform(0.0, 2.5, int(nx))
        dt = 2 * mesh.spacing
        op = fom.build_step_operator(problem, mesh, dt, mu, "crank_nicolson")
        u = problem.initial_condition(mesh.nodes, mu)
        b = op.rhs(u)
        fom_t = []
        for _ in range(max(6, repeats // 4)):
            tic = _time.perf_counter()
            gmres(op.apply_F, b, tol=1e-10, x0=u)
            fom_t.append(_time.perf_counter() - tic)
        src = ModelBasisSource(model)
        Phi = src.basis_at(mesh.nodes, 0.5, mu)
        from .linalg import least_squares

        alpha = least_squares(Phi.Phi, u)
        tb, tp = [], []
        for k in range(repeats):
            tic = _time.perf_counter()
            Phi_n = src.basis_at(mesh.nodes, 0.5 + (k % 8) * dt, mu)
            tb.append(_time.perf_counter() - tic)
            u_r = Phi_n.Phi @ alpha
            tic = _time.perf_counter()
            bv = op.rhs(u_r)
            a2 = online_step_galerkin(op.apply_F, bv, Phi_n, alpha, linear=True)
            _ = Phi_n.Phi @ a2
            tp.append(_time.perf_counter() - tic)
        out.append(
            {
                "nx": int(nx),
                "r": int(r),
                "basis_eval_s": float(np.median(tb)),
                "projection_solve_s": float(np.median(tp)),
                "fom_solve_s": float(np.median(fom_t)),
            }
        )
    return out
