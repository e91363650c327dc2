"""Experiment configuration, the deterministic pipeline, and CSV emission.

A configuration is a flat key = value text file; presets provide desk-scale
defaults reproducing the reported experiments at reduced size.  Every
emitted row carries the seed and the configuration hash, and each pipeline
stage caches its artifact under that hash, so reruns are bit-identical and
cheap.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .bases import SineBasis, SphereBasis, TorusBasis
from .bases.torus import load_eigenbasis, save_eigenbasis
from .blocks import build_model, build_naive_model
from .exceptions import ConfigError
from .metrics import (
    error_vs_time,
    evaluate_on_grid,
    mse_metric,
    oracle_on_grid,
    stability_metric,
)
from .nn import load_params, save_params
from .oracle import PdeSpec, imex_bdf4_solve, load_solution, save_solution, solution_key
from .training import (
    FunctionFamilySpec,
    Phase,
    ScheduleData,
    dataset_key,
    load_dataset,
    make_triples,
    run_schedule,
    sample_family,
)

__all__ = ["ExperimentConfig", "PRESETS", "run_experiment", "metric_rows_to_csv"]

CACHE_ENV = "SPECTRAL_PINN_CACHE"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "geometry": "interval",
    "pde": "heat",
    "alpha": "0.01",
    "epsilon": "0.1",
    "torus_R": "2.0",
    "torus_r": "1.0",
    "train.degree": "20",
    "generalize.degree": "30",
    "train.n_triples": "5000",
    "train.n_initial": "256",
    "train.n_pretrain": "1000",
    "train.epochs": "60",
    "train.pretrain_epochs": "60",
    "train.step_epochs": "20",
    "train.joint_epochs": "25",
    "train.lr": "1e-3",
    "train.batch_size": "256",
    "horizon": "0.5",
    "eval.n_test": "20",
    "eval.time_steps": "500",
    "eval.oracle_dt": "1e-3",
    "noise.variance": "0.3",
    "models": "naive,spectral_full,spectral_mlp_step,spectral_mlp_recon",
    "mesh.n_theta": "15",
    "mesh.n_phi": "15",
    "sphere.degree": "9",
    "encoder.dim": "0",
    "naive.width": "0",
    "naive.layers": "0",
    "seed": "0",
}


@dataclass
class ExperimentConfig:
    """Flat, fully serialized run description; no hidden state."""

    values: dict

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        values = dict(_DEFAULTS)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = val
        return cls(values)

    @classmethod
    def from_preset(cls, name: str, seed: Optional[int] = None) -> "ExperimentConfig":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
        values = dict(_DEFAULTS)
        values.update(PRESETS[name])
        if seed is not None:
            values["seed"] = str(seed)
        return cls(values)

    def __getitem__(self, key: str) -> str:
        return self.values[key]

    def geti(self, key: str) -> int:
        try:
            return int(self.values[key])
        except ValueError:
            raise ConfigError(f"config key {key} must be an integer")

    def getf(self, key: str) -> float:
        try:
            return float(self.values[key])
        except ValueError:
            raise ConfigError(f"config key {key} must be a number")

    def model_list(self) -> list:
        return [m.strip() for m in self.values["models"].split(",") if m.strip()]

    def hash(self) -> str:
        payload = "\n".join(f"{k}={self.values[k]}" for k in sorted(self.values))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def serialized(self) -> str:
        return "\n".join(f"{k} = {self.values[k]}" for k in sorted(self.values)) + "\n"


PRESETS = {
    # heat equation on [0,1], reported-scale family with desk epochs
    "table1-desk": {
        "geometry": "interval", "pde": "heat",
        "train.n_triples": "5000", "train.epochs": "60",
        "train.pretrain_epochs": "60",
        "models": "naive,spectral_full,spectral_mlp_step,spectral_mlp_recon",
    },
    "table1-paper": {
        "geometry": "interval", "pde": "heat",
        "train.n_triples": "25000", "train.epochs": "200",
        "train.pretrain_epochs": "300",
        "models": "naive,spectral_full,spectral_mlp_step,spectral_mlp_recon",
    },
    # Allen-Cahn on the sphere, degree 5 desk model (degree 9 at paper scale)
    "table3-desk": {
        "geometry": "sphere", "pde": "allen_cahn", "epsilon": "0.1",
        "horizon": "1.0", "sphere.degree": "5", "generalize.degree": "8",
        "train.degree": "5", "train.n_triples": "3000",
        "train.n_initial": "128", "train.n_pretrain": "1500",
        "train.pretrain_epochs": "150", "train.step_epochs": "20",
        "train.joint_epochs": "25", "eval.time_steps": "100",
        "naive.width": "96", "naive.layers": "8",
        "models": "naive,spectral_a,spectral_b,spectral_c",
    },
    "table3-paper": {
        "geometry": "sphere", "pde": "allen_cahn", "epsilon": "0.1",
        "horizon": "1.0", "sphere.degree": "9", "generalize.degree": "14",
        "train.degree": "9", "train.n_triples": "5000",
        "train.n_initial": "256", "train.n_pretrain": "5000",
        "train.pretrain_epochs": "300", "eval.time_steps": "500",
        "models": "naive,spectral_a,spectral_b,spectral_c",
    },
    # Allen-Cahn on the torus; 9x9 mesh keeps the dense eigensolve light
    "table5-desk": {
        "geometry": "torus", "pde": "allen_cahn", "epsilon": "0.1",
        "horizon": "1.0", "mesh.n_theta": "9", "mesh.n_phi": "9",
        "train.degree": "3", "generalize.degree": "4",
        "train.n_triples": "2000", "train.n_initial": "96",
        "train.n_pretrain": "1000", "train.pretrain_epochs": "120",
        "train.step_epochs": "15", "train.joint_epochs": "15",
        "eval.time_steps": "100", "encoder.dim": "54",
        "naive.width": "64", "naive.layers": "8",
        "models": "naive,numerical_a,encoder_a,numerical_b",
    },
    "table5-paper": {
        "geometry": "torus", "pde": "allen_cahn", "epsilon": "0.1",
        "horizon": "1.0", "mesh.n_theta": "15", "mesh.n_phi": "15",
        "train.degree": "5", "generalize.degree": "10",
        "train.n_triples": "5000", "train.n_initial": "256",
        "train.n_pretrain": "5000", "train.pretrain_epochs": "300",
        "eval.time_steps": "500", "encoder.dim": "150",
        "models": "naive,numerical_a,encoder_a,numerical_b",
    },
}

_LONG_RUNNING = {"table1-paper", "table3-paper", "table5-paper"}


# ---------------------------------------------------------------------------
# Model catalogue per geometry
# ---------------------------------------------------------------------------

_VARIANTS = {
    "spectral_full": ("linear_trained", "realization_heat", "exact_sine"),
    "spectral_mlp_step": ("linear_trained", "mlp_plain", "exact_sine"),
    "spectral_mlp_recon": ("linear_trained", "realization_heat", "mlp_interval"),
    "spectral_a": ("linear_trained", "exp_nonlinear_a", "sphere_spectral_activations"),
    "spectral_b": ("linear_trained", "exp_standard_b", "sphere_spectral_activations"),
    "spectral_c": ("linear_trained", "naive_mlp_c", "sphere_spectral_activations"),
    "numerical_a": ("grid_conv_trained", "torus_a", "torus_mlp"),
    "numerical_b": ("grid_conv_trained", "torus_b", "torus_mlp"),
    "encoder_a": ("encoder", "torus_a", "decoder"),
}


def _cache_dir(out_dir: Path) -> Path:
    env = os.environ.get(CACHE_ENV)
    cache = Path(env) if env else out_dir / "cache"
    cache.mkdir(parents=True, exist_ok=True)
    return cache


@dataclass
class MetricRow:
    run_id: str
    geometry: str
    variant: str
    epsilon_or_alpha: float
    metric: str
    t: Optional[float]
    value: float
    seed: int
    config_hash: str

    HEADER = "run_id,geometry,variant,epsilon_or_alpha,metric,t,value,seed,config_hash"

    def line(self) -> str:
        t = "" if self.t is None else repr(self.t)
        return (f"{self.run_id},{self.geometry},{self.variant},"
                f"{self.epsilon_or_alpha!r},{self.metric},{t},{self.value!r},"
                f"{self.seed},{self.config_hash}")


def metric_rows_to_csv(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write(MetricRow.HEADER + "\n")
        for r in rows:
            fh.write(r.line() + "\n")


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------


class _Stage:
    """Shared state for one experiment run."""

    def __init__(self, config: ExperimentConfig, out_dir: Path):
        self.config = config
        self.out = out_dir
        self.cache = _cache_dir(out_dir)
        self.seed = config.geti("seed")
        self.geometry = config["geometry"]
        self.chash = config.hash()

    # -- basis --------------------------------------------------------------
    def basis(self):
        g = self.geometry
        if g == "interval":
            return SineBasis(20, 101).fit()
        if g == "sphere":
            return SphereBasis(self.config.geti("sphere.degree")).fit()
        nt, np_ = self.config.geti("mesh.n_theta"), self.config.geti("mesh.n_phi")
        R, r = self.config.getf("torus_R"), self.config.getf("torus_r")
        path = self.cache / f"eig_{nt}x{np_}_{R}_{r}.bin"
        if path.exists():
            return load_eigenbasis(path)
        tb = TorusBasis(R, r, nt, np_).fit()
        save_eigenbasis(path, tb)
        return tb

    def model_config(self, basis) -> dict:
        g = self.geometry
        cfg = {
            "alpha": self.config.getf("alpha"),
            "epsilon": self.config.getf("epsilon"),
            "torus_R": self.config.getf("torus_R"),
            "torus_r": self.config.getf("torus_r"),
        }
        if g == "interval":
            cfg.update(n_samples=101, n_coeffs=20)
        elif g == "sphere":
            cfg.update(n_samples=basis.n_grid, n_coeffs=basis.n_coeffs,
                       degree=basis.degree)
        else:
            cfg.update(n_samples=basis.n_grid, n_coeffs=basis.n_coeffs,
                       grid_shape=(basis.n_theta, basis.n_phi))
        if self.config.geti("naive.width"):
            cfg["naive_width"] = self.config.geti("naive.width")
        if self.config.geti("naive.layers"):
            cfg["naive_layers"] = self.config.geti("naive.layers")
        return cfg

    def family(self, degree=None) -> FunctionFamilySpec:
        return FunctionFamilySpec(self.geometry,
                                  degree or self.config.geti("train.degree"),
                                  horizon=self.config.getf("horizon"))

    # -- datasets -------------------------------------------------------------
    def datasets(self, basis) -> ScheduleData:
        spec = self.family()
        n = self.config.geti("train.n_triples")
        key = dataset_key(spec, n, self.seed)
        path = self.cache / f"triples_{key}.bin"
        if path.exists():
            triples = load_dataset(path)
        else:
            triples = make_triples(spec, n, self.seed, basis)
            save_dataset_safe(path, triples)
        n_pre = self.config.geti("train.n_pretrain")
        pre_path = self.cache / f"pretrain_{dataset_key(spec, n_pre, self.seed + 1)}.bin"
        if pre_path.exists():
            pre = load_dataset(pre_path)
        else:
            pre = make_triples(spec, n_pre, self.seed + 1, basis)
            save_dataset_safe(pre_path, pre)
        _, F0 = sample_family(spec, self.config.geti("train.n_initial"),
                              self.seed + 2, basis)
        grid = self._grid(basis)
        targets = pre.coeffs if self.geometry == "interval" else self._transform_targets(basis, pre)
        return ScheduleData(triples=triples, l0_samples=F0, grid_points=grid,
                            pretrain=pre, pretrain_coeff_targets=targets)

    def _transform_targets(self, basis, pre):
        if self.geometry == "sphere":
            return pre.coeffs if basis.degree == pre.spec.degree \
                else basis.transform(pre.samples)
        return basis.transform(pre.samples)   # exact projection (torus)

    def _grid(self, basis):
        if self.geometry == "interval":
            return basis.grid_
        if self.geometry == "sphere":
            return (basis.grid_theta_, basis.grid_phi_)
        mesh = basis.mesh_
        tt, pp = np.meshgrid(mesh.theta, mesh.phi, indexing="ij")
        return (tt.ravel(), pp.ravel())

    # -- models ---------------------------------------------------------------
    def build(self, name: str, basis):
        cfg = self.model_config(basis)
        if name == "naive":
            return build_naive_model(self.geometry, cfg, self.seed + 50)
        if name not in _VARIANTS:
            raise ConfigError(f"unknown model variant {name!r}")
        if name == "encoder_a":
            cfg = dict(cfg)
            enc = self.config.geti("encoder.dim")
            if enc:
                cfg["n_coeffs"] = enc
        variants = _VARIANTS[name]
        if variants[0] == "exact_operator":
            cfg = dict(cfg, matrix=basis.pinv_)
        return build_model(self.geometry, variants, cfg, self.seed + 50)

    def phases(self, name: str) -> list:
        c = self.config
        lr = c.getf("train.lr")
        bs = c.geti("train.batch_size")
        if name == "naive":
            ep = c.geti("train.epochs") if self.geometry == "interval" else \
                c.geti("train.step_epochs") + c.geti("train.joint_epochs")
            return [Phase("main", ep, ("l0", "ld"), lr=lr, batch_size=bs)]
        if self.geometry == "interval":
            return [
                Phase("pretrain", c.geti("train.pretrain_epochs"),
                      ("transform_supervised",), ("transformation",),
                      lr=2e-3, batch_size=bs),
                Phase("main", c.geti("train.epochs"), ("l0", "ld"),
                      lr=lr, batch_size=bs),
            ]
        pre: tuple
        if name.startswith("numerical"):
            pre = ("transform_supervised", "reconstruction_supervised")
        else:
            pre = ("autoencode",)
        return [
            Phase("pretrain", c.geti("train.pretrain_epochs"), pre,
                  ("transformation", "reconstruction"), lr=2e-3, batch_size=bs),
            Phase("stepping", c.geti("train.step_epochs"), ("l0", "ld", "lcoef"),
                  ("time_stepping",), lr=lr, batch_size=bs),
            Phase("joint", c.geti("train.joint_epochs"), ("l0", "ld", "lcoef"),
                  lr=lr, batch_size=bs),
        ]

    def train(self, name: str, basis, data: ScheduleData):
        """Train (or load from cache) one model; returns (model, traces)."""
        model = self.build(name, basis)
        params = model.params()
        ckpt = self.cache / f"model_{name}_{self.chash}.bin"
        if ckpt.exists():
            values, _ = load_params(ckpt)
            params.set_values(values)
            return model, {}
        traces = run_schedule(model, data, self.phases(name), seed=self.seed + 77)
        save_params(ckpt, params, header={
            "variant": name, "geometry": self.geometry,
            "config_hash": self.chash,
            "param_count": model.param_count,
        })
        return model, traces

    # -- oracle ---------------------------------------------------------------
    def oracle(self, basis, coeffs_model: np.ndarray, tag: str):
        """Per-IC solutions (sphere/torus); None on the interval (analytic)."""
        if self.geometry == "interval":
            return None
        dt = self.config.getf("eval.oracle_dt")
        pde = PdeSpec("allen_cahn", self.config.getf("epsilon"), self.geometry,
                      horizon=self.config.getf("horizon"))
        sols = []
        for i, c0 in enumerate(coeffs_model):
            key = solution_key(pde, tag, c0, dt)
            path = self.cache / f"traj_{key}.bin"
            if path.exists():
                sols.append(load_solution(path, pde))
            else:
                sol = imex_bdf4_solve(c0, pde, basis, dt=dt)
                save_solution(path, sol)
                sols.append(sol)
        return sols


def save_dataset_safe(path, ds):
    from .training import save_dataset
    save_dataset(path, ds)


# ---------------------------------------------------------------------------
# run_experiment
# ---------------------------------------------------------------------------


def run_experiment(config: ExperimentConfig, out_dir, models=None,
                   stages=("train", "evaluate", "stability", "generalize")) -> dict:
    """Deterministic pipeline: bases, datasets, training, oracle, metrics.

    Returns {variant: {metric: value}} and writes metrics.csv,
    error_vs_time.csv and config.resolved.txt under ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved.txt").write_text(config.serialized())

    st = _Stage(config, out_dir)
    basis = st.basis()
    data = st.datasets(basis)
    seed = st.seed
    chash = st.chash
    geometry = st.geometry
    run_id = f"{geometry}-{chash[:8]}"
    eps_or_alpha = st.config.getf("alpha") if geometry == "interval" \
        else st.config.getf("epsilon")

    model_names = models or config.model_list()
    trained = {}
    for name in model_names:
        trained[name] = st.train(name, basis, data)[0]

    rows: list = []
    results: dict = {name: {"param_count": trained[name].param_count}
                     for name in model_names}
    for name in model_names:
        rows.append(MetricRow(run_id, geometry, name, eps_or_alpha,
                              "param_count", None,
                              float(trained[name].param_count), seed, chash))

    horizon = config.getf("horizon")
    n_steps = config.geti("eval.time_steps")
    times = horizon * np.arange(n_steps + 1) / n_steps
    grid = st._grid(basis)

    spec_test = st.family()
    Ct, Ft = sample_family(spec_test, config.geti("eval.n_test"), seed + 3, basis)

    curves = {}
    if "evaluate" in stages:
        if geometry == "interval":
            truth = oracle_on_grid(None, None, times, coeffs_true=Ct,
                                   grid_points=grid, alpha=config.getf("alpha"))
        else:
            coeffs0 = basis.transform(Ft)
            sols = st.oracle(basis, coeffs0, tag=f"{geometry}-test")
            truth = oracle_on_grid(sols, basis, times)
        for name in model_names:
            pred = evaluate_on_grid(trained[name], Ft, times, grid)
            mse = mse_metric(pred, truth)
            results[name]["mse"] = mse
            rows.append(MetricRow(run_id, geometry, name, eps_or_alpha,
                                  "mse", None, mse, seed, chash))
            curve = error_vs_time(pred, truth)
            curves[name] = curve
            for t, v in zip(times, curve):
                rows.append(MetricRow(run_id, geometry, name, eps_or_alpha,
                                      "error_vs_time", float(t), float(v),
                                      seed, chash))

    if "stability" in stages:
        report_times = [0.2, 0.4, 0.5] if geometry == "interval" else [0.4, 0.7, 1.0]
        for name in model_names:
            vals = stability_metric(trained[name], Ft, report_times, grid,
                                    noise_variance=config.getf("noise.variance"),
                                    seed=seed + 4)
            results[name]["stability"] = dict(zip(report_times, vals.tolist()))
            for t, v in zip(report_times, vals):
                rows.append(MetricRow(run_id, geometry, name, eps_or_alpha,
                                      "stability", float(t), float(v), seed, chash))

    if "generalize" in stages:
        gspec = st.family(config.geti("generalize.degree"))
        Cg, Fg = sample_family(gspec, config.geti("eval.n_test"), seed + 5, basis)
        if geometry == "interval":
            gtruth = oracle_on_grid(None, None, times, coeffs_true=Cg,
                                    grid_points=grid, alpha=config.getf("alpha"))
        else:
            coeffs0 = basis.transform(Fg)
            sols = st.oracle(basis, coeffs0, tag=f"{geometry}-gen")
            gtruth = oracle_on_grid(sols, basis, times)
        for name in model_names:
            pred = evaluate_on_grid(trained[name], Fg, times, grid)
            gm = mse_metric(pred, gtruth)
            results[name]["generalization_mse"] = gm
            rows.append(MetricRow(run_id, geometry, name, eps_or_alpha,
                                  "generalization_mse", None, gm, seed, chash))

    metric_rows_to_csv(rows, out_dir / "metrics.csv")
    with open(out_dir / "error_vs_time.csv", "w") as fh:
        fh.write("t,series,value\n")
        for name, curve in curves.items():
            for t, v in zip(times, curve):
                fh.write(f"{t!r},{name},{float(v)!r}\n")
    return results
