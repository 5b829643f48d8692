"""Builtin simulation studies and the driver that runs them end to end."""
import copy
import time
from dataclasses import replace

import numpy as np

from . import export
from .baselines import density_from_particles, kalman_filter, particle_filter
from .config import ConfigError, ExperimentConfig
from .filter import run_filter
from .linalg import sqrt_factor
from .mixture import GaussianMixture, evaluate_pdf, mixture_moments
from .model import GmmStateSpaceModel, simulate
from .metrics import metrics_report
from .naive import run_filter_naive

_SQRT_01 = float(np.sqrt(0.1))

BUILTIN_EXPERIMENTS = {
    # linear model started from a deliberately wrong 25-component prior
    "linear-ssm": {
        "name": "linear-ssm",
        "steps": 100,
        "seed": 1,
        "methods": ["gmmf", "kalman", "naive"],
        "model": {
            "type": "gmm",
            "prior": {"grid": {"lo": -10.0, "hi": 10.0, "counts": [5, 5], "variance": 400.0}},
            "process": [
                {
                    "weight": 1.0,
                    "A": [[1.0, 0.01], [0.0, 1.0]],
                    "Q": [[0.01, 0.0], [0.0, 0.01]],
                    "offset": {"kind": "gaussian", "amplitude": [0.0, 1.0], "std": 0.2, "seed": 7},
                }
            ],
            "measurement": [{"weight": 1.0, "C": [[1.0, 0.0]], "R": [[0.1]]}],
        },
        "truth_prior": [{"weight": 1.0, "mean": [0.0, 0.0], "cov": [[1.0, 0.0], [0.0, 1.0]]}],
        "grid": {"snapshots": [1, 5, 20, 100], "kinds": ["predicted"]},
    },
    # switching dynamics and a two-mode measurement offset
    "gmm-switching": {
        "name": "gmm-switching",
        "steps": 200,
        "seed": 2,
        "methods": ["gmmf", "kalman", "naive"],
        "model": {
            "type": "gmm",
            "prior": [{"weight": 1.0, "mean": [0.0, 0.0], "cov": [[1.0, 0.0], [0.0, 1.0]]}],
            "process": [
                {
                    "weight": 0.99,
                    "A": [[1.0, 0.1], [0.0, 1.0]],
                    "Q_sqrt": [[0.1, 0.0], [0.0, 0.1]],
                    "offset": {"kind": "sin", "amplitude": [1.0, 0.0],
                               "frequency": 4 * np.pi / 200, "phase": 0.0},
                },
                {
                    "weight": 0.01,
                    "A": [[0.1, 0.01], [0.0, 0.1]],
                    "Q_sqrt": [[0.003, 0.0], [0.0, 0.003]],
                    "offset": {"kind": "sin", "amplitude": [1.0, 0.0],
                               "frequency": 4 * np.pi / 200, "phase": 0.0},
                },
            ],
            "measurement": [
                {"weight": 0.1, "C": [[1.0, 0.0]], "R_sqrt": [[_SQRT_01]],
                 "offset": {"kind": "constant", "amplitude": [12.5]}},
                {"weight": 0.9, "C": [[1.0, 0.0]], "R_sqrt": [[_SQRT_01]],
                 "offset": {"kind": "constant", "amplitude": [-12.5]}},
            ],
        },
        "grid": {"snapshots": []},
    },
    # quadratic measurement: sign of the state is ambiguous
    "bimodal": {
        "name": "bimodal",
        "steps": 100,
        "seed": 3,
        "methods": ["gmmf", "smc"],
        "smc_particles": 100_000,
        "model": {
            "type": "nonlinear",
            "builtin": "quadratic-measurement",
            "params": {"amplitude": 5.0, "time_step": 0.1, "process_var": 0.01, "meas_var": 25.0},
            "prior": {"grid": {"lo": -10.0, "hi": 10.0, "counts": [50], "variance": 0.1}},
        },
        "filter": {
            "filter_max": 30,
            "predict_max": 30,
            "split": {"n_split": 3, "spread": 0.5},
            "split_stages": ["measurement"],
        },
        "grid": {"snapshots": [1, 30, 50, 60], "symmetric": True},
    },
    # univariate growth benchmark, nonlinear in both equations
    "nonlinear-benchmark": {
        "name": "nonlinear-benchmark",
        "steps": 100,
        "seed": 4,
        "methods": ["gmmf", "smc"],
        "smc_particles": 10_000,
        "model": {
            "type": "nonlinear",
            "builtin": "ucm-benchmark",
            "params": {"a": 0.5, "b": 25.0, "c": 8.0, "d": 0.05, "form": "standard"},
            "prior": [{"weight": 1.0, "mean": [0.0], "cov": [[5.0]]}],
        },
        "filter": {
            "filter_max": 50,
            "predict_max": 50,
            "split": {"n_split": 3, "spread": 0.5},
            "split_stages": ["measurement", "time"],
        },
        "grid": {"snapshots": [1, 5, 50, 80]},
    },
}


def builtin_config(name):
    try:
        return ExperimentConfig.from_dict(copy.deepcopy(BUILTIN_EXPERIMENTS[name]))
    except KeyError:
        raise KeyError(name) from None


def _kalman_inputs(model, truth_prior):
    """Most likely linear component pair, started from the true (or moment-matched) prior."""
    proc = max(model.process, key=lambda c: c.weight)
    meas = max(model.measurement, key=lambda c: c.weight)
    mean, cov = mixture_moments(truth_prior if truth_prior is not None else model.prior)
    return proc, meas, mean, cov


def _grid_axes(cfg, states, model):
    g = cfg.grid
    n = states.shape[1]
    _, cov = mixture_moments(model.prior)
    pad = 3.0 * np.sqrt(np.diag(cov))
    lo = np.min(states, axis=0) - pad
    hi = np.max(states, axis=0) + pad
    if g.symmetric:
        r = np.maximum(np.abs(lo), np.abs(hi))
        lo, hi = -r, r
    if g.lo is not None:
        lo = np.broadcast_to(np.asarray(g.lo, dtype=float), (n,))
    if g.hi is not None:
        hi = np.broadcast_to(np.asarray(g.hi, dtype=float), (n,))
    if n == 1:
        return [np.linspace(lo[0], hi[0], g.points)]
    if n == 2:
        return [np.linspace(lo[i], hi[i], g.points_2d) for i in range(2)]
    return None


def _mixture_on_grid(m, axes):
    if len(axes) == 1:
        return evaluate_pdf(m, axes[0][:, None])
    mx, my = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([mx.ravel(), my.ravel()])
    return evaluate_pdf(m, pts).reshape(mx.shape)


def simulate_experiment(cfg, seed=None):
    """Simulate the data of an experiment.

    The truth is drawn from ``truth_prior`` when the config has one, otherwise
    from the model prior. Returns ``(model, simulation)``.
    """
    model = cfg.build_model()
    truth_prior = cfg.build_truth_prior()
    sim_model = model if truth_prior is None else replace(model, prior=truth_prior)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    return model, simulate(sim_model, cfg.steps, rng)


def run_experiment(cfg, out_dir, save_mixtures=False, measurements=None, truth=None, log=print):
    """Simulate (or load) data, run the configured methods and write all artifacts.

    Returns the metrics report dictionary.
    """
    fcfg = cfg.build_filter()
    truth_prior = cfg.build_truth_prior()
    if measurements is None:
        model, sim = simulate_experiment(cfg)
        states, ys = sim.states, sim.measurements
    else:
        model = cfg.build_model()
        ys = np.asarray(measurements, dtype=float)
        states = truth
    out_dir = export.ensure_dir(out_dir)
    export.write_truth(out_dir / "truth.csv", ys, states)

    traces, runtimes = {}, {}
    densities = []
    axes = _grid_axes(cfg, states, model) if states is not None and cfg.grid.snapshots else None
    snapshots = [t for t in cfg.grid.snapshots if 1 <= t <= len(ys)]

    for method in cfg.methods:
        start = time.perf_counter()
        if method == "gmmf":
            tr = run_filter(model, ys, fcfg)
            traces[method] = tr
            if save_mixtures:
                export.write_mixtures(out_dir / "mixtures_gmmf.json", tr)
        elif method == "naive":
            traces[method] = run_filter_naive(model, ys, fcfg)
        elif method == "kalman":
            if not isinstance(model, GmmStateSpaceModel):
                raise ConfigError("methods", "the kalman baseline needs a linear mixture model")
            proc, meas, mean, cov = _kalman_inputs(model, truth_prior)
            res = kalman_filter(proc.A, proc.Q_sqrt.T @ proc.Q_sqrt, meas.C,
                                meas.R_sqrt.T @ meas.R_sqrt, mean, cov, ys,
                                u=proc.offset, v=meas.offset)
            traces[method] = export.KalmanTrace(res)
        elif method == "smc":
            pf_rng = np.random.default_rng([cfg.seed, 1])
            traces[method] = particle_filter(model, ys, cfg.smc_particles, pf_rng, keep=snapshots)
        runtimes[method] = time.perf_counter() - start
        export.write_trace(out_dir / f"trace_{method}.csv", traces[method])
        log(f"{method}: done in {runtimes[method]:.2f} s")

        if axes is None:
            continue
        tr = traces[method]
        for t in snapshots:
            for kind in cfg.grid.kinds:
                dens = None
                if method == "gmmf":
                    m = (tr.predicted if kind == "predicted" else tr.filtered)[t - 1]
                    dens = _mixture_on_grid(m, axes)
                elif method == "kalman":
                    mean, cov = tr.moments(kind, t)
                    dens = _mixture_on_grid(GaussianMixture.single(mean, sqrt_factor(cov)), axes)
                elif method == "smc":
                    cloud = (tr.predicted if kind == "predicted" else tr.filtered)[t]
                    grid = axes[0] if len(axes) == 1 else axes
                    dens = density_from_particles(cloud, grid)
                if dens is not None:
                    densities.append((method, kind, t, dens))
    density_files = []
    if densities:
        path = out_dir / "densities.csv"
        export.write_densities(path, axes, densities)
        density_files.append(path.name)

    report = metrics_report(states, traces, runtimes=runtimes, density_files=density_files)
    report["experiment"] = cfg.name
    report["seed"] = cfg.seed
    report["steps"] = len(ys)
    export.write_json(out_dir / "metrics.json", report)
    export.write_json(out_dir / "config.json", cfg.to_dict())
    return report
