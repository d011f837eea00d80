"""Shared experiment protocols: shape training, demo-start reproductions,
disturbance trials and the evaluation grid. The CLI, the scripts and the
acceptance tests all go through these functions so they measure the same thing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics
from .control import ControllerConfig
from .dataset import DemonstrationSet, add_noise, synth_shape
from .learn import LearnConfig, TrainResult, initial_params, train
from .sim import UniformDisturbance, residual_check, rollout_batch

# synthetic benchmark used throughout: 3 demos of 200 samples, 2% warp
BENCH_M, BENCH_N, BENCH_JITTER = 3, 200, 0.02


def default_dt(dset: DemonstrationSet) -> float:
    """One fifth of the demo sampling interval."""
    return dset.sample_interval / 5.0


def bench_set(shape: str, seed: int = 0, noise: float = 0.0, noise_seed: int = 0) -> DemonstrationSet:
    dset = synth_shape(shape, BENCH_M, BENCH_N, BENCH_JITTER, seed)
    return add_noise(dset, noise, noise_seed)


def disturbance_amplitude(dset: DemonstrationSet, level: float) -> np.ndarray:
    """Per-axis eta amplitude: ``level`` times the demonstrated velocity range."""
    return level * np.ptp(dset.xdot, axis=0)


@dataclass
class ShapeModel:
    shape: str
    dset: DemonstrationSet
    trained: TrainResult
    gmr_only: object       # EM mixture, the regression-only baseline

    @property
    def mixture(self):
        return self.trained.mixture

    @property
    def clf(self):
        return self.trained.clf


def fit_shape(shape: str, lcfg: LearnConfig | None = None, ccfg: ControllerConfig | None = None,
              dset: DemonstrationSet | None = None) -> ShapeModel:
    lcfg = lcfg or LearnConfig()
    ccfg = ccfg or ControllerConfig()
    dset = dset if dset is not None else bench_set(shape)
    trained = train(dset, lcfg, ccfg)
    em_mix, _, _ = initial_params(dset, lcfg)
    return ShapeModel(shape, dset, trained, em_mix)


def reproduce(mix, clf, ccfg, dset, dt=None, max_steps=10000, disturbances=None, conv_tol=None,
              on_blowup="stop"):
    """Rollouts from every demonstration start."""
    dt = default_dt(dset) if dt is None else dt
    return rollout_batch(mix, clf, ccfg, dset.starts, dt, max_steps, disturbances, conv_tol, on_blowup)


def mean_sea(dset: DemonstrationSet, results, demo_index=None) -> float:
    """Mean swept error area of each rollout against the demo it started from."""
    idx = range(len(results)) if demo_index is None else demo_index
    return float(np.mean([metrics.swept_error_area(dset.positions[i], r.states)
                          for i, r in zip(idx, results)]))


@dataclass
class DisturbedTrial:
    results: list
    reports: list
    demo_index: np.ndarray
    seeds: np.ndarray

    @property
    def violations(self) -> int:
        return sum(not r.tail_inside for r in self.reports)

    @property
    def inside_fraction(self) -> float:
        return 1.0 - self.violations / len(self.reports)

    def median_effort(self) -> float:
        return float(np.median([r.control_effort for r in self.results]))

    def median_tail_radius(self) -> float:
        return float(np.median([r.tail_max_radius for r in self.reports]))


def disturbed_trial(mix, clf, ccfg, dset, level, seeds, dt=None, max_steps=4000, hold=0.01,
                    omega_cfg: ControllerConfig | None = None) -> DisturbedTrial:
    """Uniform eta at ``level`` of the velocity range from every demo start, one run per seed.

    Runs the full horizon (no early stop) so the tail shows the ultimate
    behaviour. The residual set is that of the Sontag rate at the controller's
    rho0 unless ``omega_cfg`` says otherwise.
    """
    seeds = np.asarray(list(seeds), dtype=int)
    amp = disturbance_amplitude(dset, level)
    demo_index = np.repeat(np.arange(dset.m), len(seeds))
    run_seeds = np.tile(seeds, dset.m)
    X0 = dset.starts[demo_index]
    dists = [UniformDisturbance(amp, hold=hold, seed=int(s)) for s in run_seeds]
    dt = default_dt(dset) if dt is None else dt
    results = rollout_batch(mix, clf, ccfg, X0, dt, max_steps, dists, conv_tol=0.0, on_blowup="stop")
    omega_cfg = omega_cfg or ControllerConfig(rho0=ccfg.rho0, kappa=ccfg.kappa)
    reports = [residual_check(r, clf, mix, omega_cfg) for r in results]
    return DisturbedTrial(results, reports, demo_index, run_seeds)


def evaluate_model(model: ShapeModel, variants, noise_levels, rho0s, seeds, dt=None,
                   max_steps=10000, disturbed_steps=4000, hold=0.01, kappa0=1.0):
    """EvalRows for every (variant, eta level, rho0) cell.

    The "off" variant is the regression-only baseline: the EM mixture rolled
    out without correction. Convergence is |x| reaching conv_tol for eta = 0
    and the tail staying inside the inflated residual set otherwise.
    """
    rows = []
    dset = model.dset
    for variant in variants:
        for level in noise_levels:
            for rho0 in rho0s:
                ccfg = ControllerConfig(variant=variant, rho0=rho0, kappa0=kappa0)
                mix = model.gmr_only if variant == "off" else model.mixture
                if level == 0:
                    res = reproduce(mix, model.clf, ccfg, dset, dt, max_steps)
                    conv = float(np.mean([r.converged for r in res]))
                    sea = mean_sea(dset, res)
                else:
                    trial = disturbed_trial(mix, model.clf, ccfg, dset, level, seeds, dt, disturbed_steps, hold)
                    res = trial.results
                    conv = trial.inside_fraction
                    sea = mean_sea(dset, res, trial.demo_index)
                effort = float(np.mean([r.control_effort for r in res]))
                rows.append(metrics.EvalRow(model.shape, variant, float(level), float(rho0), sea,
                                            metrics.velocity_mse(mix, model.clf, ccfg, dset), effort, conv))
    return rows
