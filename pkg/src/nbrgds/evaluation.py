"""Held-out prediction, error metrics and the repeat/compare experiment loop."""
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chains import ChainConfig, ChainState, step
from .data import make_mask
from .errors import ConfigError
from .inference import MaskSpec, Schedule, forecast_delta, run_gibbs
from .model import CountMatrix, ModelConfig, poisson_rates
from .rng import stream


@dataclass(frozen=True)
class Metrics:
    mae: float
    mre: float
    n_cells: int

    def to_dict(self):
        return {"mae": self.mae, "mre": self.mre, "n_cells": self.n_cells}


def compute_metrics(truth, estimate, mask: MaskSpec) -> Metrics:
    """MAE and MRE (relative to ``1 + n``) averaged over the masked cells."""
    truth = truth.values if isinstance(truth, CountMatrix) else np.asarray(truth)
    estimate = np.asarray(estimate, dtype=float)
    if truth.shape != estimate.shape or truth.shape != mask.held_out.shape:
        raise ConfigError(f"shape mismatch: truth {truth.shape}, estimate {estimate.shape}, "
                          f"mask {mask.held_out.shape}")
    if mask.n_cells == 0:
        raise ConfigError("mask selects no cells")
    n = truth[mask.held_out].astype(float)
    err = np.abs(n - estimate[mask.held_out])
    return Metrics(float(err.mean()), float((err / (1.0 + n)).mean()), mask.n_cells)


def forecast_rates(state, config: ModelConfig, S, rng, n_rollouts=1):
    """V x S rates averaged over stochastic rollouts of one posterior sample."""
    chain = ChainConfig(config.chain, K=state.K, tau=state.tau, psi=state.psi,
                        eps0_theta=config.eps0_theta)
    theta = np.tile(state.theta[:, -1], (n_rollouts, 1))
    d = forecast_delta(state, config.stationary_delta)
    load = state.Phi * state.lam[None, :]
    out = np.empty((state.Phi.shape[0], S))
    for s in range(S):
        theta = step(chain, state.Pi, ChainState(theta), rng).theta
        out[:, s] = d * load @ theta.mean(axis=0)
    return out


def predict_heldout(trace, mask: MaskSpec, config: ModelConfig, rng, n_rollouts=10):
    """Posterior-mean rate on each masked cell; other entries are NaN."""
    if not trace.samples:
        raise ConfigError("trace holds no retained samples")
    V, T = mask.held_out.shape
    est = np.zeros((V, T))
    if mask.mode == "FORECAST":
        for st in trace.samples:
            est[:, T - mask.S:] += forecast_rates(st, config, mask.S, rng, n_rollouts)
    else:
        for st in trace.samples:
            est += poisson_rates(st)
    est /= len(trace.samples)
    return np.where(mask.held_out, est, np.nan)


# --------------------------------------------------------------------------
# experiments


@dataclass
class ExperimentSpec:
    """Fit every model on ``n_repeats`` random splits of the same counts.

    ``models`` maps a display name to a ``ModelConfig``.  ``tasks`` maps
    ``"smoothing"`` to a holdout fraction and/or ``"forecast"`` to ``S``.
    All models share the split and the sampler seed of a repeat.
    """

    counts: CountMatrix
    models: dict
    tasks: dict = field(default_factory=lambda: {"smoothing": 0.1})
    schedule: Schedule = field(default_factory=Schedule)
    n_repeats: int = 10
    seed: int = 0
    n_jobs: int = 1


def _one_run(args):
    counts, name, config, task, value, schedule, seed, rep = args
    values = counts.values
    V, T = values.shape
    base = stream(seed, "experiment").child(rep)
    if task == "forecast":
        mask = make_mask((V, T), "FORECAST", S=int(value))
        config = config.with_(T=T - int(value), V=V, S=int(value))
    else:
        mask = make_mask((V, T), "SMOOTHING", holdout_fraction=float(value),
                         rng=base.child(0).generator())
        config = config.with_(T=T, V=V)
    trace = run_gibbs(values, mask, config, schedule, base.child(1).generator())
    est = predict_heldout(trace, mask, config, base.child(2).generator())
    m = compute_metrics(values, np.nan_to_num(est), mask)
    return {"model": name, "task": task, "repeat": rep, "mae": m.mae, "mre": m.mre}


def run_experiment(spec: ExperimentSpec):
    """Returns ``(summary_rows, raw_rows)``.

    Summary rows carry ``model, task, metric, mean, std`` over repeats.
    """
    jobs = [(spec.counts, name, cfg, task, value, spec.schedule, spec.seed, rep)
            for name, cfg in spec.models.items()
            for task, value in spec.tasks.items()
            for rep in range(spec.n_repeats)]
    n_jobs = spec.n_jobs if spec.n_jobs > 0 else (os.cpu_count() or 1)
    if n_jobs == 1:
        raw = [_one_run(j) for j in jobs]
    else:
        with ProcessPoolExecutor(n_jobs) as ex:
            raw = list(ex.map(_one_run, jobs))
    summary = []
    for name in spec.models:
        for task in spec.tasks:
            for metric in ("mae", "mre"):
                x = np.array([r[metric] for r in raw if r["model"] == name and r["task"] == task])
                summary.append({"model": name, "task": task, "metric": metric,
                                "mean": float(x.mean()),
                                "std": float(x.std(ddof=1)) if len(x) > 1 else 0.0})
    return summary, raw
