"""Joint-distribution test of the Gibbs sampler ("getting it right").

Two simulators target the same joint law of parameters and data:

* marginal-conditional: independent draws ``state ~ prior``,
  ``counts ~ p(counts | state)``;
* successive-conditional: one Gibbs sweep given the current counts, then
  fresh counts given the new state, repeated.

If every conditional in the sweep is right, tracked statistics have equal
means under both.  The second chain is autocorrelated, so its standard
error comes from batch means.
"""
from dataclasses import dataclass, field

import numpy as np

from .inference import GibbsSampler
from .model import generate_counts, sample_prior

N_BATCHES = 50


def tracked_statistics(state, counts, config):
    """Scalar summaries compared between the two simulators."""
    K = state.K
    off = ~np.eye(K, dtype=bool)
    stats = {
        "mean_theta": state.theta[:, 1:].mean(),
        "mean_lambda": state.lam.mean(),
        "mean_delta": state.delta.mean(),
        "mean_pi_diag": np.diag(state.Pi).mean(),
        "mean_h": state.h.mean(),
        "data_mean": counts.mean(),
        "data_zero_frac": (counts == 0).mean(),
        # log-scale versions are insensitive to rare huge excursions
        "mean_log_theta": np.log1p(state.theta[:, 1:]).mean(),
        "mean_log_lambda": np.log(state.lam).mean(),
        "data_log_mean": np.log1p(counts).mean(),
    }
    if config.variant == "FS":
        stats["mean_a"] = state.A.mean()
    elif config.variant == "GS":
        stats["mean_z_off"] = state.Z[off].mean() if K > 1 else 0.0
        stats["mean_d"] = state.D.mean()
    if config.sample_psi:
        stats["psi"] = state.psi
    if config.sample_tau:
        stats["tau"] = state.tau
    return {k: float(v) for k, v in stats.items()}


@dataclass
class GewekeReport:
    z: dict = field(default_factory=dict)
    forward_mean: dict = field(default_factory=dict)
    successive_mean: dict = field(default_factory=dict)
    n_forward: int = 0
    n_successive: int = 0

    @property
    def max_abs_z(self):
        return max((abs(v) for v in self.z.values()), default=0.0)

    def passed(self, bound=4.0):
        return all(abs(v) < bound for v in self.z.values())

    def lines(self):
        return [f"{k:>16s}  fwd={self.forward_mean[k]:.5g}  succ={self.successive_mean[k]:.5g}"
                f"  z={v:+.2f}" for k, v in self.z.items()]


def _batch_se(x, n_batches=N_BATCHES):
    n = len(x) // n_batches
    if n < 2:
        return np.std(x, ddof=1) / np.sqrt(len(x))
    means = np.asarray(x[: n * n_batches]).reshape(n_batches, n).mean(axis=1)
    return np.std(means, ddof=1) / np.sqrt(n_batches)


def forward_samples(config, n, rng):
    rows = []
    for _ in range(n):
        st = sample_prior(config, rng)
        rows.append(tracked_statistics(st, generate_counts(config, st, rng).values, config))
    return rows


def successive_samples(config, n, rng):
    st = sample_prior(config, rng)
    counts = generate_counts(config, st, rng).values
    sampler = GibbsSampler(counts, config, state=st, rng=rng)
    rows = []
    for _ in range(n):
        sampler.sweep()
        counts = generate_counts(config, sampler.state, rng).values
        sampler.set_counts(counts)
        rows.append(tracked_statistics(sampler.state, counts, config))
    return rows


def geweke_test(config, n_forward, n_successive, rng) -> GewekeReport:
    """Per-statistic z-scores of forward minus successive means."""
    report = GewekeReport(n_forward=n_forward, n_successive=n_successive)
    if n_forward == 0 or n_successive == 0:
        return report
    fwd = forward_samples(config, n_forward, rng)
    succ = successive_samples(config, n_successive, rng)
    for key in fwd[0]:
        a = np.array([r[key] for r in fwd])
        b = np.array([r[key] for r in succ])
        se = np.hypot(np.std(a, ddof=1) / np.sqrt(len(a)), _batch_se(b))
        diff = a.mean() - b.mean()
        report.forward_mean[key] = float(a.mean())
        report.successive_mean[key] = float(b.mean())
        report.z[key] = float(diff / se) if se > 0 else (0.0 if diff == 0 else np.inf)
    return report
