"""Gibbs sampler for the NB-randomized gamma dynamical system.

Sweep order (fixed)::

    allocate_tokens -> sample_chain_block -> sample_lambda_block
    -> transition prior -> sample_pi -> refresh h_hat
    -> sample_phi -> sample_delta -> [sample_psi] -> [sample_tau]

Chain block, all time steps at once:

1. ``h | h_hat, theta``  ~ Bessel(eps0_theta - 1, 2 sqrt(tau theta h_hat)).
2. Drop ``h_hat``.  With ``s = tau * Pi theta_prev`` the count ``h`` is
   NB(s, psi/(1+psi)); draw tables ``l ~ CRT(h, s)`` and split each over
   sources with weights ``Pi[k1, k2] theta_prev[k2]``.  The tables act as
   Poisson counts on ``theta_prev`` with exposure ``tau log(1 + 1/psi)``.
   (Poisson-randomized chain: ``l = h`` and exposure ``tau``.)
3. ``theta[:, t]`` for every ``t`` from its conjugate gamma conditional.

The same tables feed ``lam`` (time 1), the concentration block and ``Pi``;
``h_hat ~ Gamma(s + h, psi + 1)`` is re-instantiated once ``Pi`` is new.
Held-out cells never enter a sufficient statistic.  ``Phi`` is updated
after imputing latent tokens for held-out cells from their Poisson law,
which keeps its conditional Dirichlet under arbitrary masks.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.special import gammaln

from . import transition
from .chains import conditional_moments, ChainConfig
from .distributions import (sample_bessel, sample_crt, sample_dirichlet,
                            sample_multinomial_thinning, sample_poisson)
from .errors import AllocationError, ConfigError, StructuralError
from .model import CountMatrix, LatentState, ModelConfig, poisson_rates

FORECAST_DELTA_WINDOW = 5


# --------------------------------------------------------------------------
# masks, schedules, traces


@dataclass
class MaskSpec:
    """Held-out cells.  ``held_out`` is a boolean V x T array."""

    held_out: np.ndarray
    mode: str = "SMOOTHING"
    S: int = 0

    def __post_init__(self):
        self.held_out = np.asarray(self.held_out, dtype=bool)
        if self.mode not in ("SMOOTHING", "FORECAST"):
            raise ConfigError(f"unknown mask mode {self.mode!r}")
        if self.mode == "FORECAST":
            T = self.held_out.shape[1]
            expect = np.zeros_like(self.held_out)
            expect[:, T - self.S:] = True
            if not (0 < self.S < T) or not np.array_equal(expect, self.held_out):
                raise ConfigError("forecast mask must hold out exactly the last S columns")

    @classmethod
    def empty(cls, V, T):
        return cls(np.zeros((V, T), dtype=bool))

    @property
    def n_cells(self):
        return int(self.held_out.sum())

    @property
    def cells(self):
        return [tuple(map(int, vt)) for vt in np.argwhere(self.held_out)]

    def to_dict(self):
        V, T = self.held_out.shape
        return {"mode": self.mode, "S": self.S, "shape": [V, T],
                "cells": np.argwhere(self.held_out).tolist()}

    @classmethod
    def from_dict(cls, d):
        V, T = d["shape"]
        m = np.zeros((V, T), dtype=bool)
        cells = np.asarray(d["cells"], dtype=np.int64).reshape(-1, 2)
        m[cells[:, 0], cells[:, 1]] = True
        return cls(m, d.get("mode", "SMOOTHING"), int(d.get("S", 0)))


@dataclass(frozen=True)
class Schedule:
    total: int = 5000
    burn_in: int = 3000
    thin: int = 10

    def __post_init__(self):
        if self.total < 1 or self.thin < 1 or self.burn_in < 0:
            raise ConfigError("schedule values must be positive")
        if self.burn_in >= self.total:
            raise ConfigError("burn_in must be smaller than total")

    @property
    def n_retained(self):
        return (self.total - self.burn_in) // self.thin

    def keeps(self, iteration):
        """``iteration`` is 1-based."""
        k = iteration - self.burn_in
        return k > 0 and k % self.thin == 0


@dataclass
class AuxiliaryCounts:
    """Augmentation variables regenerated every sweep.

    ``tokens`` holds the per-component split of each nonzero observed cell
    (rows aligned with ``cells``).  ``l_split[t, k1, k2]`` are the tables of
    ``h[k1, t]`` attributed to source ``k2`` at time ``t - 1``.
    """

    cells: np.ndarray          # nnz x 2 (v, t)
    tokens: np.ndarray         # nnz x K
    n_kt: np.ndarray           # K x T
    n_vk: np.ndarray           # V x K
    l: Optional[np.ndarray] = None        # K x T
    l_split: Optional[np.ndarray] = None  # T x K x K
    q: Optional[np.ndarray] = None
    t_tables: Optional[np.ndarray] = None

    @property
    def source_counts(self):
        """K x T: tables at time t credited to each source component."""
        return self.l_split.sum(axis=1).T

    @property
    def L(self):
        return self.l_split.sum(axis=0)


@dataclass
class PosteriorTrace:
    samples: list
    schedule: Schedule
    config: ModelConfig
    mask: MaskSpec
    iterations: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=lambda: {
        "iteration": [], "heldout_mae": [], "heldout_mre": [], "joint_loglik": []})


# --------------------------------------------------------------------------
# data view


class _Data:
    """Observed counts with the mask applied and sparse helpers cached."""

    def __init__(self, values, observed):
        self.values = np.asarray(values, dtype=np.int64)
        self.observed = np.asarray(observed, dtype=bool)
        self.V, self.T = self.values.shape
        obs_vals = np.where(self.observed, self.values, 0)
        self.cells = np.argwhere(obs_vals > 0)
        self.cell_counts = obs_vals[self.cells[:, 0], self.cells[:, 1]]
        nnz = self.cells.shape[0]
        ones = np.ones(nnz)
        cols = np.arange(nnz)
        self.by_t = sparse.csr_matrix((ones, (self.cells[:, 1], cols)), shape=(self.T, nnz))
        self.by_v = sparse.csr_matrix((ones, (self.cells[:, 0], cols)), shape=(self.V, nnz))
        self.col_totals = obs_vals.sum(axis=0)
        self.masked = np.argwhere(~self.observed)
        nm = self.masked.shape[0]
        self.masked_by_v = sparse.csr_matrix(
            (np.ones(nm), (self.masked[:, 0], np.arange(nm))), shape=(self.V, nm))
        self.full = bool(self.observed.all())


def _obs_mass(state, data):
    """K x T: sum of Phi[v, k] over observed v at each t."""
    if data.full:
        return np.broadcast_to(state.Phi.sum(axis=0)[:, None], (state.K, data.T))
    return state.Phi.T @ data.observed.astype(float)


def _exposure_const(state, config):
    if config.chain == "PRGMC":
        return state.tau
    return state.tau * np.log1p(1.0 / state.psi)


# --------------------------------------------------------------------------
# blocks


def allocate_tokens(data, state, rng):
    """Split every observed nonzero count over components."""
    cells = data.cells
    w = state.Phi[cells[:, 0]] * (state.lam[:, None] * state.theta[:, 1:])[:, cells[:, 1]].T
    zero = w.sum(axis=1) <= 0
    if np.any(zero):
        # products can underflow; retry those rows in log space
        with np.errstate(divide="ignore"):
            lw = (np.log(state.Phi[cells[zero, 0]]) + np.log(state.lam)[None, :]
                  + np.log(state.theta[:, 1:][:, cells[zero, 1]]).T)
        mx = lw.max(axis=1, keepdims=True)
        if np.any(np.isneginf(mx)):
            v, t = cells[zero][np.isneginf(mx[:, 0])][0]
            raise AllocationError(f"cell ({v}, {t}) has a positive count but every "
                                  "component weight is zero (component collapse)")
        w[zero] = np.exp(lw - mx)
    tokens = sample_multinomial_thinning(data.cell_counts, w, rng)
    n_kt = np.asarray((data.by_t @ tokens).T)
    n_vk = np.asarray(data.by_v @ tokens)
    return AuxiliaryCounts(cells=cells, tokens=tokens, n_kt=n_kt, n_vk=n_vk)


def sample_tables(state, config, rng):
    """CRT tables of ``h`` (``h_hat`` marginalized) split over sources.

    Returns ``(l, l_split)``.
    """
    K, T = state.h.shape
    prev = state.theta[:, :-1]
    drive = state.Pi @ prev
    if config.chain == "PRGMC":
        l = state.h.copy()
    else:
        l = sample_crt(state.h, np.where(state.h > 0, state.tau * drive, 1.0), rng)
    # weights[t, k1, k2] = Pi[k1, k2] * theta_prev[k2, t]
    weights = state.Pi[None, :, :] * prev.T[:, None, :]
    l_split = np.zeros((T, K, K), dtype=np.int64)
    busy = l.T > 0
    if np.any(busy):
        l_split[busy] = sample_multinomial_thinning(l.T[busy], weights[busy], rng)
    return l, l_split


def theta_conditional(state, aux, data, config):
    """Gamma shape and rate of ``theta[:, 1:]`` given tokens and tables."""
    K, T = state.h.shape
    src = aux.source_counts
    shape = config.eps0_theta + state.h + aux.n_kt
    shape[:, :-1] += src[:, 1:]
    rate = state.tau + state.delta[None, :] * state.lam[:, None] * _obs_mass(state, data)
    rate = np.array(rate, dtype=float)
    rate[:, :-1] += _exposure_const(state, config)
    return shape, rate


def sample_h(state, config, rng):
    """Bessel update of ``h`` given ``h_hat`` and ``theta``."""
    theta = state.theta[:, 1:]
    z = 2.0 * np.sqrt(state.tau * theta * state.h_hat)
    eps = config.eps0_theta
    if eps == 0:
        h = np.zeros_like(state.h)
        live = theta > 0
        if np.any(live & (z <= 0)):
            raise StructuralError("positive theta with zero shape evidence")
        h[live] = sample_bessel(-1.0, z[live], rng)
        return h
    return sample_bessel(eps - 1.0, z, rng)


def sample_chain_block(state, aux, data, config, rng):
    """h, tables and theta for all time steps; fills ``aux.l``/``aux.l_split``."""
    state.h = sample_h(state, config, rng)
    aux.l, aux.l_split = sample_tables(state, config, rng)
    shape, rate = theta_conditional(state, aux, data, config)
    state.theta[:, 1:] = rng.gamma(shape, 1.0 / rate)
    return state


def lambda_conditional(state, aux, data, config):
    """Gamma shape and rate of ``lam`` (time-0 tables credit ``lam``)."""
    base = config.eps0_lambda / state.K
    shape = base + state.g + aux.n_kt.sum(axis=1) + aux.source_counts[:, 0]
    mass = _obs_mass(state, data)
    rate = (state.beta + (state.delta[None, :] * state.theta[:, 1:] * mass).sum(axis=1)
            + _exposure_const(state, config))
    return shape, rate


def gamma_conditional(state, config):
    return config.eps0 + state.g.sum(), config.eps0 + 1.0


def beta_conditional(state, config):
    base = config.eps0_lambda / state.K
    return config.eps0 + (base + state.g).sum(), config.eps0 + state.lam.sum()


def sample_lambda_block(state, aux, data, config, rng):
    K = state.K
    shape, rate = lambda_conditional(state, aux, data, config)
    state.lam = rng.gamma(shape, 1.0 / rate)
    state.theta[:, 0] = state.lam
    base = config.eps0_lambda / K
    state.g = sample_bessel(base - 1.0, 2.0 * np.sqrt(state.gamma * state.beta * state.lam / K), rng)
    a, b = gamma_conditional(state, config)
    state.gamma = float(rng.gamma(a, 1.0 / b))
    a, b = beta_conditional(state, config)
    state.beta = float(rng.gamma(a, 1.0 / b))
    return state


def pi_conditional(A, L):
    """Dirichlet concentrations of the columns of ``Pi``."""
    return A + L


def sample_pi(state, aux, rng):
    """Columns of ``Pi`` from Dirichlet(A[:, k] + L[:, k])."""
    state.Pi = sample_dirichlet(pi_conditional(state.A, aux.L).T, rng).T
    return state


def refresh_h_hat(state, config, rng):
    s = state.tau * (state.Pi @ state.theta[:, :-1])
    if config.chain == "PRGMC":
        state.h_hat = s
    else:
        state.h_hat = rng.gamma(s + state.h, 1.0 / (state.psi + 1.0))
    return state


def phi_conditional(counts_vk, config):
    """V x K Dirichlet concentrations of the columns of ``Phi``."""
    return config.eps0 + counts_vk


def sample_phi(state, aux, data, config, rng):
    counts = aux.n_vk.astype(float)
    if data.masked.size:
        v, t = data.masked[:, 0], data.masked[:, 1]
        rate = (state.delta[t, None] * state.lam[None, :] * state.Phi[v]
                * state.theta[:, 1:][:, t].T)
        counts += data.masked_by_v @ sample_poisson(rate, rng)
    state.Phi = sample_dirichlet(phi_conditional(counts, config).T, rng).T
    return state


def delta_conditional(state, data, config):
    """Gamma shape and rate of each ``delta[t]`` (length-1 arrays if stationary)."""
    e0 = config.eps0
    mass = (state.lam[:, None] * state.theta[:, 1:] * _obs_mass(state, data)).sum(axis=0)
    if config.stationary_delta:
        return np.array([e0 + data.col_totals.sum()]), np.array([e0 + mass.sum()])
    return e0 + data.col_totals, e0 + mass


def sample_delta(state, data, config, rng):
    shape, rate = delta_conditional(state, data, config)
    d = rng.gamma(shape, 1.0 / rate)
    state.delta = np.full(data.T, d[0]) if config.stationary_delta else d
    return state


def psi_conditional(state, config):
    e0 = config.eps0
    s = state.tau * (state.Pi @ state.theta[:, :-1])
    return e0 + s.sum(), e0 + state.h_hat.sum()


def sample_psi(state, config, rng):
    """psi ~ Gamma(eps0 + sum s, eps0 + sum h_hat) with ``h_hat`` instantiated."""
    a, b = psi_conditional(state, config)
    state.psi = float(rng.gamma(a, 1.0 / b))
    return state


def _log_tau_target(tau, state, config):
    e0 = config.eps0
    theta = state.theta[:, 1:]
    drive = state.Pi @ state.theta[:, :-1]
    a = config.eps0_theta + state.h
    lp = (e0 - 1) * np.log(tau) - e0 * tau
    lp += np.sum(np.where(a > 0, a * np.log(tau) - tau * theta, 0.0))
    s = tau * drive
    if config.chain == "PRGMC":
        lp += np.sum(np.where(s > 0, state.h * np.log(np.where(s > 0, s, 1.0)) - s, 0.0))
    else:
        live = s > 0
        # gamma draws with tiny shape can underflow to exactly 0
        hh = np.maximum(state.h_hat[live], np.finfo(float).tiny)
        lp += np.sum(s[live] * np.log(state.psi) - gammaln(s[live]) + (s[live] - 1) * np.log(hh))
    return lp


def sample_tau(state, config, rng, step=0.1):
    """Random-walk Metropolis on log tau (``h_hat`` instantiated)."""
    cur = state.tau
    prop = cur * np.exp(step * rng.standard_normal())
    log_ratio = (_log_tau_target(prop, state, config) - _log_tau_target(cur, state, config)
                 + np.log(prop) - np.log(cur))
    if np.log(rng.random()) < log_ratio:
        state.tau = float(prop)
    return state


# --------------------------------------------------------------------------
# sampler


def initial_state(config, data, rng):
    """Starting point: random Phi, Pi and concentrations, unit lam and
    theta, ``h_hat`` at its conditional mean, and delta matched to the
    observed column totals.

    A forward-simulated chain is a poor start: at psi = 1 the chain is
    critical, its level grows like ``t * eps0_theta / tau``, and the sampler
    is slow to undo the resulting theta-versus-delta scale trade-off.
    """
    K, V, T = config.K, config.V, config.T
    trans = transition.sample_transition_prior(config, rng)
    Pi = sample_dirichlet(trans["A"].T, rng).T
    Phi = sample_dirichlet(np.full((K, V), config.eps0 + 1.0), rng).T
    lam = np.ones(K)
    psi, tau = float(config.psi), float(config.tau)
    theta = np.ones((K, T + 1))
    h_hat = tau * (Pi @ theta[:, :-1])
    if config.chain == "NBRGMP":
        h_hat = h_hat / psi
    h = sample_poisson(h_hat, rng)
    st = LatentState(theta=theta, h=h, h_hat=h_hat, lam=lam, g=np.zeros(K, dtype=np.int64),
                     gamma=1.0, beta=1.0, delta=np.ones(T), Phi=Phi, Pi=Pi, psi=psi, tau=tau,
                     **trans)
    mass = (lam[:, None] * theta[:, 1:] * _obs_mass(st, data)).sum(axis=0)
    if config.stationary_delta:
        st.delta = np.full(T, (data.col_totals.sum() + 1.0) / (mass.sum() + 1e-12))
    else:
        st.delta = (data.col_totals + 1.0) / (mass + 1e-12)
    return st


class GibbsSampler:
    """Holds the data view and latent state; ``sweep()`` runs one pass."""

    def __init__(self, values, config: ModelConfig, observed=None, state=None, rng=None):
        values = values.values if isinstance(values, CountMatrix) else values
        if observed is None:
            observed = np.ones(np.shape(values), dtype=bool)
        self.config = config
        self.data = _Data(values, observed)
        if (self.data.V, self.data.T) != (config.V, config.T):
            raise ConfigError(f"data shape {self.data.values.shape} does not match "
                              f"config (V={config.V}, T={config.T})")
        self.rng = rng if rng is not None else np.random.default_rng()
        self.state = state if state is not None else initial_state(config, self.data, self.rng)
        self.aux = None

    def set_counts(self, values):
        self.data = _Data(values, self.data.observed)

    def sweep(self):
        cfg, st, rng, data = self.config, self.state, self.rng, self.data
        self.aux = aux = allocate_tokens(data, st, rng)
        sample_chain_block(st, aux, data, cfg, rng)
        sample_lambda_block(st, aux, data, cfg, rng)
        transition.update_transition_prior(st, aux.L, cfg, rng)
        sample_pi(st, aux, rng)
        refresh_h_hat(st, cfg, rng)
        sample_phi(st, aux, data, cfg, rng)
        sample_delta(st, data, cfg, rng)
        if cfg.sample_psi and cfg.chain == "NBRGMP":
            sample_psi(st, cfg, rng)
        if cfg.sample_tau:
            sample_tau(st, cfg, rng)
        return st

    def loglik(self):
        """Poisson log-likelihood of the observed cells."""
        rates = poisson_rates(self.state)
        n = self.data.values
        obs = self.data.observed
        with np.errstate(divide="ignore", invalid="ignore"):
            ll = np.where(n > 0, n * np.log(rates), 0.0) - rates - gammaln(n + 1)
        return float(ll[obs].sum())


# --------------------------------------------------------------------------
# prediction helpers shared with evaluation


def forecast_delta(state, stationary):
    if stationary:
        return float(state.delta[-1])
    return float(np.mean(state.delta[-FORECAST_DELTA_WINDOW:]))


def expected_forecast_rates(state, config, S):
    """V x S rates from the deterministic conditional-mean forecast."""
    chain = ChainConfig("NBRGMP" if config.chain == "NBRGMP" else "PRGMC", K=state.K,
                        tau=state.tau, psi=state.psi, eps0_theta=config.eps0_theta)
    theta = state.theta[:, -1]
    d = forecast_delta(state, config.stationary_delta)
    out = np.empty((state.Phi.shape[0], S))
    for s in range(S):
        theta = conditional_moments(chain, state.Pi, theta)[0]
        out[:, s] = d * (state.Phi * state.lam[None, :]) @ theta
    return out


def _heldout_scores(sampler, truth, mask):
    if mask is None or mask.n_cells == 0:
        return np.nan, np.nan
    st = sampler.state
    if mask.mode == "FORECAST":
        est = expected_forecast_rates(st, sampler.config, mask.S)
        tr = truth[:, -mask.S:]
    else:
        held = mask.held_out
        est = poisson_rates(st)[held]
        tr = truth[held]
    err = np.abs(tr - est)
    return float(err.mean()), float((err / (1.0 + tr)).mean())


def run_gibbs(counts, mask: Optional[MaskSpec], config: ModelConfig, schedule: Schedule, rng,
              init_state=None, callback=None) -> PosteriorTrace:
    """Run the sampler and keep thinned post-burn-in snapshots.

    For a forecast mask the model is fit to the training columns only
    (``config.T`` must equal the number of training columns); the last
    ``S`` columns are scored by the held-out diagnostics.
    """
    values = counts.values if isinstance(counts, CountMatrix) else np.asarray(counts)
    V, T = values.shape
    if mask is None:
        mask = MaskSpec.empty(V, T)
    if mask.held_out.shape != (V, T):
        raise ConfigError("mask shape does not match counts")
    if mask.mode == "FORECAST":
        train = values[:, :T - mask.S]
        observed = np.ones_like(train, dtype=bool)
    else:
        train = values
        observed = ~mask.held_out
    if config.T != train.shape[1] or config.V != V:
        raise ConfigError(f"config (V={config.V}, T={config.T}) does not match training "
                          f"data {train.shape}")
    sampler = GibbsSampler(train, config, observed=observed, state=init_state, rng=rng)
    trace = PosteriorTrace(samples=[], schedule=schedule, config=config, mask=mask)
    for it in range(1, schedule.total + 1):
        sampler.sweep()
        mae, mre = _heldout_scores(sampler, values, mask)
        diag = trace.diagnostics
        diag["iteration"].append(it)
        diag["heldout_mae"].append(mae)
        diag["heldout_mre"].append(mre)
        diag["joint_loglik"].append(sampler.loglik())
        if schedule.keeps(it):
            trace.samples.append(sampler.state.copy())
            trace.iterations.append(it)
        if callback is not None:
            callback(it, sampler)
    return trace
