"""Gamma Markov chain families: forward steps and one-step moments.

Three families share the interface:

* ``GMC``     theta' ~ Gamma(tau0 * (Pi theta), tau0)
* ``PRGMC``   h ~ Poisson(tau * (Pi theta)),  theta' ~ Gamma(eps + h, tau)
* ``NBRGMP``  g ~ Gamma(tau * (Pi theta), psi),  h ~ Poisson(g),
              theta' ~ Gamma(eps + h, tau)

``Pi`` is column-stochastic: entry ``(k1, k)`` is the effect of source
component ``k`` on target ``k1``.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distributions import sample_poisson
from .errors import ParameterError

FAMILIES = ("GMC", "PRGMC", "NBRGMP")


@dataclass(frozen=True)
class ChainConfig:
    family: str = "NBRGMP"
    K: int = 1
    tau: float = 1.0
    tau0: float = 1.0
    psi: float = 1.0
    eps0_theta: float = 0.1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown chain family {self.family!r}")
        if self.K < 1:
            raise ParameterError("K must be a positive integer")
        if not (self.tau > 0 and self.tau0 > 0 and self.psi > 0):
            raise ParameterError("tau, tau0 and psi must be positive")
        if self.eps0_theta < 0:
            raise ParameterError("eps0_theta must be nonnegative")


@dataclass
class ChainState:
    theta: np.ndarray
    h: Optional[np.ndarray] = None
    h_hat: Optional[np.ndarray] = None


def check_transition(Pi, K=None, atol=1e-9):
    Pi = np.asarray(Pi, dtype=float)
    if Pi.ndim != 2 or Pi.shape[0] != Pi.shape[1]:
        raise ParameterError("transition matrix must be square")
    if K is not None and Pi.shape[0] != K:
        raise ParameterError(f"transition matrix must be {K}x{K}")
    if np.any(Pi < 0) or not np.all(np.isfinite(Pi)):
        raise ParameterError("transition matrix entries must be finite and >= 0")
    if not np.allclose(Pi.sum(axis=0), 1.0, rtol=0, atol=atol):
        raise ParameterError("transition matrix columns must sum to 1")
    return Pi


def _draw(config, Pi, theta, rng):
    """Vectorized one-step draw; ``theta`` has shape (..., K)."""
    drive = theta @ Pi.T
    if config.family == "GMC":
        return rng.gamma(config.tau0 * drive, 1.0 / config.tau0), None, None
    if config.family == "PRGMC":
        h_hat = config.tau * drive
        h = sample_poisson(h_hat, rng)
    else:
        h_hat = rng.gamma(config.tau * drive, 1.0 / config.psi)
        h = sample_poisson(h_hat, rng)
    shape = config.eps0_theta + h
    theta_new = np.where(shape > 0, rng.gamma(shape, 1.0 / config.tau), 0.0)
    return theta_new, h, h_hat


def step(config: ChainConfig, Pi, state: ChainState, rng) -> ChainState:
    """One forward transition of the configured chain family."""
    Pi = check_transition(Pi, config.K)
    theta = np.asarray(state.theta, dtype=float)
    if not np.all(np.isfinite(theta)) or np.any(theta < 0):
        raise ParameterError("theta must be finite and nonnegative")
    theta_new, h, h_hat = _draw(config, Pi, theta, rng)
    return ChainState(theta_new, h, h_hat if config.family == "NBRGMP" else None)


def conditional_moments(config: ChainConfig, Pi, theta_prev):
    """Closed-form E[theta' | theta] and Var[theta' | theta]."""
    drive = np.asarray(Pi, dtype=float) @ np.asarray(theta_prev, dtype=float)
    eps, tau = config.eps0_theta, config.tau
    if config.family == "GMC":
        return drive, drive / config.tau0
    if config.family == "PRGMC":
        return drive + eps / tau, 2 * drive / tau + eps / tau ** 2
    psi = config.psi
    mean = eps / tau + drive / psi
    var = eps / tau ** 2 + (1 + 2 * psi) * drive / (psi ** 2 * tau)
    return mean, var


def simulate_realizations(config: ChainConfig, Pi, theta0, T: int, n_chains: int, rng):
    """Independent forward rollouts.

    Returns an array of shape ``(n_chains, K, T)`` whose slice ``[..., t-1]``
    is the state at time ``t``; ``theta0`` (length K, or a scalar broadcast
    to all components) is the state at time 0 and is not included.
    """
    if T < 1 or n_chains < 1:
        raise ParameterError("T and n_chains must be positive")
    Pi = check_transition(Pi, config.K)
    theta = np.broadcast_to(np.asarray(theta0, dtype=float), (n_chains, config.K)).copy()
    out = np.empty((n_chains, config.K, T))
    for t in range(T):
        theta = _draw(config, Pi, theta, rng)[0]
        out[:, :, t] = theta
    return out
