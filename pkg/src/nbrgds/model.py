"""Generative model: configuration, latent state, prior draws and data.

Observation model::

    n[v, t] ~ Poisson(delta[t] * sum_k lam[k] * Phi[v, k] * theta[k, t])

with ``theta[:, 0] = lam`` and the chain of ``theta[:, 1:]`` given by the
configured family (NB-randomized by default, Poisson-randomized as the
baseline).  Time index ``t`` of the data (0-based, ``0..T-1``) maps to
column ``t + 1`` of ``theta``.
"""
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np

from . import transition
from .distributions import sample_dirichlet, sample_poisson
from .errors import ConfigError, DataFormatError, ParameterError

SCHEMA = "nbrgds.latent_state/v1"
VARIANTS = ("PLAIN", "FS", "GS")
CHAINS = ("NBRGMP", "PRGMC")


@dataclass(frozen=True)
class ModelConfig:
    V: int
    T: int
    K: int = 25
    C: Optional[int] = None
    variant: str = "PLAIN"
    chain: str = "NBRGMP"
    stationary_delta: bool = False
    eps0: float = 0.1
    eps0_theta: float = 0.1
    eps0_lambda: float = 1.0
    tau: float = 1.0
    psi: float = 1.0
    sample_psi: bool = False
    sample_tau: bool = False
    r0: float = 1.0
    c0: float = 1.0
    a_hat: float = 1.0
    b_hat: float = 1.0
    S: int = 2

    def __post_init__(self):
        if self.C is None:
            object.__setattr__(self, "C", self.K)
        for name in ("V", "T", "K", "C", "S"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if self.chain not in CHAINS:
            raise ConfigError(f"chain must be one of {CHAINS}")
        for name in ("eps0", "eps0_lambda", "tau", "psi", "r0", "c0", "a_hat", "b_hat"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive")
        if not self.eps0_theta >= 0:
            raise ConfigError("eps0_theta must be nonnegative")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names - {"schema_version"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items() if k in names})

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class CountMatrix:
    values: np.ndarray
    dim_labels: list = field(default_factory=list)
    time_labels: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise DataFormatError("count matrix must be two-dimensional")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise DataFormatError("counts must be finite and nonnegative")
        if np.any(self.values != np.round(self.values)):
            raise DataFormatError("counts must be integers")
        self.values = self.values.astype(np.int64)
        V, T = self.values.shape
        if not self.dim_labels:
            self.dim_labels = [f"v{v}" for v in range(V)]
        if not self.time_labels:
            self.time_labels = [f"t{t + 1}" for t in range(T)]
        if len(self.dim_labels) != V or len(self.time_labels) != T:
            raise DataFormatError("label count does not match matrix shape")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class LatentState:
    """Every model parameter and chain state.

    ``A`` is the effective Dirichlet concentration of the transition
    columns.  Variant-specific pieces (``a_int``/``mu_self`` for FS,
    ``D``/``Z``/``W`` for GS, ``X``/``M``/``r`` for both) are ``None`` when
    unused.
    """

    theta: np.ndarray
    h: np.ndarray
    h_hat: np.ndarray
    lam: np.ndarray
    g: np.ndarray
    gamma: float
    beta: float
    delta: np.ndarray
    Phi: np.ndarray
    Pi: np.ndarray
    A: np.ndarray
    psi: float
    tau: float
    M: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None
    X: Optional[np.ndarray] = None
    a_int: Optional[np.ndarray] = None
    mu_self: Optional[float] = None
    D: Optional[np.ndarray] = None
    Z: Optional[np.ndarray] = None
    W: Optional[np.ndarray] = None

    _INT_FIELDS = ("h", "g", "X", "a_int", "Z", "W")

    def copy(self):
        kw = {}
        for f in fields(self):
            v = getattr(self, f.name)
            kw[f.name] = v.copy() if isinstance(v, np.ndarray) else v
        return LatentState(**kw)

    @property
    def K(self):
        return self.lam.shape[0]

    def rates(self):
        """V x T matrix of Poisson rates."""
        return poisson_rates(self)

    def to_dict(self):
        d = {"schema": SCHEMA}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                v = v.tolist()
            elif isinstance(v, np.generic):
                v = v.item()
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != SCHEMA:
            raise DataFormatError(f"unsupported state schema {d.get('schema')!r}")
        kw = {}
        for f in fields(cls):
            v = d.get(f.name)
            if isinstance(v, list):
                v = np.asarray(v, dtype=np.int64 if f.name in cls._INT_FIELDS else float)
            kw[f.name] = v
        return cls(**kw)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# --------------------------------------------------------------------------


def poisson_rates(state: LatentState):
    weights = state.Phi * state.lam[None, :]
    return state.delta[None, :] * (weights @ state.theta[:, 1:])


def poisson_rate(state: LatentState, v: int, t: int) -> float:
    """Rate of cell ``(v, t)``; ``t`` is the 0-based data column."""
    return float(state.delta[t] * np.sum(state.lam * state.Phi[v] * state.theta[:, t + 1]))


def forward_chain(config: ModelConfig, Pi, lam, psi, tau, rng, T=None):
    """Draw (theta, h, h_hat) for times 1..T starting from ``theta[:, 0] = lam``."""
    T = config.T if T is None else T
    K = lam.shape[0]
    theta = np.empty((K, T + 1))
    theta[:, 0] = lam
    h = np.zeros((K, T), dtype=np.int64)
    h_hat = np.zeros((K, T))
    for t in range(T):
        s = tau * (Pi @ theta[:, t])
        if config.chain == "NBRGMP":
            h_hat[:, t] = rng.gamma(s, 1.0 / psi)
        else:
            h_hat[:, t] = s
        h[:, t] = sample_poisson(h_hat[:, t], rng)
        theta[:, t + 1] = rng.gamma(config.eps0_theta + h[:, t], 1.0 / tau)
    return theta, h, h_hat


def sample_prior(config: ModelConfig, rng) -> LatentState:
    """Joint draw of all latent variables from the prior."""
    e0, K, V, T = config.eps0, config.K, config.V, config.T
    if config.stationary_delta:
        delta = np.full(T, rng.gamma(e0, 1.0 / e0))
    else:
        delta = rng.gamma(e0, 1.0 / e0, size=T)
    Phi = sample_dirichlet(np.full((K, V), e0), rng).T
    gamma = rng.gamma(e0, 1.0 / e0)
    beta = rng.gamma(e0, 1.0 / e0)
    g = rng.poisson(gamma / K, size=K)
    lam = rng.gamma(config.eps0_lambda / K + g, 1.0 / beta)
    trans = transition.sample_transition_prior(config, rng)
    Pi = sample_dirichlet(trans["A"].T, rng).T
    psi = rng.gamma(e0, 1.0 / e0) if config.sample_psi else float(config.psi)
    tau = rng.gamma(e0, 1.0 / e0) if config.sample_tau else float(config.tau)
    theta, h, h_hat = forward_chain(config, Pi, lam, psi, tau, rng)
    return LatentState(theta=theta, h=h, h_hat=h_hat, lam=lam, g=g, gamma=float(gamma),
                       beta=float(beta), delta=delta, Phi=Phi, Pi=Pi, psi=float(psi),
                       tau=float(tau), **trans)


def generate_counts(config: ModelConfig, state: LatentState, rng) -> CountMatrix:
    """Poisson draw of every cell given the latent state."""
    rates = poisson_rates(state)
    if not np.all(np.isfinite(rates)):
        raise ParameterError("generate_counts: non-finite Poisson rate")
    return CountMatrix(sample_poisson(rates, rng))


def permute_components(state: LatentState, perm):
    """Relabel components: new component ``i`` is old component ``perm[i]``."""
    perm = np.asarray(perm)
    s = state.copy()
    s.theta = s.theta[perm]
    s.h, s.h_hat = s.h[perm], s.h_hat[perm]
    s.lam, s.g = s.lam[perm], s.g[perm]
    s.Phi = s.Phi[:, perm]
    s.Pi = s.Pi[np.ix_(perm, perm)]
    s.A = s.A[np.ix_(perm, perm)]
    for name in ("a_int", "D", "Z", "W"):
        v = getattr(s, name)
        if v is not None:
            setattr(s, name, v[np.ix_(perm, perm)])
    if s.X is not None:
        s.X = s.X[np.ix_(perm, perm)]
    if s.M is not None:
        s.M = s.M[perm]
    return s
