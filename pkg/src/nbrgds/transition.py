"""Priors over the Dirichlet concentrations of the transition columns.

``PLAIN``  every concentration fixed at ``eps0``.
``FS``     integer concentrations; off-diagonal ``a[k1, k2] ~ Poisson(Lam)``
           with the symmetric factor rate ``Lam = M diag(r) M^T``.
``GS``     ``A = D * Z`` with ``z = 1(w >= 1)``, ``w ~ Poisson(Lam)`` and
           ``d ~ Gamma(eps0, eps0)``.

Only off-diagonal pairs follow the factor model.  The diagonal always
carries a positive self-transition concentration so every column can be
normalized: FS uses ``a[k, k] = 1 + Poisson(mu_self)`` with
``mu_self ~ Gamma(eps0, eps0)``, GS fixes ``z[k, k] = 1``.

Concentration evidence enters through the beta/CRT augmentation of the
Dirichlet-multinomial: with ``q[k] ~ Beta(alpha[k], L[:, k].sum())`` and
``t ~ CRT(L, a)`` the concentration ``a[k1, k]`` sees the Poisson-style
likelihood ``a**t * exp(-a * omega[k])`` where ``omega = -log q``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln

from .distributions import (_inverse_cdf_window, log_gamma_variates, sample_crt, sample_multinomial_thinning,
                            sample_truncated_poisson)
from .errors import ParameterError, StructuralError

ACTIVE_THRESHOLD = 0.01


def factor_rate(M, r):
    """Lam[k1, k2] = sum_c M[k1, c] r[c] M[k2, c]."""
    return (M * r[None, :]) @ M.T


def _offdiag(K):
    return ~np.eye(K, dtype=bool)


def _split(counts, M, r, rng):
    """Split each off-diagonal count over communities (K x K x C)."""
    K, C = M.shape
    X = np.zeros((K, K, C), dtype=np.int64)
    idx = np.argwhere((counts > 0) & _offdiag(K))
    if idx.size:
        w = M[idx[:, 0]] * r[None, :] * M[idx[:, 1]]
        X[idx[:, 0], idx[:, 1]] = sample_multinomial_thinning(counts[idx[:, 0], idx[:, 1]], w, rng)
    return X


def sample_transition_prior(config, rng):
    """Prior draw of the variant's concentration state.

    Returns the keyword arguments for the matching ``LatentState`` fields.
    """
    K, C, e0 = config.K, config.C, config.eps0
    if config.variant == "PLAIN":
        return {"A": np.full((K, K), e0)}
    M = rng.gamma(config.a_hat, 1.0 / config.b_hat, size=(K, C))
    r = rng.gamma(config.r0 / C, 1.0 / config.c0, size=C)
    Lam = factor_rate(M, r)
    off = _offdiag(K)
    if config.variant == "FS":
        mu_self = float(rng.gamma(e0, 1.0 / e0))
        a = np.where(off, rng.poisson(Lam), 0)
        a[np.diag_indices(K)] = 1 + rng.poisson(mu_self, size=K)
        X = _split(a, M, r, rng)
        return {"A": a.astype(float), "a_int": a, "mu_self": mu_self, "M": M, "r": r, "X": X}
    W = np.where(off, rng.poisson(Lam), 0)
    Z = (W >= 1).astype(np.int64)
    Z[np.diag_indices(K)] = 1
    D = rng.gamma(e0, 1.0 / e0, size=(K, K))
    X = _split(W, M, r, rng)
    return {"A": D * Z, "D": D, "Z": Z, "W": W, "M": M, "r": r, "X": X}


# --------------------------------------------------------------------------
# augmentation shared by FS and GS


def _dirichlet_aux(L, A, rng):
    """Log-space version of :func:`sample_dirichlet_aux`, returns ``(log q, t)``."""
    L = np.asarray(L, dtype=np.int64)
    A = np.asarray(A, dtype=float)
    alpha = A.sum(axis=0)
    if np.any(alpha <= 0):
        raise StructuralError("transition column with zero total concentration")
    if np.any((A == 0) & (L > 0)):
        raise StructuralError("positive transition count on a zero concentration")
    col = L.sum(axis=0)
    log_q = np.zeros(A.shape[1])
    busy = col > 0
    if np.any(busy):
        # Beta(a, b) as G_a / (G_a + G_b); direct draws underflow for small a
        la = log_gamma_variates(alpha[busy], rng)
        lb = log_gamma_variates(col[busy].astype(float), rng)
        log_q[busy] = la - np.logaddexp(la, lb)
    # a CRT with L = 0 is always 0 regardless of the concentration
    t = sample_crt(L, np.where(A > 0, A, 1.0), rng)
    return log_q, t


def sample_dirichlet_aux(L, A, rng):
    """Beta and CRT auxiliaries for the Dirichlet-multinomial evidence.

    Returns ``(q, t)``: ``q[k] ~ Beta(alpha[k], L[:, k].sum())`` (1 when the
    column total is zero) and ``t[k1, k] ~ CRT(L[k1, k], A[k1, k])``.
    """
    log_q, t = _dirichlet_aux(L, A, rng)
    return np.exp(log_q), t


def sample_a_fs(t, omega, mu, rng, offset=0):
    """Integer concentration given its tables, exposure and Poisson rate.

    Target ``p(a) ∝ Poisson(a - offset; mu) * a**t * exp(-omega * a)`` on
    ``a >= max(offset, 1(t > 0))``, i.e. ``(mu e^-omega)^(a-offset) a^t /
    (a-offset)!``.  Sampled by inverse CDF over a window that provably holds
    all but a negligible tail (the target is stochastically below
    ``offset + t + Poisson(mu e^-omega)``).
    """
    t_b, om_b, mu_b = np.broadcast_arrays(np.asarray(t, dtype=np.int64),
                                          np.asarray(omega, dtype=float),
                                          np.asarray(mu, dtype=float))
    scalar = t_b.ndim == 0
    t_f, om_f, mu_f = t_b.ravel(), om_b.ravel(), mu_b.ravel()
    if np.any(t_f < 0) or np.any(om_f < 0) or np.any(mu_f < 0):
        raise ParameterError("sample_a_fs: t, omega and mu must be nonnegative")
    x = mu_f * np.exp(-om_f)
    lo = np.maximum(offset, (t_f > 0).astype(np.int64))
    if np.any((x == 0) & (lo > offset)):
        raise StructuralError("sample_a_fs: zero rate with positive tables")
    out = lo.copy()
    live = np.flatnonzero(x > 0)
    if live.size:
        xl, tl = x[live], t_f[live]
        hi = offset + tl + np.ceil(xl + 12 * np.sqrt(xl + 1) + 25).astype(np.int64)
        log_x = np.log(xl)

        def log_pmf(grid, rows):
            j = grid - offset
            tt = tl[rows, None]
            lp = j * log_x[rows, None] - gammaln(j + 1)
            return lp + np.where(tt > 0, tt * np.log(np.maximum(grid, 1)), 0.0)

        out[live] = _inverse_cdf_window(log_pmf, lo[live], hi, rng.random(live.size))
    out = out.reshape(t_b.shape)
    return int(out) if scalar else out


def sample_z_gs(L, d, q, Lam, rng):
    """Edge indicators for off-diagonal pairs.

    A positive count forces ``z = 1``.  Otherwise the odds of an edge are the
    prior odds ``(1 - e^-Lam) / e^-Lam`` times ``q**d``, the zero-count
    likelihood ratio under the beta augmentation.
    """
    L, d, q, Lam = np.broadcast_arrays(np.asarray(L), np.asarray(d, dtype=float),
                                       np.asarray(q, dtype=float), np.asarray(Lam, dtype=float))
    scalar = L.ndim == 0
    with np.errstate(divide="ignore", over="ignore"):
        log_odds = np.log(np.expm1(Lam)) + np.where(d > 0, d * np.log(q), 0.0)
    p = expit(log_odds)
    p = np.where(Lam <= 0, 0.0, p)
    z = (rng.random(L.shape) < p).astype(np.int64)
    z = np.where(L > 0, 1, z)
    return int(z) if scalar else z


def sample_w_gs(Z, Lam, M, r, rng):
    """Latent Bernoulli-Poisson counts and their community splits.

    ``w = 0`` where ``z = 0`` and ``w ~ Poisson(Lam) | w >= 1`` where
    ``z = 1`` (diagonal excluded).  Returns ``(W, X)`` with ``X`` of shape
    ``K x K x C`` summing to ``W`` over its last axis.
    """
    K = Z.shape[0]
    W = np.zeros((K, K), dtype=np.int64)
    on = (Z == 1) & _offdiag(K)
    if np.any(on & (Lam <= 0)):
        raise StructuralError("edge present with zero factor rate")
    if np.any(on):
        W[on] = sample_truncated_poisson(Lam[on], rng)
    return W, _split(W, M, r, rng)


def d_conditional(t, omega, eps0):
    """Gamma shape and rate of ``d`` on a present edge."""
    return eps0 + np.asarray(t, dtype=float), eps0 + np.asarray(omega, dtype=float)


def sample_d_gs(t, omega, eps0, rng, z=None):
    """d ~ Gamma(eps0 + t, eps0 + omega) where ``z = 1``; prior draw elsewhere."""
    t = np.asarray(t, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if z is not None:
        on = np.asarray(z) == 1
        t = np.where(on, t, 0.0)
        omega = np.where(on, omega, 0.0)
    shape, rate = d_conditional(t, omega, eps0)
    d = rng.gamma(shape, 1.0 / rate)
    return float(d) if np.ndim(d) == 0 else d


def sample_communities(X, M, r, config, rng):
    """Gibbs update of loadings ``M`` and weights ``r`` from off-diagonal
    community allocations ``X`` (K x K x C)."""
    K, C = M.shape
    M = M.copy()
    off = _offdiag(K)
    Xo = X * off[:, :, None]
    deg = Xo.sum(axis=1) + Xo.sum(axis=0)  # K x C
    for k in range(K):
        others = M.sum(axis=0) - M[k]
        M[k] = rng.gamma(config.a_hat + deg[k], 1.0 / (config.b_hat + 2 * r * others))
    tot = M.sum(axis=0)
    pair_mass = tot ** 2 - (M ** 2).sum(axis=0)
    r = rng.gamma(config.r0 / C + Xo.sum(axis=(0, 1)), 1.0 / (config.c0 + pair_mass))
    return M, r


def update_transition_prior(state, L, config, rng):
    """One pass over the concentration block given aggregated tables ``L``
    (``L[k1, k2]`` counts transitions from source ``k2`` to target ``k1``).
    Mutates and returns ``state``."""
    if config.variant == "PLAIN":
        return state
    K = config.K
    off = _offdiag(K)
    diag = np.diag_indices(K)
    log_q, t = _dirichlet_aux(L, state.A, rng)
    omega = -log_q
    Om = np.broadcast_to(omega[None, :], (K, K))
    Lam = factor_rate(state.M, state.r)

    if config.variant == "FS":
        a = np.zeros((K, K), dtype=np.int64)
        a[off] = sample_a_fs(t[off], Om[off], Lam[off], rng)
        a[diag] = sample_a_fs(t[diag], omega, np.full(K, state.mu_self), rng, offset=1)
        state.mu_self = float(rng.gamma(config.eps0 + (a[diag] - 1).sum(), 1.0 / (config.eps0 + K)))
        state.a_int = a
        state.A = a.astype(float)
        state.X = _split(a, state.M, state.r, rng)
    else:
        Z = np.ones((K, K), dtype=np.int64)
        Q = np.broadcast_to(np.exp(log_q)[None, :], (K, K))
        Z[off] = sample_z_gs(L[off], state.D[off], Q[off], Lam[off], rng)
        # keep d strictly positive so a forced diagonal never underflows to 0
        state.D = np.maximum(sample_d_gs(t, Om, config.eps0, rng, z=Z), np.finfo(float).tiny)
        state.Z = Z
        state.A = state.D * Z
        state.W, state.X = sample_w_gs(Z, Lam, state.M, state.r, rng)
    state.M, state.r = sample_communities(state.X, state.M, state.r, config, rng)
    return state


# --------------------------------------------------------------------------
# graph export


@dataclass
class GraphSummary:
    edges: list            # (source, target, d) with z = 1, source != target
    community: np.ndarray  # argmax_c r_c m_kc per vertex
    membership: np.ndarray  # r_c m_kc at the assigned community
    active: np.ndarray     # indices of communities with r_c >= threshold * max(r)


def extract_graph(Z, D, M, r, threshold=ACTIVE_THRESHOLD):
    """Edge list and community assignment of the transition graph.

    Edge ``(k1, k2)`` reads "component k2 drives component k1" and is
    reported as ``(source=k2, target=k1)``.
    """
    Z = np.asarray(Z)
    K = Z.shape[0]
    edges = [(int(k2), int(k1), float(D[k1, k2]) if D is not None else 1.0)
             for k1, k2 in np.argwhere((Z == 1) & _offdiag(K))]
    weight = np.asarray(M) * np.asarray(r)[None, :]
    community = np.argmax(weight, axis=1)
    membership = weight[np.arange(K), community]
    rmax = np.max(r) if np.size(r) else 0.0
    active = np.flatnonzero(np.asarray(r) >= threshold * rmax) if rmax > 0 else np.array([], int)
    return GraphSummary(edges, community, membership, active)
