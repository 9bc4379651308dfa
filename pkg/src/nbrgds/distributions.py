"""Samplers and densities for the distributions the model is built from.

All samplers take a ``numpy.random.Generator`` and broadcast over array
arguments; scalar inputs give scalar outputs.  Gamma laws use the
shape/rate convention throughout.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln, ive, polygamma

from .errors import AllocationError, ParameterError, StructuralError

CRT_EXACT_MAX = 10_000
BESSEL_TAIL = 1e-12
RG1_SERIES_TOL = 1e-15

# upper bound on grid cells materialized at once by the windowed samplers
_MAX_CELLS = 1 << 22


def _finite(name, *arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise ParameterError(f"{name}: non-finite parameter")


def _out(x, scalar):
    return x.item() if scalar else x


# --------------------------------------------------------------------------
# gamma / dirichlet


def sample_gamma(shape, rate, rng, size=None):
    """Draw from Gamma(shape, rate).

    A zero shape gives exactly zero (the degenerate gamma).
    """
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    _finite("sample_gamma", shape, rate)
    if np.any(shape < 0):
        raise ParameterError("sample_gamma: shape must be >= 0")
    if np.any(rate <= 0):
        raise ParameterError("sample_gamma: rate must be > 0")
    scalar = size is None and shape.ndim == 0 and rate.ndim == 0
    x = rng.gamma(shape, 1.0 / rate, size=size)
    x = np.where(np.broadcast_to(shape, np.shape(x)) == 0, 0.0, x)
    return _out(np.asarray(x), scalar)


def log_gamma_variates(shape, rng):
    """log of Gamma(shape, 1) draws, accurate for tiny shapes.

    Uses G(a) = G(a + 1) * U**(1/a) for a < 1 so the result stays finite
    where the direct draw would underflow.  Zero shape gives -inf.
    """
    shape = np.asarray(shape, dtype=float)
    small = shape < 1.0
    g = rng.gamma(np.where(small, shape + 1.0, shape))
    with np.errstate(divide="ignore"):
        out = np.log(g)
        u = rng.random(shape.shape)
        boost = np.where(small & (shape > 0), np.log(u) / np.where(shape > 0, shape, 1.0), 0.0)
    out = out + boost
    out[shape == 0] = -np.inf
    return out


def sample_dirichlet(alpha, rng):
    """Dirichlet draws along the last axis.

    Zero concentrations give exact zeros; a row whose concentrations are all
    zero is a structural error.
    """
    alpha = np.asarray(alpha, dtype=float)
    _finite("sample_dirichlet", alpha)
    if np.any(alpha < 0):
        raise ParameterError("sample_dirichlet: negative concentration")
    if np.any(alpha.sum(axis=-1) <= 0):
        raise StructuralError("sample_dirichlet: all-zero concentration vector")
    lg = log_gamma_variates(alpha, rng)
    lg -= lg.max(axis=-1, keepdims=True)
    w = np.exp(lg)
    return w / w.sum(axis=-1, keepdims=True)


# --------------------------------------------------------------------------
# negative binomial


@dataclass(frozen=True)
class NbParams:
    """Negative binomial with pmf

        p(h) = Gamma(r + h) / (h! Gamma(r)) * f**r * (1 - f)**h,

    where ``f = gamma_fraction = psi / (1 + psi)``.  Mean is ``r / psi`` and
    variance ``r (1 + psi) / psi**2``; equivalently ``h ~ Poisson(g)`` with
    ``g ~ Gamma(r, psi)``.
    """

    r: float
    gamma_fraction: float

    def __post_init__(self):
        if not (np.isfinite(self.r) and self.r >= 0):
            raise ParameterError("NbParams: shape r must be finite and >= 0")
        if not (0.0 < self.gamma_fraction < 1.0):
            raise ParameterError("NbParams: gamma_fraction must lie in (0, 1)")

    @classmethod
    def from_psi(cls, r, psi):
        return cls(float(r), float(psi) / (1.0 + float(psi)))

    @property
    def psi(self):
        f = self.gamma_fraction
        return f / (1.0 - f)

    @property
    def mean(self):
        return self.r / self.psi

    @property
    def var(self):
        return self.r * (1.0 + self.psi) / self.psi ** 2

    def log_pmf(self, h):
        h = np.asarray(h, dtype=float)
        f = self.gamma_fraction
        if self.r == 0:
            return np.where(h == 0, 0.0, -np.inf)
        return (gammaln(self.r + h) - gammaln(h + 1) - gammaln(self.r)
                + self.r * np.log(f) + h * np.log1p(-f))

    def pmf(self, h):
        return np.exp(self.log_pmf(h))


POISSON_NORMAL_MIN = 1e12
MAX_COUNT = 2 ** 62


def sample_poisson(rate, rng, size=None):
    """Poisson draw that survives rates beyond numpy's limit.

    Rates above ``POISSON_NORMAL_MIN`` use the rounded normal
    approximation (relative error far below double precision there) and
    counts are capped at ``MAX_COUNT`` so they stay in int64.
    """
    rate = np.asarray(rate, dtype=float)
    if size is not None:
        rate = np.broadcast_to(rate, size)
    big = rate > POISSON_NORMAL_MIN
    if not np.any(big):
        return rng.poisson(rate)
    out = rng.poisson(np.where(big, 0.0, rate))
    hi = np.rint(rng.normal(rate[big], np.sqrt(rate[big])))
    out[big] = np.minimum(hi, MAX_COUNT).astype(np.int64)
    return out


def sample_negative_binomial(p: NbParams, rng, size=None):
    """Exact NB draw through its gamma-Poisson mixture."""
    if p.r == 0:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    rate = rng.gamma(p.r, 1.0 / p.psi, size=size)
    return sample_poisson(rate, rng)


# --------------------------------------------------------------------------
# Chinese restaurant table counts


def crt_mean(L, a):
    """E[CRT(L, a)] = sum_{i<L} a / (a + i)."""
    L = np.asarray(L, dtype=float)
    a = np.asarray(a, dtype=float)
    with np.errstate(invalid="ignore"):
        m = a * (digamma(a + L) - digamma(a))
    return np.where(L > 0, m, 0.0)


def sample_crt(L, a, rng):
    """Number of occupied tables after ``L`` customers at concentration ``a``.

    Exact Bernoulli-sum for ``L <= 10_000``; above that a continuity
    corrected normal approximation clamped to ``[1, L]``.  Output always
    satisfies ``1(L > 0) <= l <= L``.
    """
    L_arr, a_arr = np.broadcast_arrays(np.asarray(L), np.asarray(a, dtype=float))
    shape = L_arr.shape
    L_arr = L_arr.astype(np.int64).ravel()
    a_arr = a_arr.ravel()
    if np.any(L_arr < 0):
        raise ParameterError("sample_crt: negative count")
    pos = L_arr > 0
    if np.any(np.isnan(a_arr[pos])) or np.any(a_arr[pos] <= 0):
        raise ParameterError("sample_crt: concentration must be > 0 when L > 0")
    out = np.zeros(L_arr.shape, dtype=np.int64)

    exact = np.flatnonzero(pos & (L_arr <= CRT_EXACT_MAX))
    start = 0
    while start < exact.size:
        # chunk so the flattened customer array stays bounded
        csum = np.cumsum(L_arr[exact[start:]])
        stop = start + max(1, int(np.searchsorted(csum, _MAX_CELLS, side="right")))
        rows = exact[start:stop]
        Ls = L_arr[rows]
        owner = np.repeat(np.arange(rows.size), Ls)
        first = np.repeat(np.cumsum(Ls) - Ls, Ls)
        i = np.arange(owner.size) - first
        aa = a_arr[rows][owner]
        with np.errstate(invalid="ignore"):
            prob = np.where(np.isposinf(aa), 1.0, aa / (aa + i))
        hits = rng.random(owner.size) < prob
        out[rows] = np.bincount(owner, weights=hits, minlength=rows.size).astype(np.int64)
        start = stop

    big = np.flatnonzero(L_arr > CRT_EXACT_MAX)
    if big.size:
        Lb = L_arr[big].astype(float)
        ab = a_arr[big]
        m = ab * (digamma(ab + Lb) - digamma(ab))
        v = np.maximum(m - ab ** 2 * (polygamma(1, ab) - polygamma(1, ab + Lb)), 0.0)
        x = np.floor(m + np.sqrt(v) * rng.standard_normal(big.size) + 0.5)
        out[big] = np.clip(x, 1, Lb).astype(np.int64)
    return int(out[0]) if shape == () else out.reshape(shape)


# --------------------------------------------------------------------------
# windowed inverse-CDF machinery


def _inverse_cdf_window(log_pmf, lo, hi, u):
    """Inverse-CDF draws from unnormalized pmfs on integer windows.

    ``log_pmf(grid, rows)`` returns log-masses for ``grid`` (shape m x W) of
    the elements ``rows``.  Windows are ``[lo, hi]`` inclusive; the mass
    outside them must be negligible.  Elements are bucketed by window width
    so the materialized grid stays small.
    """
    n = lo.size
    out = np.empty(n, dtype=np.int64)
    width = hi - lo + 1
    bucket = np.ceil(np.log2(np.maximum(width, 1))).astype(np.int64)
    for b in np.unique(bucket):
        idx = np.flatnonzero(bucket == b)
        W = 1 << int(b)
        step = max(1, _MAX_CELLS // W)
        offs = np.arange(W)
        for s in range(0, idx.size, step):
            rows = idx[s:s + step]
            grid = lo[rows, None] + offs[None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                lp = log_pmf(grid, rows)
            lp = np.where(grid > hi[rows, None], -np.inf, lp)
            lp = lp - np.max(lp, axis=1, keepdims=True)
            c = np.cumsum(np.exp(lp), axis=1)
            k = np.sum(c < u[rows, None] * c[:, -1:], axis=1)
            out[rows] = lo[rows] + k
    return out


# --------------------------------------------------------------------------
# Bessel distribution


def bessel_log_norm(nu, z):
    """log I_nu(z), with I_{-1} = I_1."""
    nu = np.asarray(nu, dtype=float)
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(ive(np.where(nu == -1, 1.0, nu), z)) + z


def bessel_log_pmf(h, nu, z):
    """log p(h) for p(h) = (z/2)^(2h+nu) / (h! Gamma(h+nu+1) I_nu(z))."""
    h = np.asarray(h, dtype=float)
    nu = np.asarray(nu, dtype=float)
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = ((2 * h + nu) * np.log(z / 2) - gammaln(h + 1) - gammaln(h + nu + 1)
              - np.log(ive(np.where(nu == -1, 1.0, nu), z)) - z)
        lp = np.where(np.isinf(gammaln(h + nu + 1)), -np.inf, lp)
    return lp


def bessel_mean(nu, z):
    """(z/2) I_{nu+1}(z) / I_nu(z)."""
    nu = np.asarray(nu, dtype=float)
    return z / 2 * ive(nu + 1, z) / ive(np.where(nu == -1, 1.0, nu), z)


def bessel_mode(nu, z):
    nu = np.asarray(nu, dtype=float)
    z = np.asarray(z, dtype=float)
    return np.floor((np.sqrt(z * z + nu * nu) - nu) / 2).astype(np.int64)


def sample_bessel(nu, z, rng):
    """Draw from the Bessel distribution Bessel(nu, z).

    The pmf is evaluated on a window centred at the mode, wide enough that
    the excluded tail mass is below ``1e-12``, and inverted with one
    uniform per draw.  ``z = 0`` is a point mass at 0 (``nu > -1``).  For
    ``nu = -1`` the support starts at 1 and ``z`` must be positive.
    """
    nu_b, z_b = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(z, dtype=float))
    scalar = nu_b.ndim == 0
    nu_f = nu_b.ravel()
    z_f = z_b.ravel()
    _finite("sample_bessel", nu_f, z_f)
    if np.any(nu_f < -1):
        raise ParameterError("sample_bessel: order must be >= -1")
    if np.any(z_f < 0):
        raise ParameterError("sample_bessel: argument must be >= 0")
    if np.any((nu_f == -1) & (z_f == 0)):
        raise ParameterError("sample_bessel: order -1 requires a positive argument")
    out = np.zeros(nu_f.shape, dtype=np.int64)
    live = np.flatnonzero(z_f > 0)
    if live.size:
        nl, zl = nu_f[live], z_f[live]
        m = bessel_mode(nl, zl)
        # the law is close to normal with sd ~ sqrt(z)/2 for large z and
        # decays factorially for small z; this half-width is >= 9 sd
        w = np.ceil(7 * np.sqrt(zl / 2 + 1) + 5).astype(np.int64)
        lo = np.maximum(m - w, np.where(nl == -1, 1, 0))
        hi = np.maximum(m + w, lo)
        log_q = 2 * np.log(zl / 2)

        def log_pmf(grid, rows):
            # log p(h) - log p(lo) via the term ratio (z/2)^2 / ((h+1)(h+nu+1))
            g = grid[:, :-1]
            step = log_q[rows, None] - np.log(g + 1) - np.log(g + nl[rows, None] + 1)
            return np.concatenate([np.zeros((g.shape[0], 1)), np.cumsum(step, axis=1)], axis=1)

        out[live] = _inverse_cdf_window(log_pmf, lo, hi, rng.random(live.size))
    out = out.reshape(nu_b.shape)
    return int(out) if scalar else out


# --------------------------------------------------------------------------
# truncated Poisson


def sample_truncated_poisson(rate, rng):
    """Poisson(rate) conditioned on being >= 1.

    Uses the first arrival of a unit Poisson process conditioned to land
    before ``rate``, then adds an ordinary Poisson for the remaining span;
    exact for every ``rate > 0``.
    """
    rate = np.asarray(rate, dtype=float)
    _finite("sample_truncated_poisson", rate)
    if np.any(rate <= 0):
        raise ParameterError("sample_truncated_poisson: rate must be > 0")
    scalar = rate.ndim == 0
    u = rng.random(rate.shape)
    first = -np.log1p(u * np.expm1(-rate))
    first = np.minimum(first, rate)
    x = 1 + rng.poisson(rate - first)
    return int(x) if scalar else x


# --------------------------------------------------------------------------
# multinomial thinning


def sample_multinomial_thinning(total, weights, rng):
    """Split ``total`` over cells with probabilities proportional to
    ``weights`` (last axis).  Batched over leading axes."""
    weights = np.asarray(weights, dtype=float)
    total = np.asarray(total, dtype=np.int64)
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ParameterError("sample_multinomial_thinning: weights must be finite and >= 0")
    if np.any(total < 0):
        raise ParameterError("sample_multinomial_thinning: negative total")
    wsum = weights.sum(axis=-1)
    bad = (wsum <= 0) & (total > 0)
    if np.any(bad):
        raise AllocationError("sample_multinomial_thinning: positive total with all-zero weights")
    safe = np.where(wsum[..., None] > 0, weights / np.where(wsum > 0, wsum, 1.0)[..., None],
                    1.0 / weights.shape[-1])
    return rng.multinomial(total, safe)


# --------------------------------------------------------------------------
# randomized gamma of the first type


def rg1_log_density(x, a, b, c):
    """log density of RG1(a, b, c) at ``x > 0``.

    RG1(a, b, c) is the Poisson(b) mixture of Gamma(a + h, c).  The density
    is the modified-Bessel series

        exp(-b - c x) c^a x^(a-1) sum_h (b c x)^h / (h! Gamma(a + h)),

    summed outward from its largest term until a term drops below
    ``1e-15`` of the running total.
    """
    x = float(x)
    a, b, c = float(a), float(b), float(c)
    if not (x > 0 and a >= 0 and b >= 0 and c > 0):
        raise ParameterError("rg1_log_density: need x > 0, a >= 0, b >= 0, c > 0")
    if b == 0:
        if a == 0:
            return -np.inf
        return a * np.log(c) + (a - 1) * np.log(x) - c * x - gammaln(a)

    y = b * c * x
    log_y = np.log(y)

    def log_term(h):
        return h * log_y - gammaln(h + 1) - gammaln(a + h)

    h_min = 1 if a == 0 else 0
    # largest term sits where (h + 1)(h + a) ~ y
    root = (-(a + 1) + np.sqrt((a + 1) ** 2 - 4 * (a - y))) / 2
    h0 = max(h_min, int(np.floor(root)))
    peak = log_term(h0)
    total = 1.0
    h = h0 + 1
    while True:
        t = np.exp(log_term(h) - peak)
        total += t
        if t < RG1_SERIES_TOL * total:
            break
        h += 1
    h = h0 - 1
    while h >= h_min:
        t = np.exp(log_term(h) - peak)
        total += t
        if t < RG1_SERIES_TOL * total:
            break
        h -= 1
    return -b - c * x + a * np.log(c) + (a - 1) * np.log(x) + peak + np.log(total)
