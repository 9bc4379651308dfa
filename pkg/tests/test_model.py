"""Generative model: prior draws, forward counts and rate bookkeeping."""
import numpy as np
import pytest

from nbrgds.errors import ConfigError, DataFormatError
from nbrgds.model import (CountMatrix, LatentState, ModelConfig, generate_counts,
                          permute_components, poisson_rate, poisson_rates, sample_prior)


@pytest.mark.parametrize("variant", ["PLAIN", "FS", "GS"])
def test_prior_simplex_and_anchor(rng, variant):
    cfg = ModelConfig(V=6, T=5, K=4, C=3, variant=variant)
    s = sample_prior(cfg, rng)
    np.testing.assert_allclose(s.Phi.sum(axis=0), 1, atol=1e-9)
    np.testing.assert_allclose(s.Pi.sum(axis=0), 1, atol=1e-9)
    assert np.array_equal(s.theta[:, 0], s.lam)
    assert s.theta.shape == (4, 6) and s.h.shape == (4, 5)
    if variant == "GS":
        np.testing.assert_array_equal(s.A, s.D * s.Z)
        assert np.all(np.diag(s.Z) == 1)


def test_prior_is_reproducible():
    cfg = ModelConfig(V=5, T=4, K=3, variant="GS")
    a = sample_prior(cfg, np.random.default_rng(3)).to_json()
    b = sample_prior(cfg, np.random.default_rng(3)).to_json()
    assert a == b


def test_total_lambda_mass(rng):
    # E[1/beta] is infinite for eps0 < 1, so the unconditional average of
    # (eps0_lambda + gamma) / beta does not exist; compare per draw instead.
    K, e0, el, n = 1000, 0.1, 1.0, 10_000
    gamma = rng.gamma(e0, 1 / e0, size=n)
    beta = rng.gamma(e0, 1 / e0, size=n)
    g = rng.poisson(gamma[:, None] / K, size=(n, K))
    lam = rng.gamma(el / K + g, 1 / beta[:, None])
    ratio = lam.sum(axis=1) / ((el + gamma) / beta)
    assert abs(ratio.mean() - 1) < 0.05


def test_sample_prior_lambda_mass():
    cfg = ModelConfig(V=2, T=1, K=1000)
    r = np.random.default_rng(11)
    ratios = []
    for _ in range(1000):
        s = sample_prior(cfg, r)
        ratios.append(s.lam.sum() / ((cfg.eps0_lambda + s.g.sum()) / s.beta))
    assert abs(np.mean(ratios) - 1) < 0.1


def test_gs_zero_community_weights_give_no_edges(rng):
    cfg = ModelConfig(V=3, T=2, K=6, C=2, variant="GS", r0=1e-300)
    s = sample_prior(cfg, rng)
    off = ~np.eye(6, dtype=bool)
    assert np.all(s.Z[off] == 0)


def _small_state(theta=(2.0, 4.0), lam=(1.0, 1.0), phi_row=(0.5, 0.5), delta=1.0, V=2):
    K = len(lam)
    Phi = np.tile(np.asarray(phi_row, float), (V, 1)) / V * 1.0
    Phi = Phi / Phi.sum(axis=0)
    th = np.column_stack([np.asarray(lam, float), np.asarray(theta, float)])
    return LatentState(theta=th, h=np.zeros((K, 1), int), h_hat=np.zeros((K, 1)),
                       lam=np.asarray(lam, float), g=np.zeros(K, int), gamma=1.0, beta=1.0,
                       delta=np.array([delta]), Phi=Phi, Pi=np.eye(K), A=np.eye(K),
                       psi=1.0, tau=1.0)


def test_poisson_rate_arithmetic():
    s = _small_state()
    s.Phi = np.array([[0.5, 0.5], [0.5, 0.5]])
    assert poisson_rate(s, 0, 0) == pytest.approx(3.0)
    assert poisson_rates(s)[:, 0].sum() == pytest.approx(6.0)


def test_generate_counts_mean(rng):
    s = _small_state(theta=(3.0,), lam=(2.0,), phi_row=(1.0,), V=1)
    cfg = ModelConfig(V=1, T=1, K=1)
    draws = np.array([generate_counts(cfg, s, rng).values[0, 0] for _ in range(20_000)])
    assert abs(draws.mean() - 6) < 0.1
    s.theta[:] = 0
    assert generate_counts(cfg, s, rng).values.sum() == 0


def test_generate_counts_matches_rates(rng):
    cfg = ModelConfig(V=4, T=3, K=3)
    s = sample_prior(cfg, rng)
    s.delta[:] = 1.0
    s.theta[:, 1:] = rng.gamma(2.0, size=(3, 3))
    s.lam[:] = 1.0
    rates = poisson_rates(s)
    n = 10_000
    sims = np.stack([generate_counts(cfg, s, rng).values for _ in range(n)])
    se = np.sqrt(rates / n)
    assert np.all(np.abs(sims.mean(0) - rates) <= 3 * se + 1e-12)
    s.delta[1] *= 2
    sims2 = np.stack([generate_counts(cfg, s, rng).values for _ in range(n)])
    col = sims2[:, :, 1].mean(0)
    assert np.all(np.abs(col - 2 * rates[:, 1]) <= 3 * np.sqrt(2 * rates[:, 1] / n) + 1e-12)


def test_rates_invariant_to_relabeling(rng):
    cfg = ModelConfig(V=5, T=4, K=4, variant="FS", C=2)
    s = sample_prior(cfg, rng)
    p = permute_components(s, rng.permutation(4))
    np.testing.assert_allclose(poisson_rates(p), poisson_rates(s), rtol=1e-12)
    col = poisson_rates(s).sum(axis=0)
    np.testing.assert_allclose(col, s.delta * (s.lam @ s.theta[:, 1:]), rtol=1e-12)


def test_state_json_round_trip(rng):
    s = sample_prior(ModelConfig(V=3, T=3, K=3, variant="GS", C=2), rng)
    back = LatentState.from_json(s.to_json())
    for name in ("theta", "Phi", "Pi", "Z", "W", "X", "D"):
        np.testing.assert_array_equal(getattr(back, name), getattr(s, name))
    assert back.Z.dtype.kind == "i"
    with pytest.raises(DataFormatError):
        LatentState.from_dict({"schema": "other"})


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(V=0, T=3)
    with pytest.raises(ConfigError):
        ModelConfig(V=3, T=3, variant="XX")
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"V": 3, "T": 3, "bogus": 1})
    assert ModelConfig(V=3, T=3, K=7).C == 7


def test_count_matrix_rejects_bad_values():
    with pytest.raises(DataFormatError):
        CountMatrix(np.array([[1, -1]]))
    with pytest.raises(DataFormatError):
        CountMatrix(np.array([[1.5]]))
