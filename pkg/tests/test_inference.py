"""Gibbs sampler blocks, traces and the masking contract."""
from types import SimpleNamespace

import numpy as np
import pytest

from nbrgds.errors import ConfigError
from nbrgds.distributions import sample_dirichlet
from nbrgds.inference import (AuxiliaryCounts, GibbsSampler, Schedule,
                              allocate_tokens, beta_conditional, delta_conditional,
                              gamma_conditional, phi_conditional, pi_conditional,
                              psi_conditional, run_gibbs, sample_pi, theta_conditional)
from nbrgds.data import make_mask
from nbrgds.model import ModelConfig, forward_chain, generate_counts, sample_prior


def frozen(cfg, rng, **fields):
    s = sample_prior(cfg, rng)
    for k, v in fields.items():
        setattr(s, k, np.asarray(v, dtype=float) if isinstance(v, (list, tuple)) else v)
    s.theta[:, 0] = s.lam
    return s


def test_tokens_examples(rng):
    cfg = ModelConfig(V=1, T=1, K=2)
    s = frozen(cfg, rng, Phi=np.array([[0.5, 0.5]]), lam=[1.0, 3.0], delta=[1.0])
    s.theta = np.ones((2, 2))
    aux = allocate_tokens(GibbsSampler(np.array([[10 ** 6]]), cfg, state=s, rng=rng).data, s, rng)
    assert abs(aux.tokens[0, 1] / 1e6 - 0.75) < 0.002
    aux = allocate_tokens(GibbsSampler(np.array([[0]]), cfg, state=s, rng=rng).data, s, rng)
    assert aux.n_vk.sum() == 0
    cfg1 = ModelConfig(V=2, T=3, K=1)
    s1 = sample_prior(cfg1, rng)
    Y = np.array([[4, 0, 2], [1, 7, 0]])
    aux = allocate_tokens(GibbsSampler(Y, cfg1, state=s1, rng=rng).data, s1, rng)
    np.testing.assert_array_equal(aux.n_vk[:, 0], Y.sum(axis=1))


def _one_step_case(rng, eps=1.0, h=2, n=3, future=0):
    cfg = ModelConfig(V=1, T=1, K=1, eps0_theta=eps, tau=1.0)
    s = frozen(cfg, rng, Phi=np.ones((1, 1)), lam=[1.0], delta=[1.0])
    s.h = np.array([[h]])
    data = GibbsSampler(np.array([[n]]), cfg, state=s, rng=rng).data
    aux = AuxiliaryCounts(cells=np.zeros((0, 2), int), tokens=np.zeros((0, 1)),
                          n_kt=np.array([[n]]), n_vk=np.array([[n]]),
                          l_split=np.zeros((1, 1, 1), int))
    return s, aux, data, cfg


def test_theta_conditional_boundary(rng):
    s, aux, data, cfg = _one_step_case(rng)
    shape, rate = theta_conditional(s, aux, data, cfg)
    assert (shape[0, 0], rate[0, 0]) == (6.0, 2.0)
    assert shape[0, 0] / rate[0, 0] == 3.0


def test_lambda_block_conditionals():
    cfg = ModelConfig(V=1, T=1, K=2, eps0=0.1, eps0_lambda=1.0)
    st = SimpleNamespace(g=np.zeros(2, int), lam=np.ones(2), K=2)
    a, b = beta_conditional(st, cfg)
    assert abs(a / b - 0.5238) < 1e-4
    assert gamma_conditional(st, cfg) == (0.1, 1.1)


def test_delta_conditional(rng):
    cfg = ModelConfig(V=2, T=2, K=1, eps0=1.0)
    s = frozen(cfg, rng, Phi=np.array([[0.5], [0.5]]), lam=[2.0], delta=[1.0, 1.0])
    s.theta = np.array([[2.0, 2.0, 4.0]])  # lam * theta * obs_mass = 4 at t = 0
    obs = np.array([[True, False], [True, False]])
    data = GibbsSampler(np.array([[6, 9], [4, 9]]), cfg, observed=obs, state=s, rng=rng).data
    shape, rate = delta_conditional(s, data, cfg)
    assert shape[0] / rate[0] == pytest.approx(2.2)
    assert (shape[1], rate[1]) == (1.0, 1.0)  # nothing observed: the prior
    cfg_s = cfg.with_(stationary_delta=True)
    shape, rate = delta_conditional(s, data, cfg_s)
    assert shape.shape == (1,) and shape[0] == 11.0


def test_phi_and_pi_conditionals(rng):
    cfg = ModelConfig(V=2, T=1, K=1, eps0=1.0)
    post = phi_conditional(np.array([[3.0], [1.0]]), cfg)
    np.testing.assert_allclose(post[:, 0] / post.sum(), [4 / 6, 2 / 6])
    np.testing.assert_allclose(phi_conditional(np.zeros((2, 1)), cfg), 1.0)
    post = pi_conditional(np.array([[1.0], [1.0]]), np.array([[3], [1]]))
    np.testing.assert_allclose(post[:, 0] / post.sum(), [2 / 3, 1 / 3])


def test_pi_zero_concentration_gives_exact_zero(rng):
    s = SimpleNamespace(A=np.array([[0.5, 0.0], [0.2, 0.7]]))
    for _ in range(100):
        sample_pi(s, SimpleNamespace(L=np.array([[2, 0], [0, 4]])), rng)
        assert s.Pi[0, 1] == 0.0
        np.testing.assert_allclose(s.Pi.sum(axis=0), 1.0, atol=1e-9)


def test_psi_conditional_limits():
    st = SimpleNamespace(tau=1.0, Pi=np.eye(1), theta=np.array([[2.0, 3.0, 1.0]]),
                         h_hat=np.array([[0.5, 2.5]]))
    a, b = psi_conditional(st, ModelConfig(V=1, T=2, K=1, eps0=1e-12))
    assert a / b == pytest.approx(5.0 / 3.0)


def test_schedule():
    assert Schedule(5000, 3000, 10).n_retained == 200
    with pytest.raises(ConfigError):
        Schedule(100, 100, 1)


def _small_fit(seed, values=None, mask=None, variant="PLAIN", total=30):
    cfg = ModelConfig(V=4, T=6, K=3, C=2, variant=variant)
    if values is None:
        values = generate_counts(cfg, sample_prior(cfg, np.random.default_rng(99)),
                                 np.random.default_rng(98)).values
    return run_gibbs(values, mask, cfg, Schedule(total, 10, 5), np.random.default_rng(seed))


@pytest.mark.parametrize("variant", ["PLAIN", "FS", "GS"])
def test_identical_seeds_identical_traces(variant):
    a, b = _small_fit(1, variant=variant), _small_fit(1, variant=variant)
    assert len(a.samples) == 4
    assert [s.to_json() for s in a.samples] == [s.to_json() for s in b.samples]


def test_heldout_mre_always_finite():
    values = np.random.default_rng(0).poisson(2.0, size=(4, 6))
    mask = make_mask(values.shape, "SMOOTHING", holdout_fraction=0.25, rng=np.random.default_rng(1))
    tr = _small_fit(3, values, mask)
    assert np.all(np.isfinite(tr.diagnostics["heldout_mre"]))
    assert len(tr.diagnostics["joint_loglik"]) == 30


def test_masked_cells_do_not_leak():
    values = np.random.default_rng(0).poisson(2.0, size=(4, 6))
    mask = make_mask(values.shape, "SMOOTHING", holdout_fraction=0.25, rng=np.random.default_rng(1))
    other = values.copy()
    other[mask.held_out] += 1000
    a = _small_fit(5, values, mask, variant="GS")
    b = _small_fit(5, other, mask, variant="GS")
    assert [s.to_json() for s in a.samples] == [s.to_json() for s in b.samples]


def test_forecast_fit_uses_training_columns():
    values = np.random.default_rng(0).poisson(2.0, size=(4, 8))
    mask = make_mask(values.shape, "FORECAST", S=2)
    cfg = ModelConfig(V=4, T=6, K=3)
    tr = run_gibbs(values, mask, cfg, Schedule(20, 10, 5), np.random.default_rng(0))
    assert tr.samples[0].theta.shape == (3, 7)
    with pytest.raises(ConfigError):
        run_gibbs(values, mask, cfg.with_(T=8), Schedule(20, 10, 5), np.random.default_rng(0))


@pytest.mark.parametrize("variant", ["PLAIN", "FS", "GS"])
@pytest.mark.parametrize("chain", ["NBRGMP", "PRGMC"])
def test_sweep_invariants(variant, chain):
    rng = np.random.default_rng(4)
    cfg = ModelConfig(V=5, T=7, K=4, C=3, variant=variant, chain=chain)
    values = rng.poisson(3.0, size=(5, 7))
    obs = rng.random((5, 7)) > 0.2
    smp = GibbsSampler(values, cfg, observed=obs, rng=rng)
    for _ in range(15):
        st = smp.sweep()
        aux = smp.aux
        v, t = aux.cells[:, 0], aux.cells[:, 1]
        np.testing.assert_array_equal(aux.tokens.sum(axis=1), values[v, t])
        assert np.all(obs[v, t])
        assert np.all(aux.l <= st.h) and np.all(aux.l >= (st.h > 0))
        np.testing.assert_array_equal(aux.l_split.sum(axis=2), aux.l.T)
        np.testing.assert_allclose(st.Phi.sum(axis=0), 1, atol=1e-9)
        np.testing.assert_allclose(st.Pi.sum(axis=0), 1, atol=1e-9)
        assert np.array_equal(st.theta[:, 0], st.lam)
        assert np.all(st.A[aux.L > 0] > 0)


def test_psi_recovery():
    hits = []
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        K, V, T = 3, 12, 200
        gen = ModelConfig(V=V, T=T, K=K, psi=2.0, eps0_theta=1.0)
        Pi = sample_dirichlet(np.ones((K, K)), rng).T
        Phi = sample_dirichlet(np.full((K, V), 0.5), rng).T
        lam = np.full(K, 3.0)
        theta, _, _ = forward_chain(gen, Pi, lam, 2.0, 1.0, rng)
        Y = rng.poisson(10.0 * (Phi * lam) @ theta[:, 1:])
        cfg = ModelConfig(V=V, T=T, K=K, eps0_theta=1.0, sample_psi=True, stationary_delta=True)
        tr = run_gibbs(Y, None, cfg, Schedule(3000, 1500, 5), rng)
        m = np.mean([s.psi for s in tr.samples])
        hits.append(1.5 <= m <= 2.7)
    assert sum(hits) >= 8
