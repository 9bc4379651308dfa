"""Factor- and graph-structured priors on the transition concentrations."""
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import gammaln

from nbrgds.errors import StructuralError
from nbrgds.model import ModelConfig, sample_prior
from nbrgds.transition import (d_conditional, extract_graph, factor_rate, sample_a_fs,
                               sample_d_gs, sample_dirichlet_aux, sample_transition_prior,
                               sample_w_gs, sample_z_gs, update_transition_prior)

from helpers import fit_communities, pair_f1, planted_counts

N = 10 ** 6


def test_aux_without_counts_is_uninformative(rng):
    A = np.array([[1.0, 0.0], [2.0, 3.0]])
    q, t = sample_dirichlet_aux(np.zeros((2, 2), int), A, rng)
    np.testing.assert_array_equal(q, 1.0)
    assert np.all(t == 0)
    assert np.all(-np.log(q) == 0)


def test_aux_zero_concentration_has_no_tables(rng):
    A = np.array([[1.0, 0.0], [2.0, 3.0]])
    L = np.array([[5, 0], [1, 4]])
    for _ in range(50):
        assert sample_dirichlet_aux(L, A, rng)[1][0, 1] == 0
    with pytest.raises(StructuralError):
        sample_dirichlet_aux(np.array([[0, 1], [0, 0]]), A, rng)
    with pytest.raises(StructuralError):
        sample_dirichlet_aux(L, np.zeros((2, 2)), rng)


def test_aux_crt_mean(rng):
    K = 1000
    _, t = sample_dirichlet_aux(np.full((K, K), 3), np.ones((K, K)), rng)
    assert abs(t.mean() - 11 / 6) < 0.01


def test_aux_beta_mean(rng):
    L = np.array([[3], [1]])
    A = np.array([[0.5], [1.5]])
    q = np.array([sample_dirichlet_aux(L, A, rng)[0][0] for _ in range(20_000)])
    assert abs(q.mean() - 2 / 6) < 0.01  # Beta(2, 4)


def _fs_target(t, omega, mu, top=200):
    a = np.arange(top)
    x = mu * np.exp(-omega)
    lp = a * np.log(x) - gammaln(a + 1) + t * np.log(np.maximum(a, 1))
    lp[: int(t > 0)] = -np.inf
    p = np.exp(lp - lp.max())
    return p / p.sum()


def test_fs_sampler_matches_target(rng):
    x = sample_a_fs(np.full(N, 2), 0.5, 3.0, rng)
    p = _fs_target(2, 0.5, 3.0)
    emp = np.bincount(x, minlength=p.size)[: p.size] / N
    assert 0.5 * np.abs(emp - p).sum() < 0.005


def test_fs_small_table_identities(rng):
    x0 = sample_a_fs(np.zeros(N, int), 0.5, 3.0, rng)
    assert abs(x0.mean() - 3 * np.exp(-0.5)) < 0.01
    x1 = sample_a_fs(np.ones(N, int), 0.5, 3.0, rng)
    assert x1.min() == 1
    assert abs(x1.mean() - (1 + 3 * np.exp(-0.5))) < 0.01
    # the t = 1 target normalizes to the shifted Poisson pmf exactly
    a = np.arange(1, 60)
    lam = 3 * np.exp(-0.5)
    shifted = np.exp((a - 1) * np.log(lam) - gammaln(a) - lam)
    np.testing.assert_allclose(_fs_target(1, 0.5, 3.0, top=60)[1:], shifted, rtol=1e-10)
    assert sample_a_fs(0, 0.0, 0.0, rng) == 0
    with pytest.raises(StructuralError):
        sample_a_fs(2, 0.0, 0.0, rng)


def test_fs_offset_keeps_diagonal_positive(rng):
    x = sample_a_fs(np.zeros(10_000, int), 0.2, 1.0, rng, offset=1)
    assert x.min() >= 1
    assert abs(x.mean() - (1 + np.exp(-0.2))) < 0.05


def test_z_examples(rng):
    assert sample_z_gs(3, 1.0, 0.5, 0.0, rng) == 1
    assert sample_z_gs(0, 1.0, 0.5, 0.0, rng) == 0
    z = sample_z_gs(np.zeros(N, int), 2.0, 1.0, np.log(2), rng)
    assert abs(z.mean() - 0.5) < 0.002
    # q**d scales the odds: q = 0.5, d = 1 halves them (1 -> 1/2, p = 1/3)
    z = sample_z_gs(np.zeros(N, int), 1.0, 0.5, np.log(2), rng)
    assert abs(z.mean() - 1 / 3) < 0.002


def test_w_examples(rng):
    K = 1000
    Z = np.ones((K, K), int)
    M = np.ones((K, 1))
    r = np.ones(1)
    W, X = sample_w_gs(Z, np.ones((K, K)), M, r, rng)
    off = ~np.eye(K, dtype=bool)
    assert abs(W[off].mean() - 1 / (1 - np.exp(-1))) < 0.01
    np.testing.assert_array_equal(X.sum(axis=2), W)
    W0, _ = sample_w_gs(np.eye(3, dtype=int), np.ones((3, 3)), np.ones((3, 2)), np.ones(2), rng)
    assert np.all(W0 == 0)
    with pytest.raises(StructuralError):
        sample_w_gs(np.ones((2, 2), int), np.zeros((2, 2)), np.ones((2, 1)), np.ones(1), rng)


def test_d_examples(rng):
    shape, rate = d_conditional(4, 1.0, 1.0)
    assert shape / rate == 2.5
    assert d_conditional(0, 0.0, 0.3) == (0.3, 0.3)
    d = sample_d_gs(np.full(N, 7), np.full(N, 3.0), 1.0, rng, z=np.zeros(N, int))
    assert abs(d.mean() - 1.0) < 0.01  # prior Gamma(1, 1) when z = 0


def test_factor_rate_symmetric(rng):
    M = rng.gamma(1.0, size=(6, 3))
    r = rng.gamma(1.0, size=3)
    L = factor_rate(M, r)
    np.testing.assert_allclose(L, L.T)


def test_no_allocations_give_prior_and_shrinkage(rng):
    cfg = ModelConfig(V=2, T=2, K=5, C=4, variant="GS", r0=1e-6)
    from nbrgds.transition import sample_communities
    X = np.zeros((5, 5, 4), int)
    rs = [sample_communities(X, np.ones((5, 4)), np.ones(4), cfg, rng)[1] for _ in range(200)]
    assert np.median(np.concatenate(rs)) < 1e-20


@pytest.mark.parametrize("variant", ["FS", "GS"])
def test_update_keeps_masks_consistent(rng, variant):
    cfg = ModelConfig(V=3, T=3, K=6, C=3, variant=variant)
    s = sample_prior(cfg, rng)
    for _ in range(30):
        L = rng.poisson(2.0, size=(6, 6)) * (s.A > 0)
        update_transition_prior(s, L, cfg, rng)
        assert np.all(np.diag(s.A) > 0)
        assert np.all(s.A[L > 0] > 0)
        np.testing.assert_array_equal(s.X.sum(axis=2) * ~np.eye(6, dtype=bool),
                                      (s.a_int if variant == "FS" else s.W) * ~np.eye(6, dtype=bool))
        if variant == "GS":
            assert np.all(s.Z[L > 0] == 1)
            np.testing.assert_array_equal(s.A, s.D * s.Z)
            assert np.array_equal(s.Z == 1, (s.W >= 1) | np.eye(6, dtype=bool))


def test_prior_draw_variants(rng):
    for variant in ("PLAIN", "FS", "GS"):
        trans = sample_transition_prior(ModelConfig(V=2, T=2, K=4, C=2, variant=variant), rng)
        assert np.all(trans["A"].sum(axis=0) > 0)


def test_two_block_recovery():
    cfg = ModelConfig(V=2, T=2, K=20, C=2, variant="FS")
    blocks = np.repeat([0, 1], 10)
    hits = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        A = planted_counts(blocks, 3.0, 0.05, rng)
        M, r = fit_communities(A, 2, cfg, rng, iters=200)
        hits += pair_f1(np.argmax(M * r, axis=1), blocks) >= 0.9
    assert hits >= 8


def test_shrinkage_to_planted_count():
    cfg = ModelConfig(V=2, T=2, K=50, C=50, variant="GS")
    blocks = np.repeat(np.arange(10), 5)
    rng = np.random.default_rng(0)
    A = planted_counts(blocks, 3.0, 0.02, rng)
    M, r = fit_communities(A, 50, cfg, rng, iters=400)
    g = extract_graph(np.eye(50, dtype=int), None, M, r, threshold=0.01)
    assert len(g.active) <= 15


def test_extract_graph_examples():
    g = extract_graph(np.eye(4, dtype=int), np.ones((4, 4)), np.ones((4, 5)), np.ones(5))
    assert g.edges == []
    r = np.zeros(5)
    r[3] = 2.0
    g = extract_graph(np.eye(4, dtype=int), None, np.ones((4, 5)), r)
    assert np.all(g.community == 3)
    np.testing.assert_array_equal(g.active, [3])
    Z = np.eye(3, dtype=int)
    Z[0, 2] = 1
    D = np.full((3, 3), 0.7)
    g = extract_graph(Z, D, np.ones((3, 2)), np.ones(2), threshold=0.0)
    assert g.edges == [(2, 0, 0.7)]
    assert len(g.active) == 2


@given(seed=st.integers(0, 2 ** 32 - 1), K=st.integers(2, 6))
def test_pi_columns_on_simplex_after_update(seed, K):
    from nbrgds.inference import sample_pi
    from types import SimpleNamespace
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(V=2, T=2, K=K, C=2, variant="GS")
    s = sample_prior(cfg, rng)
    L = rng.poisson(1.0, size=(K, K)) * (s.A > 0)
    update_transition_prior(s, L, cfg, rng)
    sample_pi(s, SimpleNamespace(L=L), rng)
    np.testing.assert_allclose(s.Pi.sum(axis=0), 1, atol=1e-9)
    assert np.all(s.Pi[s.A == 0] == 0)
