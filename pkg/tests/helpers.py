"""Shared oracles for the test modules."""
from itertools import combinations

import numpy as np

from nbrgds.transition import _split, sample_communities


def pair_f1(pred, truth):
    """F1 of the same-cluster relation over vertex pairs (label-free)."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    tp = fp = fn = 0
    for i, j in combinations(range(len(pred)), 2):
        a, b = pred[i] == pred[j], truth[i] == truth[j]
        tp += a and b
        fp += a and not b
        fn += b and not a
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0


def planted_counts(blocks, within, between, rng):
    """Off-diagonal Poisson counts with block-constant rates."""
    blocks = np.asarray(blocks)
    same = blocks[:, None] == blocks[None, :]
    A = rng.poisson(np.where(same, within, between))
    np.fill_diagonal(A, 0)
    return A


def fit_communities(A, C, config, rng, iters=300):
    """Gibbs over (split, M, r) with the totals held fixed."""
    K = A.shape[0]
    M = rng.gamma(config.a_hat, 1 / config.b_hat, size=(K, C))
    r = rng.gamma(config.r0 / C, 1 / config.c0, size=C) + 1e-3
    for _ in range(iters):
        X = _split(A, M, r, rng)
        M, r = sample_communities(X, M, r, config, rng)
    return M, r
