"""Three gamma Markov chains started from the same state.

Prints Monte Carlo one-step moments next to the closed forms, then shows
how far each family wanders over 50 steps.  The NB-randomized chain has
the largest one-step variance at psi = 1, which is what lets it follow
bursty counts.
"""
import numpy as np

from nbrgds.chains import ChainConfig, conditional_moments, simulate_realizations

rng = np.random.default_rng(0)
Pi = np.eye(1)
theta0 = np.array([2.0])

print("one step from theta = 2 (Pi = I, tau = 1, eps0_theta = 0)")
for family in ("GMC", "PRGMC", "NBRGMP"):
    cfg = ChainConfig(family, K=1, psi=1.0, eps0_theta=0.0)
    x = simulate_realizations(cfg, Pi, theta0, 1, 200_000, rng)[:, 0, 0]
    mean, var = conditional_moments(cfg, Pi, theta0)
    print(f"  {family:7s} mean {x.mean():6.3f} (closed {mean[0]:.3f})"
          f"   var {x.var():6.3f} (closed {var[0]:.3f})")

print("\n50-step paths, 2000 chains each (eps0_theta = 0.1)")
for family in ("GMC", "PRGMC", "NBRGMP"):
    cfg = ChainConfig(family, K=1, psi=1.0, eps0_theta=0.1)
    paths = simulate_realizations(cfg, Pi, theta0, 50, 2000, rng)[:, 0, :]
    final = paths[:, -1]
    jumps = np.abs(np.diff(np.log1p(paths), axis=1)).max(axis=1)
    print(f"  {family:7s} final mean {final.mean():6.2f}  zero frac {np.mean(final == 0):.2f}"
          f"  median largest log-jump {np.median(jumps):.2f}")
