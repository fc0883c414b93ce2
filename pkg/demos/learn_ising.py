"""
Learning a small Ising model from samples
=========================================

Draw samples from a known four-spin model and recover its parameters with
the interaction screening estimator.
"""

import numpy as np
from gibbsprobe import GibbsModel, LearnConfig, exact_distribution, learn_model, sample_exact

# a ring of four spins with one field; mu ~ exp(+H)
truth = GibbsModel(4, {(0, 1): 0.6, (1, 2): -0.4, (2, 3): 0.5, (0, 3): 0.3, (2,): 0.2})
dist = exact_distribution(truth)
print("log Z =", dist.log_partition)

# a million draws, learned with pairwise terms only
samples = sample_exact(dist, 1_000_000, seed=1)
learned = learn_model(samples, LearnConfig(order=2))

for key in sorted(set(truth.terms) | set(learned.terms), key=lambda k: (len(k), k)):
    print(f"{str(key):>8}  true {truth[key]:+.4f}  learned {learned[key]:+.4f}")

# the error shrinks like 1/sqrt(M)
for M in (10_000, 100_000, 1_000_000):
    est = learn_model(sample_exact(dist, M, seed=2), LearnConfig(order=2))
    print(M, max(abs(est[k] - truth[k]) for k in est.terms))

# exact weights instead of samples give the model back to optimizer precision
print(learn_model(dist, LearnConfig(order=2, grad_tol=1e-12)).allclose(truth, atol=1e-9))
