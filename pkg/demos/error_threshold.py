"""
Which learned terms are real?
=============================

Repeat the learning on fresh samples to estimate the per-term spread, then
call a term significant when it exceeds three times the mean spread.
"""

from gibbsprobe import GibbsModel, LearnConfig, estimate_error, exact_distribution, learn_model, sample_exact
from gibbsprobe.error_est import significance_mask

# four spins on a square, learned with all terms up to order 3
reference = GibbsModel(4, {(0, 2): 0.6, (0, 3): 0.6, (1, 2): 0.6, (1, 3): 0.6})
config = LearnConfig(order=3)
report = estimate_error(reference, M=1_000_000, R=10, config=config, seed=0)
print("threshold", report.threshold)

learned = learn_model(sample_exact(exact_distribution(reference), 1_000_000, seed=99), config)
significant = significance_mask(learned, report)
print("significant terms:", sorted(significant, key=lambda k: (len(k), k)))
print("third-order terms above threshold:", [k for k in significant if len(k) == 3])
