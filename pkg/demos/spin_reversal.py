"""
Spin-reversal transforms cancel persistent biases
=================================================

Flip a random subset of spins in the programmed model, sample, and flip the
samples back. Averaged over gauges, a constant field bias no longer has a
preferred direction.
"""

import numpy as np
from gibbsprobe import GibbsModel, NoiseSpec, noisy_mixture_distribution
from gibbsprobe.sampler import apply_gauge, srt_effective_distribution

model = GibbsModel(3, {(0, 1): 0.4, (1, 2): -0.3})
noise = NoiseSpec([10.0, 11.0, 12.0], h_bias=[0.05, -0.02, 0.03], h_sd=[0.02, 0.04, 0.0])

print("means without gauges", noisy_mixture_distribution(model, noise).means())
print("means averaged over gauges", srt_effective_distribution(model, noise).means())

# a gauge maps a model to an equivalent one
tau = np.array([1, -1, -1])
print(apply_gauge(model, tau).terms)
