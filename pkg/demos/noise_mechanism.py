"""
Field noise creates spurious terms
==================================

A sampler whose fields jitter between draws produces a mixture of Gibbs
distributions. Learned as a single model, that mixture carries terms that
were never programmed. Two toy motifs have closed forms.
"""

from gibbsprobe import GibbsModel, LearnConfig, NoiseSpec, learn_model, noisy_mixture_distribution
from gibbsprobe.noise_oracle import ToySpec2, ToySpec3, effective_coupling, effective_field, small_param_coupling

# two spins: a coupling, a field on spin 2 and noise on spin 1
toy = ToySpec2(J=0.03, h2=0.03, h_sd1=0.05, beta=12.0)
learned = learn_model(noisy_mixture_distribution(toy.model(), toy.noise()), LearnConfig(order=2, grad_tol=1e-13))
print("induced field: closed form", effective_field(toy), "learned", learned[(0,)] / toy.beta)

# three-spin chain with noisy ends: a coupling appears between spins 1 and 3
chain = ToySpec3(J12=0.04, J23=0.04, h_sd1=0.05, h_sd3=0.05, beta=12.0)
learned = learn_model(noisy_mixture_distribution(chain.model(), chain.noise()), LearnConfig(order=2, grad_tol=1e-13))
print("induced coupling:", effective_coupling(chain), learned[(0, 2)] / chain.beta)
print("small-parameter estimate:", small_param_coupling(chain))

# uniform noise of the same spread gives a similar but not identical answer
uniform = NoiseSpec.uniform(3, 12.0, h_sd=[0.05, 0.0, 0.05], noise_kind="uniform")
learned = learn_model(noisy_mixture_distribution(chain.model(), uniform), LearnConfig(order=2, grad_tol=1e-13))
print("uniform noise:", learned[(0, 2)] / 12.0)
