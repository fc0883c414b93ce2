"""Closed-form effects of fast field noise on two toy motifs.

Two spins coupled by ``J``, with a constant field ``h2`` on spin 2 and a
+/- ``h_sd1`` noisy field on spin 1, look like a noiseless model with an extra
field on spin 1. A three-spin chain with noisy ends looks like a noiseless
chain plus a coupling between its ends. All quantities here are in input
units (divide a learned output by ``beta`` to compare).

The closed forms never touch the learner, so they are independent checks
of it; only :func:`four_spin_effective` composes mixture and learner.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .model import GibbsModel
from .sampler import NoiseSpec


def _atanh(x):
    # log1p form keeps full relative precision for tiny arguments
    return 0.5 * math.log1p(2.0 * x / (1.0 - x))


@dataclass(frozen=True)
class ToySpec2:
    J: float
    h2: float
    h_sd1: float
    beta: float

    def __post_init__(self):
        if self.h_sd1 < 0 or not self.beta > 0:
            raise ValueError("need h_sd1 >= 0 and beta > 0")

    def model(self) -> GibbsModel:
        return GibbsModel(2, {(1,): self.h2, (0, 1): self.J})

    def noise(self) -> NoiseSpec:
        return NoiseSpec.uniform(2, self.beta, h_sd=[self.h_sd1, 0.0])


@dataclass(frozen=True)
class ToySpec3:
    J12: float
    J23: float
    h_sd1: float
    h_sd3: float
    beta: float

    def __post_init__(self):
        if self.h_sd1 < 0 or self.h_sd3 < 0 or not self.beta > 0:
            raise ValueError("need non-negative noise and beta > 0")

    def model(self) -> GibbsModel:
        return GibbsModel(3, {(0, 1): self.J12, (1, 2): self.J23})

    def noise(self) -> NoiseSpec:
        return NoiseSpec.uniform(3, self.beta, h_sd=[self.h_sd1, 0.0, self.h_sd3])


def effective_field(spec: ToySpec2) -> float:
    """Field induced on the noisy spin of the two-spin motif."""
    b = spec.beta
    x = math.tanh(b * spec.J) * math.tanh(b * spec.h2) * math.tanh(b * spec.h_sd1) ** 2
    return -_atanh(x) / b


def effective_coupling(spec: ToySpec3) -> float:
    """Coupling induced between the two noisy ends of the chain."""
    b = spec.beta
    x = (math.tanh(b * spec.J12) * math.tanh(b * spec.J23)
         * math.tanh(b * spec.h_sd1) ** 2 * math.tanh(b * spec.h_sd3) ** 2)
    return -_atanh(x) / b


def small_param_field(spec: ToySpec2) -> float:
    b = spec.beta
    return -b * spec.J * spec.h2 * math.tanh(b * spec.h_sd1) ** 2


def small_param_coupling(spec: ToySpec3) -> float:
    b = spec.beta
    return -b * spec.J12 * spec.J23 * math.tanh(b * spec.h_sd1) ** 2 * math.tanh(b * spec.h_sd3) ** 2


def four_spin_effective(model: GibbsModel, noise: NoiseSpec, grad_tol: float = 1e-12) -> GibbsModel:
    """Order-2 model learned from the exact noisy mixture of a 4-spin input.

    Contains all four fields and all six pairs, in output units.
    """
    from .iso import LearnConfig, learn_model
    from .sampler import noisy_mixture_distribution

    if model.n_spins != 4:
        raise ValueError("four_spin_effective takes a 4-spin model")
    dist = noisy_mixture_distribution(model, noise)
    return learn_model(dist, LearnConfig(order=2, grad_tol=grad_tol))


ORACLE_BETAS = (1.0, 5.0, 12.0)
ORACLE_VALUES = (-0.05, -0.02, 0.0, 0.02, 0.05)
ORACLE_NOISE = (0.0, 0.02, 0.05)


def oracle_grid():
    """The 225 two-spin and 225 three-spin parameter points used for checks."""
    toy2 = [ToySpec2(J, h, sd, b) for b in ORACLE_BETAS for J in ORACLE_VALUES
            for h in ORACLE_VALUES for sd in ORACLE_NOISE]
    toy3 = [ToySpec3(J12, J23, sd, sd, b) for b in ORACLE_BETAS for J12 in ORACLE_VALUES
            for J23 in ORACLE_VALUES for sd in ORACLE_NOISE]
    return toy2, toy3
