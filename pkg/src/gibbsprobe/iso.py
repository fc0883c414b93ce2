"""Interaction Screening reconstruction of multi-body Gibbs models.

For a focal spin ``i`` the objective is the weighted average

    S_i(theta) = < exp(-sum_K theta_K prod_{j in K} s_j) >

over all keys ``K`` that contain ``i`` and have at most ``order`` spins. It
is convex; at the true coefficients its gradient vanishes in expectation.
Each neighbourhood is solved separately and shared coefficients are averaged.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .model import ExactDistribution, GibbsModel, model_to_dict, spin_table, term_products
from .sampler import SampleSet


class ConvergenceError(RuntimeError):
    """The optimizer hit ``max_iter`` before the gradient tolerance."""

    def __init__(self, message, grad_norm=math.nan, focal=None):
        super().__init__(message)
        self.grad_norm = grad_norm
        self.focal = focal


class DegenerateDataError(ValueError):
    """A spin never changes sign in the data, so its objective is unbounded."""

    def __init__(self, spin):
        super().__init__(f"spin {spin} takes a single value in every sample; its field is unbounded")
        self.spin = spin


@dataclass(frozen=True)
class LearnConfig:
    order: int = 2
    grad_tol: float = 1e-9
    max_iter: int = 200
    l1_penalty: float = 0.0

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.grad_tol <= 0 or self.max_iter < 1 or self.l1_penalty < 0:
            raise ValueError("invalid optimizer settings")


@dataclass
class NeighborhoodParams:
    """Coefficients of every key containing ``focal``, with solver diagnostics."""

    focal: int
    coeffs: dict
    grad_norm: float = math.nan
    n_iter: int = 0

    def __post_init__(self):
        for key in self.coeffs:
            if self.focal not in key or list(key) != sorted(set(key)):
                raise ValueError(f"key {key} must be sorted, distinct and contain {self.focal}")

    @property
    def keys(self):
        return sorted(self.coeffs, key=lambda k: (len(k), k))

    def vector(self):
        return np.array([self.coeffs[k] for k in self.keys])


def neighborhood_keys(n_spins, focal, order):
    """Keys of size ``<= order`` containing ``focal``, ordered by size then lexicographically."""
    others = [j for j in range(n_spins) if j != focal]
    keys = []
    for r in range(min(order, n_spins)):
        keys += [tuple(sorted((focal,) + c)) for c in combinations(others, r)]
    return sorted(keys, key=lambda k: (len(k), k))


def weighted_configs(data):
    """Distinct configurations and their weights (summing to one)."""
    if isinstance(data, SampleSet):
        return data.configs, data.weights
    if isinstance(data, ExactDistribution):
        keep = data.probs > 0
        return spin_table(data.n_spins)[keep], data.probs[keep]
    raise TypeError(f"expected SampleSet or ExactDistribution, got {type(data).__name__}")


def _objective(X, w, theta):
    e = w * np.exp(-(X @ theta))
    return e.sum(), -(X.T @ e), e


def iso_value_grad(data, params: NeighborhoodParams):
    """Objective value and gradient (in ``params.keys`` order)."""
    configs, w = weighted_configs(data)
    keys = params.keys
    if any(k[-1] >= configs.shape[1] for k in keys):
        raise ValueError("parameter key refers to a spin outside the data")
    value, grad, _ = _objective(term_products(configs, keys), w, params.vector())
    return float(value), grad


def minimize_iso(X, w, tol=1e-9, max_iter=200, theta0=None):
    """Damped Newton descent on the objective given the design matrix ``X``.

    Returns ``(theta, grad_norm, iterations)``; raises ConvergenceError when
    the gradient norm is still above ``tol`` after ``max_iter`` steps.
    """
    theta = np.zeros(X.shape[1]) if theta0 is None else np.array(theta0, dtype=float)
    value, grad, e = _objective(X, w, theta)
    gnorm = float(np.linalg.norm(grad))
    for it in range(max_iter):
        if gnorm <= tol:
            return theta, gnorm, it
        hess = (X.T * e) @ X
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        slope = grad @ step
        if slope >= 0:
            step, slope = -grad, -(grad @ grad)
        t = 1.0
        while True:
            cand = theta + t * step
            new_value, new_grad, new_e = _objective(X, w, cand)
            if new_value <= value + 1e-4 * t * slope or t < 1e-12:
                break
            # near the optimum rounding can hide a genuine decrease
            if np.linalg.norm(new_grad) < gnorm and new_value <= value * (1 + 1e-15):
                break
            t *= 0.5
        theta, value, grad, e = cand, new_value, new_grad, new_e
        gnorm = float(np.linalg.norm(grad))
    if gnorm <= tol:
        return theta, gnorm, max_iter
    raise ConvergenceError(f"gradient norm {gnorm:.3e} above {tol:.1e} after {max_iter} iterations", gnorm)


def _minimize_iso_l1(X, w, penalized, lam, tol, max_iter):
    p = X.shape[1]
    lam_vec = np.where(penalized, lam, 0.0)

    def fun(z):
        theta = z[:p] - z[p:]
        value, grad, _ = _objective(X, w, theta)
        return value + lam_vec @ (z[:p] + z[p:]), np.r_[grad + lam_vec, -grad + lam_vec]

    # unpenalized coordinates live in the first half only and are unbounded
    bounds = [(None, None) if not pen else (0, None) for pen in penalized] + \
             [(0, 0) if not pen else (0, None) for pen in penalized]
    res = minimize(fun, np.zeros(2 * p), jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": max_iter * 50, "ftol": 1e-15, "gtol": tol * 1e-2})
    theta = res.x[:p] - res.x[p:]
    _, grad, _ = _objective(X, w, theta)
    resid = np.where(theta != 0, grad + lam_vec * np.sign(theta), np.maximum(np.abs(grad) - lam_vec, 0))
    return theta, float(np.linalg.norm(resid)), int(res.nit)


def _constant_spin(configs, spin):
    col = configs[:, spin]
    return np.all(col == col[0])


def learn_neighborhood(data, focal: int, config: LearnConfig = LearnConfig()) -> NeighborhoodParams:
    """Minimize the screening objective of one spin over keys of size ``<= config.order``."""
    configs, w = weighted_configs(data)
    n = configs.shape[1]
    if not 0 <= focal < n:
        raise ValueError(f"focal spin {focal} outside [0, {n})")
    if config.order > n:
        raise ValueError(f"order {config.order} exceeds the number of spins {n}")
    if _constant_spin(configs, focal):
        raise DegenerateDataError(focal)
    keys = neighborhood_keys(n, focal, config.order)
    X = term_products(configs, keys)
    try:
        if config.l1_penalty > 0:
            penalized = np.array([len(k) > 1 for k in keys])
            theta, gnorm, it = _minimize_iso_l1(X, w, penalized, config.l1_penalty,
                                                config.grad_tol, config.max_iter)
            if gnorm > max(config.grad_tol, 1e-7):
                raise ConvergenceError(f"optimality residual {gnorm:.3e} above tolerance", gnorm)
        else:
            theta, gnorm, it = minimize_iso(X, w, config.grad_tol, config.max_iter)
    except ConvergenceError as exc:
        raise ConvergenceError(f"spin {focal}: {exc}", exc.grad_norm, focal) from None
    return NeighborhoodParams(focal, dict(zip(keys, theta.tolist())), gnorm, it)


def learn_neighborhoods(data, config: LearnConfig = LearnConfig(), workers: int | None = None):
    """Solve every per-spin problem; results are ordered by focal spin."""
    configs, _ = weighted_configs(data)
    n = configs.shape[1]
    for spin in range(n):
        if _constant_spin(configs, spin):
            raise DegenerateDataError(spin)
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda i: learn_neighborhood(data, i, config), range(n)))
    return [learn_neighborhood(data, i, config) for i in range(n)]


def symmetrize(neighborhoods, n_spins) -> GibbsModel:
    """Average each key's estimates over all neighbourhoods that contain it."""
    est = {}
    for nb in neighborhoods:
        for key, v in nb.coeffs.items():
            est.setdefault(key, []).append(v)
    return GibbsModel(n_spins, {k: float(np.mean(v)) for k, v in est.items()})


def learn_model(data, config: LearnConfig = LearnConfig(), workers: int | None = None) -> GibbsModel:
    """Reconstruct a model of order ``config.order`` from samples or exact weights."""
    nbs = learn_neighborhoods(data, config, workers)
    return symmetrize(nbs, len(nbs))


def learning_report(neighborhoods, config: LearnConfig) -> dict:
    per_term = {}
    for nb in neighborhoods:
        for key, v in nb.coeffs.items():
            per_term.setdefault(key, {})[str(nb.focal)] = v
    return {
        "config": {"order": config.order, "grad_tol": config.grad_tol,
                   "max_iter": config.max_iter, "l1_penalty": config.l1_penalty},
        "neighborhoods": [{"focal": nb.focal, "grad_norm": nb.grad_norm, "iterations": nb.n_iter}
                          for nb in neighborhoods],
        "estimates": [{"spins": list(k), "by_focal": per_term[k]}
                      for k in sorted(per_term, key=lambda k: (len(k), k))],
    }


def write_learning_outputs(neighborhoods, config, model_path, report_path=None):
    """Write the symmetrized model and, beside it, the JSON report."""
    model = symmetrize(neighborhoods, len(neighborhoods))
    model_path = Path(model_path)
    model_path.write_text(json.dumps(model_to_dict(model), indent=1) + "\n")
    report_path = Path(report_path) if report_path else model_path.with_suffix(".report.json")
    report_path.write_text(json.dumps(learning_report(neighborhoods, config), indent=1) + "\n")
    return model, report_path
