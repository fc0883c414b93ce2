import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gibbsprobe.iso import (ConvergenceError, DegenerateDataError, LearnConfig, NeighborhoodParams,
                            iso_value_grad, learn_model, learn_neighborhood, learn_neighborhoods,
                            neighborhood_keys, symmetrize, write_learning_outputs)
from gibbsprobe.model import GibbsModel, exact_distribution
from gibbsprobe.sampler import SampleSet, apply_gauge, apply_gauge_samples, sample_exact

EXACT = LearnConfig(order=2, grad_tol=1e-12)


def random_model(rng, n, order, scale=0.4):
    keys = [k for r in range(1, order + 1) for k in itertools.combinations(range(n), r)]
    return GibbsModel(n, {k: float(rng.normal(0, scale)) for k in keys})


def true_params(model, focal, order):
    return NeighborhoodParams(focal, {k: model[k] for k in neighborhood_keys(model.n_spins, focal, order)})


def test_neighborhood_keys_order():
    assert neighborhood_keys(3, 1, 2) == [(1,), (0, 1), (1, 2)]
    assert neighborhood_keys(3, 0, 3) == [(0,), (0, 1), (0, 2), (0, 1, 2)]


def test_value_and_gradient_at_zero(rng):
    model = random_model(rng, 3, 2)
    dist = exact_distribution(model)
    params = NeighborhoodParams(0, {k: 0.0 for k in neighborhood_keys(3, 0, 2)})
    value, grad = iso_value_grad(dist, params)
    assert value == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(grad, [-dist.expectation(k) for k in params.keys], atol=1e-15)


def test_single_spin_screening_at_truth():
    h = 0.7
    dist = exact_distribution(GibbsModel(1, {(0,): h}))
    value, grad = iso_value_grad(dist, NeighborhoodParams(0, {(0,): h}))
    assert abs(grad[0]) < 1e-15
    # frozen: the objective at truth equals 1 / cosh(h)
    assert value == pytest.approx(1 / math.cosh(h), abs=1e-15)


def test_gradient_matches_finite_differences(rng):
    model = random_model(rng, 3, 3)
    dist = exact_distribution(model)
    keys = neighborhood_keys(3, 1, 3)
    theta = rng.normal(0, 0.3, len(keys))
    _, grad = iso_value_grad(dist, NeighborhoodParams(1, dict(zip(keys, theta))))
    step = 1e-5
    for j in range(len(keys)):
        e = np.zeros(len(keys))
        e[j] = step
        up, _ = iso_value_grad(dist, NeighborhoodParams(1, dict(zip(keys, theta + e))))
        dn, _ = iso_value_grad(dist, NeighborhoodParams(1, dict(zip(keys, theta - e))))
        assert (up - dn) / (2 * step) == pytest.approx(grad[j], rel=1e-6, abs=1e-12)


def test_gradient_on_samples_uses_frequencies():
    s = SampleSet(2, [[1, 1], [-1, 1]], [3, 1])
    _, grad = iso_value_grad(s, NeighborhoodParams(0, {(0,): 0.0, (0, 1): 0.0}))
    np.testing.assert_allclose(grad, [-0.5, -0.5])


def test_recovers_neighborhood_on_exact_weights(rng):
    model = random_model(rng, 4, 2)
    nb = learn_neighborhood(exact_distribution(model), 2, EXACT)
    for k, v in nb.coeffs.items():
        assert v == pytest.approx(model[k], abs=1e-6)
    assert nb.grad_norm <= 1e-12


def test_uniform_data_gives_zero():
    nb = learn_neighborhood(exact_distribution(GibbsModel(3)), 0, EXACT)
    assert max(abs(v) for v in nb.coeffs.values()) < 1e-12


def test_recovers_three_body_term(rng):
    model = GibbsModel(3, {(0,): 0.1, (0, 1): -0.3, (1, 2): 0.2, (0, 1, 2): 0.45})
    learned = learn_model(exact_distribution(model), LearnConfig(order=3, grad_tol=1e-12))
    assert learned[(0, 1, 2)] == pytest.approx(0.45, abs=1e-6)
    assert learned.allclose(model, atol=1e-6)


@given(st.integers(2, 5), st.integers(0, 2 ** 31))
def test_exact_recovery_of_ising_models(n, seed):
    model = random_model(np.random.default_rng(seed), n, 2, scale=0.5)
    assert learn_model(exact_distribution(model), EXACT).allclose(model, atol=1e-6)


def test_screening_fixed_point(rng):
    model = random_model(rng, 4, 3)
    dist = exact_distribution(model)
    for focal in range(4):
        _, grad = iso_value_grad(dist, true_params(model, focal, 3))
        assert np.linalg.norm(grad) <= 1e-10


def test_symmetrization_consistency(rng):
    model = random_model(rng, 4, 2)
    nbs = learn_neighborhoods(exact_distribution(model), EXACT)
    for i, j in itertools.combinations(range(4), 2):
        assert abs(nbs[i].coeffs[(i, j)] - nbs[j].coeffs[(i, j)]) <= 1e-8


def test_symmetrize_averages():
    a = NeighborhoodParams(0, {(0,): 1.0, (0, 1): 0.2})
    b = NeighborhoodParams(1, {(1,): -1.0, (0, 1): 0.4})
    m = symmetrize([a, b], 2)
    assert m[(0, 1)] == pytest.approx(0.3) and m[(0,)] == 1.0


@given(st.integers(0, 2 ** 31))
def test_convexity_midpoint(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 3, 2)
    dist = exact_distribution(model)
    keys = neighborhood_keys(3, 0, 2)
    a, b = rng.normal(0, 1, (2, len(keys)))
    va, _ = iso_value_grad(dist, NeighborhoodParams(0, dict(zip(keys, a))))
    vb, _ = iso_value_grad(dist, NeighborhoodParams(0, dict(zip(keys, b))))
    vm, _ = iso_value_grad(dist, NeighborhoodParams(0, dict(zip(keys, (a + b) / 2))))
    assert vm <= (va + vb) / 2 + 1e-12


def test_gauge_covariance(rng):
    model = random_model(rng, 4, 2)
    samples = sample_exact(exact_distribution(model), 200_000, seed=8)
    tau = np.array([1, -1, -1, 1])
    cfg = LearnConfig(order=2, grad_tol=1e-11)
    direct = apply_gauge(learn_model(samples, cfg), tau)
    gauged = learn_model(apply_gauge_samples(samples, tau), cfg)
    assert gauged.allclose(direct, atol=1e-9)


def test_order_two_emits_no_triples(rng):
    samples = sample_exact(exact_distribution(random_model(rng, 4, 3)), 50_000, seed=1)
    assert learn_model(samples, LearnConfig(order=2)).order <= 2


def test_degenerate_spin_is_named():
    s = SampleSet(3, [[1, 1, -1], [-1, 1, 1]], [5, 5])
    with pytest.raises(DegenerateDataError) as err:
        learn_model(s)
    assert err.value.spin == 1


def test_non_convergence_reports_gradient(rng):
    dist = exact_distribution(random_model(rng, 3, 2, scale=1.5))
    with pytest.raises(ConvergenceError) as err:
        learn_neighborhood(dist, 0, LearnConfig(order=2, grad_tol=1e-15, max_iter=1))
    assert err.value.grad_norm > 0 and err.value.focal == 0


def test_config_validation():
    with pytest.raises(ValueError):
        LearnConfig(order=0)
    with pytest.raises(ValueError):
        LearnConfig(l1_penalty=-1)
    with pytest.raises(ValueError):
        learn_neighborhood(exact_distribution(GibbsModel(2)), 0, LearnConfig(order=3))


def test_l1_penalty_shrinks_couplings(rng):
    model = GibbsModel(3, {(0, 1): 0.4, (1, 2): 0.02})
    samples = sample_exact(exact_distribution(model), 100_000, seed=3)
    plain = learn_model(samples, LearnConfig(order=2))
    sparse = learn_model(samples, LearnConfig(order=2, l1_penalty=0.02))
    assert abs(sparse[(0, 2)]) < abs(plain[(0, 2)]) or sparse[(0, 2)] == 0.0
    assert abs(sparse[(0, 1)]) < abs(plain[(0, 1)])
    assert sparse[(0, 1)] == pytest.approx(0.4, abs=0.05)


def test_report_written_next_to_model(tmp_path, rng):
    dist = exact_distribution(random_model(rng, 3, 2))
    nbs = learn_neighborhoods(dist, EXACT)
    model, report_path = write_learning_outputs(nbs, EXACT, tmp_path / "learned.json")
    assert report_path == tmp_path / "learned.report.json"
    report = json.loads(report_path.read_text())
    assert len(report["neighborhoods"]) == 3
    assert all(nb["grad_norm"] <= 1e-12 for nb in report["neighborhoods"])
    pair = next(e for e in report["estimates"] if e["spins"] == [0, 1])
    assert set(pair["by_focal"]) == {"0", "1"}
