import warnings

import numpy as np
import pytest

from gibbsprobe.response import (PERTURBATION_GRID, RankDeficiencyError, ResponseFunction, Roster, draw_inputs,
                                 fit_quadratic, leading_quadratic, n_unknowns, predict, read_pairs,
                                 simulate_response_pipeline, write_pairs)
from gibbsprobe.sampler import NoiseSpec

EDGES = [(0, 1), (0, 3), (1, 2), (2, 3)]
ROSTER = Roster.ising(4, EDGES, labels=(304, 308, 305, 309))
CALIBRATED = NoiseSpec([12.3, 12.9, 13.1, 12.7], [0.014, -0.005, 0.003, 0.004], [0.029, 0.032, 0.041, 0.048],
                       {(0, 1): 12.1, (0, 3): 12.2, (1, 2): 12.5, (2, 3): 12.6})


def random_response(rng, d, n_out):
    a = rng.normal(0, 3, (n_out, d, d))
    return ResponseFunction([(i,) for i in range(d)], [(i,) for i in range(n_out)],
                            (a + a.transpose(0, 2, 1)) / 2, rng.normal(0, 10, (n_out, d)), rng.normal(0, 1, n_out))


@pytest.fixture(scope="module")
def calibrated_run():
    return simulate_response_pipeline(CALIBRATED, ROSTER, n_models=3000, seed=1)


# -- the quadratic form ---------------------------------------------------------

def test_roster_ordering():
    assert ROSTER.input_keys == [(0,), (1,), (2,), (3,), (0, 1), (0, 3), (1, 2), (2, 3)]
    assert ROSTER.output_keys[4:] == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    assert ROSTER.label((1, 2)) == "J[305,308]" or ROSTER.label((1, 2)) == "J[308,305]"


def test_zero_input_gives_offsets(rng):
    rf = random_response(rng, 3, 2)
    np.testing.assert_array_equal(predict(rf, np.zeros(3)), rf.offset)


def test_pure_linear_map(rng):
    d = 3
    lin = rng.normal(size=(2, d))
    rf = ResponseFunction([(i,) for i in range(d)], [(0,), (1,)], np.zeros((2, d, d)), lin, np.zeros(2))
    x = rng.normal(size=d)
    np.testing.assert_allclose(predict(rf, x), lin @ x, atol=1e-15)


def test_asymmetric_chi_rejected():
    chi = np.array([[[0.0, 1.0], [0.0, 0.0]]])
    with pytest.raises(ValueError, match="symmetric"):
        ResponseFunction([(0,), (1,)], [(0,)], chi, np.zeros((1, 2)), np.zeros(1))


def test_convention_conversion(rng, tmp_path):
    rf = random_response(rng, 3, 2)
    doc = rf.to_dict("main-text")
    chi_main = np.array(doc["outputs"]["h[0]"]["chi"])
    assert chi_main[0, 1] == pytest.approx(2 * rf.chi[0, 0, 1])
    assert chi_main[1, 1] == pytest.approx(rf.chi[0, 1, 1])
    assert rf.quadratic((0,), (0,), (1,), "main-text") == pytest.approx(2 * rf.quadratic((0,), (0,), (1,)))
    # the main-text matrix applied to the upper triangle gives the same prediction
    x = rng.normal(size=3)
    upper = sum(chi_main[a, b] * x[a] * x[b] for a in range(3) for b in range(a, 3))
    assert upper + rf.lin[0] @ x + rf.offset[0] == pytest.approx(predict(rf, x)[0], abs=1e-12)
    for convention in ("symmetric", "main-text"):
        rf.write_json(tmp_path / f"{convention}.json", convention)
        back = ResponseFunction.read_json(tmp_path / f"{convention}.json")
        np.testing.assert_allclose(back.chi, rf.chi, atol=1e-15)
        np.testing.assert_allclose(predict(back, x), predict(rf, x), atol=1e-12)


# -- fitting ------------------------------------------------------------------

def test_synthetic_round_trip(rng):
    rf = random_response(rng, 8, 3)
    X = draw_inputs(250, 8, seed=2)
    fit = fit_quadratic(X, predict(rf, X), rf.input_keys, rf.output_keys)
    np.testing.assert_allclose(fit.chi, rf.chi, atol=1e-8)
    np.testing.assert_allclose(fit.lin, rf.lin, atol=1e-8)
    np.testing.assert_allclose(fit.offset, rf.offset, atol=1e-8)


def test_constant_outputs():
    X = draw_inputs(100, 3, seed=1)
    fit = fit_quadratic(X, np.full((100, 1), 2.5), [(0,), (1,), (0, 1)], [(0,)])
    assert np.abs(fit.chi).max() < 1e-9 and np.abs(fit.lin).max() < 1e-10
    assert fit.offset[0] == pytest.approx(2.5)


def test_duplicate_rows_match_weighted_fit(rng):
    X = draw_inputs(60, 3, seed=4)
    Y = rng.normal(size=(60, 1))
    keys = [(0,), (1,), (0, 1)]
    reps = rng.integers(1, 4, 60)
    dup = fit_quadratic(np.repeat(X, reps, axis=0), np.repeat(Y, reps, axis=0), keys, [(0,)])
    sw = np.sqrt(reps)[:, None]
    F = np.column_stack([np.ones(60), X] + [X[:, a] * X[:, b] for a in range(3) for b in range(a, 3)])
    coef = np.linalg.lstsq(F * sw, Y * sw, rcond=None)[0][:, 0]
    assert dup.offset[0] == pytest.approx(coef[0], abs=1e-9)
    np.testing.assert_allclose(dup.lin[0], coef[1:4], atol=1e-8)


def test_warns_below_n_log_n(rng):
    X = draw_inputs(20, 3, seed=1)
    with pytest.warns(UserWarning, match="recommended"):
        fit_quadratic(X, rng.normal(size=(20, 1)), [(0,), (1,), (0, 1)], [(0,)])


def test_rank_deficiency_names_directions():
    X = draw_inputs(40, 2, seed=3)
    X[:, 1] = X[:, 0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(RankDeficiencyError) as err:
            fit_quadratic(X, X[:, :1], [(0,), (1,)], [(0,)])
    assert err.value.directions
    assert any("h[0]" in d and "h[1]" in d for d in err.value.directions)


def test_refit_on_predictions_is_idempotent(calibrated_run):
    rf, diag = calibrated_run
    X, Y = diag["inputs"], diag["outputs"]
    again = fit_quadratic(X, predict(rf, X), rf.input_keys, rf.output_keys)
    np.testing.assert_allclose(again.chi, rf.chi, atol=1e-10)
    np.testing.assert_allclose(again.lin, rf.lin, atol=1e-10)
    # the residual is the least-squares minimum
    F = np.column_stack([np.ones(len(X)), X] + [X[:, a] * X[:, b] for a in range(8) for b in range(a, 8)])
    best = np.linalg.lstsq(F, Y, rcond=None)[1]
    np.testing.assert_allclose(((Y - predict(rf, X)) ** 2).sum(axis=0), best, rtol=1e-8)


def test_pairs_file_round_trip(tmp_path, rng):
    X = draw_inputs(5, 3, seed=0)
    Y = rng.normal(size=(5, 2))
    write_pairs(X, Y, [(0,), (1,), (0, 1)], [(0,), (0, 1)], tmp_path / "p.csv")
    X2, Y2, ins, outs = read_pairs(tmp_path / "p.csv")
    np.testing.assert_array_equal(X2, X)
    np.testing.assert_array_equal(Y2, Y)
    assert ins == [(0,), (1,), (0, 1)] and outs == [(0,), (0, 1)]


def test_draws_stay_on_grid():
    X = draw_inputs(500, 4, seed=5)
    assert set(np.round(X.ravel(), 10)) <= set(PERTURBATION_GRID)
    assert n_unknowns(8) == 45


# -- the simulated pipeline -----------------------------------------------------------

def test_calibrated_linear_response(calibrated_run):
    rf, _ = calibrated_run
    assert rf.linear((3,), (3,)) == pytest.approx(9.4, abs=0.2)
    assert rf.linear((0, 1), (0, 1)) == pytest.approx(12.0, abs=0.2)


def test_calibrated_leading_quadratic_terms(calibrated_run):
    rf, _ = calibrated_run
    assert rf.quadratic((0, 2), (0, 1), (1, 2)) == pytest.approx(-0.9, abs=0.3)
    assert rf.quadratic((1, 3), (1, 2), (2, 3)) == pytest.approx(-1.3, abs=0.3)
    assert rf.quadratic((3,), (0,), (0, 3)) == pytest.approx(-13.0, rel=0.15)
    top = leading_quadratic(rf, (1, 3), top=2)
    assert {frozenset([a, b]) for a, b, _ in top} == {frozenset([(0, 1), (0, 3)]), frozenset([(1, 2), (2, 3)])}
    assert all(v < 0 for _, _, v in top)


def test_noiseless_pipeline_is_linear():
    quiet = CALIBRATED.replace(h_sd=np.zeros(4), h_bias=np.zeros(4))
    rf, diag = simulate_response_pipeline(quiet, ROSTER, n_models=400, seed=2)
    spurious = [rf.index(k) for k in [(0, 2), (1, 3)]]
    assert np.abs(diag["outputs"][:, spurious]).max() <= 1e-10
    assert np.abs(rf.chi).max() <= 1e-8
    assert rf.linear((0,), (0,)) == pytest.approx(12.3, abs=1e-8)


def test_global_field_flip():
    noise = CALIBRATED.replace(h_bias=np.zeros(4))
    rf, diag = simulate_response_pipeline(noise, ROSTER, n_models=300, seed=3)
    X = diag["inputs"].copy()
    X[:, :4] *= -1
    flipped, diag2 = simulate_response_pipeline(noise, ROSTER, inputs=X, seed=3)
    np.testing.assert_allclose(diag2["outputs"][:, :4], -diag["outputs"][:, :4], atol=1e-9)
    np.testing.assert_allclose(diag2["outputs"][:, 4:], diag["outputs"][:, 4:], atol=1e-9)


@pytest.mark.parametrize("beta,h_sd", [(5.0, 0.05), (12.0, 0.03), (20.0, 0.02)])
def test_spurious_susceptibilities_are_negative(beta, h_sd):
    noise = NoiseSpec.uniform(4, beta, h_sd=h_sd)
    rf, _ = simulate_response_pipeline(noise, ROSTER, n_models=400, seed=4)
    assert rf.quadratic((0, 2), (0, 1), (1, 2)) < 0
    assert rf.quadratic((1, 3), (0, 1), (0, 3)) < 0


def test_finite_sample_mode_runs():
    roster = Roster.ising(2, [(0, 1)])
    noise = NoiseSpec.uniform(2, 5.0, h_sd=0.02)
    rf, diag = simulate_response_pipeline(noise, roster, n_models=40, seed=5, mode="samples", M=20_000)
    assert diag["outputs"].shape == (40, 3)
    assert rf.linear((0, 1), (0, 1)) == pytest.approx(5.0, rel=0.3)


def test_threads_do_not_change_results():
    a, da = simulate_response_pipeline(CALIBRATED, ROSTER, n_models=200, seed=6)
    b, db = simulate_response_pipeline(CALIBRATED, ROSTER, n_models=200, seed=6, workers=3)
    np.testing.assert_array_equal(da["outputs"], db["outputs"])


def test_roster_noise_mismatch():
    with pytest.raises(ValueError):
        simulate_response_pipeline(NoiseSpec.uniform(3), ROSTER, n_models=10)
