"""Reproduction targets: run a pipeline and compare it with shipped reference values.

Each target returns a list of :class:`Check` rows. Reference numbers and
tolerances live in ``data/reference_values.json``; nothing here hard-codes
them.
"""
from __future__ import annotations

import csv
import json
import math
import sys
import time
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .error_est import estimate_error, significance_mask
from .iso import LearnConfig, learn_model
from .model import GibbsModel, exact_distribution
from .noise_oracle import effective_coupling, effective_field, oracle_grid
from .response import Roster, simulate_response_pipeline
from .sampler import NoiseSpec, child_seeds, noisy_mixture_distribution, sample_exact, srt_effective_distribution
from .single_qubit import fit_scan, h_out_qnoise, h_out_qnoise_uniform, synthetic_scan

TARGETS = ("table-s3", "table-s4", "fig-s5-threshold", "srt-means", "oracle-grid", "single-qubit-synthetic")


@dataclass(frozen=True)
class Check:
    target: str
    quantity: str
    expected: float
    got: float
    tolerance: float
    passed: bool
    informational: bool = False

    @property
    def status(self):
        return "INFO" if self.informational else ("PASS" if self.passed else "FAIL")

    def line(self):
        return (f"[{self.status}] {self.target}: {self.quantity} "
                f"got {self.got:.6g}, expected {self.expected:.6g} (tol {self.tolerance:.3g})")


@lru_cache(maxsize=None)
def references() -> dict:
    text = resources.files("gibbsprobe").joinpath("data/reference_values.json").read_text()
    return json.loads(text)


def four_spin_system():
    """Roster and NoiseSpec of the calibrated four-spin simulation."""
    ref = references()["four_spin_system"]
    labels = ref["labels"]
    pos = {lab: i for i, lab in enumerate(labels)}
    edges = [tuple(sorted((pos[a], pos[b]))) for a, b in ref["edges"]]
    noise = NoiseSpec(ref["beta_field"], ref["h_bias"], ref["h_sd"],
                      dict(zip(edges, ref["beta_edge"])), noise_kind=ref["noise_kind"])
    return Roster.ising(len(labels), edges, tuple(labels)), noise


def _key(labels, hw):
    pos = {lab: i for i, lab in enumerate(labels)}
    return tuple(sorted(pos[h] for h in hw))


def _hw_name(hw):
    return ("h" if len(hw) == 1 else "J") + "_" + ",".join(map(str, hw))


@lru_cache(maxsize=4)
def _response_run(n_models, seed, workers):
    roster, noise = four_spin_system()
    rf, diag = simulate_response_pipeline(noise, roster, n_models=n_models, seed=seed, workers=workers)
    return roster, rf


def check_table_s3(seed=0, n_models=20000, workers=None, **_):
    ref = references()["table-s3"]
    roster, rf = _response_run(n_models, seed, workers)
    tol = ref["tolerance_abs"]
    out = []
    for row in ref["linear"]:
        o, a = _key(roster.labels, row["output"]), _key(roster.labels, row["input"])
        got = rf.linear(o, a)
        out.append(Check("table-s3", f"lin {_hw_name(row['output'])} <- {_hw_name(row['input'])}",
                         row["value"], got, tol, abs(got - row["value"]) <= tol))
    return out


def check_table_s4(seed=0, n_models=20000, workers=None, **_):
    ref = references()["table-s4"]
    roster, rf = _response_run(n_models, seed, workers)
    out = []
    for row in ref["quadratic"]:
        o = _key(roster.labels, row["output"])
        a, b = (_key(roster.labels, k) for k in row["inputs"])
        got = rf.quadratic(o, a, b)
        tol = max(ref["tolerance_rel"] * abs(row["value"]), ref["tolerance_abs"])
        name = f"chi {_hw_name(row['output'])} <- {_hw_name(row['inputs'][0])}*{_hw_name(row['inputs'][1])}"
        out.append(Check("table-s4", name, row["value"], got, tol,
                         abs(got - row["value"]) <= tol and got < 0))
    return out


def threshold_case(case, beta, M, R, seed=0, workers=None):
    """Threshold report plus the significance pattern of one fresh reconstruction.

    Returns ``(report, learned, reference)``.
    """
    n = case["n_spins"]
    J = case["input_coupling"] * beta
    reference = GibbsModel(n, {tuple(e): J for e in case["edges"]})
    config = LearnConfig(order=case["order"])
    s_report, s_learn = child_seeds(seed, 2)
    report = estimate_error(reference, M, R, config, seed=s_report, workers=workers)
    learned = learn_model(sample_exact(exact_distribution(reference), M, s_learn), config, workers)
    return report, learned, reference


def _high_order_significant(learned, report):
    significant = significance_mask(learned, report)
    return sum(1 for k in significant if len(k) >= 3)


def check_fig_s5_threshold(seed=0, reduced=False, workers=None, **_):
    ref = references()["fig-s5-threshold"]
    n_extra = ref["extra_reconstructions"]
    out = []
    for case in ref["cases"]:
        M, R = case["M"], case["R"]
        if reduced:
            M, R = ref["reduced"]["M"], ref["reduced"]["R"]
        report, learned, reference = threshold_case(case, ref["effective_beta"], M, R, seed, workers)
        # sampling error scales as 1/sqrt(M), so a reduced run compares to a rescaled target
        expected = case["threshold"] * math.sqrt(case["M"] / M)
        tol = ref["tolerance_rel"] * expected
        thr = report.threshold
        # the reduced mode is judged on its significance pattern, not on the threshold value
        out.append(Check("fig-s5-threshold", f"{case['name']} threshold (M={M}, R={R})",
                         expected, thr, tol, abs(thr - expected) <= tol, informational=reduced))
        significant = significance_mask(learned, report)
        edges = {tuple(e) for e in case["edges"]}
        n_edges = len(edges & significant)
        out.append(Check("fig-s5-threshold", f"{case['name']} input edges significant",
                         len(edges), n_edges, 0, n_edges == len(edges)))
        if case["order"] >= 3:
            worst = max(abs(v) for k, v in learned.terms.items() if len(k) >= 3)
            n_sig = _high_order_significant(learned, report)
            out.append(Check("fig-s5-threshold",
                             f"{case['name']} order>=3 terms significant (max |coeff| {worst:.4g} vs {thr:.4g})",
                             0, n_sig, 0, n_sig == 0))
            # how often an independent reconstruction shows no significant high-order term
            dist = exact_distribution(reference)
            config = LearnConfig(order=case["order"])
            clean = sum(_high_order_significant(learn_model(sample_exact(dist, M, s), config, workers), report) == 0
                        for s in child_seeds(seed + 1, n_extra))
            out.append(Check("fig-s5-threshold",
                             f"{case['name']} share of {n_extra} further reconstructions with no significant order>=3 term",
                             1.0, clean / n_extra, 0.0, clean == n_extra, informational=True))
    return out


def _random_srt_case(rng, n):
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    model = GibbsModel(n, {p: float(rng.uniform(-0.5, 0.5)) for p in pairs if rng.random() < 0.7})
    beta_edge = {p: float(rng.uniform(0.5, 2.0)) for p in pairs}
    noise = NoiseSpec(rng.uniform(0.5, 15.0, n), rng.uniform(-0.1, 0.1, n), rng.uniform(0.0, 0.1, n),
                      beta_edge, noise_kind=str(rng.choice(["binary", "uniform"])))
    return model, noise


def check_srt_means(seed=0, **_):
    ref = references()["srt-means"]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for c in range(ref["n_models"]):
        n = 1 + c % ref["max_spins"]
        model, noise = _random_srt_case(rng, n)
        worst = max(worst, float(np.max(np.abs(srt_effective_distribution(model, noise).means()))))
    tol = ref["tolerance_abs"]
    return [Check("srt-means", f"max |single-spin mean| over {ref['n_models']} random models",
                  0.0, worst, tol, worst <= tol)]


def brute_force_field(spec, grad_tol=1e-13) -> float:
    """Field on the noisy spin, learned from the exact 2-spin mixture, in input units."""
    learned = learn_model(noisy_mixture_distribution(spec.model(), spec.noise()),
                          LearnConfig(order=2, grad_tol=grad_tol))
    return learned[(0,)] / spec.beta


def brute_force_coupling(spec, grad_tol=1e-13) -> float:
    """End-to-end coupling learned from the exact 3-spin mixture, in input units."""
    learned = learn_model(noisy_mixture_distribution(spec.model(), spec.noise()),
                          LearnConfig(order=2, grad_tol=grad_tol))
    return learned[(0, 2)] / spec.beta


def oracle_table():
    """Rows ``(motif, beta, a, b, h_sd, closed_form, brute_force)`` over the oracle grid."""
    toy2, toy3 = oracle_grid()
    rows = [("field", s.beta, s.J, s.h2, s.h_sd1, effective_field(s), brute_force_field(s)) for s in toy2]
    rows += [("coupling", s.beta, s.J12, s.J23, s.h_sd1, effective_coupling(s), brute_force_coupling(s))
             for s in toy3]
    return rows


def check_oracle_grid(**_):
    tol = references()["oracle-grid"]["tolerance_abs"]
    t0 = time.perf_counter()
    rows = oracle_table()
    elapsed = time.perf_counter() - t0
    out = []
    for motif in ("field", "coupling"):
        gaps = [abs(r[5] - r[6]) for r in rows if r[0] == motif]
        out.append(Check("oracle-grid", f"max |closed form - brute force| ({motif}, {len(gaps)} points)",
                         0.0, max(gaps), tol, max(gaps) <= tol))
    out.append(Check("oracle-grid", "runtime seconds", 60.0, elapsed, 60.0, elapsed <= 60.0))
    return out


def check_single_qubit(seed=0, **_):
    ref = references()["single-qubit-synthetic"]
    p, tol = ref["params"], ref["tolerance"]
    h_in = np.linspace(-1.0, 1.0, ref["n_points"])
    scan = synthetic_scan(h_in, ref["M"], p["beta"], p["h_res0"], p["xi"], p["h_sd"], seed=seed)
    fit = fit_scan(scan, "noisy_quantum")
    out = [
        Check("single-qubit-synthetic", "beta", p["beta"], fit.beta, tol["beta_rel"] * p["beta"],
              abs(fit.beta - p["beta"]) <= tol["beta_rel"] * p["beta"]),
        Check("single-qubit-synthetic", "h_sd", p["h_sd"], fit.h_sd, tol["h_sd_rel"] * p["h_sd"],
              abs(fit.h_sd - p["h_sd"]) <= tol["h_sd_rel"] * p["h_sd"]),
        Check("single-qubit-synthetic", "h_res0", p["h_res0"], fit.h_res0, tol["h_res0_abs"],
              abs(fit.h_res0 - p["h_res0"]) <= tol["h_res0_abs"]),
        Check("single-qubit-synthetic", "xi", p["xi"], fit.xi, tol["xi_abs"],
              abs(fit.xi - p["xi"]) <= tol["xi_abs"]),
    ]
    beta, h_sd, step = p["beta"], p["h_sd"], 1e-6
    slope = (h_out_qnoise(step, beta, 0.0, 0.0, h_sd) - h_out_qnoise(-step, beta, 0.0, 0.0, h_sd)) / (2 * step)
    expected = beta / math.cosh(beta * h_sd) ** 2
    out.append(Check("single-qubit-synthetic", "slope at zero field", expected, float(slope),
                     ref["slope_tolerance_abs"], abs(slope - expected) <= ref["slope_tolerance_abs"]))
    grid = np.linspace(-1.0, 1.0, 2001)
    gap = float(np.max(np.abs(h_out_qnoise(grid, **p) - h_out_qnoise_uniform(grid, **p))))
    out.append(Check("single-qubit-synthetic", "binary vs uniform noise sup-norm", 0.0, gap,
                     ref["noise_shape_tolerance"], gap < ref["noise_shape_tolerance"]))
    return out


_RUNNERS = {
    "table-s3": check_table_s3,
    "table-s4": check_table_s4,
    "fig-s5-threshold": check_fig_s5_threshold,
    "srt-means": check_srt_means,
    "oracle-grid": check_oracle_grid,
    "single-qubit-synthetic": check_single_qubit,
}


def run_target(target, seed=0, **options):
    """Checks for one target; ``options`` may set ``reduced``, ``n_models`` and ``workers``."""
    if target not in _RUNNERS:
        raise ValueError(f"unknown target {target!r}; choose from {', '.join(TARGETS)}")
    return _RUNNERS[target](seed=seed, **options)


def write_checks(checks, stream=None):
    w = csv.writer(stream or sys.stdout, lineterminator="\n")
    w.writerow(["target", "quantity", "expected", "got", "tolerance", "pass"])
    for c in checks:
        w.writerow([c.target, c.quantity, repr(float(c.expected)), repr(float(c.got)),
                    repr(float(c.tolerance)), c.status.lower()])
