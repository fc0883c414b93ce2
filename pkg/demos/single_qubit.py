"""
Single-qubit response curves
============================

Scan the input field on one spin, count +1 outcomes and fit four response
models of increasing detail by maximum likelihood.
"""

import numpy as np
from gibbsprobe.single_qubit import KINDS, estimate_hout, fit_scan, h_out_qnoise, synthetic_scan

h_in = np.linspace(-1.0, 1.0, 41)
scan = synthetic_scan(h_in, 5_000_000, beta=12.7, h_res0=0.004, xi=0.013, h_sd=0.048, seed=0)

for kind in KINDS:
    fit = fit_scan(scan, kind)
    print(f"{kind:>16}  beta {fit.beta:.3f}  h_res0 {fit.h_res0:.4f}  xi {fit.xi:.4f}  "
          f"h_sd {fit.h_sd:.4f}  loglik {fit.log_likelihood:.1f}")

# the slope at zero field is reduced by the noise
step = 1e-6
print("slope", (h_out_qnoise(step, 12.7, 0.0, 0.0, 0.048) - h_out_qnoise(-step, 12.7, 0.0, 0.0, 0.048)) / (2 * step))
print("12.7 / cosh^2(12.7 * 0.048) =", 12.7 / np.cosh(12.7 * 0.048) ** 2)

# a point estimate of the output field from counts, with a confidence interval
print(estimate_hout(4500, 10000))
