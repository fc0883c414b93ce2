"""Single-spin output fields and their classical / quantum / noisy-quantum models.

A lone spin with ``P(+1) = p`` has output field ``h_out = arctanh(2p - 1)``.
The response models below predict ``h_out`` from the programmed field
``h_in`` given an inverse temperature ``beta``, a residual field ``h_res0``,
a transverse-field slope ``xi`` (transverse field ``xi * h_in``) and a
residual-field noise amplitude ``h_sd``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from itertools import product
from pathlib import Path

import numpy as np
from scipy import optimize, stats

CLAMP = 1e-15
KINDS = ("classical", "quantum", "noisy_quantum")
START_GRID = {
    "beta": (5.0, 10.0, 15.0),
    "h_res0": (-0.02, 0.0, 0.02),
    "xi": (0.0, 0.02),
    "h_sd": (0.0, 0.03, 0.06),
}
_FREE = {
    "classical": ("beta", "h_res0"),
    "quantum": ("beta", "h_res0", "xi"),
    "noisy_quantum": ("beta", "h_res0", "xi", "h_sd"),
}
_BOUNDS = {"beta": (1e-3, 200.0), "h_res0": (-1.0, 1.0), "xi": (0.0, 10.0), "h_sd": (0.0, 1.0)}


@dataclass(frozen=True)
class HoutEstimate:
    """Point estimate and confidence interval of a single-spin output field.

    ``saturated`` is ``"upper"`` when every sample was +1 (``h_out`` and
    ``ci_high`` are +inf) and ``"lower"`` when none was.
    """

    h_out: float
    ci_low: float
    ci_high: float
    saturated: str | None = None


@dataclass(frozen=True)
class FieldScan:
    h_in: np.ndarray
    S: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h_in, dtype=float)
        S = np.asarray(self.S, dtype=np.int64)
        M = np.broadcast_to(np.asarray(self.M, dtype=np.int64), h.shape).copy()
        if not (h.shape == S.shape == M.shape) or h.ndim != 1:
            raise ValueError("h_in, S and M must be equal-length vectors")
        if np.any(S < 0) or np.any(S > M) or np.any(M < 1):
            raise ValueError("need 0 <= S <= M and M >= 1 at every point")
        if len(np.unique(h)) != len(h):
            raise ValueError("h_in values must be distinct")
        object.__setattr__(self, "h_in", h)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "M", M)

    @property
    def measured_tanh(self) -> np.ndarray:
        """``tanh(h_out)`` of each point, i.e. the empirical spin mean."""
        return 2.0 * self.S / self.M - 1.0

    def __len__(self):
        return len(self.h_in)


@dataclass(frozen=True)
class SingleQubitFit:
    kind: str
    beta: float
    h_res0: float
    xi: float = 0.0
    h_sd: float = 0.0
    log_likelihood: float = math.nan

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not self.beta > 0 or self.xi < 0 or self.h_sd < 0:
            raise ValueError("need beta > 0, xi >= 0, h_sd >= 0")
        if self.kind == "classical" and (self.xi or self.h_sd):
            raise ValueError("classical fits have xi = h_sd = 0")
        if self.kind == "quantum" and self.h_sd:
            raise ValueError("quantum fits have h_sd = 0")

    def predict(self, h_in):
        return h_out_model(self.kind, h_in, self.beta, self.h_res0, self.xi, self.h_sd)

    def to_dict(self):
        d = asdict(self)
        d["loglik"] = d.pop("log_likelihood")
        return d


# ------------------------------------------------------------ estimation

def _arctanh(m):
    return np.arctanh(np.clip(m, -1 + CLAMP, 1 - CLAMP))


def _p_to_h(p):
    return 0.5 * (math.log(p) - math.log1p(-p))


def clopper_pearson(S, M, alpha):
    """Equal-tailed exact interval for a binomial proportion at confidence ``alpha``."""
    tail = (1.0 - alpha) / 2.0
    lo = 0.0 if S == 0 else stats.beta.ppf(tail, S, M - S + 1)
    hi = 1.0 if S == M else stats.beta.isf(tail, S + 1, M - S)
    return float(lo), float(hi)


def _more_likely_mass(x, M, p):
    """Probability of outcomes strictly more likely than ``x`` under Binomial(M, p)."""
    dist = stats.binom(M, p)
    fx = dist.logpmf(x)
    mode = int(math.floor((M + 1) * p))
    mode = min(max(mode, 0), M)
    if dist.logpmf(mode) <= fx:
        return 0.0
    if x <= mode:
        lo_, hi_ = mode, M
        while lo_ < hi_:  # largest y >= mode with logpmf(y) > fx
            mid = (lo_ + hi_ + 1) // 2
            if dist.logpmf(mid) > fx:
                lo_ = mid
            else:
                hi_ = mid - 1
        return float(dist.cdf(lo_) - dist.cdf(x))
    lo_, hi_ = 0, mode
    while lo_ < hi_:  # smallest y <= mode with logpmf(y) > fx
        mid = (lo_ + hi_) // 2
        if dist.logpmf(mid) > fx:
            hi_ = mid
        else:
            lo_ = mid + 1
    return float(dist.cdf(x - 1) - dist.cdf(lo_ - 1))


def crow_interval(S, M, alpha, tol=1e-12):
    """Shortest-acceptance-region interval: ``p`` is kept while ``S`` is among the
    most probable outcomes covering mass ``alpha``.
    """
    p_hat = S / M

    def accepted(p):
        return _more_likely_mass(S, M, p) < alpha

    def edge(inside, outside):
        while abs(outside - inside) > tol * max(1.0, abs(inside)):
            mid = 0.5 * (inside + outside)
            if accepted(mid):
                inside = mid
            else:
                outside = mid
        return inside

    lo = 0.0 if S == 0 else edge(p_hat, 0.0)
    hi = 1.0 if S == M else edge(p_hat, 1.0)
    return lo, hi


def estimate_hout(S: int, M: int, alpha: float = 0.997, method: str = "clopper-pearson") -> HoutEstimate:
    """Output field from ``S`` positive outcomes in ``M`` trials.

    ``alpha`` is the confidence level of the interval (0.997 for 3 sigma).
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0 <= S <= M or M < 1:
        raise ValueError("need 0 <= S <= M and M >= 1")
    if method == "clopper-pearson":
        lo, hi = clopper_pearson(S, M, alpha)
    elif method == "crow":
        lo, hi = crow_interval(S, M, alpha)
    else:
        raise ValueError(f"unknown interval method {method!r}")
    if S == M:
        return HoutEstimate(math.inf, _p_to_h(lo), math.inf, "upper")
    if S == 0:
        return HoutEstimate(-math.inf, -math.inf, _p_to_h(hi), "lower")
    return HoutEstimate(_p_to_h(S / M), _p_to_h(lo) if lo > 0 else -math.inf,
                        _p_to_h(hi) if hi < 1 else math.inf)


# ------------------------------------------------------------ response models

def h_out_classical(h_in, beta, h_res0):
    return beta * (np.asarray(h_in, dtype=float) + h_res0)


def _mean_quantum(h_in, beta, h_res, xi):
    """``<sigma_z>`` of a spin in longitudinal field ``h_in + h_res`` and transverse ``xi * h_in``."""
    h_in = np.asarray(h_in, dtype=float)
    hz = h_in + h_res
    norm = np.hypot(hz, xi * h_in)
    safe = np.where(norm > 0, norm, 1.0)
    ratio = np.where(norm > 0, np.tanh(beta * safe) / safe, beta)
    return hz * ratio


def h_out_quantum(h_in, beta, h_res0, xi):
    return _arctanh(_mean_quantum(h_in, beta, h_res0, xi))


def _mean_qnoise(h_in, beta, h_res0, xi, h_sd):
    return 0.5 * (_mean_quantum(h_in, beta, h_res0 + h_sd, xi) + _mean_quantum(h_in, beta, h_res0 - h_sd, xi))


def h_out_qnoise(h_in, beta, h_res0, xi, h_sd):
    """Noisy-quantum response with the residual field at ``h_res0 +/- h_sd``."""
    return _arctanh(_mean_qnoise(h_in, beta, h_res0, xi, h_sd))


def h_out_qnoise_uniform(h_in, beta, h_res0, xi, h_sd, n_nodes=16):
    """Same as :func:`h_out_qnoise` with the residual field uniform on
    ``h_res0 +/- sqrt(3) h_sd`` (Gauss-Legendre quadrature)."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    h_in = np.asarray(h_in, dtype=float)
    m = sum(wk / 2.0 * _mean_quantum(h_in, beta, h_res0 + math.sqrt(3.0) * h_sd * xk, xi)
            for xk, wk in zip(x, w))
    return _arctanh(m)


def _model_mean(kind, h_in, beta, h_res0, xi, h_sd):
    if kind == "classical":
        return np.tanh(h_out_classical(h_in, beta, h_res0))
    if kind == "quantum":
        return _mean_quantum(h_in, beta, h_res0, xi)
    if kind == "noisy_quantum":
        return _mean_qnoise(h_in, beta, h_res0, xi, h_sd)
    raise ValueError(f"unknown model kind {kind!r}")


def h_out_model(kind, h_in, beta, h_res0, xi=0.0, h_sd=0.0):
    if kind == "classical":
        return h_out_classical(h_in, beta, h_res0)
    return _arctanh(_model_mean(kind, h_in, beta, h_res0, xi, h_sd))


# ------------------------------------------------------------ fitting

def log_likelihood(scan: FieldScan, kind, beta, h_res0, xi=0.0, h_sd=0.0) -> float:
    """``sum tanh(h_meas) h_model + 0.5 ln(1 - tanh(h_model)^2)``, one term per point."""
    measured = scan.measured_tanh
    if kind == "classical":
        h = h_out_classical(scan.h_in, beta, h_res0)
        a = np.abs(h)
        return float(np.sum(measured * h - (a + np.log1p(np.exp(-2 * a)) - math.log(2.0))))
    m = np.clip(_model_mean(kind, scan.h_in, beta, h_res0, xi, h_sd), -1 + CLAMP, 1 - CLAMP)
    return float(np.sum(measured * np.arctanh(m) + 0.5 * np.log1p(-m * m)))


def start_points(kind, grid=None):
    grid = grid or START_GRID
    names = _FREE[kind]
    return [dict(zip(names, vals)) for vals in product(*(grid[k] for k in names))]


def fit_scan(scan: FieldScan, kind: str, grid=None) -> SingleQubitFit:
    """Maximum-likelihood fit with multi-start over the start grid; best start wins."""
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    names = _FREE[kind]
    unsaturated = np.sum((scan.S > 0) & (scan.S < scan.M))
    if unsaturated < 3 or len(scan) <= len(names):
        raise ValueError("need at least 3 unsaturated points and more points than parameters")

    def negll(x):
        return -log_likelihood(scan, kind, **dict(zip(names, x)))

    best = None
    for start in start_points(kind, grid):
        x0 = [start[k] for k in names]
        res = optimize.minimize(negll, x0, method="L-BFGS-B", bounds=[_BOUNDS[k] for k in names],
                                options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 2000})
        res = optimize.minimize(negll, res.x, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
        if not np.all(np.isfinite(res.x)) or not np.isfinite(res.fun):
            continue
        x = np.clip(res.x, [_BOUNDS[k][0] for k in names], [_BOUNDS[k][1] for k in names])
        value = negll(x)
        if best is None or value < best[0]:
            best = (value, x)
    if best is None:
        raise RuntimeError(f"no start converged for the {kind} model")
    params = dict(zip(names, (float(v) for v in best[1])))
    return SingleQubitFit(kind, log_likelihood=-float(best[0]), **params)


def synthetic_scan(h_in, M, beta, h_res0, xi=0.0, h_sd=0.0, kind="noisy_quantum", seed=None) -> FieldScan:
    """Binomial counts drawn from a response model."""
    rng = np.random.default_rng(seed)
    h_in = np.asarray(h_in, dtype=float)
    p = 0.5 * (1.0 + _model_mean(kind, h_in, beta, h_res0, xi, h_sd))
    return FieldScan(h_in, rng.binomial(M, np.clip(p, 0, 1)), np.full(h_in.shape, M))


# ------------------------------------------------------------ files

def read_scan(path) -> FieldScan:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        return FieldScan([float(r["h_in"]) for r in rows], [int(r["S"]) for r in rows],
                         [int(r["M"]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: expected columns h_in,S,M ({exc})") from None


def write_scan(scan: FieldScan, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h_in", "S", "M"])
        for h, s, m in zip(scan.h_in, scan.S, scan.M):
            w.writerow([repr(float(h)), int(s), int(m)])


def write_fit(fit: SingleQubitFit, path) -> None:
    Path(path).write_text(json.dumps(fit.to_dict(), indent=1) + "\n")
