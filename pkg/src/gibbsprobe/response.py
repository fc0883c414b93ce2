"""Quadratic input -> output response functions.

Each learned output parameter ``y`` (every field and every spin pair) is
modelled as ``y = x^T chi x + lin^T x + offset`` where ``x`` stacks the
programmed fields and then the programmed couplings of a fixed roster.
``chi`` is stored symmetric; the convention that keeps one coefficient per
unordered product doubles its off-diagonal entries.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.linalg import null_space

from .iso import LearnConfig, NeighborhoodParams, learn_model, minimize_iso, neighborhood_keys, symmetrize
from .model import GibbsModel, spin_table, term_products
from .sampler import NoiseSpec, _mixture_probs, _static_energies, child_seeds, noise_realizations, sample_noisy

PERTURBATION_GRID = np.round(np.linspace(-0.05, 0.05, 11), 10)


class RankDeficiencyError(ValueError):
    def __init__(self, message, directions):
        super().__init__(message)
        self.directions = directions


def key_name(key):
    return ("h[%d]" if len(key) == 1 else "J[%s]") % (key[0] if len(key) == 1 else ",".join(map(str, key)))


def parse_key_name(name):
    kind, inner = name[0], name[2:-1]
    key = tuple(int(v) for v in inner.split(","))
    if (kind == "h") != (len(key) == 1) or name[1] != "[" or name[-1] != "]":
        raise ValueError(f"bad parameter name {name!r}")
    return key


@dataclass(frozen=True)
class Roster:
    """Programmable spins and couplers; ``labels`` are optional hardware ids."""

    n_spins: int
    fields: tuple
    edges: tuple
    labels: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(int(i) for i in self.fields))
        object.__setattr__(self, "edges", tuple(tuple(sorted(map(int, e))) for e in self.edges))

    @classmethod
    def ising(cls, n_spins, edges, labels=None):
        return cls(n_spins, tuple(range(n_spins)), tuple(edges), labels)

    @property
    def input_keys(self):
        return [(i,) for i in self.fields] + list(self.edges)

    @property
    def output_keys(self):
        return [(i,) for i in range(self.n_spins)] + list(combinations(range(self.n_spins), 2))

    def model(self, x) -> GibbsModel:
        """Input model for a parameter vector ``x`` in roster order."""
        return GibbsModel(self.n_spins, {k: float(v) for k, v in zip(self.input_keys, x) if v != 0.0})

    def vector(self, model: GibbsModel) -> np.ndarray:
        return np.array([model[k] for k in self.input_keys])

    def label(self, key):
        if self.labels is None:
            return key_name(key)
        return key_name(tuple(self.labels[i] for i in key))


@dataclass(frozen=True, eq=False)
class ResponseFunction:
    input_keys: list
    output_keys: list
    chi: np.ndarray
    lin: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        chi = np.asarray(self.chi, dtype=float)
        d, n_out = len(self.input_keys), len(self.output_keys)
        if chi.shape != (n_out, d, d):
            raise ValueError(f"chi must have shape {(n_out, d, d)}")
        if not np.allclose(chi, chi.transpose(0, 2, 1), rtol=0, atol=1e-12):
            raise ValueError("chi must be symmetric")
        lin = np.asarray(self.lin, dtype=float).reshape(n_out, d)
        offset = np.asarray(self.offset, dtype=float).reshape(n_out)
        if not all(np.all(np.isfinite(a)) for a in (chi, lin, offset)):
            raise ValueError("response coefficients must be finite")
        object.__setattr__(self, "chi", chi)
        object.__setattr__(self, "lin", lin)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "input_keys", [tuple(k) for k in self.input_keys])
        object.__setattr__(self, "output_keys", [tuple(k) for k in self.output_keys])

    def index(self, output_key):
        return self.output_keys.index(tuple(output_key))

    def quadratic(self, output_key, a, b, convention="symmetric") -> float:
        """Coefficient between inputs ``a`` and ``b`` (keys) for one output."""
        o = self.index(output_key)
        i, j = self.input_keys.index(tuple(a)), self.input_keys.index(tuple(b))
        factor = 2.0 if (convention == "main-text" and i != j) else 1.0
        return factor * float(self.chi[o, i, j])

    def linear(self, output_key, a) -> float:
        return float(self.lin[self.index(output_key), self.input_keys.index(tuple(a))])

    def to_dict(self, convention="symmetric") -> dict:
        if convention not in ("symmetric", "main-text"):
            raise ValueError(f"unknown convention {convention!r}")
        d = len(self.input_keys)
        scale = np.ones((d, d))
        if convention == "main-text":
            scale = 2.0 - np.eye(d)
        doc = {"inputs": [key_name(k) for k in self.input_keys], "convention": convention, "outputs": {}}
        for o, key in enumerate(self.output_keys):
            doc["outputs"][key_name(key)] = {
                "chi": (self.chi[o] * scale).tolist(),
                "lin": self.lin[o].tolist(),
                "offset": float(self.offset[o]),
            }
        return doc

    @classmethod
    def from_dict(cls, doc) -> "ResponseFunction":
        inputs = [parse_key_name(n) for n in doc["inputs"]]
        d = len(inputs)
        scale = 0.5 + 0.5 * np.eye(d) if doc.get("convention", "symmetric") == "main-text" else np.ones((d, d))
        names = list(doc["outputs"])
        outs = doc["outputs"]
        return cls(inputs, [parse_key_name(n) for n in names],
                   np.array([np.asarray(outs[n]["chi"]) * scale for n in names]),
                   np.array([outs[n]["lin"] for n in names]),
                   np.array([outs[n]["offset"] for n in names]))

    def write_json(self, path, convention="symmetric"):
        Path(path).write_text(json.dumps(self.to_dict(convention), indent=1) + "\n")

    @classmethod
    def read_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def predict(rf: ResponseFunction, x) -> np.ndarray:
    """Predicted output parameters (in ``rf.output_keys`` order) for one or many inputs."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    out = np.einsum("na,oab,nb->no", X, rf.chi, X) + X @ rf.lin.T + rf.offset
    return out[0] if single else out


def n_unknowns(d) -> int:
    return 1 + d + d * (d + 1) // 2


def _design(X):
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    iu = [(a, b) for a in range(d) for b in range(a, d)]
    F = np.empty((n, n_unknowns(d)))
    F[:, 0] = 1.0
    F[:, 1:d + 1] = X
    for c, (a, b) in enumerate(iu):
        F[:, d + 1 + c] = X[:, a] * X[:, b]
    return F, iu


def fit_quadratic(X, Y, input_keys, output_keys, rcond=1e-10) -> ResponseFunction:
    """Least-squares quadratic fit of every output column of ``Y`` on inputs ``X``.

    Warns when there are fewer than ``n ln n`` pairs for ``n`` unknowns per
    output, and raises RankDeficiencyError (naming the unidentifiable
    directions) when the design matrix is singular.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y must have the same number of rows")
    d = X.shape[1]
    if d != len(input_keys) or Y.shape[1] != len(output_keys):
        raise ValueError("key lists do not match the data columns")
    F, iu = _design(X)
    nu = F.shape[1]
    if X.shape[0] < nu * math.log(nu):
        warnings.warn(f"{X.shape[0]} pairs for {nu} unknowns per output; "
                      f"at least {math.ceil(nu * math.log(nu))} recommended", stacklevel=2)
    null = null_space(F, rcond=rcond)
    if null.shape[1]:
        names = ["1"] + [key_name(k) for k in input_keys] + \
                [f"{key_name(input_keys[a])}*{key_name(input_keys[b])}" for a, b in iu]
        dirs = [{names[j]: float(v) for j, v in enumerate(col) if abs(v) > 1e-8} for col in null.T]
        raise RankDeficiencyError(f"design matrix has {null.shape[1]} unidentifiable direction(s)", dirs)
    coef = np.linalg.lstsq(F, Y, rcond=None)[0]
    n_out = Y.shape[1]
    chi = np.zeros((n_out, d, d))
    for c, (a, b) in enumerate(iu):
        v = coef[d + 1 + c]
        if a == b:
            chi[:, a, a] = v
        else:
            chi[:, a, b] = chi[:, b, a] = v / 2.0
    return ResponseFunction(list(input_keys), list(output_keys), chi, coef[1:d + 1].T, coef[0])


def draw_inputs(n_models, d, grid=PERTURBATION_GRID, seed=None) -> np.ndarray:
    """I.i.d. uniform draws from ``grid`` for each of ``d`` coordinates."""
    rng = np.random.default_rng(seed)
    return np.asarray(grid)[rng.integers(0, len(grid), size=(n_models, d))]


class _ExactLearner:
    """Order-2 learner on exact mixture weights with designs cached per spin."""

    def __init__(self, roster: Roster, noise: NoiseSpec, grad_tol: float):
        self.roster, self.noise, self.grad_tol = roster, noise, grad_tol
        n = roster.n_spins
        self.table = spin_table(n)
        s, self.weights = noise_realizations(noise)
        self.shifts = s * (noise.beta_field * noise.h_sd)
        self.keys = [neighborhood_keys(n, i, 2) for i in range(n)]
        self.designs = [term_products(self.table, k) for k in self.keys]
        self.out_keys = roster.output_keys

    def __call__(self, x):
        model = self.roster.model(x)
        probs = _mixture_probs(_static_energies(model, self.noise), self.shifts, self.weights, self.table)
        probs /= probs.sum()
        nbs = []
        for i, (keys, Xd) in enumerate(zip(self.keys, self.designs)):
            theta, g, it = minimize_iso(Xd, probs, self.grad_tol)
            nbs.append(NeighborhoodParams(i, dict(zip(keys, theta.tolist())), g, it))
        learned = symmetrize(nbs, self.roster.n_spins)
        return np.array([learned[k] for k in self.out_keys])


def learned_outputs(X, roster: Roster, noise: NoiseSpec, mode="exact", M=4_000_000, seed=None,
                    grad_tol=1e-10, workers=None) -> np.ndarray:
    """Learned output parameters for each input row of ``X``.

    ``mode="exact"`` learns on the exact mixture weights; ``mode="samples"``
    draws ``M`` noisy samples per input (row ``r`` uses the ``r``-th spawned
    seed) and learns on those.
    """
    X = np.asarray(X, dtype=float)
    if mode == "exact":
        learner = _ExactLearner(roster, noise, grad_tol)

        def one(r):
            return learner(X[r])
    elif mode == "samples":
        seeds = child_seeds(seed, len(X))
        cfg = LearnConfig(order=2, grad_tol=grad_tol)

        def one(r):
            learned = learn_model(sample_noisy(roster.model(X[r]), noise, M, seeds[r]), cfg)
            return np.array([learned[k] for k in roster.output_keys])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return np.array(list(pool.map(one, range(len(X)))))
    return np.array([one(r) for r in range(len(X))])


def simulate_response_pipeline(noise: NoiseSpec, roster: Roster, n_models: int = 20000,
                               grid=PERTURBATION_GRID, seed=None, mode="exact", M=4_000_000,
                               inputs=None, workers=None):
    """Random inputs -> noisy mixture -> learned order-2 model -> quadratic fit.

    Returns ``(response_function, diagnostics)``; diagnostics hold the input
    and output matrices and the per-output residual RMS.
    """
    if noise.n_spins != roster.n_spins:
        raise ValueError("noise spec and roster disagree on the number of spins")
    seeds = child_seeds(seed, 2)
    X = draw_inputs(n_models, len(roster.input_keys), grid, seeds[0]) if inputs is None else np.asarray(inputs)
    Y = learned_outputs(X, roster, noise, mode, M, seeds[1], workers=workers)
    rf = fit_quadratic(X, Y, roster.input_keys, roster.output_keys)
    resid = Y - predict(rf, X)
    diagnostics = {
        "inputs": X,
        "outputs": Y,
        "residual_rms": np.sqrt(np.mean(resid ** 2, axis=0)),
        "n_unknowns": n_unknowns(X.shape[1]),
    }
    return rf, diagnostics


def leading_quadratic(rf: ResponseFunction, output_key, top=2, off_diagonal=True):
    """Largest-magnitude quadratic coefficients of one output as ``(a, b, value)``."""
    o = rf.index(output_key)
    d = len(rf.input_keys)
    cells = [(a, b) for a in range(d) for b in range(a, d) if not (off_diagonal and a == b)]
    cells.sort(key=lambda ab: -abs(rf.chi[o][ab]))
    return [(rf.input_keys[a], rf.input_keys[b], float(rf.chi[o][a, b])) for a, b in cells[:top]]


def write_pairs(X, Y, input_keys, output_keys, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"in:{key_name(k)}" for k in input_keys] + [f"out:{key_name(k)}" for k in output_keys])
        for x, y in zip(X, Y):
            w.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in y])


def read_pairs(path):
    """Returns ``(X, Y, input_keys, output_keys)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    ins = [c for c in header if c.startswith("in:")]
    outs = [c for c in header if c.startswith("out:")]
    if header != ins + outs or not ins or not outs:
        raise ValueError(f"{path}: header must list in: columns followed by out: columns")
    data = np.array([[float(v) for v in r] for r in body if r])
    d = len(ins)
    return (data[:, :d], data[:, d:], [parse_key_name(c[3:]) for c in ins],
            [parse_key_name(c[4:]) for c in outs])
