"""Exact, noisy and gauge-averaged samplers plus the black-box adapter.

Noise model: every draw sees the field
``beta_i * (h_sd_i * s_i + h_bias_i + h_i)`` on spin ``i`` with a fresh noise
variable ``s_i`` (+/-1 for ``binary``, uniform on ``[-sqrt3, sqrt3]`` for
``uniform``), and couplings ``beta_ij * J_ij``.
"""
from __future__ import annotations

import hashlib
import json
import os
import shlex
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    ENUMERATION_CAP,
    ExactDistribution,
    GibbsModel,
    config_index,
    energies,
    model_to_dict,
    spin_table,
    write_model,
)

QUADRATURE_NODES = 16
GAUGE_CAP = 12
_CHUNK = 1 << 20


class SampleFormatError(ValueError):
    """Raised for malformed sample files or black-box output."""


class BlackBoxError(RuntimeError):
    """Raised when an external sampler fails."""


def child_seeds(seed, n):
    """Independent integer seeds for ``n`` streams derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def model_digest(model: GibbsModel) -> str:
    blob = json.dumps(model_to_dict(model), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Per-spin temperatures, persistent biases and noise amplitudes.

    ``beta_edge`` maps sorted spin pairs to coupling temperatures; pairs not
    listed use ``default_beta_edge``.
    """

    beta_field: np.ndarray
    h_bias: np.ndarray
    h_sd: np.ndarray
    beta_edge: dict = field(default_factory=dict)
    default_beta_edge: float = 1.0
    noise_kind: str = "binary"

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta_field, dtype=float))
        n = beta.shape[0]
        bias = np.broadcast_to(np.asarray(self.h_bias, dtype=float), (n,)).copy()
        sd = np.broadcast_to(np.asarray(self.h_sd, dtype=float), (n,)).copy()
        if beta.ndim != 1 or np.any(beta <= 0):
            raise ValueError("beta_field must be a vector of positive numbers")
        if np.any(sd < 0):
            raise ValueError("h_sd must be non-negative")
        if not np.all(np.isfinite(np.r_[beta, bias, sd])):
            raise ValueError("noise parameters must be finite")
        edges = {}
        for key, b in dict(self.beta_edge).items():
            key = tuple(sorted(int(i) for i in key))
            if len(key) != 2 or key[0] == key[1] or key[1] >= n or key[0] < 0:
                raise ValueError(f"invalid edge {key}")
            if not b > 0:
                raise ValueError(f"edge temperature for {key} must be positive")
            edges[key] = float(b)
        if not self.default_beta_edge > 0:
            raise ValueError("default_beta_edge must be positive")
        if self.noise_kind not in ("binary", "uniform"):
            raise ValueError(f"unknown noise kind {self.noise_kind!r}")
        for arr in (beta, bias, sd):
            arr.setflags(write=False)
        object.__setattr__(self, "beta_field", beta)
        object.__setattr__(self, "h_bias", bias)
        object.__setattr__(self, "h_sd", sd)
        object.__setattr__(self, "beta_edge", edges)
        object.__setattr__(self, "default_beta_edge", float(self.default_beta_edge))

    @classmethod
    def uniform(cls, n_spins, beta=1.0, h_sd=0.0, h_bias=0.0, noise_kind="binary"):
        """Same temperature for every field and coupling."""
        return cls(np.full(n_spins, float(beta)), h_bias, h_sd, {}, beta, noise_kind)

    @property
    def n_spins(self) -> int:
        return self.beta_field.shape[0]

    def edge_beta(self, i, j) -> float:
        return self.beta_edge.get((min(i, j), max(i, j)), self.default_beta_edge)

    def replace(self, **changes) -> "NoiseSpec":
        kw = dict(beta_field=self.beta_field, h_bias=self.h_bias, h_sd=self.h_sd,
                  beta_edge=self.beta_edge, default_beta_edge=self.default_beta_edge,
                  noise_kind=self.noise_kind)
        kw.update(changes)
        return NoiseSpec(**kw)

    def to_dict(self) -> dict:
        return {
            "beta_field": self.beta_field.tolist(),
            "h_bias": self.h_bias.tolist(),
            "h_sd": self.h_sd.tolist(),
            "beta_edge": [{"spins": list(k), "value": v} for k, v in sorted(self.beta_edge.items())],
            "default_beta_edge": self.default_beta_edge,
            "noise_kind": self.noise_kind,
        }

    @classmethod
    def from_dict(cls, doc) -> "NoiseSpec":
        try:
            edges = {tuple(e["spins"]): e["value"] for e in doc.get("beta_edge", [])}
            return cls(doc["beta_field"], doc.get("h_bias", 0.0), doc.get("h_sd", 0.0), edges,
                       doc.get("default_beta_edge", 1.0), doc.get("noise_kind", "binary"))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed noise specification: {exc}") from None


def read_noise(path) -> NoiseSpec:
    return NoiseSpec.from_dict(json.loads(Path(path).read_text()))


def write_noise(noise: NoiseSpec, path) -> None:
    Path(path).write_text(json.dumps(noise.to_dict(), indent=1) + "\n")


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Observed configurations with multiplicities.

    ``configs`` holds distinct rows sorted by configuration index. Equality
    compares records only; ``meta`` is provenance.
    """

    n_spins: int
    configs: np.ndarray
    counts: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        configs = np.asarray(self.configs).reshape(-1, self.n_spins).astype(np.int8)
        counts = np.asarray(self.counts, dtype=np.int64)
        if configs.shape[0] != counts.shape[0]:
            raise ValueError("configs and counts differ in length")
        if not np.all(np.abs(configs) == 1):
            raise ValueError("configurations must be +/-1")
        if np.any(counts < 1) or counts.sum() < 1:
            raise ValueError("counts must be positive and the total must be > 0")
        idx = config_index(configs) if len(configs) else np.zeros(0, dtype=np.int64)
        order = np.argsort(idx, kind="stable")
        idx, configs, counts = idx[order], configs[order], counts[order]
        if np.any(np.diff(idx) == 0):
            uniq, inv = np.unique(idx, return_inverse=True)
            merged = np.zeros(len(uniq), dtype=np.int64)
            np.add.at(merged, inv, counts)
            first = np.searchsorted(idx, uniq)
            configs, counts = configs[first], merged
        configs.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "configs", configs)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "meta", dict(self.meta))

    @classmethod
    def from_raw(cls, rows, meta=None) -> "SampleSet":
        rows = np.atleast_2d(np.asarray(rows))
        uniq, counts = np.unique(rows, axis=0, return_counts=True)
        return cls(rows.shape[1], uniq, counts, meta or {})

    @classmethod
    def from_index_counts(cls, n_spins, counts, meta=None) -> "SampleSet":
        counts = np.asarray(counts)
        nz = np.flatnonzero(counts)
        return cls(n_spins, spin_table(n_spins)[nz], counts[nz], meta or {})

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def weights(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def index_counts(self) -> np.ndarray:
        out = np.zeros(2 ** self.n_spins, dtype=np.int64)
        out[config_index(self.configs)] = self.counts
        return out

    def to_raw(self) -> np.ndarray:
        return np.repeat(self.configs, self.counts, axis=0)

    def __eq__(self, other):
        if not isinstance(other, SampleSet):
            return NotImplemented
        return (self.n_spins == other.n_spins and np.array_equal(self.configs, other.configs)
                and np.array_equal(self.counts, other.counts))

    __hash__ = None


def concat_samples(sets, meta=None) -> SampleSet:
    sets = list(sets)
    n = sets[0].n_spins
    if any(s.n_spins != n for s in sets):
        raise ValueError("cannot merge sample sets with different n_spins")
    return SampleSet(n, np.concatenate([s.configs for s in sets]),
                     np.concatenate([s.counts for s in sets]), meta or {})


def _spin_string(row):
    return "".join("+" if v > 0 else "-" for v in row)


def write_samples(samples: SampleSet, path) -> None:
    lines = [f"spins={samples.n_spins} total={samples.total}"]
    if samples.meta:
        lines.append("# meta " + json.dumps(samples.meta, sort_keys=True, default=str))
    lines += [f"{_spin_string(c)} {k}" for c, k in zip(samples.configs, samples.counts)]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_config(token_list, lineno, path):
    if len(token_list) == 1 and set(token_list[0]) <= {"+", "-"}:
        return [1 if ch == "+" else -1 for ch in token_list[0]]
    try:
        vals = [int(t) for t in token_list]
    except ValueError:
        raise SampleFormatError(f"{path}:{lineno}: cannot parse configuration") from None
    if not all(v in (-1, 1) for v in vals):
        raise SampleFormatError(f"{path}:{lineno}: spins must be +1 or -1")
    return vals


def read_samples(path) -> SampleSet:
    """Read either the counted format (with header) or one configuration per line."""
    path = Path(path)
    lines = path.read_text().splitlines()
    meta = {}
    body = []
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("# meta "):
            meta = json.loads(s[len("# meta "):])
        elif not s.startswith("#"):
            body.append((lineno, s))
    if not body:
        raise SampleFormatError(f"{path}: no samples")
    lineno, first = body[0]
    if first.startswith("spins="):
        try:
            header = dict(tok.split("=", 1) for tok in first.split())
            n, total = int(header["spins"]), int(header["total"])
        except (ValueError, KeyError):
            raise SampleFormatError(f"{path}:{lineno}: malformed header {first!r}") from None
        configs, counts = [], []
        for lineno, s in body[1:]:
            parts = s.split()
            try:
                count = int(parts[-1])
            except ValueError:
                raise SampleFormatError(f"{path}:{lineno}: malformed count") from None
            cfg = _parse_config(parts[:-1], lineno, path)
            if len(cfg) != n:
                raise SampleFormatError(f"{path}:{lineno}: expected {n} spins, found {len(cfg)}")
            if count < 1:
                raise SampleFormatError(f"{path}:{lineno}: counts must be positive")
            configs.append(cfg)
            counts.append(count)
        if not configs:
            raise SampleFormatError(f"{path}: no samples")
        if sum(counts) != total:
            raise SampleFormatError(f"{path}: header total {total} but counts sum to {sum(counts)}")
        return SampleSet(n, np.array(configs), np.array(counts), meta)
    rows = [_parse_config(s.split(), lineno, path) for lineno, s in body]
    n = len(rows[0])
    for (lineno, _), r in zip(body, rows):
        if len(r) != n:
            raise SampleFormatError(f"{path}:{lineno}: expected {n} spins, found {len(r)}")
    return SampleSet.from_raw(np.array(rows), meta)


# ---------------------------------------------------------------- noisy models

def _check_ising(model, noise):
    if model.order > 2:
        raise ValueError("noisy models take inputs with fields and couplings only")
    if model.n_spins != noise.n_spins:
        raise ValueError(f"model has {model.n_spins} spins, noise spec has {noise.n_spins}")


def effective_noisy_model(model: GibbsModel, noise: NoiseSpec, noise_realization) -> GibbsModel:
    """Gibbs model seen by one draw with noise variables ``noise_realization``."""
    _check_ising(model, noise)
    s = np.asarray(noise_realization, dtype=float)
    if s.shape != (model.n_spins,):
        raise ValueError("noise realization length does not match n_spins")
    fields = noise.beta_field * (noise.h_sd * s + noise.h_bias + model.fields())
    terms = {(i,): f for i, f in enumerate(fields) if f != 0.0}
    for (i, j), J in model.couplings().items():
        terms[(i, j)] = noise.edge_beta(i, j) * J
    return GibbsModel(model.n_spins, terms)


def _static_energies(model, noise):
    """Energy of every configuration without the fluctuating field part."""
    static = effective_noisy_model(model, noise, np.zeros(model.n_spins))
    return energies(static)


def noise_realizations(noise: NoiseSpec, n_nodes: int = QUADRATURE_NODES):
    """Noise vectors ``s`` and their weights for exact mixture averaging.

    Only spins with ``h_sd > 0`` are expanded; the others are held at 0.
    """
    n = noise.n_spins
    noisy = np.flatnonzero(noise.h_sd > 0)
    if noise.noise_kind == "binary":
        nodes, w = np.array([-1.0, 1.0]), np.array([0.5, 0.5])
    else:
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        nodes, w = np.sqrt(3.0) * x, w / 2.0
    m = len(noisy)
    k = len(nodes)
    if k ** m > 1 << 22:
        raise ValueError(f"{k ** m} noise realizations is too many to enumerate")
    grid = np.indices((k,) * m).reshape(m, -1).T if m else np.zeros((1, 0), dtype=int)
    s = np.zeros((grid.shape[0], n))
    s[:, noisy] = nodes[grid]
    weights = np.prod(w[grid], axis=1) if m else np.ones(1)
    return s, weights


def _mixture_probs(base_energy, field_shifts, weights, table):
    """Weighted average of ``softmax(base + table @ shift)`` over shifts."""
    out = np.zeros(table.shape[0])
    tf = table.astype(float)
    step = max(1, _CHUNK // table.shape[0])
    for start in range(0, field_shifts.shape[0], step):
        e = base_energy[None, :] + field_shifts[start:start + step] @ tf.T
        e -= e.max(axis=1, keepdims=True)
        p = np.exp(e)
        p /= p.sum(axis=1, keepdims=True)
        out += weights[start:start + step] @ p
    return out


def noisy_mixture_distribution(model: GibbsModel, noise: NoiseSpec, cap: int = ENUMERATION_CAP,
                               n_nodes: int = QUADRATURE_NODES) -> ExactDistribution:
    """Average of the conditional Gibbs distributions over the noise law.

    Binary noise is averaged exactly over sign vectors; uniform noise uses a
    tensor Gauss-Legendre rule with ``n_nodes`` nodes per noisy spin.
    """
    _check_ising(model, noise)
    if model.n_spins > cap:
        raise ValueError(f"{model.n_spins} spins exceeds the enumeration cap of {cap}")
    table = spin_table(model.n_spins)
    s, w = noise_realizations(noise, n_nodes)
    shifts = s * (noise.beta_field * noise.h_sd)
    probs = _mixture_probs(_static_energies(model, noise), shifts, w, table)
    return ExactDistribution.from_weights(model.n_spins, probs)


# ---------------------------------------------------------------- sampling

def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _draw_indices(cdf, m, rng):
    u = rng.random(m) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)


def sample_exact(dist: ExactDistribution, M: int, seed=None) -> SampleSet:
    """Draw ``M`` i.i.d. configurations by inverse-CDF lookup."""
    if int(M) != M or M < 1:
        raise ValueError("M must be a positive integer")
    rng = _rng(seed)
    cdf = np.cumsum(dist.probs)
    counts = np.zeros(2 ** dist.n_spins, dtype=np.int64)
    for start in range(0, M, _CHUNK):
        m = min(_CHUNK, M - start)
        counts += np.bincount(_draw_indices(cdf, m, rng), minlength=len(cdf))
    meta = {"source": "exact", "seed": seed if isinstance(seed, int) else None, "M": int(M)}
    return SampleSet.from_index_counts(dist.n_spins, counts, meta)


def sample_noisy(model: GibbsModel, noise: NoiseSpec, M: int, seed=None,
                 cap: int = ENUMERATION_CAP) -> SampleSet:
    """Draw ``M`` configurations, each under a freshly drawn noise vector.

    Binary noise: draws sharing a sign vector are grouped and sampled from
    that conditional distribution, which is the same law as drawing the
    noise per sample.
    """
    _check_ising(model, noise)
    if int(M) != M or M < 1:
        raise ValueError("M must be a positive integer")
    if model.n_spins > cap:
        raise ValueError(f"{model.n_spins} spins exceeds the enumeration cap of {cap}")
    rng = _rng(seed)
    n = model.n_spins
    table = spin_table(n).astype(float)
    base = _static_energies(model, noise)
    amp = noise.beta_field * noise.h_sd
    counts = np.zeros(2 ** n, dtype=np.int64)
    if noise.noise_kind == "binary":
        noisy = np.flatnonzero(amp > 0)
        m = len(noisy)
        per_noise = rng.multinomial(M, np.full(2 ** m, 2.0 ** -m)) if m else np.array([M])
        for r, k in enumerate(per_noise):
            if k == 0:
                continue
            s = np.zeros(n)
            s[noisy] = np.where((r >> np.arange(m)) & 1, 1.0, -1.0)
            e = base + table @ (amp * s)
            cdf = np.cumsum(np.exp(e - e.max()))
            for start in range(0, k, _CHUNK):
                kk = min(_CHUNK, k - start)
                counts += np.bincount(_draw_indices(cdf, kk, rng), minlength=2 ** n)
    else:
        step = max(1, _CHUNK // 2 ** n)
        for start in range(0, M, step):
            k = min(step, M - start)
            s = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=(k, n))
            e = base[None, :] + (s * amp) @ table.T
            cdf = np.cumsum(np.exp(e - e.max(axis=1, keepdims=True)), axis=1)
            u = rng.random(k) * cdf[:, -1]
            idx = (cdf < u[:, None]).sum(axis=1)
            counts += np.bincount(np.minimum(idx, 2 ** n - 1), minlength=2 ** n)
    meta = {"source": "noisy", "seed": seed if isinstance(seed, int) else None, "M": int(M),
            "model": model_digest(model), "noise_kind": noise.noise_kind}
    return SampleSet.from_index_counts(n, counts, meta)


# ---------------------------------------------------------------- gauges

def _check_gauge(tau, n):
    tau = np.asarray(tau)
    if tau.shape != (n,) or not np.all(np.abs(tau) == 1):
        raise ValueError("gauge must be a +/-1 vector of length n_spins")
    return tau.astype(np.int8)


def apply_gauge(model: GibbsModel, tau) -> GibbsModel:
    """Multiply every coefficient by the product of ``tau`` over its key."""
    tau = _check_gauge(tau, model.n_spins)
    return GibbsModel(model.n_spins, {k: v * int(np.prod(tau[list(k)])) for k, v in model.terms.items()})


def apply_gauge_samples(samples: SampleSet, tau) -> SampleSet:
    tau = _check_gauge(tau, samples.n_spins)
    return SampleSet(samples.n_spins, samples.configs * tau, samples.counts, samples.meta)


def _gauge_mask(tau):
    return int(config_index((np.asarray(tau) < 0).astype(int) * 2 - 1)[0])


def srt_effective_distribution(model: GibbsModel, noise: NoiseSpec, cap_gauge: int = GAUGE_CAP,
                               n_gauges: int = 4096, seed=None) -> ExactDistribution:
    """Average over spin-reversal gauges of the noisy distribution mapped back.

    Each gauge ``tau`` programs ``apply_gauge(model, tau)`` on hardware whose
    biases and noise are not gauged; the samples are mapped back by
    ``s -> s * tau``. Exact over all ``2**n`` gauges when ``n <= cap_gauge``,
    otherwise an average over ``n_gauges`` random gauges with a standard
    error per configuration.
    """
    _check_ising(model, noise)
    n = model.n_spins
    table = spin_table(n)
    idx = np.arange(2 ** n)
    if n <= cap_gauge:
        gauges = table
    else:
        gauges = _rng(seed).choice([-1, 1], size=(n_gauges, n)).astype(np.int8)
    per_gauge = np.empty((len(gauges), 2 ** n))
    for g, tau in enumerate(gauges):
        p = noisy_mixture_distribution(apply_gauge(model, tau), noise).probs
        per_gauge[g] = p[idx ^ _gauge_mask(tau)]
    probs = per_gauge.mean(axis=0)
    stderr = None
    if n > cap_gauge:
        stderr = per_gauge.std(axis=0, ddof=1) / np.sqrt(len(gauges))
    return ExactDistribution.from_weights(n, probs, stderr)


# ---------------------------------------------------------------- black box

def blackbox_collect(command, model: GibbsModel, M: int, batch_size: int | None = None,
                     seed=None, workdir=None, timeout=None) -> SampleSet:
    """Collect ``M`` samples from an external sampler, batch by batch.

    ``command`` (argv list or shell-style string) is invoked as
    ``<command> --model <path> --num-reads <k> --out <path> [--seed <s>]``
    and must exit 0 after writing a sample file. A single batch receives
    ``seed`` unchanged; several batches receive seeds spawned from it.
    """
    if int(M) != M or M < 1:
        raise ValueError("M must be a positive integer")
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    batch_size = int(batch_size or M)
    sizes = [batch_size] * (M // batch_size) + ([M % batch_size] if M % batch_size else [])
    if seed is None:
        seeds = [None] * len(sizes)
    elif len(sizes) == 1:
        seeds = [seed]
    else:
        seeds = child_seeds(seed, len(sizes))
    batches, provenance = [], []
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        model_path = Path(tmp) / "model.json"
        write_model(model, model_path)
        for b, (k, s) in enumerate(zip(sizes, seeds)):
            out = Path(tmp) / f"batch{b}.txt"
            call = argv + ["--model", str(model_path), "--num-reads", str(k), "--out", str(out)]
            if s is not None:
                call += ["--seed", str(s)]
            try:
                proc = subprocess.run(call, capture_output=True, text=True, timeout=timeout)
            except OSError as exc:
                raise BlackBoxError(f"batch {b}: cannot run {argv[0]!r}: {exc}") from None
            if proc.returncode != 0:
                raise BlackBoxError(f"batch {b}: exit status {proc.returncode}: {proc.stderr.strip()}")
            try:
                got = read_samples(out)
            except (OSError, SampleFormatError) as exc:
                raise BlackBoxError(f"batch {b}: malformed output: {exc}") from None
            if got.n_spins != model.n_spins:
                raise BlackBoxError(f"batch {b}: sampler returned {got.n_spins} spins, expected {model.n_spins}")
            if got.total != k:
                raise BlackBoxError(f"batch {b}: requested {k} reads, received {got.total}")
            batches.append(got)
            provenance.append({"batch": b, "num_reads": k, "seed": s})
    meta = {"source": "blackbox", "command": argv, "model": model_digest(model),
            "batches": provenance, "M": int(M)}
    return concat_samples(batches, meta)


def shim_command(noise_path=None):
    """argv prefix for the built-in simulator that honours the black-box contract."""
    cmd = [sys.executable, "-m", "gibbsprobe.shim"]
    if noise_path is not None:
        cmd += ["--noise", os.fspath(noise_path)]
    return cmd
