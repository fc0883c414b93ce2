"""Multi-body Gibbs distributions on small spin systems.

A model assigns a real coefficient to sorted tuples of spin indices and
defines the energy ``H(s) = sum_K c_K prod_{i in K} s_i``. Probabilities are
proportional to ``exp(+H)``; temperatures are carried separately by
:class:`gibbsprobe.sampler.NoiseSpec`.

Configurations are indexed little-endian: bit ``i`` of the index is set iff
spin ``i`` equals +1.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping

import numpy as np

ENUMERATION_CAP = 20


class ModelFormatError(ValueError):
    """Raised for malformed model files or invalid model terms."""


def _check_key(key, n_spins):
    if len(key) == 0:
        raise ModelFormatError("empty interaction key")
    for a, b in zip(key, key[1:]):
        if not a < b:
            raise ModelFormatError(f"key {key} is not strictly increasing")
    if key[0] < 0 or key[-1] >= n_spins:
        raise ModelFormatError(f"key {key} has an index outside [0, {n_spins})")


@dataclass(frozen=True)
class GibbsModel:
    """Sparse energy function over ``n_spins`` binary spins.

    Parameters
    ----------
    n_spins : int
        Number of spins.
    terms : mapping
        Sorted index tuple -> coefficient. Missing keys have coefficient 0.
    """

    n_spins: int
    terms: Mapping[tuple, float] = field(default_factory=dict)

    def __post_init__(self):
        if int(self.n_spins) != self.n_spins or self.n_spins < 1:
            raise ModelFormatError(f"n_spins must be a positive integer, got {self.n_spins}")
        clean = {}
        for key, value in dict(self.terms).items():
            key = tuple(int(i) for i in key)
            _check_key(key, self.n_spins)
            value = float(value)
            if not math.isfinite(value):
                raise ModelFormatError(f"coefficient of {key} is not finite")
            clean[key] = value
        object.__setattr__(self, "n_spins", int(self.n_spins))
        object.__setattr__(self, "terms", clean)

    @property
    def order(self) -> int:
        return max((len(k) for k in self.terms), default=0)

    def __getitem__(self, key) -> float:
        return self.terms.get(tuple(key), 0.0)

    def fields(self) -> np.ndarray:
        return np.array([self[(i,)] for i in range(self.n_spins)])

    def couplings(self) -> dict:
        return {k: v for k, v in self.terms.items() if len(k) == 2}

    def restrict(self, max_order: int) -> "GibbsModel":
        return GibbsModel(self.n_spins, {k: v for k, v in self.terms.items() if len(k) <= max_order})

    def scaled(self, factor: float) -> "GibbsModel":
        return GibbsModel(self.n_spins, {k: factor * v for k, v in self.terms.items()})

    def allclose(self, other: "GibbsModel", atol: float = 1e-12) -> bool:
        if self.n_spins != other.n_spins:
            return False
        keys = set(self.terms) | set(other.terms)
        return all(abs(self[k] - other[k]) <= atol for k in keys)


@dataclass(frozen=True, eq=False)
class ExactDistribution:
    """Probabilities of all ``2**n_spins`` configurations.

    ``log_partition`` is the log normalizer of the energy that generated
    ``probs``. For mixtures it is the normalizer of the full-order Gibbs
    representation whose energy has zero mean over configurations, i.e.
    ``-mean(log probs)``. ``stderr`` is only set by Monte-Carlo averages.
    """

    n_spins: int
    probs: np.ndarray
    log_partition: float
    stderr: np.ndarray | None = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (2 ** self.n_spins,):
            raise ValueError(f"expected {2 ** self.n_spins} probabilities, got shape {probs.shape}")
        if (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        if not math.isfinite(self.log_partition):
            raise ValueError("log_partition must be finite")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_weights(cls, n_spins, weights, stderr=None) -> "ExactDistribution":
        """Normalize non-negative weights (e.g. a mixture) into a distribution."""
        weights = np.asarray(weights, dtype=float)
        probs = weights / weights.sum()
        with np.errstate(divide="ignore"):
            logp = np.log(probs)
        log_z = -float(logp.mean()) if np.all(probs > 0) else 0.0
        return cls(n_spins, probs, log_z, stderr)

    def expectation(self, key) -> float:
        """Mean of ``prod_{i in key} s_i``."""
        return float(self.probs @ term_products(spin_table(self.n_spins), [tuple(key)])[:, 0])

    def means(self) -> np.ndarray:
        return self.probs @ spin_table(self.n_spins)

    def allclose(self, other: "ExactDistribution", atol: float = 1e-12) -> bool:
        return self.n_spins == other.n_spins and np.allclose(self.probs, other.probs, rtol=0, atol=atol)


@lru_cache(maxsize=32)
def _spin_table(n):
    idx = np.arange(2 ** n)[:, None]
    table = np.where((idx >> np.arange(n)) & 1, 1, -1).astype(np.int8)
    table.setflags(write=False)
    return table


def spin_table(n_spins: int) -> np.ndarray:
    """All configurations as a ``(2**n, n)`` int8 array of +/-1, little-endian."""
    return _spin_table(int(n_spins))


def config_index(configs) -> np.ndarray:
    """Little-endian index of each +/-1 row."""
    configs = np.atleast_2d(configs)
    bits = (configs > 0).astype(np.int64)
    return bits @ (1 << np.arange(configs.shape[1], dtype=np.int64))


def term_products(configs, keys) -> np.ndarray:
    """Matrix of ``prod_{i in K} s_i`` with one row per configuration and one column per key."""
    configs = np.asarray(configs)
    out = np.ones((configs.shape[0], len(keys)), dtype=float)
    for j, key in enumerate(keys):
        if key:
            out[:, j] = np.prod(configs[:, list(key)], axis=1)
    return out


def _as_config(model, config):
    config = np.asarray(config)
    if config.shape != (model.n_spins,):
        raise ValueError(f"configuration has shape {config.shape}, model has {model.n_spins} spins")
    if not np.all(np.abs(config) == 1):
        raise ValueError("configuration entries must be +1 or -1")
    return config


def energy(model: GibbsModel, config) -> float:
    """Energy ``sum_K c_K prod_{i in K} s_i`` of a single configuration."""
    config = _as_config(model, config)
    return float(sum(c * np.prod(config[list(k)]) for k, c in model.terms.items()))


def energies(model: GibbsModel, configs=None) -> np.ndarray:
    """Energies of many configurations (all of them by default)."""
    if configs is None:
        configs = spin_table(model.n_spins)
    configs = np.asarray(configs)
    out = np.zeros(configs.shape[0])
    for key, c in model.terms.items():
        out += c * np.prod(configs[:, list(key)], axis=1)
    return out


def _normalize_energies(n_spins, e):
    shift = e.max()
    w = np.exp(e - shift)
    z = w.sum()
    return w / z, float(shift + np.log(z))


def exact_distribution(model: GibbsModel, cap: int = ENUMERATION_CAP) -> ExactDistribution:
    """Enumerate all configurations and normalize ``exp(energy)``."""
    if model.n_spins > cap:
        raise ValueError(f"{model.n_spins} spins exceeds the enumeration cap of {cap}")
    probs, log_z = _normalize_energies(model.n_spins, energies(model))
    return ExactDistribution(model.n_spins, probs, log_z)


def model_to_dict(model: GibbsModel) -> dict:
    terms = sorted(model.terms.items(), key=lambda kv: (len(kv[0]), kv[0]))
    return {"n_spins": model.n_spins, "terms": [{"spins": list(k), "value": v} for k, v in terms]}


def model_from_dict(doc, source="<model>") -> GibbsModel:
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{source}: top level must be an object")
    try:
        n = doc["n_spins"]
        entries = doc["terms"]
    except KeyError as exc:
        raise ModelFormatError(f"{source}: missing field {exc.args[0]!r}") from None
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ModelFormatError(f"{source}: n_spins must be a positive integer")
    if not isinstance(entries, list):
        raise ModelFormatError(f"{source}: terms must be a list")
    terms = {}
    for pos, entry in enumerate(entries):
        where = f"{source}: terms[{pos}]"
        if not isinstance(entry, dict) or "spins" not in entry or "value" not in entry:
            raise ModelFormatError(f"{where}: expected an object with 'spins' and 'value'")
        spins, value = entry["spins"], entry["value"]
        if not isinstance(spins, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in spins):
            raise ModelFormatError(f"{where}.spins: expected a list of integers")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ModelFormatError(f"{where}.value: expected a number")
        key = tuple(spins)
        try:
            _check_key(key, n)
        except ModelFormatError as exc:
            raise ModelFormatError(f"{where}.spins: {exc}") from None
        if key in terms:
            raise ModelFormatError(f"{where}.spins: duplicate key {key}")
        if not math.isfinite(value):
            raise ModelFormatError(f"{where}.value: not finite")
        terms[key] = float(value)
    return GibbsModel(n, terms)


def write_model(model: GibbsModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def read_model(path) -> GibbsModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return model_from_dict(doc, str(path))
