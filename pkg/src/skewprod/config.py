"""Experiment configuration: schema validation and system construction.

Configs are JSON (the canonical interchange); every cross-reference between
the base chain, fiber model and potential tables is checked before any
computation, and validation errors carry the offending field path.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .base_env import build_markov_base
from .doeblin import DoeblinSystem, build_doeblin_family
from .errors import ConfigError, SkewprodError
from .fiber import FiberModel, PotentialTable
from .limits import SymbolicSystem

SYMBOLIC_EXPERIMENTS = ("rpf-audit", "variance", "clt", "berry-esseen", "llt",
                        "renewal", "decay-survey", "char-fn")
DOEBLIN_EXPERIMENTS = ("doeblin-clt", "doeblin-llt", "doeblin-renewal", "doeblin-char")
EXPECTATIONS = ("pass", "degenerate", "classifier-failure")

DEFAULT_TOLERANCES = {
    "ks": 0.02,
    "llt_sup": 0.05,
    "renewal_rel": 0.05,
    "renewal_negative": 0.01,
    "rpf_residual": 1e-8,
    "char_exact": 1e-9,
}

DEFAULT_SAMPLES = {
    "omega_samples": 64,
    "fiber_replicates": 200,
    "mc_replicates": 4000,
    "strata_depth": 2,
}


@dataclass
class ExperimentConfig:
    name: str
    kind: str
    experiment: str
    seed: int
    expect: str = "pass"
    base: dict = field(default_factory=dict)
    fiber: dict = field(default_factory=dict)
    potentials: dict = field(default_factory=dict)
    doeblin: dict = field(default_factory=dict)
    periodic_cycle: list = field(default_factory=lambda: [0])
    grids: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    renewal: dict = field(default_factory=dict)
    output_dir: str = "out"
    raw: dict = field(default_factory=dict)

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def sample(self, key: str) -> int:
        return int(self.samples.get(key, DEFAULT_SAMPLES[key]))


def _need(d: dict, key: str, path: str):
    if key not in d:
        raise ConfigError(f"{path}.{key}: required field missing")
    return d[key]


def _matrix(value, path: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a numeric array ({exc})") from exc
    if arr.ndim != 2:
        raise ConfigError(f"{path}: expected a 2-d array, got shape {arr.shape}")
    return arr


def parse_config(data: dict, name_hint: str = "config") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a JSON object")
    name = data.get("name", name_hint)
    kind = data.get("kind", "symbolic")
    if kind not in ("symbolic", "doeblin"):
        raise ConfigError(f"kind: must be 'symbolic' or 'doeblin', got {kind!r}")
    experiment = data.get("experiment")
    if experiment is None:
        raise ConfigError("experiment: required field missing")
    valid = SYMBOLIC_EXPERIMENTS if kind == "symbolic" else DOEBLIN_EXPERIMENTS
    if experiment not in valid:
        raise ConfigError(f"experiment: {experiment!r} not valid for kind {kind!r}; "
                          f"choose one of {valid}")
    expect = data.get("expect", "pass")
    if expect not in EXPECTATIONS:
        raise ConfigError(f"expect: must be one of {EXPECTATIONS}, got {expect!r}")
    if "seed" not in data:
        raise ConfigError("seed: required field missing")
    seed = int(data["seed"])
    cfg = ExperimentConfig(
        name=name, kind=kind, experiment=experiment, seed=seed, expect=expect,
        base=dict(data.get("base", {})), fiber=dict(data.get("fiber", {})),
        potentials=dict(data.get("potentials", {})), doeblin=dict(data.get("doeblin", {})),
        periodic_cycle=list(data.get("periodic_cycle", [0])),
        grids=dict(data.get("grids", {})), samples=dict(data.get("samples", {})),
        tolerances=dict(data.get("tolerances", {})), renewal=dict(data.get("renewal", {})),
        output_dir=str(data.get("output_dir", "out")), raw=data,
    )
    # build both systems eagerly so every cross-reference is checked up front
    if kind == "symbolic":
        build_symbolic_system(cfg)
    else:
        build_doeblin_system(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    import os

    return parse_config(data, name_hint=os.path.splitext(os.path.basename(str(path)))[0])


def _build_chain(cfg: ExperimentConfig):
    Q = _matrix(_need(cfg.base, "transition", "base"), "base.transition")
    zeros = np.argwhere(Q == 0.0)
    if len(zeros) and Q.shape[0] > 1:
        i, j = zeros[0]
        raise ConfigError(f"base.transition[{i}][{j}]: zero entry; the mixing "
                          "propositions need strictly positive transitions")
    try:
        return build_markov_base(Q, tol=float(cfg.base.get("tol", 1e-9)),
                                 allow_deterministic=bool(cfg.base.get(
                                     "allow_deterministic", False)))
    except SkewprodError as exc:
        raise ConfigError(f"base.transition: {exc}") from exc


def build_symbolic_system(cfg: ExperimentConfig) -> SymbolicSystem:
    chain = _build_chain(cfg)
    d = int(_need(cfg.fiber, "alphabet_size", "fiber"))
    r = int(_need(cfg.fiber, "depth", "fiber"))
    try:
        model = FiberModel(d, r, metric_base=float(cfg.fiber.get("metric_base", 2.0)),
                           alpha=float(cfg.fiber.get("alpha", 1.0)))
    except SkewprodError as exc:
        raise ConfigError(f"fiber: {exc}") from exc
    phi = _need(cfg.potentials, "phi", "potentials")
    u = _need(cfg.potentials, "u", "potentials")
    pair = bool(cfg.potentials.get("u_next_symbol", False))
    lattice_h = cfg.potentials.get("lattice_h")
    phi_arr = np.asarray(phi, dtype=float)
    if phi_arr.ndim != 2 or phi_arr.shape[0] != chain.n_states:
        raise ConfigError(
            f"potentials.phi: expected shape ({chain.n_states}, {d**r}), "
            f"got {phi_arr.shape}")
    try:
        pot = PotentialTable(phi_arr, np.asarray(u, dtype=float), model,
                             lattice_h=lattice_h, u_next_symbol=pair)
    except SkewprodError as exc:
        raise ConfigError(f"potentials: {exc}") from exc
    cycle = tuple(int(c) for c in cfg.periodic_cycle)
    for i, c in enumerate(cycle):
        if not 0 <= c < chain.n_states:
            raise ConfigError(f"periodic_cycle[{i}]: symbol {c} outside the base states")
    return SymbolicSystem(chain, model, pot, periodic_cycle=cycle)


def build_doeblin_system(cfg: ExperimentConfig) -> DoeblinSystem:
    chain = _build_chain(cfg)
    kernels = _need(cfg.doeblin, "kernels", "doeblin")
    u = _need(cfg.doeblin, "u", "doeblin")
    alpha = float(_need(cfg.doeblin, "alpha", "doeblin"))
    k_arr = np.asarray(kernels, dtype=float)
    if k_arr.ndim != 3 or k_arr.shape[0] != chain.n_states:
        raise ConfigError(
            f"doeblin.kernels: expected ({chain.n_states}, q, q), got {k_arr.shape}")
    try:
        fam = build_doeblin_family(k_arr, np.asarray(u, dtype=float), alpha,
                                   lattice_h=cfg.doeblin.get("lattice_h"))
    except SkewprodError as exc:
        raise ConfigError(f"doeblin: {exc}") from exc
    cycle = tuple(int(c) for c in cfg.periodic_cycle)
    for i, c in enumerate(cycle):
        if not 0 <= c < chain.n_states:
            raise ConfigError(f"periodic_cycle[{i}]: symbol {c} outside the base states")
    initial = cfg.doeblin.get("initial_measure")
    init = None if initial in (None, "invariant") else np.asarray(initial, dtype=float)
    return DoeblinSystem(chain, fam, periodic_cycle=cycle, initial=init)


def canonical_record_bytes(record: dict) -> bytes:
    return json.dumps(record, sort_keys=True, separators=(",", ":"),
                      allow_nan=False).encode()


def config_hash(data: dict) -> str:
    payload = {k: v for k, v in data.items() if k not in ("output_dir",)}
    return hashlib.sha256(json.dumps(payload, sort_keys=True,
                                     separators=(",", ":")).encode()).hexdigest()
