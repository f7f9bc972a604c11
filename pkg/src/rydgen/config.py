"""Run configuration: one JSON document with fixed sections.

Units follow the modules: angular frequencies in rad/us, times in us,
lengths in um.  Unknown keys are rejected so typos fail loudly.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .autoenc import TrainConfig
from .designspace import Objective, load_external_table, synthetic_objective
from .lattice import AtomArray, build_king_subgraph, parse_defect_mask
from .mcmc import SAMPLERS, Channel
from .quench import DEFAULT_TOL, QuenchSpec
from .rydberg import ClassicalEnergy, RydbergParams

TWO_PI = 2.0 * np.pi


@dataclass
class LatticeSection:
    rows: int = 2
    cols: int = 3
    spacing: float = 10.0
    defect_mask: Optional[str] = None
    density: float = 0.0
    seed: Optional[int] = None


@dataclass
class RydbergSection:
    omega: float = TWO_PI
    delta: float = 1.06 * TWO_PI
    c6: float = 862690.0 * TWO_PI
    delta_local: Optional[list] = None
    energy_sign: int = 1
    # "none" keeps raw energies, "ground" shifts the minimum to zero
    energy_shift: str = "none"


@dataclass
class QuenchSection:
    t: float = 1.29
    phase: float = 0.0
    mask: Optional[list] = None
    tol: float = DEFAULT_TOL


@dataclass
class ChannelSection:
    sampler: str = "quantum"
    tau: float = 1.0
    depth: int = 3


@dataclass
class ModelSection:
    latent_n: int = 6
    hidden: list = field(default_factory=lambda: [64])
    seed: int = 0


@dataclass
class ObjectiveSection:
    kind: str = "synthetic-filter"
    shape: list = field(default_factory=lambda: [8, 8])
    angles: int = 16
    theta_star: float = 0.14 * np.pi
    seed: int = 0
    table: Optional[str] = None


@dataclass
class BenchmarkSection:
    taus: list = field(default_factory=lambda: [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0])
    alpha: float = 0.999
    samples: int = 5000
    bins: int = 20


@dataclass
class SweepSection:
    delta_min: float = 0.0
    delta_max: float = 7.8 * TWO_PI
    t_min: float = 0.0
    t_max: float = 3.8
    n_delta: int = 8
    n_t: int = 8
    tau: float = 0.1


SECTIONS = {
    "lattice": LatticeSection,
    "rydberg": RydbergSection,
    "quench": QuenchSection,
    "channel": ChannelSection,
    "model": ModelSection,
    "train": TrainConfig,
    "objective": ObjectiveSection,
    "benchmark": BenchmarkSection,
    "sweep": SweepSection,
}


@dataclass
class RunConfig:
    lattice: LatticeSection = field(default_factory=LatticeSection)
    rydberg: RydbergSection = field(default_factory=RydbergSection)
    quench: QuenchSection = field(default_factory=QuenchSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    objective: ObjectiveSection = field(default_factory=ObjectiveSection)
    benchmark: BenchmarkSection = field(default_factory=BenchmarkSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    seed: int = 0
    out: str = "out"

    # -- construction of module objects (also used for validation) --------

    def atoms(self) -> AtomArray:
        lat = self.lattice
        mask = parse_defect_mask(lat.defect_mask) if lat.defect_mask else None
        return build_king_subgraph(lat.rows, lat.cols, lat.spacing, defect_mask=mask, seed=lat.seed, density=lat.density)

    def params(self, atoms: Optional[AtomArray] = None, delta: Optional[float] = None) -> RydbergParams:
        r = self.rydberg
        atoms = self.atoms() if atoms is None else atoms
        dl = None if r.delta_local is None else np.asarray(r.delta_local, dtype=float)
        return RydbergParams(atoms, r.omega, r.delta if delta is None else delta, r.c6, delta_local=dl)

    def energy(self, params: Optional[RydbergParams] = None) -> ClassicalEnergy:
        e = ClassicalEnergy(self.params() if params is None else params, sign=self.rydberg.energy_sign)
        return e.ground_shifted() if self.rydberg.energy_shift == "ground" else e

    def quench_spec(self, params: Optional[RydbergParams] = None, t: Optional[float] = None) -> QuenchSpec:
        q = self.quench
        mask = None if q.mask is None else np.asarray(q.mask, dtype=float)
        return QuenchSpec(self.params() if params is None else params, q.t if t is None else t, q.phase, mask)

    def channel_obj(self, sampler: Optional[str] = None) -> Channel:
        params = self.params()
        c = self.channel
        return Channel(sampler or c.sampler, c.tau, self.energy(params), params.n, c.depth, self.quench_spec(params))

    def objective_obj(self) -> Objective:
        o = self.objective
        if o.kind == "external-table":
            return load_external_table(o.table, o.shape)
        return synthetic_objective(o.shape, angles=o.angles, theta_star=o.theta_star, seed=o.seed)

    def validate(self) -> "RunConfig":
        params = self.params()
        if self.rydberg.energy_sign not in (1, -1):
            raise ValueError("rydberg.energy_sign must be +1 or -1")
        if self.rydberg.energy_shift not in ("none", "ground"):
            raise ValueError("rydberg.energy_shift must be 'none' or 'ground'")
        self.quench_spec(params)
        if self.quench.tol <= 0:
            raise ValueError("quench.tol must be positive")
        c = self.channel
        if c.sampler not in SAMPLERS:
            raise ValueError(f"channel.sampler must be one of {sorted(SAMPLERS)}")
        if c.tau <= 0 or c.depth < 1:
            raise ValueError("channel.tau must be positive and channel.depth at least 1")
        if self.model.latent_n < 1 or any(int(h) < 1 for h in self.model.hidden):
            raise ValueError("model layers need at least one unit")
        if self.model.latent_n != params.n:
            raise ValueError(f"model.latent_n = {self.model.latent_n} but the lattice has {params.n} atoms")
        o = self.objective
        if o.kind not in ("synthetic-filter", "external-table"):
            raise ValueError("objective.kind must be 'synthetic-filter' or 'external-table'")
        if o.kind == "external-table" and not o.table:
            raise ValueError("objective.table is required for an external-table objective")
        if len(o.shape) != 2 or min(o.shape) < 1:
            raise ValueError("objective.shape must be [rows, cols]")
        b = self.benchmark
        if not b.taus or min(b.taus) <= 0:
            raise ValueError("benchmark.taus must be a non-empty list of positive temperatures")
        if b.alpha <= 0 or b.alpha == 1 or b.bins < 1 or b.samples < 100:
            raise ValueError("benchmark needs alpha > 0, alpha != 1, bins >= 1 and samples >= 100")
        s = self.sweep
        if s.n_delta < 1 or s.n_t < 1 or s.tau <= 0:
            raise ValueError("sweep grid counts must be positive and tau > 0")
        if params.n < 1:
            raise ValueError("lattice has no atoms")
        return self

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _section(cls, data, where):
    if not isinstance(data, dict):
        raise ValueError(f"section '{where}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown key(s) in '{where}': {', '.join(unknown)}")
    return cls(**data)


def from_dict(data: dict, validate: bool = True) -> RunConfig:
    if not isinstance(data, dict):
        raise ValueError("configuration must be a JSON object")
    top = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ValueError(f"unknown top-level key(s): {', '.join(unknown)}")
    kw = {}
    for name, value in data.items():
        kw[name] = _section(SECTIONS[name], value, name) if name in SECTIONS else value
    cfg = RunConfig(**kw)
    return cfg.validate() if validate else cfg


def loads(text: str, validate: bool = True) -> RunConfig:
    return from_dict(json.loads(text), validate)


def load(path, validate: bool = True) -> RunConfig:
    with open(path) as fh:
        return loads(fh.read(), validate)


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    """Copy with top-level fields replaced; ``None`` values are ignored."""
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
