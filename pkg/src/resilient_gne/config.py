"""Scenario configuration: YAML schema, strict loading and object construction."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union, get_args, get_origin, get_type_hints

import numpy as np
import yaml

from .attacks import AttackError, AttackModel, normalize_kind
from .dbrosa import ScheduleError, ScheduleParams, ScheduleSet, make_schedules
from .game import CommodityMarketGame, Distribution, GameError, commodity_market
from .svrg import SnapshotPolicy
from .topology import AgentId, ClusterTopology, TopologyError, circulant_edges, complete_edges


class ConfigError(ValueError):
    pass


PRESETS = ("small_scale", "large_scale")


@dataclass
class GraphSpec:
    """``kind`` is ``complete``, ``ring_chords`` or ``edges`` (explicit sender->receiver list)."""

    kind: str = "complete"
    degree: int = 2
    chords: int = 0
    seed: int = 0
    edges: Optional[list] = None


@dataclass
class TopologySection:
    cluster_sizes: list
    byzantine: list = field(default_factory=list)  # [[cluster, member], ...], 1-based
    b_cluster: Optional[list] = None
    b_global: Optional[int] = None
    global_graph: GraphSpec = field(default_factory=GraphSpec)
    cluster_graphs: Union[GraphSpec, list] = field(default_factory=GraphSpec)
    exhaustive_limit: int = 10_000


@dataclass
class DistSpec:
    kind: str = "uniform"
    mean: float = 0.0
    width: float = 0.1


@dataclass
class GameSection:
    d: int
    m: int
    p_bar: Any
    upper: Any
    capacity: Any = 1.0
    A: Any = "identity"
    price_slope: DistSpec = field(default_factory=lambda: DistSpec("uniform", 0.8, 0.1))
    omega: DistSpec = field(default_factory=lambda: DistSpec("uniform", 2.0, 0.1))
    cost_base: float = 1.0
    q_scale: float = 0.1
    coord_offset: bool = True
    time_varying: bool = True
    drift_power: float = 5.0


@dataclass
class SnapshotSection:
    s0: int = 1
    rho: float = 1.0


@dataclass
class ScheduleSection:
    a1: float = -1.4
    a2: float = -1.2
    b1: float = -2.6
    b2: float = -2.2
    beta: float = 0.05
    eta: float = -1.1
    zeta: float = -2.0
    t1: Optional[int] = None
    s: float = 0.0
    delta_frac: float = 0.9
    H_bound: Optional[int] = None  # defaults to the total agent count
    snapshot: SnapshotSection = field(default_factory=SnapshotSection)


@dataclass
class AttackSection:
    kind: str = "none"
    channels: list = field(default_factory=lambda: ["estimate", "tracker"])
    u: dict = field(default_factory=dict)  # attack kind -> parameter


@dataclass
class OracleSection:
    tol: float = 1e-9
    max_iter: int = 1_000_000


@dataclass
class OutputSection:
    dir: str = "runs/out"
    per_run_csv: bool = True


@dataclass
class ScenarioConfig:
    name: str
    topology: TopologySection
    game: GameSection
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    attack: AttackSection = field(default_factory=AttackSection)
    rounds: int = 2000
    monte_carlo_runs: int = 10
    base_seed: int = 0
    oracle: OracleSection = field(default_factory=OracleSection)
    output: OutputSection = field(default_factory=OutputSection)
    strict_invariants: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# strict structural loading ------------------------------------------------------


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed: {sorted(names)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(f"{where}: missing required key {f.name!r}")
            continue
        kwargs[f.name] = _coerce(hints[f.name], data[f.name], f"{where}.{f.name}")
    return cls(**kwargs)


def _coerce(tp, value, where):
    origin = get_origin(tp)
    if origin is Union:
        args = [a for a in get_args(tp) if a is not type(None)]
        if value is None:
            if type(None) in get_args(tp):
                return None
            raise ConfigError(f"{where}: value must not be null")
        errors = []
        for a in args:
            try:
                return _coerce(a, value, where)
            except ConfigError as exc:
                errors.append(str(exc))
        raise ConfigError(errors[-1])
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if origin is list or tp is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return value
    if origin is dict or tp is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping, got {value!r}")
        return value
    return value


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" (line {mark.line + 1}, column {mark.column + 1})" if mark is not None else ""
        raise ConfigError(f"{source}: cannot parse{loc}: {getattr(exc, 'problem', exc)}") from exc
    cfg = _build(ScenarioConfig, data, source)
    validate(cfg)
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), str(path))


def load_preset(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {list(PRESETS)}")
    text = resources.files("resilient_gne.presets").joinpath(f"{name}.yaml").read_text()
    return parse_config(text, f"preset {name}")


# object construction -------------------------------------------------------------


def _graph_edges(spec: GraphSpec, nodes, where, agent_like):
    if spec.kind == "complete":
        return complete_edges(nodes)
    if spec.kind == "ring_chords":
        return circulant_edges(nodes, spec.degree, spec.chords, np.random.default_rng(spec.seed))
    if spec.kind == "edges":
        if spec.edges is None:
            raise ConfigError(f"{where}: kind 'edges' needs an 'edges' list")
        return [(agent_like(s), agent_like(r)) for s, r in spec.edges]
    raise ConfigError(f"{where}: unknown graph kind {spec.kind!r}")


def build_topology(sec: TopologySection) -> ClusterTopology:
    sizes = [int(s) for s in sec.cluster_sizes]
    agents = [AgentId(i + 1, j + 1) for i, s in enumerate(sizes) for j in range(s)]
    g_edges = _graph_edges(sec.global_graph, agents, "topology.global_graph", lambda a: AgentId(*a))
    specs = sec.cluster_graphs if isinstance(sec.cluster_graphs, list) else [sec.cluster_graphs] * len(sizes)
    if len(specs) != len(sizes):
        raise ConfigError(f"topology.cluster_graphs: expected {len(sizes)} entries, got {len(specs)}")
    c_edges = []
    for i, spec in enumerate(specs):
        spec = spec if isinstance(spec, GraphSpec) else _build(GraphSpec, spec, f"topology.cluster_graphs[{i}]")
        c_edges.append(_graph_edges(spec, list(range(1, sizes[i] + 1)), f"topology.cluster_graphs[{i}]", int))
    byz = [AgentId(*a) for a in sec.byzantine]
    return ClusterTopology.from_edges(sizes, g_edges, c_edges, byz, sec.b_global, sec.b_cluster)


def build_game(sec: GameSection, cluster_sizes) -> CommodityMarketGame:
    return commodity_market(
        tuple(int(s) for s in cluster_sizes), sec.d, sec.m, p_bar=sec.p_bar, capacity=sec.capacity,
        upper=sec.upper, A=sec.A if isinstance(sec.A, str) else np.asarray(sec.A, dtype=float),
        price_slope=Distribution(sec.price_slope.kind, sec.price_slope.mean, sec.price_slope.width),
        omega_dist=Distribution(sec.omega.kind, sec.omega.mean, sec.omega.width),
        cost_base=sec.cost_base, q_scale=sec.q_scale, coord_offset=sec.coord_offset,
        time_varying=sec.time_varying, drift_power=sec.drift_power,
    )


def schedule_params(sec: ScheduleSection) -> ScheduleParams:
    return ScheduleParams(
        a1=sec.a1, a2=sec.a2, b1=sec.b1, b2=sec.b2, beta=sec.beta, eta=sec.eta, zeta=sec.zeta,
        t1=sec.t1, s=sec.s, delta_frac=sec.delta_frac,
        snapshot=SnapshotPolicy(sec.snapshot.s0, sec.snapshot.rho),
    )


def build_schedules(cfg: ScenarioConfig, n: int) -> ScheduleSet:
    H = cfg.schedule.H_bound if cfg.schedule.H_bound is not None else n
    return make_schedules(schedule_params(cfg.schedule), cfg.rounds, H)


def build_attack(sec: AttackSection) -> AttackModel:
    kind = normalize_kind(sec.kind)
    if kind == "none":
        return AttackModel("none", 0.0, tuple(sec.channels))
    u = {normalize_kind(k): v for k, v in sec.u.items()}
    if kind not in u:
        raise ConfigError(f"attack.u has no parameter for {kind!r}")
    return AttackModel(kind, float(u[kind]), tuple(sec.channels))


def validate(cfg: ScenarioConfig) -> None:
    """Cross-check every section by building the objects once."""
    if cfg.rounds < 1:
        raise ConfigError("rounds must be >= 1")
    if cfg.monte_carlo_runs < 1:
        raise ConfigError("monte_carlo_runs must be >= 1")
    if cfg.oracle.tol <= 0:
        raise ConfigError("oracle.tol must be positive")
    try:
        topo = build_topology(cfg.topology)
        game = build_game(cfg.game, topo.cluster_sizes)
        build_schedules(cfg, topo.n)
        build_attack(cfg.attack)
        for k in cfg.attack.u:
            if normalize_kind(k) == "none":
                raise ConfigError("attack.u must not list 'none'")
            AttackModel(normalize_kind(k), float(cfg.attack.u[k]))
    except (TopologyError, GameError, ScheduleError, AttackError, TypeError) as exc:
        raise ConfigError(f"{cfg.name}: {exc}") from exc
    if game.n != topo.n:
        raise ConfigError("game and topology disagree on the agent count")


def with_overrides(cfg: ScenarioConfig, *, attack=None, rounds=None, runs=None, seed=None, out=None) -> ScenarioConfig:
    cfg = dataclasses.replace(cfg)
    if attack is not None:
        try:
            kind = normalize_kind(attack)
        except AttackError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.attack = dataclasses.replace(cfg.attack, kind=kind)
    if rounds is not None:
        cfg.rounds = rounds
    if runs is not None:
        cfg.monte_carlo_runs = runs
    if seed is not None:
        cfg.base_seed = seed
    if out is not None:
        cfg.output = dataclasses.replace(cfg.output, dir=str(out))
    validate(cfg)
    return cfg
