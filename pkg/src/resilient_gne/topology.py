"""Two-level communication graphs and the redundancy conditions behind CTM filtering.

Agents are addressed as ``AgentId(cluster, member)`` with 1-based indices. Edges
are stored as in-neighbor sets keyed by the receiver, since every query the
algorithm makes is "who sends to me".
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import networkx as nx
import numpy as np


class TopologyError(ValueError):
    """Malformed topology or an invalid agent reference."""


@dataclass(frozen=True, order=True)
class AgentId:
    cluster: int
    member: int

    def __str__(self) -> str:
        return f"({self.cluster},{self.member})"


@dataclass(frozen=True)
class ClusterTopology:
    """Global graph, per-cluster graphs, Byzantine ground truth and trim budgets.

    ``byzantine`` is harness-only information; the update rules only ever see
    ``b_global`` and ``b_cluster``.
    """

    cluster_sizes: tuple[int, ...]
    global_in: Mapping[AgentId, frozenset[AgentId]]
    cluster_in: tuple[Mapping[int, frozenset[int]], ...]
    byzantine: frozenset[AgentId]
    b_global: int
    b_cluster: tuple[int, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        agents = [AgentId(i + 1, j + 1) for i, n_i in enumerate(self.cluster_sizes) for j in range(n_i)]
        object.__setattr__(self, "_index", {a: k for k, a in enumerate(agents)})
        self._validate()

    # construction ----------------------------------------------------------

    @classmethod
    def from_edges(
        cls,
        cluster_sizes: Iterable[int],
        global_edges: Iterable[tuple[AgentId, AgentId]],
        cluster_edges: Iterable[Iterable[tuple[int, int]]],
        byzantine: Iterable[AgentId] = (),
        b_global: int | None = None,
        b_cluster: Iterable[int] | None = None,
    ) -> "ClusterTopology":
        """Build from sender->receiver edge lists.

        ``b_global`` defaults to ``sum(b_cluster)``; ``b_cluster`` defaults to
        the actual Byzantine count per cluster.
        """
        sizes = tuple(int(s) for s in cluster_sizes)
        byz = frozenset(byzantine)
        if b_cluster is None:
            b_cl = tuple(sum(1 for a in byz if a.cluster == i + 1) for i in range(len(sizes)))
        else:
            b_cl = tuple(int(b) for b in b_cluster)
        b_gl = sum(b_cl) if b_global is None else int(b_global)

        g_in: dict[AgentId, set[AgentId]] = {
            AgentId(i + 1, j + 1): set() for i, n_i in enumerate(sizes) for j in range(n_i)
        }
        for s, r in global_edges:
            s, r = _as_agent(s), _as_agent(r)
            if r not in g_in or s not in g_in:
                raise TopologyError(f"global edge {s}->{r} references an unknown agent")
            if s == r:
                raise TopologyError(f"self-loop on {s} in global graph")
            g_in[r].add(s)

        cluster_edges = list(cluster_edges)
        if len(cluster_edges) != len(sizes):
            raise TopologyError(f"expected {len(sizes)} cluster edge lists, got {len(cluster_edges)}")
        c_in = []
        for i, edges in enumerate(cluster_edges):
            adj: dict[int, set[int]] = {j + 1: set() for j in range(sizes[i])}
            for s, r in edges:
                s, r = int(s), int(r)
                if s not in adj or r not in adj:
                    raise TopologyError(f"cluster {i + 1} edge {s}->{r} out of range 1..{sizes[i]}")
                if s == r:
                    raise TopologyError(f"self-loop on member {s} in cluster {i + 1}")
                adj[r].add(s)
            c_in.append({k: frozenset(v) for k, v in adj.items()})

        return cls(
            cluster_sizes=sizes,
            global_in={k: frozenset(v) for k, v in g_in.items()},
            cluster_in=tuple(c_in),
            byzantine=byz,
            b_global=b_gl,
            b_cluster=b_cl,
        )

    def _validate(self) -> None:
        if not self.cluster_sizes or any(s < 1 for s in self.cluster_sizes):
            raise TopologyError(f"cluster sizes must be positive, got {self.cluster_sizes}")
        if len(self.b_cluster) != self.N:
            raise TopologyError("b_cluster must have one entry per cluster")
        if any(b < 0 for b in self.b_cluster) or self.b_global < 0:
            raise TopologyError("trim budgets must be nonnegative")
        if sum(self.b_cluster) != self.b_global:
            raise TopologyError(
                f"global budget b={self.b_global} must equal the sum of cluster budgets {sum(self.b_cluster)}"
            )
        for a in self.byzantine:
            self._check(a)
        for i in range(self.N):
            n_byz = len(self.byzantine_in(i + 1))
            if n_byz > self.b_cluster[i]:
                raise TopologyError(
                    f"cluster {i + 1} has {n_byz} Byzantine agents but budget b_{i + 1}={self.b_cluster[i]}"
                )
            if n_byz >= self.cluster_sizes[i]:
                raise TopologyError(f"cluster {i + 1} has no honest agent")

    # basic queries ---------------------------------------------------------

    @property
    def N(self) -> int:
        return len(self.cluster_sizes)

    @property
    def n(self) -> int:
        return sum(self.cluster_sizes)

    def agents(self) -> list[AgentId]:
        return list(self._index)

    def index(self, agent: AgentId) -> int:
        """Flat position of ``agent`` in the stacked ordering (cluster-major)."""
        self._check(agent)
        return self._index[agent]

    def offset(self, cluster: int) -> int:
        return sum(self.cluster_sizes[: cluster - 1])

    def honest(self) -> list[AgentId]:
        return [a for a in self._index if a not in self.byzantine]

    def honest_in(self, cluster: int) -> list[AgentId]:
        return [AgentId(cluster, j + 1) for j in range(self.cluster_sizes[cluster - 1])
                if AgentId(cluster, j + 1) not in self.byzantine]

    def byzantine_in(self, cluster: int) -> list[AgentId]:
        return sorted(a for a in self.byzantine if a.cluster == cluster)

    def honest_mask(self) -> np.ndarray:
        return np.array([a not in self.byzantine for a in self._index], dtype=bool)

    def _check(self, agent: AgentId) -> None:
        if not isinstance(agent, AgentId) or agent not in self._index:
            raise TopologyError(f"invalid agent {agent!r} for cluster sizes {self.cluster_sizes}")

    def global_graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self._index)
        g.add_edges_from((s, r) for r, senders in self.global_in.items() for s in senders)
        return g

    def cluster_graph(self, cluster: int) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(1, self.cluster_sizes[cluster - 1] + 1))
        g.add_edges_from((s, r) for r, senders in self.cluster_in[cluster - 1].items() for s in senders)
        return g


def _as_agent(a) -> AgentId:
    if isinstance(a, AgentId):
        return a
    c, m = a
    return AgentId(int(c), int(m))


def in_neighbors_cluster(topo: ClusterTopology, agent: AgentId) -> frozenset[int]:
    """Members of ``agent``'s cluster that send to it over the cluster graph."""
    topo._check(agent)
    return topo.cluster_in[agent.cluster - 1][agent.member]


def in_neighbors_global(topo: ClusterTopology, agent: AgentId) -> frozenset[AgentId]:
    """Agents that send to ``agent`` over the global graph."""
    topo._check(agent)
    return topo.global_in[agent]


# graph generators ------------------------------------------------------------


def complete_edges(nodes: list) -> list[tuple]:
    return [(s, r) for s in nodes for r in nodes if s != r]


def circulant_edges(nodes: list, degree: int, chords: int = 0, rng: np.random.Generator | None = None) -> list[tuple]:
    """Ring-with-chords digraph: node k hears from its ``degree`` predecessors on the ring,
    plus ``chords`` extra random senders."""
    n = len(nodes)
    degree = min(degree, n - 1)
    edges = set()
    for k in range(n):
        for step in range(1, degree + 1):
            edges.add((nodes[(k - step) % n], nodes[k]))
    if chords:
        rng = rng if rng is not None else np.random.default_rng(0)
        for k in range(n):
            others = [nodes[h] for h in range(n) if h != k and (nodes[h], nodes[k]) not in edges]
            if others:
                pick = rng.choice(len(others), size=min(chords, len(others)), replace=False)
                edges.update((others[h], nodes[k]) for h in sorted(pick))
    return sorted(edges, key=lambda e: (str(e[1]), str(e[0])))


# source components -----------------------------------------------------------


def has_source_component(nodes: Iterable, edges: Iterable[tuple]) -> bool:
    """True iff the condensation has exactly one source SCC (which then reaches every node)."""
    g = nx.DiGraph()
    g.add_nodes_from(nodes)
    if g.number_of_nodes() == 0:
        return False
    g.add_edges_from(edges)
    cond = nx.condensation(g)
    sources = [c for c in cond.nodes if cond.in_degree(c) == 0]
    if len(sources) != 1:
        return False
    return len(nx.descendants(cond, sources[0])) + 1 == cond.number_of_nodes()


def _reaches_all(adj: np.ndarray) -> bool:
    """Some node reaches every node; equivalent to :func:`has_source_component` for a nonempty graph.

    ``adj[s, r]`` is True for an edge s->r. Uses boolean transitive closure by squaring.
    """
    k = adj.shape[0]
    if k == 0:
        return False
    reach = adj | np.eye(k, dtype=bool)
    for _ in range(max(1, math.ceil(math.log2(k)))):
        r = reach.astype(np.float32)
        nxt = (r @ r) > 0
        if np.array_equal(nxt, reach):
            break
        reach = nxt
    return bool(reach.all(axis=1).any())


# redundancy validation -------------------------------------------------------

PASS, FAIL, UNVERIFIED = "pass", "fail", "unverified"


@dataclass
class ScopeReport:
    scope: str
    degree: str
    tracker: str
    reduced: str
    min_honest_in_degree: int
    reduced_graph_count: int
    checked: int
    detail: str = ""

    @property
    def ok(self) -> bool:
        return FAIL not in (self.degree, self.tracker, self.reduced)


def _fmt_count(c: int) -> str:
    return str(c) if c < 10 ** 12 else f"{float(c):.3g}" if c < 10 ** 300 else f"~10^{len(str(c)) - 1}"


@dataclass
class ValidationReport:
    scopes: list[ScopeReport]

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.scopes)

    @property
    def fully_verified(self) -> bool:
        return all(s.reduced == PASS for s in self.scopes) and self.ok

    def __getitem__(self, scope: str) -> ScopeReport:
        for s in self.scopes:
            if s.scope == scope:
                return s
        raise KeyError(scope)

    def lines(self) -> list[str]:
        return [
            f"{s.scope}: degree={s.degree} tracker={s.tracker} reduced={s.reduced} "
            f"(min honest in-degree {s.min_honest_in_degree}, {s.checked}/{_fmt_count(s.reduced_graph_count)} reduced graphs)"
            + (f" {s.detail}" if s.detail else "")
            for s in self.scopes
        ]


def _reduced_graph_count(in_sets: dict, b: int) -> int:
    total = 1
    for senders in in_sets.values():
        total *= sum(math.comb(len(senders), k) for k in range(min(b, len(senders)) + 1))
    return total


def _scope_report(scope, honest, all_in, b, limit, rng) -> ScopeReport:
    honest_set = set(honest)
    in_deg = {v: len(all_in[v]) for v in honest}
    min_deg = min(in_deg.values()) if in_deg else 0
    trivial = len(honest) == 1 and b == 0
    degree = PASS if trivial or all(d >= 2 * b + 1 for d in in_deg.values()) else FAIL
    tracker = PASS if trivial or min_deg > len(honest) / 2 + 2 * b - 1 else FAIL

    h_in = {v: sorted(all_in[v] & honest_set) for v in honest}
    count = _reduced_graph_count(h_in, b)
    # Adding edges never destroys a source component, so only maximal removals
    # (exactly min(b, deg) dropped per node) need checking.
    drop = {v: min(b, len(h_in[v])) for v in honest}
    n_maximal = math.prod(math.comb(len(h_in[v]), drop[v]) for v in honest)

    pos = {v: k for k, v in enumerate(honest)}
    full = np.zeros((len(honest), len(honest)), dtype=bool)
    for v in honest:
        for s in h_in[v]:
            full[pos[s], pos[v]] = True

    def ok(removal) -> bool:
        adj = full.copy()
        for v, drop in zip(honest, removal):
            for s in drop:
                adj[pos[s], pos[v]] = False
        return _reaches_all(adj)

    if count <= limit:
        choices = [list(itertools.combinations(h_in[v], drop[v])) for v in honest]
        bad = next((r for r in itertools.product(*choices) if not ok(r)), None)
        reduced = PASS if bad is None else FAIL
        checked, detail = count, ""
        if bad is not None:
            detail = "counterexample drop-sets: " + ", ".join(
                f"{v}:{list(d)}" for v, d in zip(honest, bad) if d)
    else:
        reduced, checked, detail = UNVERIFIED, min(limit, n_maximal), "not verified (combinatorial); randomized spot-check"
        cols = np.arange(len(honest))
        for _ in range(checked):
            # drop, per receiver, the b existing in-edges with the smallest random keys
            keys = np.where(full, rng.random(full.shape), np.inf)
            order = np.argsort(keys, axis=0)
            adj = full.copy()
            for c in cols:
                adj[order[: drop[honest[c]], c], c] = False
            if not _reaches_all(adj):
                reduced, detail = FAIL, "spot-check found a reduced graph without a source component"
                break
    return ScopeReport(scope, degree, tracker, reduced, min_deg, count, checked, detail)


def validate_redundancy(topo: ClusterTopology, exhaustive_limit: int = 10_000, seed: int = 0) -> ValidationReport:
    """Degree, tracker and reduced-graph checks for every cluster graph and the global graph."""
    rng = np.random.default_rng(seed)
    scopes = []
    for i in range(1, topo.N + 1):
        honest = [a.member for a in topo.honest_in(i)]
        scopes.append(_scope_report(f"cluster {i}", honest, topo.cluster_in[i - 1],
                                    topo.b_cluster[i - 1], exhaustive_limit, rng))
    scopes.append(_scope_report("global", topo.honest(), topo.global_in, topo.b_global, exhaustive_limit, rng))
    return ValidationReport(scopes)
