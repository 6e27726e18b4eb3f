"""Byzantine-resilient online SGNE seeking: schedules, agent update and round engine.

Each honest agent keeps its decision ``x``, a dual ``lam``, an estimate of the
whole profile (own row aliased to ``x``), a snapshot of that estimate, and one
gradient tracker per member of its cluster. A round is:

1. refresh the snapshot and form the variance-reduced constraint value ``y``;
2. dual ascent with regularization ``beta``;
3. relaxed projected step on ``x`` along the own tracker plus the dual term;
4. trimmed mixing of the foreign estimate blocks, damped by ``zeta``;
5. trimmed consensus on the trackers plus the local gradient innovation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .attacks import AttackModel, craft_message
from .game import GameModel
from .robust_agg import sanitize, trimmed_mean
from .svrg import SnapshotPolicy, direction_d1, direction_d2_d3, snapshot_update
from .topology import ClusterTopology


class ScheduleError(ValueError):
    """A step-size exponent or tunable parameter violates the required conditions."""


class ProtocolError(RuntimeError):
    """An agent did not receive a message it was entitled to."""


class SimulationError(RuntimeError):
    def __init__(self, t: int, cause: Exception):
        super().__init__(f"round {t}: {type(cause).__name__}: {cause}")
        self.t = t
        self.cause = cause


# schedules -------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleParams:
    """Exponents of the step sizes.

    ``t1 = None`` picks the smallest switch point for which the product
    ``alpha*gamma`` does not drop at the switch. ``s`` is the growth exponent
    of the gradient-variation term. ``delta_frac`` places ``delta_t`` inside
    its admissible interval ``(0, (1 - zeta_t) / H_bound)``.
    """

    a1: float = -1.4
    a2: float = -1.2
    b1: float = -2.6
    b2: float = -2.2
    beta: float = 0.05
    eta: float = -1.1
    zeta: float = -2.0
    t1: int | None = None
    s: float = 0.0
    delta_frac: float = 0.9
    snapshot: SnapshotPolicy = field(default_factory=SnapshotPolicy)


@dataclass(frozen=True)
class ScheduleSet:
    params: ScheduleParams
    T: int
    H_bound: int
    t1: int
    alpha_: np.ndarray  # index t-1
    beta_: np.ndarray
    gamma_: np.ndarray
    eta_: np.ndarray
    delta_: np.ndarray
    zeta_: np.ndarray

    def _at(self, arr, t):
        if not 1 <= t <= self.T:
            raise ScheduleError(f"round {t} outside the horizon 1..{self.T}")
        return float(arr[t - 1])

    def alpha(self, t):
        return self._at(self.alpha_, t)

    def beta(self, t):
        return self._at(self.beta_, t)

    def gamma(self, t):
        return self._at(self.gamma_, t)

    def eta(self, t):
        return self._at(self.eta_, t)

    def delta(self, t):
        return self._at(self.delta_, t)

    def zeta(self, t):
        return self._at(self.zeta_, t)

    def snapshot_period(self, t: int) -> int:
        return self.params.snapshot(t)


def auto_switch(p: ScheduleParams, T: int) -> int:
    """Smallest ``t1`` with ``t1**(a1+b1) <= T**(a2+b2)``, capped at ``T``."""
    e1, e2 = p.a1 + p.b1, p.a2 + p.b2
    t1 = math.ceil(T ** (e2 / e1))
    while t1 > 1 and (t1 - 1) ** e1 <= T ** e2:
        t1 -= 1
    while t1 ** e1 > T ** e2:
        t1 += 1
    return min(t1, T)


def make_schedules(p: ScheduleParams, T: int, H_bound: int) -> ScheduleSet:
    if T < 1:
        raise ScheduleError(f"horizon T must be >= 1, got {T}")
    if H_bound < 1:
        raise ScheduleError(f"H_bound must be >= 1, got {H_bound}")
    if not p.eta < -1:
        raise ScheduleError(f"eta exponent must be < -1, got {p.eta}")
    if not p.beta < -1 - p.eta:
        raise ScheduleError(f"beta exponent must be < -1 - eta = {-1 - p.eta}, got {p.beta}")
    if not p.a1 < p.a2 < -1:
        raise ScheduleError(f"need a1 < a2 < -1, got a1={p.a1}, a2={p.a2}")
    cap = min(-2.0, -3.0 - 2.0 * p.eta, -2.0 - 2.0 * p.s)
    if not p.b1 < p.b2 < cap:
        raise ScheduleError(f"need b1 < b2 < min(-2, -3-2*eta, -2-2*s) = {cap}, got b1={p.b1}, b2={p.b2}")
    if not p.zeta < -1:
        raise ScheduleError(f"zeta exponent must be < -1, got {p.zeta}")
    if not 0 <= p.s < 1:
        raise ScheduleError(f"growth exponent s must lie in [0, 1), got {p.s}")
    if not 0 < p.delta_frac < 1:
        raise ScheduleError(f"delta_frac must lie in (0, 1), got {p.delta_frac}")

    t1 = auto_switch(p, T) if p.t1 is None else int(p.t1)
    if t1 < 1:
        raise ScheduleError(f"switch point t1 must be >= 1, got {t1}")
    if t1 < T and not t1 ** (p.a1 + p.b1) <= T ** (p.a2 + p.b2):
        raise ScheduleError(
            f"alpha*gamma must not drop at the switch: t1^(a1+b1) = {t1 ** (p.a1 + p.b1):.3e} "
            f"> T^(a2+b2) = {T ** (p.a2 + p.b2):.3e}"
        )

    t = np.arange(1, T + 1, dtype=float)
    early = t <= t1
    alpha = np.where(early, t ** p.a1, float(T) ** p.a2)
    gamma = np.where(early, t ** p.b1, float(T) ** p.b2)
    eta = np.full(T, float(T) ** p.eta)
    beta = np.full(T, float(T) ** p.beta)
    zeta = 1.0 - (t + 1.0) ** p.zeta
    delta = p.delta_frac * (1.0 - zeta) / H_bound

    # at T = 1 every exponent gives beta*eta = 1, so the bound is only enforced for T >= 2
    if T > 1 and not np.all((beta * eta > 0) & (beta * eta < 0.5)):
        raise ScheduleError(f"need 0 < beta_t*eta_t < 1/2, got {float(beta[0] * eta[0])}")
    if not np.all((alpha > 0) & (alpha <= 1)):
        raise ScheduleError("alpha_t must lie in (0, 1]")
    if not np.all((0 < delta) & (delta < zeta) & (zeta < 1)):
        raise ScheduleError("need 0 < delta_t < zeta_t < 1 for all t")
    if not np.all(H_bound * delta + zeta < 1):
        raise ScheduleError("need H_bound*delta_t + zeta_t < 1 for all t")
    return ScheduleSet(p, T, H_bound, t1, alpha, beta, gamma, eta, delta, zeta)


# agent state and one update ----------------------------------------------------


@dataclass
class AgentState:
    """State of one agent, flat index ``agent``; ``trackers`` and ``eps`` are indexed by cluster member."""

    agent: int
    x: np.ndarray  # (d,)
    lam: np.ndarray  # (m,)
    estimate: np.ndarray  # (n, d), row ``agent`` equals x
    snapshot: np.ndarray  # (n, d)
    trackers: np.ndarray  # (n_i, d)
    eps: np.ndarray  # (n_i, d)

    def copy(self) -> "AgentState":
        return AgentState(self.agent, self.x.copy(), self.lam.copy(), self.estimate.copy(),
                          self.snapshot.copy(), self.trackers.copy(), self.eps.copy())


@dataclass(frozen=True)
class AgentView:
    """What an agent knows about the network: its in-neighbors and the trim budgets."""

    agent: int
    cluster: int  # 0-based
    member: int  # 0-based within the cluster
    global_in: tuple[int, ...]  # flat indices
    cluster_in: tuple[int, ...]  # member indices
    b: int
    b_i: int


@dataclass
class RoundMessages:
    """Messages keyed by sender, each broadcast to all of the sender's out-neighbors.

    ``estimates[k]`` is what flat agent k claims about the whole profile.
    ``trackers[i][q]`` is what member q of cluster i claims for its trackers.
    """

    estimates: np.ndarray  # (n, n, d)
    trackers: list  # per cluster (n_i, n_i, d)
    est_sent: np.ndarray  # (n,) bool
    trk_sent: list  # per cluster (n_i,) bool


def _gather(store, sent, senders, what):
    idx = list(senders)
    if idx and not np.all(sent[idx]):
        missing = [s for s in idx if not sent[s]]
        raise ProtocolError(f"missing {what} message(s) from {missing}")
    return store[idx]


def round_step(
    state: AgentState,
    inbox: RoundMessages,
    game: GameModel,
    view: AgentView,
    sched: ScheduleSet,
    t: int,
    rng: np.random.Generator,
) -> AgentState:
    a = view.agent
    i = view.cluster
    new = state.copy()

    # the round-t cost sample entered eps at the end of the previous round
    omega = game.sample_omega(t, rng)
    tau = snapshot_update(t, sched.params.snapshot, state.estimate, state.snapshot)

    y, grad_y = direction_d2_d3(game, a, state.estimate, tau, omega, t)
    lam = np.maximum(state.lam + sched.eta(t) * (y - sched.beta(t) * state.lam), 0.0)

    al, ga = sched.alpha(t), sched.gamma(t)
    box = game.box(a)
    step = state.x - ga * state.trackers[view.member] - ga * (grad_y.T @ lam)
    x_new = (1.0 - al) * state.x + al * np.clip(step, box.lower, box.upper)

    received = _gather(inbox.estimates, inbox.est_sent, view.global_in, "estimate")
    mixed = trimmed_mean(state.estimate, sanitize(received), view.b)
    est = sched.delta(t) * mixed + (sched.zeta(t) - sched.delta(t)) * state.estimate
    est[a] = x_new

    tau_next = snapshot_update(t + 1, sched.params.snapshot, est, tau) if t < sched.T else tau
    theta_next = game.sample_theta(i, t + 1, rng)
    eps_new = direction_d1(game, a, est, tau_next, theta_next, t + 1)

    trk_in = _gather(inbox.trackers[i], inbox.trk_sent[i], view.cluster_in, "tracker")
    trackers = trimmed_mean(state.trackers, sanitize(trk_in), view.b_i) + eps_new - state.eps

    new.x, new.lam, new.estimate, new.snapshot = x_new, lam, est, tau_next
    new.trackers, new.eps = trackers, eps_new
    return new


# simulation ----------------------------------------------------------------------


def agent_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent stream per (seed, key); the key names its consumer, not a worker."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


def initial_states(topo: ClusterTopology, game: GameModel, agents: Sequence[int], seed: int) -> dict[int, AgentState]:
    """Decisions and foreign estimate blocks uniform in their boxes; duals, trackers and memories zero."""
    lo, hi = game.lower(), game.upper()
    out = {}
    for a in agents:
        rng = agent_rng(seed, 1, a)
        est = rng.uniform(lo, hi)
        ni = game.cluster_sizes[game.cluster_of(a)]
        out[a] = AgentState(
            agent=a, x=est[a].copy(), lam=np.zeros(game.m), estimate=est, snapshot=est.copy(),
            trackers=np.zeros((ni, game.d)), eps=np.zeros((ni, game.d)),
        )
    return out


def agent_views(topo: ClusterTopology) -> list[AgentView]:
    views = []
    for a, ag in enumerate(topo.agents()):
        c = ag.cluster - 1
        views.append(AgentView(
            agent=a, cluster=c, member=ag.member - 1,
            global_in=tuple(sorted(topo.index(s) for s in topo.global_in[ag])),
            cluster_in=tuple(sorted(q - 1 for q in topo.cluster_in[c][ag.member])),
            b=topo.b_global, b_i=topo.b_cluster[c],
        ))
    return views


@dataclass
class RoundView:
    """Read-only snapshot passed to observers after each round."""

    t: int
    decisions: np.ndarray  # (n, d); Byzantine rows hold their internal state, not what they send
    estimates: np.ndarray  # (n, n, d)
    duals: np.ndarray  # (n, m)
    honest: np.ndarray  # (n,) bool
    states: dict = field(default_factory=dict)  # flat index -> AgentState, arrays read-only


@dataclass
class InvariantCounts:
    infeasible: int = 0
    negative_dual: int = 0
    estimate_bound: int = 0
    aliasing: int = 0

    @property
    def total(self) -> int:
        return self.infeasible + self.negative_dual + self.estimate_bound + self.aliasing

    def as_dict(self) -> dict:
        return {"infeasible": self.infeasible, "negative_dual": self.negative_dual,
                "estimate_bound": self.estimate_bound, "aliasing": self.aliasing}


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _craft_all(topo, views, attack, est, trk, rng_of, honest):
    """Overwrite Byzantine outboxes on attacked channels.

    Crafted messages read only honest outboxes, which are complete at this point.
    """
    est_true, trk_true = est.copy(), [x.copy() for x in trk]
    for a in np.flatnonzero(~honest):
        v = views[a]
        rng = rng_of(a)
        if attack.attacks("estimate"):
            hin = [s for s in v.global_in if honest[s]]
            est[a] = craft_message(attack, est_true[hin], rng, shape=est.shape[1:])
        if attack.attacks("tracker"):
            i, o = v.cluster, topo.offset(v.cluster + 1)
            hin = [q for q in v.cluster_in if honest[o + q]]
            trk[i][v.member] = craft_message(attack, trk_true[i][hin], rng, shape=trk[i].shape[1:])


def run_simulation(
    topo: ClusterTopology,
    game: GameModel,
    sched: ScheduleSet,
    attack: AttackModel,
    T: int,
    seed: int,
    observers: Sequence[Callable[[RoundView], None]] = (),
    strict: bool = False,
) -> InvariantCounts:
    """Run ``T`` synchronous rounds and feed every observer after each round.

    Every agent runs the honest update; on attacked channels the messages of
    Byzantine agents are then replaced by crafted ones, so with no attack they
    behave exactly like honest agents. Invariants are counted over honest
    agents only. Returns the counts; ``strict`` raises on the first violation.
    """
    if T > sched.T:
        raise ScheduleError(f"schedules cover {sched.T} rounds, simulation asks for {T}")
    if tuple(game.cluster_sizes) != tuple(topo.cluster_sizes):
        raise ValueError(f"game clusters {game.cluster_sizes} vs topology {topo.cluster_sizes}")
    n, d = topo.n, game.d
    honest = topo.honest_mask()
    sim = list(range(n))
    watched = np.flatnonzero(honest)
    views = agent_views(topo)
    states = initial_states(topo, game, sim, seed)
    rngs = {a: agent_rng(seed, 0, a) for a in sim}
    byz_rngs: dict[int, np.random.Generator] = {}

    def byz_rng(a):
        if a not in byz_rngs:
            byz_rngs[a] = agent_rng(seed, 2, a)
        return byz_rngs[a]

    lo, hi = game.lower(), game.upper()
    init_max = max(float(np.abs(states[a].estimate).max()) for a in watched)
    Lam = max(game.radius, init_max)
    counts = InvariantCounts()

    for t in range(1, T + 1):
        try:
            est_out = np.zeros((n, n, d))
            trk_out = [np.zeros((s, s, d)) for s in topo.cluster_sizes]
            for a in sim:
                est_out[a] = states[a].estimate
                v = views[a]
                trk_out[v.cluster][v.member] = states[a].trackers
            if attack.active:
                _craft_all(topo, views, attack, est_out, trk_out, byz_rng, honest)
            inbox = RoundMessages(
                estimates=_frozen(est_out), trackers=[_frozen(x) for x in trk_out],
                est_sent=np.ones(n, dtype=bool), trk_sent=[np.ones(s, dtype=bool) for s in topo.cluster_sizes],
            )
            states = {a: round_step(states[a], inbox, game, views[a], sched, t, rngs[a]) for a in sim}
        except Exception as exc:  # noqa: BLE001 - re-raised with the round attached
            raise SimulationError(t, exc) from exc

        dec = np.stack([states[a].x for a in sim])
        ests = np.stack([states[a].estimate for a in sim])
        duals = np.stack([states[a].lam for a in sim])
        w = watched
        found = InvariantCounts(
            infeasible=int(np.sum(np.any((dec[w] < lo[w]) | (dec[w] > hi[w]), axis=1))),
            negative_dual=int(np.sum(np.any(duals[w] < 0, axis=1))),
            estimate_bound=int(np.sum(np.any(np.abs(ests[w]) > Lam, axis=(1, 2)))),
            aliasing=int(np.sum(np.any(ests[w, w] != dec[w], axis=1))),
        )
        if found.total and strict:
            raise SimulationError(t, AssertionError(f"invariant violated: {found.as_dict()}"))
        for k, v in found.as_dict().items():
            setattr(counts, k, getattr(counts, k) + v)
        for st in states.values():
            for arr in (st.x, st.lam, st.estimate, st.snapshot, st.trackers, st.eps):
                arr.setflags(write=False)
        view = RoundView(t, _frozen(dec), _frozen(ests), _frozen(duals), honest, states)
        for ob in observers:
            ob(view)
    return counts


__all__ = [
    "AgentState", "AgentView", "InvariantCounts", "ProtocolError", "RoundMessages", "RoundView",
    "ScheduleError", "ScheduleParams", "ScheduleSet", "SimulationError", "agent_views", "auto_switch",
    "initial_states", "make_schedules", "round_step", "run_simulation",
]
