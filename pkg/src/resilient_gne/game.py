"""Stochastic online multi-cluster games and the commodity-market benchmark.

Decisions are handled as stacked arrays of shape ``(n, d)`` in cluster-major
order (a flat ``(n*d,)`` vector is accepted anywhere and reshaped). Agents are
referred to by flat index; :class:`~resilient_gne.topology.ClusterTopology`
maps ``AgentId`` to that index.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np


class GameError(ValueError):
    """Dimension mismatch or invalid game parameters."""


@dataclass(frozen=True)
class BoxSet:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise GameError(f"box bounds must be 1-d of equal length, got {lo.shape} and {hi.shape}")
        if np.any(lo > hi):
            raise GameError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def radius(self) -> float:
        return float(max(np.abs(self.lower).max(), np.abs(self.upper).max()))

    def contains(self, v, atol: float = 0.0) -> bool:
        v = np.asarray(v)
        return bool(np.all(v >= self.lower - atol) and np.all(v <= self.upper + atol))


def project_box(v, box: BoxSet) -> np.ndarray:
    """Euclidean projection onto a box, i.e. a componentwise clamp."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != box.lower.shape[0]:
        raise GameError(f"vector of dim {v.shape[-1]} vs box of dim {box.lower.shape[0]}")
    return np.clip(v, box.lower, box.upper)


@dataclass(frozen=True)
class Distribution:
    """Scalar (or per-coordinate) random factor.

    ``width`` is the half-width for ``uniform`` and the standard deviation for
    ``gaussian``; ``constant`` ignores it.
    """

    kind: str = "uniform"
    mean: float | tuple = 0.0
    width: float = 0.1

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian", "constant"):
            raise GameError(f"unknown distribution kind {self.kind!r}")
        if self.width < 0:
            raise GameError("distribution width must be nonnegative")

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        mu = np.asarray(self.mean, dtype=float)
        shape = mu.shape if size is None else np.broadcast_shapes(mu.shape, tuple(np.atleast_1d(size)))
        if self.kind == "constant" or self.width == 0:
            return np.broadcast_to(mu, shape).astype(float)
        if self.kind == "uniform":
            return mu + rng.uniform(-self.width, self.width, size=shape)
        return mu + self.width * rng.standard_normal(shape)

    @property
    def variance(self) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "uniform":
            return self.width ** 2 / 3.0
        return self.width ** 2


class GameModel(abc.ABC):
    """Interface the algorithm and the metrics need from a game.

    ``owner`` and ``wrt`` are flat agent indices. ``x`` is the full stacked
    decision (or an agent's estimate of it).
    """

    cluster_sizes: tuple[int, ...]
    d: int
    m: int

    @property
    def n(self) -> int:
        return sum(self.cluster_sizes)

    @property
    def N(self) -> int:
        return len(self.cluster_sizes)

    def cluster_of(self, a: int) -> int:
        """0-based cluster of flat agent index ``a``."""
        return int(np.searchsorted(np.cumsum(self.cluster_sizes), a, side="right"))

    def cluster_slice(self, i: int) -> slice:
        o = sum(self.cluster_sizes[:i])
        return slice(o, o + self.cluster_sizes[i])

    def shape_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape == (self.n, self.d):
            return x
        if x.shape == (self.n * self.d,):
            return x.reshape(self.n, self.d)
        raise GameError(f"decision has shape {x.shape}, expected ({self.n}, {self.d}) or ({self.n * self.d},)")

    @abc.abstractmethod
    def box(self, a: int) -> BoxSet: ...

    @abc.abstractmethod
    def sample_theta(self, i: int, t: int, rng: np.random.Generator): ...

    @abc.abstractmethod
    def sample_omega(self, t: int, rng: np.random.Generator): ...

    @abc.abstractmethod
    def cost(self, owner: int, x, theta, t: int) -> float: ...

    @abc.abstractmethod
    def expected_cost(self, owner: int, x, t: int) -> float: ...

    @abc.abstractmethod
    def cost_grad(self, owner: int, wrt: int, x, theta, t: int) -> np.ndarray: ...

    @abc.abstractmethod
    def expected_cost_grad(self, owner: int, wrt: int, x, t: int) -> np.ndarray: ...

    @abc.abstractmethod
    def constraint_value(self, x, omega, t: int) -> np.ndarray: ...

    @abc.abstractmethod
    def constraint_grad(self, wrt: int, x, omega, t: int) -> np.ndarray: ...

    @abc.abstractmethod
    def expected_constraint(self, x, t: int) -> np.ndarray: ...

    @abc.abstractmethod
    def expected_constraint_grad(self, wrt: int, x, t: int) -> np.ndarray: ...

    # generic helpers (subclasses may vectorize) ----------------------------

    def cost_grad_cluster(self, owner: int, x, theta, t: int) -> np.ndarray:
        """Gradients of ``owner``'s cost with respect to every member of its cluster, shape (n_i, d)."""
        sl = self.cluster_slice(self.cluster_of(owner))
        return np.stack([self.cost_grad(owner, q, x, theta, t) for q in range(sl.start, sl.stop)])

    def expected_cost_grad_cluster(self, owner: int, x, t: int) -> np.ndarray:
        sl = self.cluster_slice(self.cluster_of(owner))
        return np.stack([self.expected_cost_grad(owner, q, x, t) for q in range(sl.start, sl.stop)])

    def lower(self) -> np.ndarray:
        return np.stack([self.box(a).lower for a in range(self.n)])

    def upper(self) -> np.ndarray:
        return np.stack([self.box(a).upper for a in range(self.n)])

    def project(self, x) -> np.ndarray:
        return np.clip(self.shape_x(x), self.lower(), self.upper())

    @property
    def radius(self) -> float:
        return max(self.box(a).radius for a in range(self.n))

    def _honest_sets(self, honest):
        honest = np.ones(self.n, dtype=bool) if honest is None else np.asarray(honest, dtype=bool)
        sets = []
        for i in range(self.N):
            sl = self.cluster_slice(i)
            members = [a for a in range(sl.start, sl.stop) if honest[a]]
            if not members:
                raise GameError(f"cluster {i + 1} has no honest member")
            sets.append(members)
        return honest, sets

    def cluster_cost(self, i: int, x, t: int, honest=None) -> float:
        """Expected cluster cost: mean of the honest members' expected costs."""
        _, sets = self._honest_sets(honest)
        return float(np.mean([self.expected_cost(a, x, t) for a in sets[i]]))

    def pseudogradient(self, x, t: int, honest=None) -> np.ndarray:
        """Stacked gradients of each agent's cluster cost w.r.t. its own block, shape (n, d)."""
        x = self.shape_x(x)
        _, sets = self._honest_sets(honest)
        out = np.zeros((self.n, self.d))
        for i, members in enumerate(sets):
            sl = self.cluster_slice(i)
            for a in members:
                out[sl] += self.expected_cost_grad_cluster(a, x, t)
            out[sl] /= len(members)
        return out

    def constraint_jacobian(self) -> np.ndarray:
        """Stacked constant constraint gradients, shape (n, m, d); only valid for linear constraints."""
        z = np.zeros((self.n, self.d))
        return np.stack([self.expected_constraint_grad(a, z, 1) for a in range(self.n)])

    def monotonicity_probe(self, t: int, rng: np.random.Generator, pairs: int = 200, honest=None):
        """Sampled (sigma_hat, L_hat) of the pseudogradient over random pairs in the boxes."""
        lo, hi = self.lower(), self.upper()
        sig, lip = np.inf, 0.0
        for _ in range(pairs):
            x = rng.uniform(lo, hi)
            y = rng.uniform(lo, hi)
            dx = (x - y).ravel()
            dF = (self.pseudogradient(x, t, honest) - self.pseudogradient(y, t, honest)).ravel()
            nrm2 = dx @ dx
            if nrm2 == 0:
                continue
            sig = min(sig, float(dF @ dx / nrm2))
            lip = max(lip, float(np.linalg.norm(dF) / np.sqrt(nrm2)))
        return sig, lip

    def moment_probe(self, t: int, rng: np.random.Generator, samples: int = 200) -> dict:
        """Largest sampled squared norms of stochastic gradients and constraint values on the boxes."""
        lo, hi = self.lower(), self.upper()
        gmax = cmax = 0.0
        for _ in range(samples):
            x = rng.uniform(lo, hi)
            owner = int(rng.integers(self.n))
            theta = self.sample_theta(self.cluster_of(owner), t, rng)
            gmax = max(gmax, float(np.sum(self.cost_grad_cluster(owner, x, theta, t) ** 2)))
            g = self.constraint_value(x, self.sample_omega(t, rng), t)
            cmax = max(cmax, float(g @ g))
        return {"max_cost_grad_sq": gmax, "max_constraint_sq": cmax}


@dataclass
class CommodityMarketGame(GameModel):
    """Companies (clusters) of subsidiaries (agents) selling into ``m`` markets.

    Agent cost: ``x'Qx + q'x - (p_bar - D(theta) A x)' A_a x`` with
    ``Q = (cost_base + i + j + drift(t)) I`` and
    ``q_k = q_scale (k*[coord_offset] + i + j + drift(t))``, where
    ``drift(t) = t**-drift_power`` when ``time_varying`` and 0 otherwise.
    Shared constraint: ``A x - omega * capacity <= 0``.
    """

    cluster_sizes: tuple[int, ...]
    d: int
    m: int
    A: np.ndarray  # (n, m, d)
    p_bar: np.ndarray  # (m,)
    capacity: np.ndarray  # (m,)
    upper_bounds: np.ndarray  # (n, d)
    price_slope: Distribution = field(default_factory=lambda: Distribution("uniform", 0.8, 0.1))
    omega_dist: Distribution = field(default_factory=lambda: Distribution("uniform", 2.0, 0.1))
    cost_base: float = 1.0
    q_scale: float = 0.1
    coord_offset: bool = True
    time_varying: bool = True
    drift_power: float = 5.0

    def __post_init__(self):
        self.cluster_sizes = tuple(int(s) for s in self.cluster_sizes)
        n = self.n
        self.A = np.asarray(self.A, dtype=float)
        self.p_bar = np.asarray(self.p_bar, dtype=float).reshape(-1)
        self.capacity = np.asarray(self.capacity, dtype=float).reshape(-1)
        self.upper_bounds = np.broadcast_to(np.asarray(self.upper_bounds, dtype=float), (n, self.d)).copy()
        if self.A.shape != (n, self.m, self.d):
            raise GameError(f"A has shape {self.A.shape}, expected {(n, self.m, self.d)}")
        if self.p_bar.shape != (self.m,) or self.capacity.shape != (self.m,):
            raise GameError("p_bar and capacity must have length m")
        if np.any(self.upper_bounds < 0):
            raise GameError("box upper bounds must be nonnegative")
        self.d_bar = np.broadcast_to(np.asarray(self.price_slope.mean, dtype=float), (self.m,)).copy()
        self.omega_bar = float(self.omega_dist.mean)
        cl = np.repeat(np.arange(1, self.N + 1), self.cluster_sizes)
        mem = np.concatenate([np.arange(1, s + 1) for s in self.cluster_sizes])
        self._ij = (cl + mem).astype(float)  # i + j per agent
        self._cluster = cl - 1
        self._offsets = np.concatenate([[0], np.cumsum(self.cluster_sizes)])
        self._lower = np.zeros((n, self.d))
        self._k = np.arange(1, self.d + 1, dtype=float) if self.coord_offset else np.zeros(self.d)
        self._cache_t, self._cache = None, None

    # parameters over time ---------------------------------------------------

    def drift(self, t: int) -> float:
        return float(t) ** (-self.drift_power) if self.time_varying else 0.0

    def _coeffs(self, t: int):
        # the engine asks for the same round many times in a row
        if self._cache_t != t:
            dr = self.drift(t)
            Q = np.repeat((self.cost_base + self._ij + dr)[:, None], self.d, axis=1)
            q = self.q_scale * (self._k[None, :] + self._ij[:, None] + dr)
            Q.setflags(write=False)
            q.setflags(write=False)
            self._cache_t, self._cache = t, (Q, q)
        return self._cache

    def Q_diag(self, t: int) -> np.ndarray:
        return self._coeffs(t)[0]

    def q_lin(self, t: int) -> np.ndarray:
        return self._coeffs(t)[1]

    # samplers ---------------------------------------------------------------

    def box(self, a: int) -> BoxSet:
        return BoxSet(self._lower[a], self.upper_bounds[a])

    def lower(self) -> np.ndarray:
        return self._lower

    def upper(self) -> np.ndarray:
        return self.upper_bounds

    def sample_theta(self, i: int, t: int, rng: np.random.Generator) -> np.ndarray:
        """Diagonal of the price-slope matrix D(theta), one entry per market."""
        return self.price_slope.sample(rng, self.m)

    def sample_omega(self, t: int, rng: np.random.Generator) -> float:
        return float(self.omega_dist.sample(rng))

    # costs --------------------------------------------------------------------

    def _check_agent(self, a: int) -> None:
        if not 0 <= a < self.n:
            raise GameError(f"agent index {a} out of range 0..{self.n - 1}")

    def _cost(self, owner, x, slope, t):
        self._check_agent(owner)
        x = self.shape_x(x)
        S = np.einsum("bmd,bd->m", self.A, x)
        xa = x[owner]
        price = self.p_bar - slope * S
        Qa = self.Q_diag(t)[owner]
        return float(xa @ (Qa * xa) + self.q_lin(t)[owner] @ xa - price @ (self.A[owner] @ xa))

    def cost(self, owner, x, theta, t) -> float:
        return self._cost(owner, x, np.asarray(theta, dtype=float), t)

    def expected_cost(self, owner, x, t) -> float:
        return self._cost(owner, x, self.d_bar, t)

    def _grad_cluster(self, owner, x, slope, t):
        self._check_agent(owner)
        x = self.shape_x(x)
        i = self._cluster[owner]
        lo, hi = self._offsets[i], self._offsets[i + 1]
        S = np.einsum("bmd,bd->m", self.A, x)
        Axa = self.A[owner] @ x[owner]
        out = np.einsum("cmd,m->cd", self.A[lo:hi], slope * Axa)
        price = self.p_bar - slope * S
        out[owner - lo] += 2.0 * self.Q_diag(t)[owner] * x[owner] + self.q_lin(t)[owner] - self.A[owner].T @ price
        return out

    def cost_grad_cluster(self, owner, x, theta, t) -> np.ndarray:
        return self._grad_cluster(owner, x, np.asarray(theta, dtype=float), t)

    def expected_cost_grad_cluster(self, owner, x, t) -> np.ndarray:
        return self._grad_cluster(owner, x, self.d_bar, t)

    def _grad(self, owner, wrt, x, slope, t):
        self._check_agent(wrt)
        i = self._cluster[owner]
        x = self.shape_x(x)
        if self._cluster[wrt] != i:
            # cross-cluster gradient through the shared price
            Axa = self.A[owner] @ x[owner]
            return self.A[wrt].T @ (slope * Axa)
        return self._grad_cluster(owner, x, slope, t)[wrt - self._offsets[i]]

    def cost_grad(self, owner, wrt, x, theta, t) -> np.ndarray:
        return self._grad(owner, wrt, x, np.asarray(theta, dtype=float), t)

    def expected_cost_grad(self, owner, wrt, x, t) -> np.ndarray:
        return self._grad(owner, wrt, x, self.d_bar, t)

    # constraints ------------------------------------------------------------

    def constraint_value(self, x, omega, t) -> np.ndarray:
        x = self.shape_x(x)
        return np.einsum("bmd,bd->m", self.A, x) - float(omega) * self.capacity

    def constraint_grad(self, wrt, x=None, omega=None, t=None) -> np.ndarray:
        self._check_agent(wrt)
        return self.A[wrt].copy()

    def expected_constraint(self, x, t) -> np.ndarray:
        return self.constraint_value(x, self.omega_bar, t)

    def expected_constraint_grad(self, wrt, x=None, t=None) -> np.ndarray:
        return self.constraint_grad(wrt)

    def constraint_jacobian(self) -> np.ndarray:
        return self.A

    # expected game, vectorized ----------------------------------------------

    def expected_costs(self, x, t) -> np.ndarray:
        """Expected cost of every agent at profile ``x``, shape (n,).

        Leading batch axes are allowed: ``(..., n, d)`` gives ``(..., n)``.
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-2:] != (self.n, self.d):
            x = self.shape_x(x)
        Ax = np.einsum("bmd,...bd->...bm", self.A, x)
        price = self.p_bar - self.d_bar * Ax.sum(axis=-2)
        return (np.sum(self.Q_diag(t) * x * x, axis=-1) + np.sum(self.q_lin(t) * x, axis=-1)
                - np.einsum("...bm,...m->...b", Ax, price))

    def cluster_cost(self, i, x, t, honest=None) -> float:
        _, sets = self._honest_sets(honest)
        return float(np.mean(self.expected_costs(x, t)[sets[i]]))

    def pseudogradient(self, x, t, honest=None) -> np.ndarray:
        x = self.shape_x(x)
        honest, sets = self._honest_sets(honest)
        Ax = np.einsum("bmd,bd->bm", self.A, x)
        price = self.p_bar - self.d_bar * Ax.sum(axis=0)
        own = 2.0 * self.Q_diag(t) * x + self.q_lin(t) - np.einsum("cmd,m->cd", self.A, price)
        h = honest.astype(float)
        cluster_sum = np.stack([Ax[s].sum(axis=0) for s in sets])  # (N, m)
        counts = np.array([len(s) for s in sets], dtype=float)
        cross = np.einsum("cmd,cm->cd", self.A, self.d_bar * cluster_sum[self._cluster])
        return (h[:, None] * own + cross) / counts[self._cluster][:, None]


def commodity_market(
    cluster_sizes,
    d: int,
    m: int,
    p_bar,
    capacity,
    upper,
    A="identity",
    **kwargs,
) -> CommodityMarketGame:
    """Convenience constructor; ``A='identity'`` gives every agent ``A_ij = I`` (requires m == d)."""
    n = sum(cluster_sizes)
    if isinstance(A, str):
        if A != "identity":
            raise GameError(f"unknown A spec {A!r}")
        if m != d:
            raise GameError("A='identity' requires m == d")
        A = np.broadcast_to(np.eye(m), (n, m, d)).copy()
    return CommodityMarketGame(
        cluster_sizes=tuple(cluster_sizes), d=d, m=m, A=np.asarray(A, dtype=float),
        p_bar=np.broadcast_to(np.asarray(p_bar, dtype=float), (m,)),
        capacity=np.broadcast_to(np.asarray(capacity, dtype=float), (m,)),
        upper_bounds=np.asarray(upper, dtype=float), **kwargs,
    )
