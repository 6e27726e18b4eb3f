"""Variance reduction: snapshot rule, variance-reduced directions, and standalone mod-SVRG.

The directions follow the SVRG control-variate pattern with the exact
expectation taken at the snapshot::

    sample_grad(x) - sample_grad(snapshot) + expected_grad(snapshot)

which is unbiased for ``expected_grad(x)`` and collapses to the exact value
when ``x == snapshot``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .game import GameModel


@dataclass(frozen=True)
class SnapshotPolicy:
    """Snapshot period ``s(t) = max(1, ceil(s0 * rho**t))``.

    ``rho < 1`` makes the period decay to 1. ``rho = 1`` keeps ``s(t) = s0``
    fixed, which is only meant for tests and ablations.
    """

    s0: int = 1
    rho: float = 1.0

    def __post_init__(self):
        if self.s0 < 1:
            raise ValueError("s0 must be a positive integer")
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")

    def __call__(self, t: int) -> int:
        return max(1, math.ceil(self.s0 * self.rho ** t))


def snapshot_update(t: int, policy: SnapshotPolicy, current, previous_snapshot):
    if t < 1:
        raise ValueError("rounds are numbered from 1")
    return current if t % policy(t) == 0 else previous_snapshot


def direction_d1(game: GameModel, owner: int, x, tau, theta, t: int, members=None) -> np.ndarray:
    """Variance-reduced gradient of ``owner``'s cost w.r.t. every member of its cluster.

    Returns shape ``(n_i, d)``; row ``q`` is the tracker innovation for member q.
    With ``members`` (flat indices within the same cluster) the contributions
    are averaged instead, giving the direction for the cluster-average cost.
    """
    if members is not None:
        return np.mean([direction_d1(game, a, x, tau, theta, t) for a in members], axis=0)
    if tau is x:
        # the sampled terms cancel exactly
        return game.expected_cost_grad_cluster(owner, tau, t)
    return (
        game.cost_grad_cluster(owner, x, theta, t)
        - game.cost_grad_cluster(owner, tau, theta, t)
        + game.expected_cost_grad_cluster(owner, tau, t)
    )


def direction_d2_d3(game: GameModel, owner: int, x, tau, omega, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Variance-reduced constraint value ``y`` (m,) and its gradient w.r.t. ``owner``'s block (m, d)."""
    if tau is x:
        return game.expected_constraint(x, t), game.expected_constraint_grad(owner, x, t)
    y = game.constraint_value(x, omega, t) - game.constraint_value(tau, omega, t) + game.expected_constraint(tau, t)
    grad = (
        game.constraint_grad(owner, x, omega, t)
        - game.constraint_grad(owner, tau, omega, t)
        + game.expected_constraint_grad(owner, tau, t)
    )
    return y, grad


# standalone mod-SVRG --------------------------------------------------------


class SvrgConfigError(ValueError):
    pass


@dataclass
class QuadraticProblem:
    """``f(w, xi) = 0.5 * sum_k h_k w_k**2 - z.w`` with ``h ~ U[g(1-a), g(1+a)]``, ``z ~ N(0, s**2 I)``.

    The expected objective is ``0.5 * gamma * |w|**2``: minimizer 0, optimum 0,
    strong convexity ``gamma`` and smoothness ``L = gamma * (1 + spread)``.
    """

    dim: int = 5
    gamma: float = 1.0
    spread: float = 0.5
    noise: float = 1.0

    @property
    def L(self) -> float:
        return self.gamma * (1.0 + self.spread)

    @property
    def w_star(self) -> np.ndarray:
        return np.zeros(self.dim)

    def sample(self, rng: np.random.Generator, shape):
        shape = tuple(np.atleast_1d(shape)) + (self.dim,)
        h = rng.uniform(self.gamma * (1 - self.spread), self.gamma * (1 + self.spread), size=shape)
        z = self.noise * rng.standard_normal(shape)
        return h, z

    def grad(self, w, xi) -> np.ndarray:
        h, z = xi
        return h * w - z

    def grad_diff(self, w, w_ref, xi) -> np.ndarray:
        """``grad(w, xi) - grad(w_ref, xi)`` without cancelling the noise term in floating point."""
        return xi[0] * (w - w_ref)

    def full_grad(self, w) -> np.ndarray:
        return self.gamma * w

    def objective(self, w) -> float:
        return 0.5 * self.gamma * float(w @ w)

    def gap(self, w) -> float:
        return self.objective(w)


def svrg_alpha(gamma: float, L: float, eta: float, m_s: int) -> float:
    return 1.0 / (gamma * eta * (1 - 4 * L * eta) * m_s) + 4 * L * eta / (1 - 4 * L * eta)


def svrg_beta(L: float, eta: float, sigma2: float) -> float:
    return eta * sigma2 / (1 - 4 * L * eta)


@dataclass
class SvrgTrace:
    w: list = field(default_factory=list)  # snapshots w~_0 .. w~_S
    gaps: list = field(default_factory=list)
    alphas: list = field(default_factory=list)  # alpha_s per epoch
    mu_err_sq: list = field(default_factory=list)  # |mu_hat_s - grad P(w~_{s-1})|**2


def _schedule(v) -> Callable[[int], int]:
    return v if callable(v) else (lambda s, v=int(v): v)


def mod_svrg_run(
    problem: QuadraticProblem,
    eta: float,
    m_s,
    batch,
    epochs: int,
    option: str = "II",
    rng: np.random.Generator | None = None,
    w0=None,
    exact_full_gradient: bool = False,
    replicas: int | None = None,
) -> SvrgTrace:
    """Outer epochs with a batch estimate of the full gradient at the snapshot,
    inner variance-reduced steps. Option I keeps the last inner iterate,
    Option II a uniformly random one from ``w_0 .. w_{m_s - 1}``.

    With ``replicas=R`` the run is repeated R times independently in one
    vectorized pass; snapshots then have shape (R, dim) and ``gaps`` holds
    per-replica arrays.
    """
    rng = rng if rng is not None else np.random.default_rng()
    m_of, b_of = _schedule(m_s), _schedule(batch)
    gamma, L = problem.gamma, problem.L
    if not eta < 1 / (4 * L):
        raise SvrgConfigError(f"step size must satisfy eta < 1/(4L): eta={eta}, 1/(4L)={1 / (4 * L)}")
    if option not in ("I", "II"):
        raise SvrgConfigError(f"option must be 'I' or 'II', got {option!r}")
    alphas = [svrg_alpha(gamma, L, eta, m_of(s)) for s in range(1, epochs + 1)]
    for s, a in enumerate(alphas, start=1):
        if not a < 1:
            raise SvrgConfigError(
                f"epoch {s}: alpha_s = 1/(gamma*eta*(1-4L*eta)*m_s) + 4L*eta/(1-4L*eta) = {a:.4f} is not < 1"
            )

    R = 1 if replicas is None else int(replicas)
    w_tilde = np.ones((R, problem.dim)) if w0 is None else np.broadcast_to(np.asarray(w0, float), (R, problem.dim)).copy()
    rows = np.arange(R)
    trace = SvrgTrace(alphas=alphas)

    def record(w):
        gaps = 0.5 * problem.gamma * np.sum(w * w, axis=1)
        trace.w.append(w[0].copy() if replicas is None else w.copy())
        trace.gaps.append(float(gaps[0]) if replicas is None else gaps)

    record(w_tilde)
    for s in range(1, epochs + 1):
        true_grad = problem.full_grad(w_tilde)
        if exact_full_gradient:
            mu = true_grad
        else:
            mu = problem.grad(w_tilde, problem.sample(rng, (b_of(s), R))).mean(axis=0)
        err = np.sum((mu - true_grad) ** 2, axis=1)
        trace.mu_err_sq.append(float(err[0]) if replicas is None else err)
        m = m_of(s)
        h, z = problem.sample(rng, (m, R))
        picks = np.full(R, m) if option == "I" else rng.integers(m, size=R)
        w = w_tilde.copy()
        chosen = w.copy()  # pick 0 keeps the starting snapshot
        for k in range(m):
            xi = (h[k], z[k])
            w = w - eta * (problem.grad_diff(w, w_tilde, xi) + mu)
            hit = picks == k + 1
            if hit.any():
                chosen[rows[hit]] = w[hit]
        w_tilde = chosen
        record(w_tilde)
    return trace
