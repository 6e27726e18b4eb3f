"""Equilibrium oracle and the honest-agent performance metrics.

The benchmark at round ``t`` is the variational equilibrium of the expected
game in which every cluster minimizes the mean cost of its honest members.
Byzantine blocks stay in the profile; their pseudogradient has no own-cost
term, so they settle wherever the shared terms push them inside their boxes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game import GameModel


class OracleError(RuntimeError):
    def __init__(self, message: str, best_residual: float):
        super().__init__(message)
        self.best_residual = best_residual


class FitError(ValueError):
    pass


@dataclass
class SgneSolution:
    x_star: np.ndarray  # (n, d)
    lambda_star: np.ndarray  # (m,)
    residual: float
    iterations: int = 0


def kkt_residual(game: GameModel, x, lam, t: int, honest=None) -> float:
    """Unit-step natural residual of the primal and dual fixed-point conditions."""
    x = game.shape_x(x)
    J = game.constraint_jacobian()  # (n, m, d)
    F = game.pseudogradient(x, t, honest) + np.einsum("cmd,m->cd", J, lam)
    primal = np.linalg.norm(x - np.clip(x - F, game.lower(), game.upper()), axis=1).max()
    dual = np.linalg.norm(lam - np.maximum(lam + game.expected_constraint(x, t), 0.0))
    return float(primal + dual)


def oracle_step(game: GameModel, honest, rng: np.random.Generator | None = None, t: int = 1) -> float:
    """Step ``0.5 * sigma_hat / L_hat**2`` from the monotonicity probe."""
    rng = rng if rng is not None else np.random.default_rng(0)
    sig, lip = game.monotonicity_probe(t, rng, honest=honest)
    if not sig > 0:
        raise OracleError(f"probe found no strong monotonicity (sigma_hat={sig:.3g})", np.inf)
    return 0.5 * sig / lip ** 2


def solve_sgne(
    game: GameModel,
    t: int,
    honest=None,
    tol: float = 1e-9,
    max_iter: int = 1_000_000,
    warm_start: SgneSolution | None = None,
    kappa: float | None = None,
    check_every: int = 25,
) -> SgneSolution:
    """Projected pseudogradient steps on ``x`` interleaved with clamped dual ascent."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    kappa = oracle_step(game, honest) if kappa is None else kappa
    lo, hi = game.lower(), game.upper()
    J = game.constraint_jacobian()
    if warm_start is None:
        x, lam = 0.5 * (lo + hi), np.zeros(game.m)
    else:
        x, lam = game.shape_x(warm_start.x_star).copy(), warm_start.lambda_star.copy()
    best = np.inf
    for it in range(max_iter + 1):
        if it % check_every == 0:
            r = kkt_residual(game, x, lam, t, honest)
            best = min(best, r)
            if r <= tol:
                return SgneSolution(x, lam, r, it)
        F = game.pseudogradient(x, t, honest) + np.einsum("cmd,m->cd", J, lam)
        x = np.clip(x - kappa * F, lo, hi)
        lam = np.maximum(lam + kappa * game.expected_constraint(x, t), 0.0)
    raise OracleError(f"oracle did not reach tol={tol:g} in {max_iter} iterations (best {best:.3e})", best)


def solve_path(game: GameModel, T: int, honest=None, tol: float = 1e-9, max_iter: int = 1_000_000) -> list[SgneSolution]:
    """Warm-started oracle solutions for rounds ``1..T``."""
    kappa = oracle_step(game, honest)
    out, prev = [], None
    for t in range(1, T + 1):
        prev = solve_sgne(game, t, honest, tol, max_iter, prev, kappa)
        out.append(prev)
    return out


def _substituted(x_star, decisions, rows):
    z = np.array(x_star, dtype=float, copy=True)
    z[rows] = decisions[rows]
    return z


def regret_increment(game: GameModel, t: int, decisions, sgne: SgneSolution, honest) -> float:
    """Round term of the honest regret: each honest agent deviates alone from ``x*``."""
    honest = np.asarray(honest, dtype=bool)
    decisions = game.shape_x(decisions)
    x_star = game.shape_x(sgne.x_star)
    rows = np.flatnonzero(honest)
    if hasattr(game, "expected_costs"):
        # one deviating profile per honest agent, evaluated as a batch
        Z = np.repeat(x_star[None], rows.size, axis=0)
        Z[np.arange(rows.size), rows] = decisions[rows]
        costs = game.expected_costs(Z, t)  # (h, n)
        base = game.expected_costs(x_star, t)
        total = 0.0
        for k, a in enumerate(rows):
            sl = game.cluster_slice(game.cluster_of(a))
            members = honest[sl]
            total += costs[k, sl][members].mean() - base[sl][members].mean()
        return float(total)
    total = 0.0
    for a in rows:
        i = game.cluster_of(a)
        z = x_star.copy()
        z[a] = decisions[a]
        total += game.cluster_cost(i, z, t, honest) - game.cluster_cost(i, x_star, t, honest)
    return float(total)


def cv_increment(game: GameModel, t: int, decisions, sgne: SgneSolution, honest) -> float:
    """``|[G(x*_H)]_+|`` with honest decisions substituted into ``x*``."""
    honest = np.asarray(honest, dtype=bool)
    z = _substituted(game.shape_x(sgne.x_star), game.shape_x(decisions), honest)
    return float(np.linalg.norm(np.maximum(game.expected_constraint(z, t), 0.0)))


def phi_variation(sgne_sequence, honest) -> tuple[float, float, float]:
    """Coordinate-wise path length of ``x*_t``, split into honest and Byzantine blocks."""
    xs = np.stack([np.asarray(s.x_star if isinstance(s, SgneSolution) else s, dtype=float) for s in sgne_sequence])
    if xs.shape[0] < 2:
        raise ValueError("path variation needs at least two rounds")
    honest = np.asarray(honest, dtype=bool)
    steps = np.abs(np.diff(xs, axis=0)).reshape(xs.shape[0] - 1, honest.size, -1)
    ph = float(steps[:, honest].sum())
    pb = float(steps[:, ~honest].sum())
    return ph, pb, ph + pb


def delta_f_sup_estimate(game: GameModel, sample_points, t_range) -> float:
    """Sampled lower bound on the summed round-to-round change of the cost gradients.

    For each point, sums over consecutive rounds in ``t_range`` the norm of the
    change in every agent's expected cluster gradient; returns the max over points.
    """
    ts = list(t_range)
    best = 0.0
    for x in sample_points:
        total = 0.0
        for t0, t1 in zip(ts[:-1], ts[1:]):
            for a in range(game.n):
                g0 = game.expected_cost_grad_cluster(a, x, t0)
                g1 = game.expected_cost_grad_cluster(a, x, t1)
                total += float(np.linalg.norm(g1 - g0))
        best = max(best, total)
    return best


def sublinearity_fit(cumulative, window: float = 0.5) -> float:
    """Least-squares slope of ``log(max(c, 1e-12))`` against ``log t`` over the trailing window."""
    c = np.asarray(cumulative, dtype=float)
    if not 0 < window <= 1:
        raise FitError("window must lie in (0, 1]")
    T = c.size
    start = int(np.floor(T * (1 - window)))
    tt = np.arange(1, T + 1, dtype=float)[start:]
    cc = np.maximum(c[start:], 1e-12)
    if tt.size < 2 or not np.all(np.isfinite(cc)) or np.ptp(np.log(tt)) == 0:
        raise FitError("need at least two finite points to fit a slope")
    return float(np.polyfit(np.log(tt), np.log(cc), 1)[0])


COLUMNS = ("t", "regret_inc", "regret_cum", "cv_inc", "cv_cum", "mean_dist_to_sgne", "consensus_diameter", "phi_running")


def consensus_diameter(estimates, honest) -> float:
    """Largest distance between two honest agents' estimates of the same block."""
    E = np.asarray(estimates, dtype=float)[np.asarray(honest, dtype=bool)]  # (h, n, d)
    diff = E[:, None] - E[None, :]
    return float(np.sqrt((diff ** 2).sum(axis=-1)).max())


@dataclass
class MetricsTrace:
    """Observer that records one row per round against a precomputed oracle path."""

    game: GameModel
    oracle: list
    honest: np.ndarray
    rows: list = field(default_factory=list)

    def __call__(self, view) -> None:
        t = view.t
        sol = self.oracle[t - 1]
        r = regret_increment(self.game, t, view.decisions, sol, self.honest)
        c = cv_increment(self.game, t, view.decisions, sol, self.honest)
        h = self.honest
        dist = float(np.linalg.norm(view.decisions[h] - sol.x_star[h], axis=1).mean())
        diam = consensus_diameter(view.estimates, h)
        phi = 0.0 if t == 1 else float(np.abs(sol.x_star - self.oracle[t - 2].x_star).sum())
        prev = self.rows[-1] if self.rows else (0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        self.rows.append((t, r, prev[2] + r, c, prev[4] + c, dist, diam, prev[7] + phi))

    def array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float).reshape(-1, len(COLUMNS))

    def column(self, name: str) -> np.ndarray:
        return self.array()[:, COLUMNS.index(name)]
