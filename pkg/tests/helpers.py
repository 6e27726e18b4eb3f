"""Shared builders for the test suite."""

import numpy as np

from resilient_gne.game import BoxSet, GameModel
from resilient_gne.topology import AgentId, ClusterTopology, complete_edges


def complete_topology(sizes, byzantine=(), b_cluster=None, b_global=None):
    agents = [AgentId(i + 1, j + 1) for i, s in enumerate(sizes) for j in range(s)]
    clusters = [complete_edges(list(range(1, s + 1))) for s in sizes]
    return ClusterTopology.from_edges(sizes, complete_edges(agents), clusters, byzantine, b_global, b_cluster)


class SymmetricDuopoly(GameModel):
    """Two single-agent clusters, d = m = 1, cost ``c x^2 + q x - (p - s(x1 + x2)) x``.

    Deterministic: the stochastic and expected versions coincide.
    """

    def __init__(self, c=1.0, q=0.2, p=3.0, s=0.8, upper=10.0, cap=100.0):
        self.cluster_sizes, self.d, self.m = (1, 1), 1, 1
        self.c, self.q, self.p, self.s, self.up, self.cap = c, q, p, s, upper, cap

    def box(self, a):
        return BoxSet(np.zeros(1), np.full(1, self.up))

    def sample_theta(self, i, t, rng):
        return None

    def sample_omega(self, t, rng):
        return 1.0

    def expected_cost(self, owner, x, t):
        x = self.shape_x(x)[:, 0]
        return float(self.c * x[owner] ** 2 + self.q * x[owner] - (self.p - self.s * x.sum()) * x[owner])

    def cost(self, owner, x, theta, t):
        return self.expected_cost(owner, x, t)

    def expected_cost_grad(self, owner, wrt, x, t):
        x = self.shape_x(x)[:, 0]
        if wrt == owner:
            return np.array([2 * self.c * x[owner] + self.q - self.p + self.s * x.sum() + self.s * x[owner]])
        return np.array([self.s * x[owner]])

    def cost_grad(self, owner, wrt, x, theta, t):
        return self.expected_cost_grad(owner, wrt, x, t)

    def expected_constraint(self, x, t):
        return np.array([self.shape_x(x).sum() - self.cap])

    def constraint_value(self, x, omega, t):
        return self.expected_constraint(x, t)

    def expected_constraint_grad(self, wrt, x=None, t=None):
        return np.ones((1, 1))

    def constraint_grad(self, wrt, x, omega, t):
        return self.expected_constraint_grad(wrt)
