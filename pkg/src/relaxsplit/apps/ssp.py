"""Stochastic shortest path over two candidate transition graphs.

The Bellman residual of action k at node i is <u_i^k, x> + v_i^k - x_i
with v_i^k the expected one-step cost, so stacking A^k = U^k - I turns
the fixed-point condition into sum_i |min_k(w_i^k + v_i^k)| = 0 with
w = A x.  The absorbing target node has a zero-cost self-loop in both
graphs, which pins the value there to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import linops, prox
from ..relax import RelaxedProblem
from ..solvers import ContinuationSchedule, SolveOptions, continuation


@dataclass
class SspInstance:
    U1: np.ndarray
    U2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    target: int

    @property
    def n(self):
        return self.U1.shape[0]


def generate(n, seed=0, out_degree=4):
    """Random proper instance: positive edge costs, row-stochastic
    transitions, and a guaranteed forward edge in graph 1 so the target is
    reachable under at least one policy."""
    rng = np.random.default_rng(seed)
    target = n - 1
    mats = []
    costs = []
    for graph in range(2):
        U = np.zeros((n, n))
        C = np.zeros((n, n))
        for i in range(n - 1):
            succ = rng.choice(n, size=min(out_degree, n), replace=False)
            if graph == 0 and not np.any(succ > i):
                succ[0] = rng.integers(i + 1, n)
            p = rng.dirichlet(np.ones(succ.size))
            U[i, succ] = p
            C[i, succ] = rng.uniform(0.1, 1.0, size=succ.size)
        U[target, target] = 1.0
        mats.append(U)
        costs.append(C)
    U1, U2 = mats
    C1, C2 = costs
    v1 = np.einsum("ij,ij->i", U1, C1)
    v2 = np.einsum("ij,ij->i", U2, C2)
    return SspInstance(U1, U2, v1, v2, target)


def value_iteration(inst, tol=1e-12, max_iter=1_000_000):
    """Fixed point of x = min_k(U^k x + v^k), started from zero."""
    x = np.zeros(inst.n)
    for _ in range(max_iter):
        x_new = np.minimum(inst.U1 @ x + inst.v1, inst.U2 @ x + inst.v2)
        if np.max(np.abs(x_new - x)) <= tol:
            return x_new
        x = x_new
    return x


def extract_policy(x, inst):
    """Bellman-greedy action per node (1 or 2), ties to action 1."""
    q1 = inst.U1 @ x + inst.v1
    q2 = inst.U2 @ x + inst.v2
    return np.where(q1 <= q2, 1, 2)


def policy_value(inst, policy):
    """Exact evaluation of a proper policy: solve (I - U_pi) x = v_pi on
    the non-target nodes with the target pinned at zero."""
    pick1 = np.asarray(policy) == 1
    U = np.where(pick1[:, None], inst.U1, inst.U2)
    v = np.where(pick1, inst.v1, inst.v2)
    keep = np.arange(inst.n) != inst.target
    x = np.zeros(inst.n)
    x[keep] = np.linalg.solve(np.eye(keep.sum()) - U[np.ix_(keep, keep)],
                              v[keep])
    return x


def build_problem(inst, nu=1.0, policy=None):
    n = inst.n
    A = linops.Stack([linops.Dense(inst.U1 - np.eye(n)),
                      linops.Dense(inst.U2 - np.eye(n))])
    h = prox.SeparableNonsmooth(
        [prox.MinAbsPair(np.arange(n), n + np.arange(n), a=inst.v1, b=inst.v2)],
        2 * n)
    return RelaxedProblem(h, A, linops.ZeroReg(), nu,
                          policy or linops.direct_factor())


def solve(inst, schedule=None, x0=None):
    """Continuation solve normalized so the target node costs zero.

    The stacked operator kills constant vectors (both transition matrices
    are row stochastic), so the partially minimized x is only determined
    up to a constant shift; subtracting the target entry lands on the
    standard value-function normalization.  Returns (x, traces).
    """
    if schedule is None:
        schedule = ContinuationSchedule(
            1.0, 0.2, 1e-5,
            SolveOptions(max_iter=2000, tol_optimality=1e-24,
                         tol_objective_delta=1e-15))
    p = build_problem(inst)
    w, x, traces = continuation(p, schedule, x0=x0)
    x = x - x[inst.target]
    return x, traces
