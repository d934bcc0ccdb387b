"""The relaxed composite problem and its smooth envelope.

Relaxing h(Ax) + g(x) couples a surrogate variable w to Ax:

    f_nu(x, w) = h(w) + 1/(2 nu) ||A x - w||^2 + g(x)

Minimizing over x at fixed w leaves a convex C^1 function of w whose
gradient is (w - A x(w)) / nu for any partial minimizer x(w), with
gradient Lipschitz constant at most 1/nu.  The outer solvers only ever
need that gradient and the prox of h.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import linops


@dataclass
class RelaxedProblem:
    h: object                 # SeparableNonsmooth on R^m
    A: linops.LinearOperator  # m x n
    g: object                 # quadratic regularizer on R^n
    nu: float
    policy: linops.LsSolvePolicy = field(default_factory=linops.direct_factor)

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.h.m != self.A.rows:
            raise ValueError(
                f"h covers {self.h.m} coordinates, operator has {self.A.rows} rows")

    def with_nu(self, nu):
        return replace(self, nu=float(nu))


def partial_minimize(p, w):
    """x(w) = argmin_x g(x) + 1/(2 nu) ||A x - w||^2."""
    return linops.solve_partial(p.A, p.g, w, p.nu, p.policy)


def envelope_grad(p, w, x):
    """Gradient of the partial-minimum envelope at w, given x = x(w)."""
    return (np.asarray(w, dtype=float) - p.A.apply(x)) / p.nu


def objective(p, w, x):
    """f_nu(x, w), the full relaxed objective."""
    r = p.A.apply(x) - w
    return p.h.value(w) + float(r @ r) / (2.0 * p.nu) + p.g.value(x)


def envelope_value(p, w):
    """g_nu(w) = min_x g(x) + 1/(2 nu) ||A x - w||^2."""
    x = partial_minimize(p, w)
    return objective(p, w, x) - p.h.value(w), x


def optimality_witness(p, x_prev, x_cur):
    """|| A (x_prev - x_cur) / nu ||^2, the stationarity witness driven to
    zero by the descent inequality."""
    d = p.A.apply(np.asarray(x_prev) - np.asarray(x_cur)) / p.nu
    return float(d @ d)


def coupling_gap(p, w, x):
    """||A x - w||, bounded by lip(h) * nu at stationary pairs."""
    return float(np.linalg.norm(p.A.apply(x) - np.asarray(w, dtype=float)))


TRACE_HEADER = ("iter", "objective", "optimality", "gap", "inner_iters", "ms")


class SolverTrace:
    """Per-iteration log: objective, optimality witness, coupling gap,
    inner-solve iterations, elapsed wall milliseconds."""

    def __init__(self, meta=None):
        self.iters = []
        self.objective = []
        self.optimality = []
        self.gap = []
        self.inner_iters = []
        self.ms = []
        self.converged = False
        self.meta = dict(meta or {})

    def append(self, k, obj, wit, gap, inner, ms):
        self.iters.append(int(k))
        self.objective.append(float(obj))
        self.optimality.append(float(wit))
        self.gap.append(float(gap))
        self.inner_iters.append(int(inner))
        self.ms.append(float(ms))

    def __len__(self):
        return len(self.iters)

    @property
    def iterations(self):
        """Completed solver iterations (the initial row does not count)."""
        return self.iters[-1] if self.iters else 0

    def summary(self):
        return {
            "iterations": self.iterations,
            "final_objective": self.objective[-1] if self.objective else None,
            "final_gap": self.gap[-1] if self.gap else None,
            "converged": bool(self.converged),
            "wall_ms": self.ms[-1] if self.ms else 0.0,
        }

    def to_csv(self, path, zero_ms=False):
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(TRACE_HEADER)
            for row in zip(self.iters, self.objective, self.optimality,
                           self.gap, self.inner_iters, self.ms):
                k, obj, wit, gap, inner, ms = row
                wr.writerow([k, repr(obj), repr(wit), repr(gap), inner,
                             "0.0" if zero_ms else repr(ms)])

    @classmethod
    def from_csv(cls, path):
        tr = cls()
        with open(path, newline="") as f:
            rd = csv.reader(f)
            header = tuple(next(rd))
            if header != TRACE_HEADER:
                raise ValueError(f"unexpected trace header {header}")
            for row in rd:
                tr.append(int(row[0]), float(row[1]), float(row[2]),
                          float(row[3]), int(row[4]), float(row[5]))
        return tr
