"""Splitting solvers for nonsmooth composite problems h(Ax) + g(x).

The pieces: linear operators with regularized least-squares engines
(linops), proximal kernels and the separable dispatch (prox), the
relaxed-problem object and its smooth envelope (relax), the outer loops
with trimming and continuation (solvers), application drivers (apps),
and brute-force references for testing (oracles).
"""

from . import apps, linops, oracles, prox, relax, solvers
from .relax import RelaxedProblem, SolverTrace
from .solvers import (ContinuationSchedule, SolveOptions, TrimmedProblem,
                      admm, continuation, rs_fista, rs_pgd, trs_bcd)

__version__ = "0.1.0"

__all__ = [
    "apps", "linops", "oracles", "prox", "relax", "solvers",
    "RelaxedProblem", "SolverTrace", "SolveOptions", "TrimmedProblem",
    "ContinuationSchedule", "rs_pgd", "rs_fista", "trs_bcd", "admm",
    "continuation", "__version__",
]
