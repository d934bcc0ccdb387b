"""Outer solvers: proximal gradient on the envelope, its accelerated
variant, trimmed block-coordinate descent, an ADMM baseline, and
continuation in nu.

Every solver returns its iterates plus a SolverTrace whose rows hold the
theorem-backed quantities: for the proximal gradient loop the objective
column is the reduced objective p_nu(w^k) and the optimality column is
||A(x^{k-1} - x^k)/nu||^2, so the descent inequality

    p_nu(w^k) - p_nu(w^{k-1}) <= -(nu/2) * optimality_k

is auditable directly from the trace.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import linops
from .prox import project_capped_simplex, prox_separable
from .relax import (RelaxedProblem, SolverTrace, coupling_gap, objective,
                    partial_minimize)

log = logging.getLogger(__name__)


@dataclass
class SolveOptions:
    max_iter: int = 1000
    tol_optimality: float = 1e-10
    tol_objective_delta: float = 0.0   # 0 disables the flat-objective stop
    record_trace: bool = True
    keep_iterates: bool = False        # stash iterate paths in trace.meta

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


def _log_path(trace, opts, **arrays):
    if not opts.keep_iterates:
        return
    for name, value in arrays.items():
        trace.meta.setdefault(name, []).append(np.array(value, copy=True))


@dataclass
class TrimmedProblem:
    base: RelaxedProblem
    tau: float
    gamma: float = 1.0

    def __post_init__(self):
        if not self.base.h.scalar:
            raise ValueError("trimming needs a coordinate-separable h")
        if not 0 <= self.tau <= self.base.h.m:
            raise ValueError("tau outside [0, m]")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass
class ContinuationSchedule:
    nu0: float
    factor: float
    nu_min: float
    stage_options: SolveOptions = field(default_factory=SolveOptions)

    def __post_init__(self):
        if not 0 < self.factor < 1:
            raise ValueError("factor must lie in (0, 1)")
        if self.nu_min <= 0 or self.nu0 < self.nu_min:
            raise ValueError("need nu0 >= nu_min > 0")

    def stages(self):
        # the geometric ladder rarely lands on nu_min exactly, so the
        # last stage is clamped there; quoted final-accuracy bounds can
        # then use nu_min as written
        out = []
        nu = self.nu0
        while nu > self.nu_min * (1.0 + 1e-12):
            out.append(nu)
            nu *= self.factor
        out.append(self.nu_min)
        return out


def default_w0(p, x0=None):
    """w^0 = A x^0 when a primal start is given, else zeros."""
    if x0 is None:
        return np.zeros(p.A.rows)
    return p.A.apply(np.asarray(x0, dtype=float))


class _Clock:
    def __init__(self):
        self.t0 = time.perf_counter()

    def ms(self):
        return (time.perf_counter() - self.t0) * 1e3


def _flat(delta_history, tol):
    return tol > 0 and len(delta_history) >= 3 and \
        all(d <= tol for d in delta_history[-3:])


def rs_pgd(p, w0=None, opts=None):
    """Proximal gradient on the reduced objective.

    One partial minimization per iteration: with x^k = x(w^k) the update
    is w^{k+1} = prox_{nu h}(A x^k).  Returns (w, x, trace).
    """
    opts = opts or SolveOptions()
    w = default_w0(p) if w0 is None else np.asarray(w0, dtype=float).copy()
    clock = _Clock()
    base = p.policy.inner_count
    x = partial_minimize(p, w)
    trace = SolverTrace(meta={"nu": p.nu, "algorithm": "rs_pgd"})
    trace.append(0, objective(p, w, x), np.inf, coupling_gap(p, w, x),
                 p.policy.inner_count - base, clock.ms())
    _log_path(trace, opts, w_path=w, x_path=x)
    deltas = []
    for k in range(1, opts.max_iter + 1):
        base = p.policy.inner_count
        w = prox_separable(p.h, p.A.apply(x), p.nu)
        x_new = partial_minimize(p, w)
        d = p.A.apply(x - x_new) / p.nu
        wit = float(d @ d)
        obj = objective(p, w, x_new)
        trace.append(k, obj, wit, coupling_gap(p, w, x_new),
                     p.policy.inner_count - base, clock.ms())
        _log_path(trace, opts, w_path=w, x_path=x_new)
        deltas.append(abs(trace.objective[-1] - trace.objective[-2]))
        x = x_new
        if wit <= opts.tol_optimality or _flat(deltas, opts.tol_objective_delta):
            trace.converged = True
            break
    return w, x, trace


def rs_fista(p, w0=None, opts=None):
    """Accelerated proximal gradient on the reduced objective.

    Standard momentum (a^k - 1)/a^{k+1} with a^{k+1} = (1 + sqrt(1 +
    4 (a^k)^2))/2.  The trace objective is still p_nu(w^k), which costs a
    second partial minimization per iteration and is not monotone.
    """
    opts = opts or SolveOptions()
    w = default_w0(p) if w0 is None else np.asarray(w0, dtype=float).copy()
    v = w.copy()
    a = 1.0
    clock = _Clock()
    base = p.policy.inner_count
    x = partial_minimize(p, w)
    trace = SolverTrace(meta={"nu": p.nu, "algorithm": "rs_fista"})
    trace.append(0, objective(p, w, x), np.inf, coupling_gap(p, w, x),
                 p.policy.inner_count - base, clock.ms())
    _log_path(trace, opts, w_path=w, x_path=x)
    deltas = []
    for k in range(1, opts.max_iter + 1):
        base = p.policy.inner_count
        x_v = partial_minimize(p, v)
        w_new = prox_separable(p.h, p.A.apply(x_v), p.nu)
        a_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * a * a))
        v = w_new + ((a - 1.0) / a_new) * (w_new - w)
        x_new = partial_minimize(p, w_new)
        d = p.A.apply(x - x_new) / p.nu
        wit = float(d @ d)
        trace.append(k, objective(p, w_new, x_new), wit,
                     coupling_gap(p, w_new, x_new),
                     p.policy.inner_count - base, clock.ms())
        _log_path(trace, opts, w_path=w_new, x_path=x_new)
        deltas.append(abs(trace.objective[-1] - trace.objective[-2]))
        w, x, a = w_new, x_new, a_new
        if wit <= opts.tol_optimality or _flat(deltas, opts.tol_objective_delta):
            trace.converged = True
            break
    return w, x, trace


def trs_bcd(tp, w0=None, v0=None, opts=None):
    """Trimmed block-coordinate descent.

    Alternates the weighted prox step w^{k+1} = prox_{nu <v, H>}(A x(w^k))
    with a projected gradient step on the trimming weights,
    v^{k+1} = proj_{simplex(tau)}(v^k - gamma H(w^{k+1})).  The trace
    objective is <v^k, H(w^k)> + g_nu(w^k) and the optimality column is
    ||A(x^{k-1}-x^k)||^2/(2 nu) + ||v^k - v^{k-1}||^2/gamma.

    With tau = m the weight vector is pinned at all-ones and the iterates
    coincide with rs_pgd.
    """
    opts = opts or SolveOptions()
    p = tp.base
    m = p.h.m
    w = default_w0(p) if w0 is None else np.asarray(w0, dtype=float).copy()
    if v0 is None:
        v = np.full(m, tp.tau / m)
    else:
        v = np.asarray(v0, dtype=float).copy()
        if np.any(v < 0) or np.any(v > 1) or abs(v.sum() - tp.tau) > 1e-9:
            raise ValueError("v0 must lie on the capped simplex")

    def trimmed_objective(w_, v_, x_):
        r = p.A.apply(x_) - w_
        return float(v_ @ p.h.coordinate_values(w_)) \
            + float(r @ r) / (2.0 * p.nu) + p.g.value(x_)

    clock = _Clock()
    base = p.policy.inner_count
    x = partial_minimize(p, w)
    trace = SolverTrace(meta={"nu": p.nu, "algorithm": "trs_bcd",
                              "tau": tp.tau, "gamma": tp.gamma})
    trace.append(0, trimmed_objective(w, v, x), np.inf, coupling_gap(p, w, x),
                 p.policy.inner_count - base, clock.ms())
    _log_path(trace, opts, w_path=w, v_path=v, x_path=x)
    deltas = []
    for k in range(1, opts.max_iter + 1):
        base = p.policy.inner_count
        w = prox_separable(p.h, p.A.apply(x), p.nu, weights=v)
        v_new = project_capped_simplex(v - tp.gamma * p.h.coordinate_values(w),
                                       tp.tau)
        x_new = partial_minimize(p, w)
        dax = p.A.apply(x - x_new)
        dv = v_new - v
        wit = float(dax @ dax) / (2.0 * p.nu) + float(dv @ dv) / tp.gamma
        v = v_new
        trace.append(k, trimmed_objective(w, v, x_new), wit,
                     coupling_gap(p, w, x_new),
                     p.policy.inner_count - base, clock.ms())
        _log_path(trace, opts, w_path=w, v_path=v, x_path=x_new)
        deltas.append(abs(trace.objective[-1] - trace.objective[-2]))
        x = x_new
        if wit <= opts.tol_optimality or _flat(deltas, opts.tol_objective_delta):
            trace.converged = True
            break
    return w, v, x, trace


def admm(h, A, g, rho, alpha=None, x0=None, opts=None,
         policy=None):
    """Scaled-splitting baseline for min h(Ax) + g(x).

    x^{k+1} minimizes g(x) + rho/2 ||A x - w^k - u^k/rho||^2, then
    w^{k+1} = prox_{h/rho}(A x^{k+1} - u^k/rho) and
    u^{k+1} = u^k - alpha (A x^{k+1} - w^{k+1}), alpha defaulting to rho.
    Stops when both the primal residual ||Ax - w|| and the w movement are
    below tol.  The trace objective is h(Ax) + g(x) and the gap column is
    the primal residual.
    """
    opts = opts or SolveOptions()
    if rho <= 0:
        raise ValueError("rho must be positive")
    if alpha is None:
        alpha = rho
    if policy is None:
        policy = linops.direct_factor()
    if not h.convex:
        log.warning("admm on a nonconvex objective: no convergence guarantee")
    x = np.zeros(A.cols) if x0 is None else np.asarray(x0, dtype=float).copy()
    ax = A.apply(x)
    w = ax.copy()
    u = np.zeros(A.rows)
    clock = _Clock()
    trace = SolverTrace(meta={"rho": rho, "algorithm": "admm"})
    trace.append(0, h.value(ax) + g.value(x), np.inf,
                 float(np.linalg.norm(ax - w)), 0, clock.ms())
    _log_path(trace, opts, w_path=w, x_path=x)
    for k in range(1, opts.max_iter + 1):
        base = policy.inner_count
        x = linops.solve_partial(A, g, w + u / rho, 1.0 / rho, policy)
        ax = A.apply(x)
        w_new = prox_separable(h, ax - u / rho, 1.0 / rho)
        u = u - alpha * (ax - w_new)
        primal = float(np.linalg.norm(ax - w_new))
        move = float(np.linalg.norm(w_new - w))
        w = w_new
        trace.append(k, h.value(ax) + g.value(x), primal + move, primal,
                     policy.inner_count - base, clock.ms())
        _log_path(trace, opts, w_path=w, x_path=x)
        if primal <= opts.tol_optimality and move <= opts.tol_optimality:
            trace.converged = True
            break
    return x, w, trace


def continuation(p, schedule, w0=None, x0=None):
    """Run rs_pgd over a decreasing nu ladder, warm-starting each stage.

    Returns (w, x, traces), one trace per executed stage; the coupling gap
    at the final stage obeys ||Ax - w|| <= lip(h) * nu_final.
    """
    stages = schedule.stages()
    if not stages:
        raise ValueError("empty continuation schedule")
    if np.isinf(p.h.lipschitz):
        log.warning("h is not Lipschitz; the continuation gap bound is void")
    w = default_w0(p, x0) if w0 is None else np.asarray(w0, dtype=float).copy()
    traces = []
    x = None
    for nu in stages:
        stage = p.with_nu(nu)
        w, x, tr = rs_pgd(stage, w, schedule.stage_options)
        traces.append(tr)
    return w, x, traces
