"""Independent reference computations used to audit the solvers.

Everything here is deterministic and self-contained: the references
recompute their answers from first principles (finite differences,
exhaustive enumeration, a standalone splitting loop) rather than calling
the solver code paths, except for the trace auditors whose whole job is
to inspect a produced trace.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg


def finite_difference_grad(fn, w, step=1e-6):
    """Central-difference gradient of a scalar function on R^m."""
    w = np.asarray(w, dtype=float)
    out = np.empty(w.size)
    for i in range(w.size):
        e = np.zeros(w.size)
        e[i] = step
        out[i] = (fn(w + e) - fn(w - e)) / (2.0 * step)
    return out


def capped_simplex_bruteforce(v, tau):
    """Projection onto {u in [0,1]^m : sum u = tau} by KKT enumeration.

    Every coordinate is at 0, at 1, or free (equal to v_i - theta); for
    each of the 3^m patterns the multiplier theta is determined by the
    budget, feasibility of the pattern is checked, and the closest
    feasible candidate wins.  Intended for m <= 12.
    """
    v = np.asarray(v, dtype=float)
    m = v.size
    if m > 12:
        raise ValueError("enumeration limited to m <= 12")
    if not 0.0 <= tau <= m:
        raise ValueError("tau outside [0, m]")
    best = None
    best_d = np.inf
    patterns = np.arange(3 ** m)
    digits = (patterns[:, None] // (3 ** np.arange(m))[None, :]) % 3
    for lo in range(0, patterns.size, 65536):
        pat = digits[lo:lo + 65536]
        is_zero = pat == 0
        is_free = pat == 1
        is_one = pat == 2
        nfree = is_free.sum(axis=1)
        nones = is_one.sum(axis=1)
        sum_free = is_free @ v
        with np.errstate(divide="ignore", invalid="ignore"):
            theta = (sum_free + nones - tau) / nfree
        # patterns with no free coordinate need the ones to hit tau exactly
        exact = nfree == 0
        theta = np.where(exact, 0.0, theta)
        ok = ~exact | (np.abs(nones - tau) <= 1e-12)
        vt = v[None, :] - theta[:, None]
        ok &= ~np.any(is_zero & (vt > 1e-12), axis=1)
        ok &= ~np.any(is_one & (vt < 1.0 - 1e-12), axis=1)
        ok &= ~np.any(is_free & ((vt < -1e-12) | (vt > 1.0 + 1e-12)), axis=1)
        for row in np.flatnonzero(ok):
            u = np.where(is_free[row], np.clip(vt[row], 0.0, 1.0),
                         np.where(is_one[row], 1.0, 0.0))
            d = float(np.sum((u - v) ** 2))
            if d < best_d - 1e-15:
                best_d = d
                best = u
    if best is None:
        raise ArithmeticError("no feasible KKT pattern found")
    return best


def lad_reference(A, b, tol=1e-12, max_iter=1_000_000):
    """High-accuracy least-absolute-deviations solution of min ||Ax - b||_1.

    A standalone splitting loop at unit penalty with a prefactored normal
    matrix, run until both residuals fall below tol.  Returns (x, objective).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    fac = scipy.linalg.cho_factor(A.T @ A)
    x = np.zeros(n)
    w = np.zeros(m)
    u = np.zeros(m)
    scale = 1.0 + np.linalg.norm(b)
    for _ in range(max_iter):
        x = scipy.linalg.cho_solve(fac, A.T @ (w + u))
        ax = A @ x
        t = ax - u - b
        w_new = b + np.sign(t) * np.maximum(np.abs(t) - 1.0, 0.0)
        u = u - (ax - w_new)
        primal = np.linalg.norm(ax - w_new)
        move = np.linalg.norm(w_new - w)
        w = w_new
        if primal <= tol * scale and move <= tol * scale:
            break
    obj = float(np.abs(A @ x - b).sum())
    return x, obj


def lad_certificate_norm(A, b, x, kink_tol=1e-8):
    """||A^T s|| for the best admissible subgradient s of ||Ax - b||_1.

    Residuals beyond kink_tol pin s to the residual sign; the remaining
    entries solve an unconstrained least-squares fill-in, clipped to
    [-1, 1].  Small values certify optimality.
    """
    A = np.asarray(A, dtype=float)
    r = A @ np.asarray(x, dtype=float) - np.asarray(b, dtype=float)
    s = np.sign(r)
    small = np.abs(r) <= kink_tol
    if small.any():
        rhs = -A[~small].T @ s[~small]
        fill, *_ = np.linalg.lstsq(A[small].T, rhs, rcond=None)
        s[small] = np.clip(fill, -1.0, 1.0)
    return float(np.linalg.norm(A.T @ s))


def ridge_logistic_reference(A, labels, lam, tol=1e-12, max_iter=200):
    """Newton solve of min_x lam/2 ||x||^2 + sum log(1 + exp(-label a_i x)).

    Desk-scale reference with explicit Hessians and simple backtracking.
    Returns (x, objective).
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(labels, dtype=float)
    m, n = A.shape

    def value(x):
        margins = y * (A @ x)
        return 0.5 * lam * float(x @ x) + float(np.logaddexp(0.0, -margins).sum())

    x = np.zeros(n)
    for _ in range(max_iter):
        margins = y * (A @ x)
        p = 1.0 / (1.0 + np.exp(margins))  # sigma(-margin)
        grad = lam * x - A.T @ (y * p)
        if np.linalg.norm(grad) <= tol * (1.0 + abs(value(x))):
            break
        wdiag = p * (1.0 - p)
        hess = lam * np.eye(n) + A.T @ (wdiag[:, None] * A)
        step = np.linalg.solve(hess, grad)
        t, v0 = 1.0, value(x)
        while value(x - t * step) > v0 - 1e-4 * t * float(grad @ step) and t > 1e-12:
            t *= 0.5
        x = x - t * step
    return x, value(x)


@dataclass
class OracleReport:
    quantity: str
    oracle_value: float
    artifact_value: float
    abs_gap: float
    rel_gap: float
    passed: bool

    @classmethod
    def compare(cls, quantity, oracle_value, artifact_value, tol, rel=False):
        abs_gap = abs(artifact_value - oracle_value)
        rel_gap = abs_gap / (1.0 + abs(oracle_value))
        passed = (rel_gap if rel else abs_gap) <= tol
        return cls(quantity, float(oracle_value), float(artifact_value),
                   float(abs_gap), float(rel_gap), bool(passed))


def append_reports(path, reports):
    """Append OracleReport rows to a CSV audit log, writing the header on
    first touch."""
    import os
    fresh = not os.path.exists(path)
    with open(path, "a", newline="") as f:
        wr = csv.writer(f)
        if fresh:
            wr.writerow(["quantity", "oracle_value", "artifact_value",
                         "abs_gap", "rel_gap", "passed"])
        for r in reports:
            wr.writerow([r.quantity, repr(r.oracle_value),
                         repr(r.artifact_value), repr(r.abs_gap),
                         repr(r.rel_gap), r.passed])


def descent_auditor(trace, nu, slack=None):
    """Check p(w^k) - p(w^{k-1}) <= -(nu/2) optimality_k on every step.

    Returns (ok, first_violation_index, max_violation); slack defaults to
    1e-9 (1 + |initial objective|).
    """
    obj = np.asarray(trace.objective, dtype=float)
    wit = np.asarray(trace.optimality, dtype=float)
    if slack is None:
        slack = 1e-9 * (1.0 + abs(obj[0]))
    worst = -np.inf
    first = None
    for k in range(1, obj.size):
        viol = (obj[k] - obj[k - 1]) + 0.5 * nu * wit[k]
        worst = max(worst, viol)
        if viol > slack and first is None:
            first = k
    return first is None, first, float(worst)


def trimmed_descent_auditor(trace, slack=None):
    """Check the trimmed objective decreases by at least the recorded
    witness at every step: p^t_k - p^t_{k-1} <= -witness_k."""
    obj = np.asarray(trace.objective, dtype=float)
    wit = np.asarray(trace.optimality, dtype=float)
    if slack is None:
        slack = 1e-9 * (1.0 + abs(obj[0]))
    worst = -np.inf
    first = None
    for k in range(1, obj.size):
        viol = (obj[k] - obj[k - 1]) + wit[k]
        worst = max(worst, viol)
        if viol > slack and first is None:
            first = k
    return first is None, first, float(worst)


def iterations_to_limit(path, limit, tol=1e-6):
    """First index k with ||path[k] - limit|| <= tol (1 + ||limit||).

    Measures how quickly an iterate sequence enters a relative ball
    around its own limit; returns len(path) when it never does.
    """
    limit = np.asarray(limit, dtype=float)
    ball = tol * (1.0 + np.linalg.norm(limit))
    for k, point in enumerate(path):
        if np.linalg.norm(np.asarray(point, dtype=float) - limit) <= ball:
            return k
    return len(path)
