"""Real phase retrieval from signed Hadamard measurements.

Measurements are b = |A x_true| for a k-fold stack of sign-modulated
Hadamard blocks.  The recovery drivers run the splitting solver on the
amplitude-mismatch kernel; the trimmed variant swaps in the squared
kernel and learns per-measurement weights that zero out corrupted rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import linops, prox
from ..relax import RelaxedProblem
from ..solvers import SolveOptions, TrimmedProblem, rs_pgd, trs_bcd


@dataclass
class PhaseInstance:
    op: linops.HadamardStack
    b: np.ndarray
    x_true: np.ndarray | None = None
    corrupted: np.ndarray | None = None  # planted outlier rows, if any

    @property
    def n(self):
        return self.op.n

    @property
    def m(self):
        return self.op.rows


def make_instance(x_true, k, seed=0):
    """Draw k sign vectors and measure b = |A x_true|."""
    x_true = np.asarray(x_true, dtype=float)
    n = x_true.size
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=(k, n))
    op = linops.HadamardStack(n, signs)
    b = np.abs(op.apply(x_true))
    return PhaseInstance(op, b, x_true.copy())


def random_instance(n, k, seed=0):
    """Gaussian signal measured through a seeded sign stack.  The signal
    uses a separate seed stream so it stays independent of the signs."""
    x_true = np.random.default_rng([seed, 1]).standard_normal(n)
    return make_instance(x_true, k, seed=seed)


def corrupt(inst, fraction, value=1000.0, seed=0):
    """Overwrite a random fraction of the measurements with a large
    constant, remembering which rows were hit.

    The count is floor(fraction * m): corrupting at most the stated
    fraction keeps a trimming budget of (1 - fraction) * m below the
    clean-row count, so the weights never have to spend mass on a
    corrupted row.
    """
    rng = np.random.default_rng(seed)
    m = inst.m
    k = int(fraction * m)
    idx = rng.choice(m, size=k, replace=False)
    b = inst.b.copy()
    b[idx] = value
    return PhaseInstance(inst.op, b, inst.x_true, corrupted=np.sort(idx))


def build_problem(inst, nu=1.0):
    m = inst.m
    h = prox.SeparableNonsmooth(
        [prox.ModulusDeviation(np.arange(m), b=inst.b)], m)
    return RelaxedProblem(h, inst.op, linops.ZeroReg(), nu,
                          linops.orthogonal_closed_form())


def spectral_init(inst, iters=10, seed=0, weights=None):
    """Power iteration on A^T diag(weights * b^2) A, scaled so that
    ||A x0|| = ||b||.

    With weights the scale calibration is weighted the same way, so rows
    the caller is screening out (suspected corruptions) cannot poison the
    magnitude estimate.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(inst.n)
    z /= np.linalg.norm(z)
    w = inst.b ** 2 if weights is None else weights * inst.b ** 2
    for _ in range(iters):
        z = inst.op.adjoint(w * inst.op.apply(z))
        z /= np.linalg.norm(z)
    keep = np.ones(inst.m) if weights is None else np.sqrt(weights)
    scale = np.linalg.norm(keep * inst.b) \
        / np.linalg.norm(keep * inst.op.apply(z))
    return scale * z


def phase_error(x, x_true):
    """Relative error modulo the global sign."""
    x = np.asarray(x, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    return min(np.linalg.norm(x - x_true), np.linalg.norm(x + x_true)) \
        / np.linalg.norm(x_true)


def solve(inst, nu=1.0, init_iters=10, seed=0, opts=None):
    """Spectral start plus the splitting solver.  Returns (x, trace)."""
    p = build_problem(inst, nu)
    x0 = spectral_init(inst, iters=init_iters, seed=seed)
    w0 = p.A.apply(x0)
    opts = opts or SolveOptions(max_iter=200, tol_optimality=1e-22)
    w, x, trace = rs_pgd(p, w0, opts)
    return x, trace


def build_trimmed_problem(inst, nu=1.0):
    m = inst.m
    h = prox.SeparableNonsmooth(
        [prox.ModulusDeviationSquared(np.arange(m), b=inst.b)], m)
    return RelaxedProblem(h, inst.op, linops.ZeroReg(), nu,
                          linops.orthogonal_closed_form())


def trimmed_solve(inst, tau, gamma=1.0, nu=1.0, init_iters=10, seed=0,
                  opts=None):
    """Trimmed recovery with the squared amplitude kernel.

    The spectral start keeps only the tau smallest measurements, which is
    what the trimming weights themselves converge to when the corrupted
    rows carry huge amplitudes.  The weights start from that same mask
    (projected onto the budget): starting them uniform hands every
    corrupted row enough weight for one catastrophic w-step before the
    v-update can react.  Returns (x, v, trace).
    """
    keep = int(round(tau))
    order = np.argsort(inst.b)
    mask = np.zeros(inst.m)
    mask[order[:keep]] = 1.0
    x0 = spectral_init(inst, iters=init_iters, seed=seed, weights=mask)
    v0 = prox.project_capped_simplex(mask, float(tau))
    p = build_trimmed_problem(inst, nu)
    tp = TrimmedProblem(p, tau=float(tau), gamma=gamma)
    opts = opts or SolveOptions(max_iter=300, tol_optimality=1e-22)
    w, v, x, trace = trs_bcd(tp, w0=p.A.apply(x0), v0=v0, opts=opts)
    return x, v, trace
