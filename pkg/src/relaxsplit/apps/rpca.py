"""Exact robust PCA by alternating a soft-threshold step with a
truncated SVD.

The model splits a data matrix into a rank-k background plus sparse
spikes by minimizing |W - D|_1 + |LR - W|_F^2 / (2 nu) over the relaxed
copy W and the factors L (m x k), R (k x n).  Both updates are exact
minimizers of the joint objective in their own block, so the objective
decreases every sweep even though the rank constraint is nonconvex.

Accuracy of the recovered background scales with nu (the spike entries
of W sit exactly nu away from the data), while a too-small nu freezes
progress from a cold start; solve_annealed runs the sweep loop over a
decreasing nu ladder to get both.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse.linalg import svds

from ..relax import SolverTrace
from ..solvers import _Clock


def truncated_svd(M, k):
    """Leading k singular triples (U, s, Vt), s in descending order."""
    m, n = M.shape
    if k >= min(m, n):
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
        return U[:, :k], s[:k], Vt[:k]
    # fixed start vector so repeated runs agree bitwise
    U, s, Vt = svds(M, k=k, v0=np.ones(min(m, n)))
    order = np.argsort(s)[::-1]
    return U[:, order], s[order], Vt[order]


def svd_split(U, s, Vt):
    """Square-root split of a truncated SVD into factors (L, R)."""
    root = np.sqrt(s)
    return U * root, root[:, None] * Vt


def generate(m, n, rank, spike_fraction=0.05, seed=0, scale=2.0,
             spike_size=10.0):
    """Planted low rank matrix plus sparse +-spike corruption.

    Returns (D, background, spikes).  The factor scale keeps the
    background singular values well above the spectral norm of the spike
    matrix so the rank-k step locks onto the right subspace.
    """
    rng = np.random.default_rng(seed)
    L0 = scale * rng.standard_normal((m, rank))
    R0 = scale * rng.standard_normal((rank, n))
    background = L0 @ R0
    num_spikes = int(round(spike_fraction * m * n))
    flat = rng.choice(m * n, size=num_spikes, replace=False)
    spikes = np.zeros(m * n)
    spikes[flat] = spike_size * rng.choice([-1.0, 1.0], size=num_spikes)
    spikes = spikes.reshape(m, n)
    return background + spikes, background, spikes


def rpca_objective(D, W, L, R, nu):
    return float(np.abs(W - D).sum() + np.sum((L @ R - W) ** 2) / (2.0 * nu))


def rpca_solve(D, rank, nu, sweeps=50, tol=1e-12, factors=None):
    """Alternating exact minimization.  Returns (L, R, W, trace).

    factors, when given, warm-starts the low rank block; the default cold
    start is the truncated SVD of the data itself.  The witness column is
    the squared movement of the low rank iterate scaled by 1/nu^2.
    """
    clock = _Clock()
    if factors is None:
        L, R = svd_split(*truncated_svd(D, rank))
    else:
        L, R = factors
    prev_lowrank = L @ R
    W = D.copy()
    trace = SolverTrace(meta={"solver": "rpca", "nu": nu, "rank": rank})
    trace.append(0, rpca_objective(D, W, L, R, nu), float("inf"),
                 float(np.linalg.norm(W - prev_lowrank)), 0, clock.ms())
    for k in range(1, sweeps + 1):
        resid = prev_lowrank - D
        W = D + np.sign(resid) * np.maximum(np.abs(resid) - nu, 0.0)
        L, R = svd_split(*truncated_svd(W, rank))
        lowrank = L @ R
        witness = float(np.sum(((prev_lowrank - lowrank) / nu) ** 2))
        trace.append(k, rpca_objective(D, W, L, R, nu), witness,
                     float(np.linalg.norm(W - lowrank)), 0, clock.ms())
        prev_lowrank = lowrank
        if witness <= tol:
            trace.converged = True
            break
    return L, R, W, trace


def solve_annealed(D, rank, nu0=1.0, factor=0.4, nu_min=2e-3,
                   sweeps_per_stage=3, tol=1e-12):
    """Run rpca_solve over a geometric nu ladder, warm-starting each
    stage.  Returns (L, R, W, traces), one trace per stage.

    The default ladder (8 stages, 24 sweeps) steps down slowly enough
    that each stage starts near its predecessor's fixed point; dropping
    nu faster leaves misfit entries above the new threshold, where the
    soft-threshold step locks them in as spurious spikes.
    """
    factors = None
    traces = []
    nu = nu0
    while True:
        L, R, W, trace = rpca_solve(D, rank, nu, sweeps=sweeps_per_stage,
                                    tol=tol, factors=factors)
        traces.append(trace)
        factors = (L, R)
        if nu <= nu_min * (1.0 + 1e-12):
            break
        nu = max(nu * factor, nu_min)
    return L, R, W, traces


def foreground(D, W, L, R):
    """Spike estimate W - LR; entries are capped at nu in absolute value,
    so support detection should threshold well below the planted size."""
    return W - L @ R


def foreground_mask(fg, level=None):
    """Binary spike mask; the default level is 3x the median absolute
    residual, sized for runs at moderate nu."""
    fg = np.abs(np.asarray(fg, dtype=float))
    if level is None:
        level = 3.0 * float(np.median(fg))
    return fg > level
