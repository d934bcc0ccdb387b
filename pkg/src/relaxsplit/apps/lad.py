"""Robust regression with an l1 loss and heavy-tailed synthetic data."""

from __future__ import annotations

import numpy as np

from .. import linops, prox
from ..relax import RelaxedProblem


def generate(m, n, outlier_fraction=0.1, seed=0, noise=0.1, outlier_size=10.0):
    """Gaussian design with a fraction of responses knocked out by
    large-magnitude additive outliers.  Returns (A, b, x_true)."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    x_true = rng.standard_normal(n)
    b = A @ x_true + noise * rng.standard_normal(m)
    k = int(round(outlier_fraction * m))
    if k > 0:
        idx = rng.choice(m, size=k, replace=False)
        b[idx] += outlier_size * rng.choice([-1.0, 1.0], size=k)
    return A, b, x_true


def build_problem(A, b, nu, policy=None):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m = A.shape[0]
    h = prox.SeparableNonsmooth([prox.AbsDeviation(np.arange(m), b=b)], m)
    return RelaxedProblem(h, linops.Dense(A), linops.ZeroReg(), nu,
                          policy or linops.direct_factor())


def l1_objective(A, b, x):
    return float(np.abs(np.asarray(A) @ x - np.asarray(b)).sum())


def save_instance(dirpath, A, b, nu, kind="lad"):
    """MatrixMarket payloads plus a small plain-text header."""
    import os
    os.makedirs(dirpath, exist_ok=True)
    linops.save_matrix(os.path.join(dirpath, "A.mtx"), A)
    linops.save_vector(os.path.join(dirpath, "b.mtx"), b)
    with open(os.path.join(dirpath, "header.txt"), "w") as f:
        f.write(f"kind {kind}\nrows {A.shape[0]}\ncols {A.shape[1]}\nnu {nu!r}\n")


def load_instance(dirpath):
    import os
    A = linops.load_matrix(os.path.join(dirpath, "A.mtx"))
    b = linops.load_vector(os.path.join(dirpath, "b.mtx"))
    header = {}
    with open(os.path.join(dirpath, "header.txt")) as f:
        for line in f:
            key, val = line.split(None, 1)
            header[key] = val.strip()
    return A, b, header
