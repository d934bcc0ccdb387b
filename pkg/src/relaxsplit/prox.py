"""Proximal kernels for the separable nonsmooth terms, plus the capped
simplex projection used by trimming.

Every kernel evaluates prox_{mu h}(v) = argmin_z 1/(2 mu) (z - v)^2 + h(z)
exactly (closed form or candidate enumeration) or to a stated Newton
tolerance.  Nonconvex kernels resolve prox ties deterministically; the
tie-break for each kernel is documented on the function.

All kernels are vectorized over numpy arrays and broadcast their
parameters.  A kernel called with mu = 0 must return its input bitwise
unchanged; ``prox_separable`` enforces this for zero trimming weights.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def _sign_plus(v):
    """Sign with sign(0) := +1."""
    return np.where(np.asarray(v) >= 0, 1.0, -1.0)


def prox_abs_deviation(v, mu, b=0.0):
    """prox of mu |z - b|: soft threshold toward b."""
    v = np.asarray(v, dtype=float)
    d = v - b
    return b + np.sign(d) * np.maximum(np.abs(d) - mu, 0.0)


def prox_elastic_abs_deviation(v, mu, b=0.0, alpha=1.0):
    """prox of mu (|z - b| + alpha/2 (z - b)^2): soft threshold then shrink."""
    v = np.asarray(v, dtype=float)
    d = v - b
    s = np.sign(d) * np.maximum(np.abs(d) - mu, 0.0)
    return b + s / (1.0 + mu * alpha)


def _pick_with_sign_tiebreak(cands, obj, v):
    """Among minimizing candidates prefer sign(v) match, then larger value."""
    best = obj.min(axis=0)
    tie = obj == best
    sv = _sign_plus(v)
    match = (_sign_plus(cands) == sv).astype(float)
    big = 4.0 * (np.abs(cands).max() + 1.0)
    key = np.where(tie, match * big + cands, -np.inf)
    choice = key.argmax(axis=0)
    return np.take_along_axis(cands, choice[None, ...], axis=0)[0]


def prox_modulus_deviation(v, mu, b):
    """prox of mu | |z| - b |, b >= 0.

    The objective is piecewise linear-plus-quadratic with kinks at -b, 0, b;
    each branch optimum is the branch-clipped soft threshold, and the best
    candidate wins.  Ties go to the candidate whose sign matches sign(v)
    (sign(0) := +1) and then to the larger value.
    """
    v = np.asarray(v, dtype=float)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), v.shape)
    b = np.broadcast_to(np.asarray(b, dtype=float), v.shape)
    c = np.stack([
        np.maximum(v - mu, b),       # z >= b
        np.clip(v + mu, 0.0, b),     # 0 <= z <= b
        np.clip(v - mu, -b, 0.0),    # -b <= z <= 0
        np.minimum(v + mu, -b),      # z <= -b
    ])
    obj = (c - v) ** 2 / (2.0 * mu) + np.abs(np.abs(c) - b)
    return _pick_with_sign_tiebreak(c, obj, v)


def prox_modulus_deviation_squared(v, mu, b):
    """prox of mu * 1/2 (|z| - b)^2, b >= 0.

    Smooth on each half-line; compare the two clipped branch minimizers.
    Same tie-break as the absolute modulus kernel.
    """
    v = np.asarray(v, dtype=float)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), v.shape)
    b = np.broadcast_to(np.asarray(b, dtype=float), v.shape)
    c = np.stack([
        np.maximum((v + mu * b) / (1.0 + mu), 0.0),
        np.minimum((v - mu * b) / (1.0 + mu), 0.0),
    ])
    obj = (c - v) ** 2 / (2.0 * mu) + 0.5 * (np.abs(c) - b) ** 2
    return _pick_with_sign_tiebreak(c, obj, v)


def prox_logistic(v, mu, label):
    """prox of mu log(1 + exp(-label z)) by safeguarded Newton.

    The stationarity condition (z - v)/mu + label (sigma(label z) - 1) = 0
    brackets the root inside [v, v + mu] for label +1 and [v - mu, v] for
    label -1.  Newton steps falling outside the live bracket are replaced
    by bisection.  Terminates when every residual is below
    1e-12 (1 + |v|/mu).
    """
    v = np.asarray(v, dtype=float)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), v.shape).astype(float)
    label = np.broadcast_to(np.asarray(label, dtype=float), v.shape)
    lo = np.where(label > 0, v, v - mu)
    hi = np.where(label > 0, v + mu, v)
    z = 0.5 * (lo + hi)
    tol = 1e-12 * (1.0 + np.abs(v) / mu)
    for _ in range(50):
        s = expit(label * z)
        phi = (z - v) / mu + label * (s - 1.0)
        if np.all(np.abs(phi) <= tol):
            break
        lo = np.where(phi < 0, z, lo)
        hi = np.where(phi > 0, z, hi)
        dphi = 1.0 / mu + s * (1.0 - s)
        step = z - phi / dphi
        inside = (step > lo) & (step < hi)
        z = np.where(inside, step, 0.5 * (lo + hi))
    return z


def prox_symmetric_logistic(v, mu):
    """prox of mu log(1 + exp(-|z|)).

    Even objective, so reduce to t = |z| >= 0 where the problem is the
    label +1 logistic prox at |v|; the constraint never binds because the
    root lies in (|v|, |v| + mu).  Returns sign(v) t with sign(0) := +1,
    so v = 0 maps to a small positive point.
    """
    v = np.asarray(v, dtype=float)
    t = prox_logistic(np.abs(v), mu, 1.0)
    return _sign_plus(v) * t


def prox_min_abs_pair(v1, v2, mu, a, b):
    """prox of mu |min(z1 + a, z2 + b)| over the pair (z1, z2).

    Inside each region of the min, the inactive argument stays at its
    input and the active one is a 1-d soft threshold; the seam
    z1 + a = z2 + b = s is a 1-d soft threshold in s with halved step.
    The best of the three candidates under the true objective wins;
    exact ties break lexicographically (smaller z1, then smaller z2).
    """
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), v1.shape).astype(float)
    a = np.broadcast_to(np.asarray(a, dtype=float), v1.shape)
    b = np.broadcast_to(np.asarray(b, dtype=float), v1.shape)

    s = prox_abs_deviation((v1 + a + v2 + b) / 2.0, mu / 2.0)
    z1 = np.stack([prox_abs_deviation(v1, mu, -a), v1.copy(), s - a])
    z2 = np.stack([np.broadcast_to(v2, v1.shape).copy(),
                   prox_abs_deviation(v2, mu, -b), s - b])
    obj = ((z1 - v1) ** 2 + (z2 - v2) ** 2) / (2.0 * mu) \
        + np.abs(np.minimum(z1 + a, z2 + b))
    best = obj.min(axis=0)
    tie = obj == best
    z1m = np.where(tie, z1, np.inf)
    tie = tie & (z1m == z1m.min(axis=0))
    z2m = np.where(tie, z2, np.inf)
    tie = tie & (z2m == z2m.min(axis=0))
    choice = tie.argmax(axis=0)
    out1 = np.take_along_axis(z1, choice[None, ...], axis=0)[0]
    out2 = np.take_along_axis(z2, choice[None, ...], axis=0)[0]
    return out1, out2


def prox_group_l2(v, mu):
    """Block soft threshold: prox of mu ||z||_2 on one block."""
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv <= mu:
        return np.zeros_like(v)
    return (1.0 - mu / nv) * v


def scad_truncated_value(d, kappa):
    """rho(d) = ||d|| below the cutoff, 0 from the cutoff on.

    The zero branch is closed at kappa (the lower of the two one-sided
    limits), which keeps the penalty lower semicontinuous and the prox
    attained.
    """
    nd = np.linalg.norm(d)
    return nd if nd < kappa else 0.0


def prox_scad_truncated(v, mu, kappa):
    """prox of mu rho(z; kappa) with rho = ||z|| below kappa, 0 beyond.

    Two candidates: the group-l2 shrinkage if its radius lands below the
    cutoff, and the unpenalized radius max(||v||, kappa).  Exact ties go
    to the unshrunk candidate.
    """
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    tb = max(nv, kappa)
    fb = (tb - nv) ** 2 / (2.0 * mu)
    ts = max(nv - mu, 0.0)
    if ts < kappa:
        fa = (ts - nv) ** 2 / (2.0 * mu) + ts
        if fa < fb:
            if nv == 0.0:
                return np.zeros_like(v)
            return (ts / nv) * v
    if nv == 0.0:
        # unit direction is arbitrary at the origin; this needs nv > 0
        # whenever the unshrunk candidate wins, and fb > 0 = fa there.
        return np.zeros_like(v)
    out = (tb / nv) * v
    # the zero branch is closed at kappa, so a jump-out must not let its
    # radius round below the cutoff and get charged ||z|| after all
    if tb == kappa:
        for _ in range(8):
            if np.linalg.norm(out) >= kappa:
                break
            out *= 1.0 + 2.0 * np.finfo(float).eps
    return out


def project_capped_simplex(v, tau):
    """Euclidean projection onto {u in [0,1]^m : sum u = tau}.

    Sort-free: bisection on the shift theta with u = clip(v - theta, 0, 1),
    bracketed by [min(v) - 1, max(v)], followed by an active-set polish
    so the budget holds to 1e-12.
    """
    v = np.asarray(v, dtype=float)
    m = v.size
    if not 0.0 <= tau <= m:
        raise ValueError(f"tau={tau} outside [0, {m}]")
    if tau == 0.0:
        return np.zeros(m)
    if tau == float(m):
        return np.ones(m)
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(100):
        theta = 0.5 * (lo + hi)
        s = np.clip(v - theta, 0.0, 1.0).sum()
        if s > tau:
            lo = theta
        else:
            hi = theta
    # polish in the shifted frame: the free entries of r are O(1), so the
    # exact correction avoids the cancellation v - (v_i - const) suffers
    # when v spans many orders of magnitude.  The free set is re-derived
    # after every clip: a correction can push entries tied exactly at a
    # cap across it, so a single frozen-set pass can miss the budget.
    u = np.clip(v - 0.5 * (lo + hi), 0.0, 1.0)
    for _ in range(100):
        miss = u.sum() - tau
        if abs(miss) <= 1e-12:
            break
        free = (u > 0.0) & (u < 1.0)
        if not free.any():
            break
        u[free] -= miss / np.count_nonzero(free)
        np.clip(u, 0.0, 1.0, out=u)
    if abs(u.sum() - tau) > 1e-12:
        raise ArithmeticError("capped simplex projection failed to meet budget")
    return u


def grid_prox_oracle(objective, v, mu, lo, hi, step):
    """Brute-force prox reference on an aligned 1-d grid.

    Evaluates 1/(2 mu) (z - v)^2 + objective(z) on the closed grid
    lo + i step and returns (argmin point, min value).  Halving the step
    with the same endpoints nests the grids, so the reported minimum never
    increases under refinement.
    """
    npts = int(round((hi - lo) / step)) + 1
    z = lo + step * np.arange(npts)
    vals = (z - v) ** 2 / (2.0 * mu) + objective(z)
    i = int(np.argmin(vals))
    return z[i], float(vals[i])


# --- separable plans ----------------------------------------------------------


class _Span:
    """One run of coordinates sharing a kernel.  weight is the kernel's
    multiplicative coefficient (scalar or per-coordinate)."""

    convex = True
    coord_count = None  # coordinates covered, filled by subclasses

    def covered(self):
        raise NotImplementedError

    def value(self, w):
        raise NotImplementedError

    def coordinate_values(self, w):
        raise NotImplementedError("per-coordinate values need a scalar kernel")

    def prox_into(self, out, v, step, weights):
        raise NotImplementedError

    def lipschitz_coords(self):
        """Per-coordinate Lipschitz constants of the weighted kernel."""
        raise NotImplementedError


def _mu_eff(step, weight, idx, weights):
    mu = step * np.broadcast_to(np.asarray(weight, dtype=float), idx.shape)
    if weights is not None:
        mu = mu * weights[idx]
    return mu


class _ScalarSpan(_Span):
    scalar = True

    def __init__(self, idx, weight=1.0):
        self.idx = np.asarray(idx, dtype=int)
        self.weight = weight

    def covered(self):
        return self.idx

    def _raw_values(self, z):
        raise NotImplementedError

    def coordinate_values(self, w):
        z = w[self.idx]
        return np.broadcast_to(np.asarray(self.weight, dtype=float),
                               z.shape) * self._raw_values(z)

    def value(self, w):
        return float(self.coordinate_values(w).sum())


class AbsDeviation(_ScalarSpan):
    """weight * |z - b|."""

    def __init__(self, idx, b=0.0, weight=1.0):
        super().__init__(idx, weight)
        self.b = np.broadcast_to(np.asarray(b, dtype=float), self.idx.shape)

    def _raw_values(self, z):
        return np.abs(z - self.b)

    def prox_into(self, out, v, step, weights):
        mu = _mu_eff(step, self.weight, self.idx, weights)
        z = v[self.idx]
        live = mu > 0
        res = z.copy()
        if live.any():
            res[live] = prox_abs_deviation(z[live], mu[live], self.b[live])
        out[self.idx] = res

    def lipschitz_coords(self):
        return np.broadcast_to(np.asarray(self.weight, dtype=float),
                               self.idx.shape).astype(float)


class ElasticAbsDeviation(_ScalarSpan):
    """weight * (|z - b| + alpha/2 (z - b)^2), strongly convex for alpha > 0."""

    def __init__(self, idx, b=0.0, alpha=1.0, weight=1.0):
        super().__init__(idx, weight)
        self.b = np.broadcast_to(np.asarray(b, dtype=float), self.idx.shape)
        self.alpha = float(alpha)

    def _raw_values(self, z):
        d = z - self.b
        return np.abs(d) + 0.5 * self.alpha * d * d

    def prox_into(self, out, v, step, weights):
        mu = _mu_eff(step, self.weight, self.idx, weights)
        z = v[self.idx]
        live = mu > 0
        res = z.copy()
        if live.any():
            res[live] = prox_elastic_abs_deviation(
                z[live], mu[live], self.b[live], self.alpha)
        out[self.idx] = res

    def lipschitz_coords(self):
        return np.full(self.idx.shape, np.inf)


class ModulusDeviation(_ScalarSpan):
    """weight * ||z| - b|, the amplitude mismatch kernel."""

    convex = False

    def __init__(self, idx, b, weight=1.0):
        super().__init__(idx, weight)
        self.b = np.broadcast_to(np.asarray(b, dtype=float), self.idx.shape)
        if np.any(self.b < 0):
            raise ValueError("modulus targets must be nonnegative")

    def _raw_values(self, z):
        return np.abs(np.abs(z) - self.b)

    def prox_into(self, out, v, step, weights):
        mu = _mu_eff(step, self.weight, self.idx, weights)
        z = v[self.idx]
        live = mu > 0
        res = z.copy()
        if live.any():
            res[live] = prox_modulus_deviation(z[live], mu[live], self.b[live])
        out[self.idx] = res

    def lipschitz_coords(self):
        return np.broadcast_to(np.asarray(self.weight, dtype=float),
                               self.idx.shape).astype(float)


class ModulusDeviationSquared(_ScalarSpan):
    """weight * 1/2 (|z| - b)^2, the smooth amplitude kernel used when
    trimming phase retrieval."""

    convex = False

    def __init__(self, idx, b, weight=1.0):
        super().__init__(idx, weight)
        self.b = np.broadcast_to(np.asarray(b, dtype=float), self.idx.shape)
        if np.any(self.b < 0):
            raise ValueError("modulus targets must be nonnegative")

    def _raw_values(self, z):
        return 0.5 * (np.abs(z) - self.b) ** 2

    def prox_into(self, out, v, step, weights):
        mu = _mu_eff(step, self.weight, self.idx, weights)
        z = v[self.idx]
        live = mu > 0
        res = z.copy()
        if live.any():
            res[live] = prox_modulus_deviation_squared(z[live], mu[live], self.b[live])
        out[self.idx] = res

    def lipschitz_coords(self):
        return np.full(self.idx.shape, np.inf)


class Logistic(_ScalarSpan):
    """weight * log(1 + exp(-label z)) with labels +-1."""

    def __init__(self, idx, labels, weight=1.0):
        super().__init__(idx, weight)
        self.labels = np.broadcast_to(np.asarray(labels, dtype=float), self.idx.shape)
        if not np.all(np.abs(self.labels) == 1.0):
            raise ValueError("labels must be +-1")

    def _raw_values(self, z):
        return np.logaddexp(0.0, -self.labels * z)

    def prox_into(self, out, v, step, weights):
        mu = _mu_eff(step, self.weight, self.idx, weights)
        z = v[self.idx]
        live = mu > 0
        res = z.copy()
        if live.any():
            res[live] = prox_logistic(z[live], mu[live], self.labels[live])
        out[self.idx] = res

    def lipschitz_coords(self):
        return np.broadcast_to(np.asarray(self.weight, dtype=float),
                               self.idx.shape).astype(float)


class SymmetricLogistic(_ScalarSpan):
    """weight * log(1 + exp(-|z|)), the unlabeled margin kernel."""

    convex = False

    def _raw_values(self, z):
        return np.logaddexp(0.0, -np.abs(z))

    def prox_into(self, out, v, step, weights):
        mu = _mu_eff(step, self.weight, self.idx, weights)
        z = v[self.idx]
        live = mu > 0
        res = z.copy()
        if live.any():
            res[live] = prox_symmetric_logistic(z[live], mu[live])
        out[self.idx] = res

    def lipschitz_coords(self):
        return 0.5 * np.broadcast_to(np.asarray(self.weight, dtype=float),
                                     self.idx.shape).astype(float)


class MinAbsPair(_Span):
    """weight * |min(z[i1] + a, z[i2] + b)| over matched index pairs."""

    convex = False
    scalar = False

    def __init__(self, idx1, idx2, a, b, weight=1.0):
        self.idx1 = np.asarray(idx1, dtype=int)
        self.idx2 = np.asarray(idx2, dtype=int)
        if self.idx1.shape != self.idx2.shape:
            raise ValueError("pair index arrays must match")
        self.a = np.broadcast_to(np.asarray(a, dtype=float), self.idx1.shape)
        self.b = np.broadcast_to(np.asarray(b, dtype=float), self.idx1.shape)
        self.weight = weight

    def covered(self):
        return np.concatenate([self.idx1, self.idx2])

    def value(self, w):
        inner = np.minimum(w[self.idx1] + self.a, w[self.idx2] + self.b)
        wt = np.broadcast_to(np.asarray(self.weight, dtype=float), inner.shape)
        return float((wt * np.abs(inner)).sum())

    def prox_into(self, out, v, step, weights):
        if weights is not None:
            raise ValueError("trimming weights need a coordinate-separable kernel")
        mu = step * np.broadcast_to(np.asarray(self.weight, dtype=float),
                                    self.idx1.shape)
        z1, z2 = prox_min_abs_pair(v[self.idx1], v[self.idx2], mu, self.a, self.b)
        out[self.idx1] = z1
        out[self.idx2] = z2

    def lipschitz_coords(self):
        wt = np.broadcast_to(np.asarray(self.weight, dtype=float), self.idx1.shape)
        return wt.astype(float)  # 1-Lipschitz per pair block


class _BlockSpan(_Span):
    """Contiguous blocks of a fixed dimension sharing a block kernel."""

    scalar = False

    def __init__(self, start, num_blocks, dim, weight=1.0):
        self.start = int(start)
        self.num_blocks = int(num_blocks)
        self.dim = int(dim)
        self.weight = weight

    def covered(self):
        return self.start + np.arange(self.num_blocks * self.dim)

    def _blocks(self, w):
        stop = self.start + self.num_blocks * self.dim
        return w[self.start:stop].reshape(self.num_blocks, self.dim)

    def _weights_vec(self):
        return np.broadcast_to(np.asarray(self.weight, dtype=float),
                               (self.num_blocks,))


class GroupL2(_BlockSpan):
    """weight * ||block||_2 per block."""

    def value(self, w):
        norms = np.linalg.norm(self._blocks(w), axis=1)
        return float((self._weights_vec() * norms).sum())

    def prox_into(self, out, v, step, weights):
        if weights is not None:
            raise ValueError("trimming weights need a coordinate-separable kernel")
        blocks = self._blocks(v).copy()
        mu = step * self._weights_vec()
        norms = np.linalg.norm(blocks, axis=1)
        scale = np.zeros(self.num_blocks)
        big = norms > mu
        scale[big] = 1.0 - mu[big] / norms[big]
        stop = self.start + self.num_blocks * self.dim
        out[self.start:stop] = (blocks * scale[:, None]).ravel()

    def lipschitz_coords(self):
        return np.repeat(self._weights_vec(), self.dim).astype(float)


class ScadTruncated(_BlockSpan):
    """weight * rho(block; kappa): group-l2 below the cutoff, free beyond."""

    convex = False

    def __init__(self, start, num_blocks, dim, kappa, weight=1.0):
        super().__init__(start, num_blocks, dim, weight)
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        self.kappa = float(kappa)

    def value(self, w):
        norms = np.linalg.norm(self._blocks(w), axis=1)
        vals = np.where(norms < self.kappa, norms, 0.0)
        return float((self._weights_vec() * vals).sum())

    def prox_into(self, out, v, step, weights):
        if weights is not None:
            raise ValueError("trimming weights need a coordinate-separable kernel")
        blocks = self._blocks(v)
        mu = step * self._weights_vec()
        res = np.empty_like(blocks)
        for i in range(self.num_blocks):
            res[i] = prox_scad_truncated(blocks[i], mu[i], self.kappa)
        stop = self.start + self.num_blocks * self.dim
        out[self.start:stop] = res.ravel()

    def lipschitz_coords(self):
        return np.full(self.num_blocks * self.dim, np.inf)


class SeparableNonsmooth:
    """An ordered list of spans that partitions the m coordinates of w."""

    def __init__(self, spans, m):
        self.spans = list(spans)
        self.m = int(m)
        covered = np.concatenate([s.covered() for s in self.spans]) \
            if self.spans else np.empty(0, dtype=int)
        if covered.size != m or not np.array_equal(np.sort(covered), np.arange(m)):
            raise ValueError("spans must partition the coordinates exactly once")

    @property
    def convex(self):
        return all(s.convex for s in self.spans)

    @property
    def scalar(self):
        return all(getattr(s, "scalar", False) for s in self.spans)

    def value(self, w):
        return float(sum(s.value(w) for s in self.spans))

    def coordinate_values(self, w):
        out = np.empty(self.m)
        for s in self.spans:
            if not getattr(s, "scalar", False):
                raise ValueError("per-coordinate values need scalar spans")
            out[s.idx] = s.coordinate_values(w)
        return out

    def prox(self, v, step, weights=None):
        v = np.asarray(v, dtype=float)
        if v.size != self.m:
            raise ValueError("dimension mismatch")
        if weights is not None:
            weights = np.asarray(weights, dtype=float)
            if weights.size != self.m:
                raise ValueError("weights must cover every coordinate")
        out = v.copy()
        for s in self.spans:
            s.prox_into(out, v, step, weights)
        return out

    @property
    def lipschitz(self):
        """Lipschitz constant of the full sum in the euclidean norm."""
        coords = np.concatenate([s.lipschitz_coords() for s in self.spans])
        if np.any(np.isinf(coords)):
            return np.inf
        return float(np.linalg.norm(coords))


def prox_separable(h, v, step, weights=None):
    """prox of step * h with optional per-coordinate trimming weights."""
    return h.prox(v, step, weights)
