"""Linear operators and the regularized least-squares engine.

Solvers touch an operator only through ``apply`` and ``adjoint``.  The
structured kinds additionally advertise gram structure (``gram_scale`` when
A^T A = c I, an analytic gram diagonal for preconditioning, and a dense gram
assembly for direct factorization) so that the inner subproblem

    minimize_x  g(x) + 1/(2 nu) ||A x - w||^2

is solved in closed form where the algebra allows it and by a factored or
iterative method otherwise.  All operators are immutable after construction;
sharing them across threads is safe.  Factorization caches live on the
policy object and are keyed by (operator, nu, regularizer), so a policy
instance should not be shared across threads without external locking.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse.linalg

log = logging.getLogger(__name__)


def fast_hadamard(v):
    """Multiply by the normalized Hadamard matrix H_n in O(n log n).

    n must be a power of two.  H_n is symmetric and orthogonal, so this
    routine is its own inverse and its own adjoint.
    """
    x = np.array(v, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    n = x.shape[1]
    if n == 0 or (n & (n - 1)) != 0:
        raise ValueError(f"length {n} is not a power of two")
    h = 1
    while h < n:
        x = x.reshape(-1, 2 * h)
        a = x[:, :h].copy()
        b = x[:, h:].copy()
        x[:, :h] = a + b
        x[:, h:] = a - b
        x = x.reshape(-1, n)
        h *= 2
    x = x / np.sqrt(n)
    return x[0] if single else x


class LinearOperator:
    """Base class.  Subclasses set rows/cols and implement apply/adjoint."""

    rows = 0
    cols = 0

    def apply(self, x):
        raise NotImplementedError

    def adjoint(self, y):
        raise NotImplementedError

    @property
    def gram_scale(self):
        """c such that A^T A = c I, or None when no such scalar exists."""
        return None

    def gram_diag(self):
        """diag(A^T A), used for Jacobi preconditioning."""
        raise NotImplementedError

    def gram_dense(self):
        """Dense A^T A.  Only sensible at small scale."""
        raise NotImplementedError

    def dense(self):
        """Materialize the operator column by column.  Test helper."""
        out = np.empty((self.rows, self.cols))
        e = np.zeros(self.cols)
        for j in range(self.cols):
            e[j] = 1.0
            out[:, j] = self.apply(e)
            e[j] = 0.0
        return out


class Identity(LinearOperator):
    def __init__(self, n):
        self.rows = self.cols = int(n)

    def apply(self, x):
        return np.asarray(x, dtype=float).copy()

    def adjoint(self, y):
        return np.asarray(y, dtype=float).copy()

    @property
    def gram_scale(self):
        return 1.0

    def gram_diag(self):
        return np.ones(self.cols)

    def gram_dense(self):
        return np.eye(self.cols)


class Dense(LinearOperator):
    """Explicit matrix, stored column-major."""

    def __init__(self, mat):
        mat = np.asfortranarray(mat, dtype=float)
        if mat.ndim != 2:
            raise ValueError("expected a 2-d array")
        self.mat = mat
        self.rows, self.cols = mat.shape

    def apply(self, x):
        return self.mat @ x

    def adjoint(self, y):
        return self.mat.T @ y

    def gram_diag(self):
        return np.einsum("ij,ij->j", self.mat, self.mat)

    def gram_dense(self):
        return self.mat.T @ self.mat


class HadamardStack(LinearOperator):
    """k stacked blocks H_n S_j with S_j = diag of a +-1 sign vector.

    Each block is orthogonal, so A^T A = k I and least squares against this
    operator reduces to one adjoint application divided by k.
    """

    def __init__(self, n, signs):
        signs = np.asarray(signs, dtype=float)
        if signs.ndim == 1:
            signs = signs[None, :]
        if signs.shape[1] != n:
            raise ValueError("sign vectors must have length n")
        if n == 0 or (n & (n - 1)) != 0:
            raise ValueError(f"n={n} is not a power of two")
        if not np.all(np.abs(signs) == 1.0):
            raise ValueError("sign entries must be +-1")
        self.n = int(n)
        self.k = signs.shape[0]
        self.signs = signs
        self.rows = self.k * self.n
        self.cols = self.n

    def apply(self, x):
        return fast_hadamard(self.signs * np.asarray(x, dtype=float)).ravel()

    def adjoint(self, y):
        blocks = fast_hadamard(np.asarray(y, dtype=float).reshape(self.k, self.n))
        return (self.signs * blocks).sum(axis=0)

    @property
    def gram_scale(self):
        return float(self.k)

    def gram_diag(self):
        return np.full(self.n, float(self.k))

    def gram_dense(self):
        return self.k * np.eye(self.n)


class Stack(LinearOperator):
    """Vertical concatenation of operators with a common column count."""

    def __init__(self, blocks):
        blocks = list(blocks)
        if not blocks:
            raise ValueError("empty stack")
        cols = blocks[0].cols
        if any(b.cols != cols for b in blocks):
            raise ValueError("stacked blocks must share the column count")
        self.blocks = blocks
        self.cols = cols
        self.rows = sum(b.rows for b in blocks)
        self._offsets = np.cumsum([0] + [b.rows for b in blocks])

    def apply(self, x):
        return np.concatenate([b.apply(x) for b in self.blocks])

    def adjoint(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(self.cols)
        for b, lo, hi in zip(self.blocks, self._offsets[:-1], self._offsets[1:]):
            out += b.adjoint(y[lo:hi])
        return out

    @property
    def gram_scale(self):
        scales = [b.gram_scale for b in self.blocks]
        if any(s is None for s in scales):
            return None
        return float(sum(scales))

    def gram_diag(self):
        out = np.zeros(self.cols)
        for b in self.blocks:
            out += b.gram_diag()
        return out

    def gram_dense(self):
        out = np.zeros((self.cols, self.cols))
        for b in self.blocks:
            out += b.gram_dense()
        return out


class PairwiseDifference(LinearOperator):
    """All row differences x_i - x_j, i < j in lexicographic order.

    The input is a flattened (num_points, dim) array.  The gram matrix is
    (p I - 1 1^T) acting per feature column, which the solver exploits via
    Sherman-Morrison instead of ever forming D.
    """

    def __init__(self, num_points, dim):
        self.num_points = int(num_points)
        self.dim = int(dim)
        self.pair_i, self.pair_j = np.triu_indices(self.num_points, 1)
        self.num_pairs = self.pair_i.size
        self.rows = self.num_pairs * self.dim
        self.cols = self.num_points * self.dim

    def apply(self, x):
        pts = np.asarray(x, dtype=float).reshape(self.num_points, self.dim)
        return (pts[self.pair_i] - pts[self.pair_j]).ravel()

    def adjoint(self, y):
        d = np.asarray(y, dtype=float).reshape(self.num_pairs, self.dim)
        out = np.zeros((self.num_points, self.dim))
        np.add.at(out, self.pair_i, d)
        np.subtract.at(out, self.pair_j, d)
        return out.ravel()

    def gram_diag(self):
        return np.full(self.cols, float(self.num_points - 1))

    def gram_dense(self):
        p = self.num_points
        g = p * np.eye(p) - np.ones((p, p))
        return np.kron(g, np.eye(self.dim))


# --- quadratic regularizers -------------------------------------------------


class ZeroReg:
    """g(x) = 0."""

    shift = 0.0

    def value(self, x):
        return 0.0

    def grad(self, x):
        return np.zeros_like(x)

    def target(self, cols):
        return None


class Ridge:
    """g(x) = lam/2 ||x||^2."""

    def __init__(self, lam):
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        self.lam = float(lam)

    @property
    def shift(self):
        return self.lam

    def value(self, x):
        return 0.5 * self.lam * float(x @ x)

    def grad(self, x):
        return self.lam * x

    def target(self, cols):
        return None


class Tracking:
    """g(x) = 1/2 ||x - ref||^2 with a fixed reference point."""

    shift = 1.0

    def __init__(self, ref):
        self.ref = np.asarray(ref, dtype=float).ravel().copy()

    def value(self, x):
        d = x - self.ref
        return 0.5 * float(d @ d)

    def grad(self, x):
        return x - self.ref

    def target(self, cols):
        if self.ref.size != cols:
            raise ValueError("tracking reference has the wrong length")
        return self.ref


# --- least-squares policies ---------------------------------------------------


class LsSolvePolicy:
    """How to carry out the regularized least-squares subproblem.

    method is one of 'direct', 'cg', 'lsqr', 'closed'.  The factor cache is
    invalidated implicitly by its key whenever nu or the regularizer shift
    changes.  ``inner_count`` accumulates iteration counts so a caller can
    difference it around a solve.
    """

    def __init__(self, method="direct", tol=1e-10, max_iter=10_000):
        if method not in ("direct", "cg", "lsqr", "closed"):
            raise ValueError(f"unknown method {method!r}")
        self.method = method
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self._cache = {}
        self._pinv_seen = set()
        self.inner_count = 0


def direct_factor(tol=1e-10):
    return LsSolvePolicy("direct", tol=tol)


def conjugate_gradient(tol=1e-8, max_iter=10_000):
    return LsSolvePolicy("cg", tol=tol, max_iter=max_iter)


def lsqr_like(tol=1e-10, max_iter=10_000):
    return LsSolvePolicy("lsqr", tol=tol, max_iter=max_iter)


def orthogonal_closed_form():
    return LsSolvePolicy("closed")


def _rhs(op, g, w, nu):
    rhs = op.adjoint(w)
    t = g.target(op.cols)
    if t is not None:
        rhs = rhs + nu * t
    return rhs


def _closed_form(op, g, w, nu):
    c = op.gram_scale
    denom = c + nu * g.shift
    return _rhs(op, g, w, nu) / denom


def _pairwise_closed_form(op, g, w, nu):
    # gram is (p I - 1 1^T) per feature; (alpha I - beta 1 1^T)^-1 =
    # I/alpha + beta/(alpha (alpha - beta p)) 1 1^T with beta = 1/nu.
    p, d = op.num_points, op.dim
    rhs = op.adjoint(w).reshape(p, d) / nu
    t = g.target(op.cols)
    if t is not None:
        rhs += g.shift * t.reshape(p, d)
    alpha = g.shift + p / nu
    beta = 1.0 / nu
    gap = alpha - beta * p  # equals g.shift
    if gap <= 0:
        # zero regularizer: gram is singular along per-feature constants,
        # but D^T w is orthogonal to them, so the pseudo-inverse solve is
        # a plain division on the complement.
        return (rhs * nu / p).ravel()
    colsum = rhs.sum(axis=0)
    x = rhs / alpha + (beta / (alpha * gap)) * colsum[None, :]
    return x.ravel()


def _direct_solve(op, g, w, nu, policy):
    key = (id(op), float(nu), float(g.shift))
    entry = policy._cache.get(key)
    if entry is None:
        m = op.gram_dense() + (nu * g.shift) * np.eye(op.cols)
        try:
            entry = ("chol", scipy.linalg.cho_factor(m), m)
        except scipy.linalg.LinAlgError:
            # rank deficiency is a property of the operator, not of nu:
            # announce it once, not once per continuation stage
            if id(op) not in policy._pinv_seen:
                policy._pinv_seen.add(id(op))
                log.warning(
                    "singular normal equations; falling back to pseudo-inverse")
            entry = ("pinv", np.linalg.pinv(m, hermitian=True), m)
        policy._cache[key] = entry
    kind, fac, m = entry
    rhs = _rhs(op, g, w, nu)
    if kind == "chol":
        x = scipy.linalg.cho_solve(fac, rhs)
        # one step of iterative refinement keeps the residual at machine level
        x += scipy.linalg.cho_solve(fac, rhs - m @ x)
    else:
        x = fac @ rhs
    return x


def _cg_solve(op, g, w, nu, policy):
    n = op.cols
    shift = nu * g.shift
    rhs = _rhs(op, g, w, nu)

    def matvec(v):
        return op.adjoint(op.apply(v)) + shift * v

    diag = op.gram_diag() + shift
    diag = np.where(diag > 0, diag, 1.0)
    aop = scipy.sparse.linalg.LinearOperator((n, n), matvec=matvec)
    pre = scipy.sparse.linalg.LinearOperator((n, n), matvec=lambda v: v / diag)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = scipy.sparse.linalg.cg(
        aop, rhs, rtol=0.0, atol=nu * policy.tol, maxiter=policy.max_iter, M=pre,
        callback=cb,
    )
    if info > 0:
        log.warning("cg hit the iteration cap (%d) before the tolerance", info)
    policy.inner_count += max(count[0], 1)
    return x


def _lsqr_solve(op, g, w, nu, policy):
    aop = scipy.sparse.linalg.LinearOperator(
        (op.rows, op.cols), matvec=op.apply, rmatvec=op.adjoint
    )
    t = g.target(op.cols)
    b = w if t is None else w - op.apply(t)
    damp = np.sqrt(nu * g.shift)
    out = scipy.sparse.linalg.lsqr(
        aop, b, damp=damp, atol=policy.tol * 1e-2, btol=policy.tol * 1e-2,
        iter_lim=policy.max_iter,
    )
    x, itn = out[0], out[2]
    policy.inner_count += max(int(itn), 1)
    if t is not None:
        x = x + t
    return x


def solve_partial(op, g, w, nu, policy):
    """argmin_x g(x) + 1/(2 nu) ||A x - w||^2.

    Rank-deficient zero-regularizer systems return the minimum-norm
    solution.  Orthogonal-stack operators bypass factorization entirely.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    w = np.asarray(w, dtype=float)
    if w.size != op.rows:
        raise ValueError(f"w has length {w.size}, operator has {op.rows} rows")
    method = policy.method
    if method == "closed":
        if op.gram_scale is None:
            raise ValueError("closed-form policy needs A^T A = c I")
        policy.inner_count += 1
        return _closed_form(op, g, w, nu)
    if method == "direct":
        policy.inner_count += 1
        if op.gram_scale is not None:
            return _closed_form(op, g, w, nu)
        if isinstance(op, PairwiseDifference):
            return _pairwise_closed_form(op, g, w, nu)
        return _direct_solve(op, g, w, nu, policy)
    if method == "cg":
        return _cg_solve(op, g, w, nu, policy)
    return _lsqr_solve(op, g, w, nu, policy)


def projection_residual(op, w, policy=None):
    """w - A x_ls, the residual of projecting w onto range(A)."""
    if policy is None:
        policy = direct_factor()
    x = solve_partial(op, ZeroReg(), w, 1.0, policy)
    return np.asarray(w, dtype=float) - op.apply(x)


# --- serialization ------------------------------------------------------------


def save_matrix(path, mat):
    scipy.io.mmwrite(str(path), np.atleast_2d(np.asarray(mat, dtype=float)))


def load_matrix(path):
    m = scipy.io.mmread(str(path))
    if scipy.sparse.issparse(m):
        m = m.toarray()
    return np.asarray(m, dtype=float)


def save_vector(path, v):
    save_matrix(path, np.asarray(v, dtype=float).reshape(-1, 1))


def load_vector(path):
    return load_matrix(path).ravel()


def save_hadamard_stack(path, op):
    """Text format: first line 'n k', then k sign vectors, one per line."""
    with open(path, "w") as f:
        f.write(f"{op.n} {op.k}\n")
        for row in op.signs:
            f.write(" ".join(str(int(s)) for s in row) + "\n")


def load_hadamard_stack(path):
    with open(path) as f:
        n, k = (int(t) for t in f.readline().split())
        signs = np.array([[int(t) for t in f.readline().split()] for _ in range(k)])
    if signs.shape != (k, n):
        raise ValueError("malformed hadamard stack file")
    return HadamardStack(n, signs)
