"""Convex clustering with pairwise fusion penalties.

Points are clustered by solving for centroids u_i that trade fidelity to
the data against a penalty on pairwise centroid differences.  With the
group l2 penalty the problem is convex; the truncated concave variant
stops paying for differences past a cutoff, so far-apart clusters stop
attracting each other.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .. import linops, prox
from ..relax import RelaxedProblem


def generate(num_clusters, per_cluster, dim, seed=0, sep=60.0, sigma=1.0):
    """Planted clusters on a random simplex of side about sep.

    Returns (points, labels) with points stacked cluster by cluster,
    shape (num_clusters * per_cluster, dim).
    """
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((num_clusters, dim))
    centers -= centers.mean(axis=0)
    # rescale so the closest pair of centers sits at distance sep
    dists = np.linalg.norm(centers[:, None] - centers[None, :], axis=-1)
    np.fill_diagonal(dists, np.inf)
    centers *= sep / dists.min()
    pts = np.repeat(centers, per_cluster, axis=0)
    pts += sigma * rng.standard_normal(pts.shape)
    labels = np.repeat(np.arange(num_clusters), per_cluster)
    return pts, labels


def build_problem(points, lam, nu=1.0, kappa=None, policy=None):
    """Fusion-penalized centroid problem over the given points.

    The variable is the flattened centroid matrix; the operator maps it
    to all pairwise centroid differences.  kappa=None selects the convex
    group penalty, otherwise the truncated penalty with that cutoff.
    """
    p, d = points.shape
    A = linops.PairwiseDifference(p, d)
    num_pairs = A.rows // d
    if kappa is None:
        span = prox.GroupL2(0, num_pairs, d, weight=lam)
    else:
        span = prox.ScadTruncated(0, num_pairs, d, kappa, weight=lam)
    h = prox.SeparableNonsmooth([span], A.rows)
    g = linops.Tracking(points.reshape(-1))
    return RelaxedProblem(h, A, g, nu, policy or linops.direct_factor())


def radius(points, labels):
    """Largest distance from a point to its own cluster centroid.

    Useful as prior knowledge for the truncated penalty: differences of
    two points inside a ball of radius r have norm up to 2r, so kappa =
    2 * radius keeps every within-cluster pair inside the cutoff.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    worst = 0.0
    for c in np.unique(labels):
        grp = points[labels == c]
        worst = max(worst, float(
            np.linalg.norm(grp - grp.mean(axis=0), axis=1).max()))
    return worst


def partition_from_w(w, num_points, dim, tol=1e-3):
    """Connected components of the graph whose edges are the pairs with
    fused centroids, i.e. pairwise difference below tol."""
    ii, jj = np.triu_indices(num_points, k=1)
    gaps = np.linalg.norm(w.reshape(-1, dim), axis=1)
    keep = gaps <= tol
    adj = csr_matrix((np.ones(keep.sum()), (ii[keep], jj[keep])),
                     shape=(num_points, num_points))
    _, labels = connected_components(adj, directed=False)
    return labels


def partitions_agree(labels_a, labels_b):
    """True when two labelings induce the same partition."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    pairs = {}
    for x, y in zip(a, b):
        if x in pairs and pairs[x] != y:
            return False
        pairs[x] = y
    return len(set(pairs.values())) == len(pairs)
