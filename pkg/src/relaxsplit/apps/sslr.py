"""Semi-supervised logistic regression.

Labeled rows carry the usual logistic loss; unlabeled rows carry a
symmetric logistic term log(1 + exp(-|a_i x|)) weighted by gamma that
rewards confident margins of either sign.  A ridge term keeps the
classifier bounded.
"""

from __future__ import annotations

import numpy as np

from .. import linops, prox
from ..relax import RelaxedProblem


def generate(m, n_features, labeled, seed=0, sep=2.0, sigma=1.0, m_test=1000):
    """Two spherical Gaussians at +-mu with only the first ``labeled``
    training rows labeled.  Returns (train, labels, labeled_count, test,
    test_labels); the train rows are ordered labeled-first."""
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(n_features)
    direction /= np.linalg.norm(direction)
    mu = 0.5 * sep * direction

    def draw(count):
        labels = rng.choice([-1.0, 1.0], size=count)
        pts = labels[:, None] * mu[None, :] + sigma * rng.standard_normal(
            (count, n_features))
        return pts, labels

    train, labels = draw(m)
    test, test_labels = draw(m_test)
    return train, labels, int(labeled), test, test_labels


def build_problem(features, labels_first_l, lam, gamma, nu, policy=None):
    """Rows 0..l-1 are labeled; everything after is unlabeled."""
    A = np.asarray(features, dtype=float)
    m = A.shape[0]
    labels = np.asarray(labels_first_l, dtype=float)
    l = labels.size
    spans = []
    if l > 0:
        spans.append(prox.Logistic(np.arange(l), labels=labels))
    if l < m:
        spans.append(prox.SymmetricLogistic(np.arange(l, m), weight=gamma))
    h = prox.SeparableNonsmooth(spans, m)
    return RelaxedProblem(h, linops.Dense(A), linops.Ridge(lam), nu,
                          policy or linops.direct_factor())


def accuracy(x, features, labels):
    """Mean agreement of sign(Ax) with the labels, sign(0) counted as +1."""
    scores = np.asarray(features, dtype=float) @ x
    pred = np.where(scores >= 0, 1.0, -1.0)
    return float(np.mean(pred == np.asarray(labels, dtype=float)))
