"""Shared fixtures for the test suite: tiny duck-typed oracle models,
independent brute-force metric oracles, and random-instance builders.

The duck-typed models exercise the optimizer contract that any object with
loss(theta, inputs, labels) and loss_and_grad(theta, inputs, labels) can be
stepped; they make hand-computable scalar oracles possible.
"""

from __future__ import annotations

import math

import numpy as np

from gacfas.model import Batch, MlpSpec, ParamVector, init_params
from gacfas.numerics import Prng


class ScalarQuadratic:
    """loss = theta[0]^2 / 2 regardless of the data; grad = theta.

    Every domain slice sees the same quadratic, so k identical domains sum
    to k * theta^2 / 2 under the sum-of-domain-means convention.
    """

    def loss(self, theta, inputs, labels):
        return 0.5 * float(theta[0]) ** 2

    def loss_and_grad(self, theta, inputs, labels):
        return self.loss(theta, inputs, labels), np.array([float(theta[0])])


class MirrorLinear:
    """loss = mean(inputs[:, 0]) * theta[0]: the gradient is the mean first
    feature, so sub-batches with opposite features produce exactly opposing
    gradients (the domain-conflict construction)."""

    def loss(self, theta, inputs, labels):
        return float(np.mean(inputs[:, 0])) * float(theta[0])

    def loss_and_grad(self, theta, inputs, labels):
        g = float(np.mean(inputs[:, 0]))
        return g * float(theta[0]), np.array([g])


class VectorQuadratic:
    """loss = ||theta||^2 / 2 regardless of the data; grad = theta.
    A pure quadratic in theta, so any 1-D slice of it is an exact parabola."""

    def loss(self, theta, inputs, labels):
        return 0.5 * float(np.dot(theta, theta))

    def loss_and_grad(self, theta, inputs, labels):
        return self.loss(theta, inputs, labels), np.asarray(theta, dtype=np.float64).copy()


def scalar_params(value: float) -> ParamVector:
    return ParamVector.from_flat(np.array([float(value)]))


def k_domain_batch(k: int, per_domain: int = 2) -> Batch:
    """Tiny placeholder batch with k domains for data-ignoring models."""
    n = k * per_domain
    inputs = np.arange(2 * n, dtype=np.float64).reshape(n, 2)
    labels = np.zeros(n, dtype=np.int64)
    ids = np.repeat(np.arange(k, dtype=np.int64), per_domain)
    return Batch(inputs, labels, ids)


def mirror_batch() -> Batch:
    """Two domains whose first features are +1 and -1: MirrorLinear sees
    gradients +1 and -1 on them."""
    inputs = np.array([[1.0, 0.0], [1.0, 0.5], [-1.0, 0.0], [-1.0, 0.5]])
    labels = np.zeros(4, dtype=np.int64)
    ids = np.array([0, 0, 1, 1], dtype=np.int64)
    return Batch(inputs, labels, ids)


def random_instance(seed: int, sizes=(2, 6, 2), activation="tanh", k: int = 3, per_domain: int = 5):
    """Random (spec, params, batch) triple with k domains of gaussian inputs
    and uniform labels; fully determined by seed."""
    prng = Prng(seed, 0)
    spec = MlpSpec(sizes, activation)
    params = init_params(spec, prng)
    n = k * per_domain
    inputs = prng.generator.standard_normal((n, sizes[0]))
    labels = prng.generator.integers(0, sizes[-1], size=n).astype(np.int64)
    ids = np.repeat(np.arange(k, dtype=np.int64), per_domain)
    return spec, params, Batch(inputs, labels, ids)


def kahan_dot(a, b) -> float:
    """Compensated left-to-right inner product (the summation oracle)."""
    total = 0.0
    comp = 0.0
    for x, y in zip(a, b):
        term = float(x) * float(y) - comp
        fresh = total + term
        comp = (fresh - total) - term
        total = fresh
    return total


def arc_distance(points: np.ndarray) -> np.ndarray:
    """Distance from each 2-D point to the unit upper half arc
    {(cos t, sin t) : t in [0, pi]} (the noiseless class-0 locus)."""
    out = np.empty(points.shape[0])
    for i, (x, y) in enumerate(points):
        angle = math.atan2(y, x)
        if 0.0 <= angle <= math.pi:
            out[i] = abs(math.hypot(x, y) - 1.0)
        else:
            out[i] = min(math.hypot(x - 1.0, y), math.hypot(x + 1.0, y))
    return out


def oracle_candidate_thresholds(scores) -> list:
    uniq = sorted(set(float(s) for s in scores))
    mids = [0.5 * (a + b) for a, b in zip(uniq[:-1], uniq[1:])]
    return [-math.inf] + mids + [math.inf]


def oracle_far_frr(pos, neg, tau) -> tuple:
    far = sum(1 for s in neg if s >= tau) / len(neg)
    frr = sum(1 for s in pos if s < tau) / len(pos)
    return far, frr


def oracle_hter_at_eer(pos, neg) -> tuple:
    """Exhaustive sweep: minimize |FAR - FRR|, ties to the lower threshold."""
    best = None
    for tau in oracle_candidate_thresholds(list(pos) + list(neg)):
        far, frr = oracle_far_frr(pos, neg, tau)
        diff = abs(far - frr)
        if best is None or diff < best[0]:
            best = (diff, (far + frr) / 2.0, tau)
    return best[1], best[2]


def oracle_tpr_at_fpr(pos, neg, cap) -> float:
    """Exhaustive sweep: max TPR among thresholds with FPR <= cap."""
    best = 0.0
    for tau in oracle_candidate_thresholds(list(pos) + list(neg)):
        fpr = sum(1 for s in neg if s >= tau) / len(neg)
        if fpr <= cap:
            best = max(best, sum(1 for s in pos if s >= tau) / len(pos))
    return best


def oracle_auc_pairs(pos, neg) -> float:
    """All-pairs Mann-Whitney statistic with half credit for ties."""
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))
