"""Deterministic float64 vector kernels and seeded randomness.

Every vector that crosses a module boundary in this package is a "Vec64":
a one-dimensional, C-contiguous numpy array of float64. Kernels never
mutate their inputs and always return fresh arrays, so results are safe to
share across threads.

Determinism contract: for a fixed build of numpy on a fixed platform, every
kernel here produces bit-identical output for bit-identical input. Reductions
(dot, l2_norm) use numpy's float64 kernels, whose accumulation order is fixed
for a given vector length; the same order applies to both argument positions
of dot, so dot(a, b) == dot(b, a) exactly.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["Prng", "as_vec64", "axpy", "dot", "gaussian", "l2_norm", "split", "zeros"]


def as_vec64(data) -> np.ndarray:
    """Coerce a sequence of reals into a Vec64 (1-D contiguous float64)."""
    vec = np.ascontiguousarray(data, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError(f"Vec64 must be one-dimensional, got shape {vec.shape}")
    return vec


def zeros(n: int) -> np.ndarray:
    if n < 0:
        raise ValueError(f"vector length must be >= 0, got {n}")
    return np.zeros(n, dtype=np.float64)


def _check_equal_lengths(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: length mismatch {a.shape[0]} vs {b.shape[0]}")


def dot(a: np.ndarray, b: np.ndarray) -> float:
    """Inner product sum(a[i] * b[i]) in float64.

    The accumulation order is the fixed order of numpy's dot kernel and is
    independent of argument position (elementwise products commute), so the
    result is symmetric in (a, b) bit-for-bit.
    """
    _check_equal_lengths(a, b, "dot")
    return float(np.dot(a, b))


def l2_norm(a: np.ndarray) -> float:
    """Euclidean norm computed as sqrt(dot(a, a)); 0.0 for the zero vector."""
    return math.sqrt(dot(a, a))


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return alpha * x + y elementwise as a fresh Vec64."""
    _check_equal_lengths(x, y, "axpy")
    return alpha * x + y


class Prng:
    """Seeded 64-bit pseudo-random stream.

    Backed by numpy's PCG64 generator keyed through SeedSequence. Identical
    (seed, stream_id) always reproduces the identical draw sequence within
    one build of numpy; cross-version bit-equality is not promised and not
    needed. A Prng is single-owner mutable state: never share one instance
    across threads, derive per-worker streams with split() instead.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def split(self, stream_id: int) -> "Prng":
        """Derive an independent stream keyed by (seed, stream_id) only.

        The child does not depend on how much this stream has already drawn.
        """
        return Prng(self.seed, stream_id)

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"Prng(seed={self.seed}, stream_id={self.stream_id})"


def split(seed: int, stream_id: int) -> Prng:
    """Independent, reproducible stream for (seed, stream_id)."""
    return Prng(seed, stream_id)


def gaussian(prng: Prng, n: int) -> np.ndarray:
    """n standard-normal draws (numpy's ziggurat transform over PCG64 output).

    Advances the stream deterministically; n = 0 yields an empty Vec64.
    """
    if n < 0:
        raise ValueError(f"draw count must be >= 0, got {n}")
    return prng.generator.standard_normal(n)
