"""Counter-based deterministic random number generation.

Everything stochastic in this package (data sampling, parameter init, batch
shuffling) draws from :class:`DeterministicRng` so that a 64-bit seed fully
pins down results across runs.  The generator is SplitMix64: the state s_n for
the n-th draw is

    s_n = seed + (n + 1) * 0x9E3779B97F4A7C15          (mod 2**64)

and the output is the finalizer

    z = s_n
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9           (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB           (mod 2**64)
    z = z ^ (z >> 31)

Because the n-th output depends only on (seed, n) the whole stream can be
materialized with vectorized integer ops, and skipping ahead is exact.
Integer arithmetic is bit-reproducible everywhere; the Gaussian path uses
libm log/cos/sin via Box-Muller, which is bit-stable on a given platform and
may differ in the last ulp across platforms.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_TO_UNIT = 2.0 ** -53


def _finalize(state: np.ndarray) -> np.ndarray:
    z = state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class DeterministicRng:
    """Sequential view over the SplitMix64 counter stream."""

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._counter = 0

    @property
    def seed(self) -> int:
        return int(self._seed)

    def next_u64(self, n: int) -> np.ndarray:
        """The next ``n`` raw 64-bit outputs."""
        if n < 0:
            raise ValueError("n must be non-negative")
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        return _finalize(self._seed + idx * _GOLDEN)

    def uniform(self, low: float, high: float, n: int) -> np.ndarray:
        """Unif[low, high) draws; low == high yields the constant exactly."""
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * _U64_TO_UNIT
        return low + (high - low) * u

    def standard_normal(self, n: int) -> np.ndarray:
        """N(0, 1) draws via Box-Muller on consecutive uniform pairs."""
        pairs = (n + 1) // 2
        raw = self.next_u64(2 * pairs)
        # u1 in (0, 1] so the log is finite; u2 in [0, 1).
        u1 = ((raw[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) * _U64_TO_UNIT
        u2 = (raw[pairs:] >> np.uint64(11)).astype(np.float64) * _U64_TO_UNIT
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:n]

    def signs(self, n: int) -> np.ndarray:
        """±1 with exactly equal probability (top bit of the raw output)."""
        bit = (self.next_u64(n) >> np.uint64(63)).astype(np.int64)
        return 2 * bit - 1

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n): argsort of random keys.

        Stable sort breaks (astronomically unlikely) key ties by index, so the
        result is a pure function of (seed, counter).
        """
        keys = self.next_u64(n)
        return np.argsort(keys, kind="stable")

    def split(self, n: int) -> list["DeterministicRng"]:
        """Derive ``n`` independent child generators from this stream."""
        return [DeterministicRng(int(s)) for s in self.next_u64(n)]


def derive_run_seeds(base_seed: int, run_index: int) -> tuple[int, int]:
    """(dataset_seed, training_seed) for one experiment run.

    Runs are seeded as base + index, then split into two independent streams
    so data sampling and parameter init never share draws.
    """
    children = DeterministicRng(base_seed + run_index).split(2)
    return children[0].seed, children[1].seed
