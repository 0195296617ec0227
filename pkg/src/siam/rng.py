"""Portable deterministic random numbers.

Everything random in this package (weight init, digit placement, data
shuffling) flows through an explicitly written-out generator so that a seed
produces bitwise-identical results on every platform, independent of numpy's
own RNG evolution.

The generator is xoshiro256** seeded via splitmix64:

splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) mod 2^64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2^64
    return z ^ (z >> 31)

xoshiro256**(s0..s3):
    result = rotl64(s1 * 5, 7) * 9
    t = s1 << 17
    s2 ^= s0;  s3 ^= s1;  s1 ^= s2;  s0 ^= s3
    s2 ^= t;   s3 = rotl64(s3, 45)

The four xoshiro state words are the first four splitmix64 outputs for the
seed. Uniform doubles in [0, 1) take the top 53 bits: (x >> 11) * 2^-53.

`fill_uniform` runs LANES independent streams in numpy uint64 lockstep so
large buffers (weight matrices) fill quickly; the lane layout is fixed, so
the output for a given (seed, n) never depends on how it is chunked.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Lane count for vectorised fills. Part of the output format: changing it
# changes every generated stream.
LANES = 1024


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state, returning (new_state, output)."""
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Stable per-stream seed for (seed, index), e.g. one per sequence."""
    state = (seed ^ ((index + 1) * _GOLDEN)) & _MASK
    _, out = splitmix64(state)
    return out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256:
    """Scalar xoshiro256** stream, pure-python integer arithmetic."""

    def __init__(self, seed: int):
        state = seed & _MASK
        s = []
        for _ in range(4):
            state, out = splitmix64(state)
            s.append(out)
        if not any(s):  # all-zero state is a fixed point; cannot occur from
            s[0] = _GOLDEN  # splitmix64 output but guard anyway
        self._s = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * 2.0**-53
        return low + (high - low) * u

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection on the top bits."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    @property
    def state(self) -> tuple[int, int, int, int]:
        return tuple(self._s)


def _lane_states(seed: int, lanes: int) -> np.ndarray:
    """[4, lanes] uint64 xoshiro states; lane i is seeded by splitmix chain
    value i of `seed`, then expanded with its own splitmix64 run."""
    state = seed & _MASK
    out = np.empty((4, lanes), dtype=np.uint64)
    for lane in range(lanes):
        state, lane_seed = splitmix64(state)
        sub = lane_seed
        for j in range(4):
            sub, word = splitmix64(sub)
            out[j, lane] = word
    return out


def fill_uniform(seed: int, n: int, low: float = 0.0, high: float = 1.0,
                 dtype=np.float64) -> np.ndarray:
    """n uniforms in [low, high), lane-vectorised, order fixed by (seed, n).

    Values are emitted round-major: round r contributes lanes 0..LANES-1
    before round r+1 starts. Lane count is the module constant LANES.
    """
    if n == 0:
        return np.zeros(0, dtype=dtype)
    lanes = min(LANES, n)
    s = _lane_states(seed, lanes)
    rounds = -(-n // lanes)
    blocks = np.empty((rounds, lanes), dtype=np.uint64)
    s0, s1, s2, s3 = s[0], s[1], s[2], s[3]
    with np.errstate(over="ignore"):
        five = np.uint64(5)
        nine = np.uint64(9)
        for r in range(rounds):
            x = s1 * five
            blocks[r] = ((x << np.uint64(7)) | (x >> np.uint64(57))) * nine
            t = s1 << np.uint64(17)
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = (s3 << np.uint64(45)) | (s3 >> np.uint64(19))
    u = (blocks.reshape(-1)[:n] >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return (low + (high - low) * u).astype(dtype)
