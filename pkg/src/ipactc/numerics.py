"""Stable scalar/matrix kernels, log-space arithmetic, and the seeded RNG.

Matrices everywhere in this package are C-order float64 numpy arrays.
Log-domain values may be -inf (zero probability); everything else must be
finite.

The random source is xoshiro256** seeded through splitmix64.  It is
implemented here, rather than borrowed from a library, so that the draw
streams are fixed by this repository: identical seeds give identical
sequences across runs, platforms and dependency upgrades.  The raw integer
stream is exact; float transforms go through IEEE-754 double arithmetic.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1


def log_sum_exp(values) -> float:
    """ln sum(exp(v_i)) without overflow; -inf iff every input is -inf."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty array")
    m = float(np.max(v))
    if m == -math.inf:
        return -math.inf
    return m + math.log(float(np.sum(np.exp(v - m))))


def softmax(logits) -> np.ndarray:
    """Probability vector from a finite logit vector, via max subtraction."""
    x = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("softmax requires finite logits")
    e = np.exp(x - np.max(x))
    return e / np.sum(e)


def log_softmax(logits, axis: int = -1) -> np.ndarray:
    """Row-wise log probabilities; rows log-sum to 0."""
    x = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("log_softmax requires finite logits")
    m = np.max(x, axis=axis, keepdims=True)
    shifted = x - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def tanh(x):
    return np.tanh(x)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def affine_rows(h: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """h @ w.T + b computed without BLAS blocking.

    np.einsum without `optimize` accumulates each output element
    sequentially over the shared axis, so appending rows to `w` leaves the
    existing output columns bitwise unchanged.  BLAS gemm does not have that
    property; output-layer surgery during adaptation relies on it.
    """
    if h.shape[1] != w.shape[1] or w.shape[0] != b.shape[0]:
        raise ValueError(f"affine shape mismatch: {h.shape}, {w.shape}, {b.shape}")
    out = np.einsum("tf,vf->tv", h, w)
    out += b
    return out


def _splitmix64(state: int):
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


def derive_seed(root: int, *keys) -> int:
    """Deterministic child seed from a root seed and a key path.

    String keys are folded in through blake2b so language names and similar
    labels can address independent streams.
    """
    import hashlib

    s = int(root) & _MASK64
    for key in keys:
        if isinstance(key, str):
            key = int.from_bytes(
                hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "little"
            )
        s, out = _splitmix64(s ^ (int(key) & _MASK64))
        s = out
    return s


class Rng:
    """xoshiro256** generator with deterministic, splittable streams."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        s = self.seed
        state = []
        for _ in range(4):
            s, v = _splitmix64(s)
            state.append(v)
        self._s = state

    def _next(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def split(self, *keys) -> "Rng":
        """Independent child generator addressed by a key path."""
        return Rng(derive_seed(self.seed, 0x5B5AD4ECEDA1CE2A, *keys))

    def uniform(self, n: int | None = None):
        """float in [0, 1), or an array of n of them."""
        if n is None:
            return (self._next() >> 11) * 2.0**-53
        return np.array([(self._next() >> 11) * 2.0**-53 for _ in range(n)])

    def gaussian(self, mean: float = 0.0, std: float = 1.0, n: int | None = None):
        """Box-Muller normal draws; two uniforms consumed per sample."""
        m = 1 if n is None else int(n)
        u = self.uniform(2 * m)
        # 1 - u keeps the log argument in (0, 1]
        r = np.sqrt(-2.0 * np.log(1.0 - u[:m]))
        z = mean + std * (r * np.cos(2.0 * math.pi * u[m:]))
        if n is None:
            return float(z[0])
        return z

    def bernoulli_mask(self, length: int, keep_prob: float) -> np.ndarray:
        """0/1 float vector; entry is 1 with probability keep_prob."""
        if not 0.0 <= keep_prob <= 1.0:
            raise ValueError(f"keep_prob must be in [0, 1], got {keep_prob}")
        u = self.uniform(int(length))
        return (u < keep_prob).astype(np.float64)

    def integers(self, bound: int) -> int:
        """Uniform int in [0, bound) by rejection, bias-free."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (2**64 // bound) * bound
        x = self._next()
        while x >= limit:
            x = self._next()
        return x % bound

    def int_range(self, lo: int, hi: int) -> int:
        """Uniform int in [lo, hi] inclusive."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.integers(hi - lo + 1)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integers(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def coin(self) -> bool:
        return bool(self._next() & 1)
