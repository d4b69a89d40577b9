"""Counter-based keyed randomness: the shared uniform field and stream draws.

The update rule consumes one uniform U(x, n) per site per generation, and
several analyses (monotone coupling, agreement tracking, block detectors on
the same noise) need two or more processes to read the *same* field.  That
rules out sequential generators: the field must be a pure function of
(seed, site, generation), queryable in any order, identical across runs.

Philox4x32-10 (Salmon, Moraes, Dror, Shaw; the Random123 family) is exactly
that: a 10-round bijective scramble of a 128-bit counter under a 64-bit key,
with well-published test vectors.  Key layout, fixed as version 1:

    key     = (seed mod 2^32, seed >> 32)
    counter = (site mod 2^32, site >> 32, n mod 2^32, n >> 32)

where site is the flattened row-major index.  The first two output words
make one double-precision uniform in [0, 1) from their top 53 bits.
Replica and cell seeds are derived from a base seed by splitmix64, and
sequential draws (Poisson branching, initial conditions) come from numpy
Generators keyed by (seed, stream) through SeedSequence.
"""

from __future__ import annotations

import math

import numpy as np

KEY_LAYOUT_VERSION = "philox4x32-10/key-layout-v1"

_PHILOX_M0 = np.uint64(0xD2511F53)
_PHILOX_M1 = np.uint64(0xCD9E8D57)
_WEYL_0 = np.uint32(0x9E3779B9)
_WEYL_1 = np.uint32(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_MASK64 = (1 << 64) - 1


def philox4x32(counter, key, rounds: int = 10):
    """Apply the Philox4x32 bijection to counter blocks under keys.

    counter: four uint32 arrays (or scalars), broadcastable to a common shape.
    key: two uint32 arrays, broadcastable to the same shape.
    Returns four uint32 arrays of the broadcast shape.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint32) for c in counter)
    k0, k1 = (np.asarray(k, dtype=np.uint32) for k in key)
    shape = np.broadcast_shapes(
        c0.shape, c1.shape, c2.shape, c3.shape, k0.shape, k1.shape
    )
    c0, c1, c2, c3 = (np.broadcast_to(c, shape).copy() for c in (c0, c1, c2, c3))
    k0 = np.broadcast_to(k0, shape).copy()
    k1 = np.broadcast_to(k1, shape).copy()
    with np.errstate(over="ignore"):
        for r in range(rounds):
            if r:
                k0 += _WEYL_0
                k1 += _WEYL_1
            p0 = c0.astype(np.uint64) * _PHILOX_M0
            p1 = c2.astype(np.uint64) * _PHILOX_M1
            lo0 = (p0 & _MASK32).astype(np.uint32)
            hi0 = (p0 >> np.uint64(32)).astype(np.uint32)
            lo1 = (p1 & _MASK32).astype(np.uint32)
            hi1 = (p1 >> np.uint64(32)).astype(np.uint32)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def _bits_to_unit(x0: np.ndarray, x1: np.ndarray) -> np.ndarray:
    """Two 32-bit words -> one float64 uniform in [0, 1), top 53 bits."""
    packed = x0.astype(np.uint64) | (x1.astype(np.uint64) << np.uint64(32))
    return (packed >> np.uint64(11)).astype(np.float64) * (2.0**-53)


def _split_u64(value) -> tuple[np.ndarray, np.ndarray]:
    v = np.asarray(value, dtype=np.uint64)
    return (v & _MASK32).astype(np.uint32), (v >> np.uint64(32)).astype(np.uint32)


def field_uniforms(seeds, n: int, sites) -> np.ndarray:
    """U(site, n) for replica seeds x flattened site indices.

    seeds: uint64 array (...,) of field seeds; sites: int array (...,) of
    flattened site indices, broadcastable against seeds.  Pure function of
    its arguments; evaluation order never matters.
    """
    if n < 0:
        raise ValueError(f"generation index must be >= 0, got {n}")
    s0, s1 = _split_u64(np.asarray(sites, dtype=np.uint64))
    n0, n1 = _split_u64(np.uint64(int(n) & _MASK64))
    k0, k1 = _split_u64(np.asarray(seeds, dtype=np.uint64))
    x0, x1, _, _ = philox4x32((s0, s1, n0, n1), (k0, k1))
    return _bits_to_unit(x0, x1)


class UniformField:
    """The space-time uniform field U(x, n) for one seed.

    Stateless; every query recomputes from (seed, site, generation).
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64

    def uniforms(self, n: int, flat_sites) -> np.ndarray:
        """Uniforms at generation n for an array of flattened site indices."""
        return field_uniforms(np.uint64(self.seed), n, flat_sites)

    def uniforms_grid(self, n: int, n_sites: int) -> np.ndarray:
        return self.uniforms(n, np.arange(n_sites, dtype=np.uint64))

    def __repr__(self) -> str:
        return f"UniformField(seed={self.seed:#018x})"


def uniform_at(field: UniformField, n: int, site: int) -> float:
    """Single U(site, n) value; site is a flattened row-major index."""
    return float(field.uniforms(n, np.asarray([int(site)], dtype=np.uint64))[0])


def splitmix64_mix(value: int) -> int:
    """The splitmix64 finalizer: xor-shift-multiply scramble of 64 bits."""
    z = int(value) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(base: int, index: int) -> int:
    """Child seed number `index` under a base seed.

    splitmix64 stepped (index + 1) gammas past the base, so children are
    decorrelated from each other and from the base seed itself.
    """
    if index < 0:
        raise ValueError(f"derivation index must be >= 0, got {index}")
    return splitmix64_mix(
        (int(base) + (int(index) + 1) * 0x9E3779B97F4A7C15) & _MASK64
    )

def derive_seeds(base: int, count: int) -> np.ndarray:
    """Vectorized derive_seed for indices 0..count-1, as uint64."""
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    gamma = np.uint64(0x9E3779B97F4A7C15)
    with np.errstate(over="ignore"):
        z = np.uint64(int(base) & _MASK64) + (
            np.arange(1, count + 1, dtype=np.uint64) * gamma
        )
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


class StreamRng:
    """Sequential draws addressed by (seed, stream): reproducible numpy stream."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream)
        self._gen = np.random.Generator(
            np.random.Philox(
                np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
            )
        )

    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)

    def __repr__(self) -> str:
        return f"StreamRng(seed={self.seed:#018x}, stream={self.stream})"


def _poisson_by_inversion(mean: float, count: int, rng) -> np.ndarray:
    """Knuth product-of-uniforms inversion; sound for small means."""
    out = np.zeros(count, dtype=np.int64)
    thresh = math.exp(-mean)
    prod = np.asarray(rng.random(count), dtype=np.float64)
    active = prod >= thresh
    # P(N > k) decays factorially; this cap is astronomically beyond reach.
    cap = int(mean + 40.0 * math.sqrt(mean + 1.0) + 50.0)
    for _ in range(cap):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        out[idx] += 1
        prod[idx] *= rng.random(idx.size)
        active[idx] = prod[idx] >= thresh
    else:
        raise RuntimeError("poisson inversion failed to terminate")
    return out

def _poisson_by_rejection(mean: float, count: int, rng) -> np.ndarray:
    """Hormann's PTRS transformed rejection; sound for large means."""
    b = 0.931 + 2.53 * math.sqrt(mean)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    log_mean = math.log(mean)
    lgamma = np.frompyfunc(math.lgamma, 1, 1)
    out = np.empty(count, dtype=np.int64)
    pending = np.arange(count)
    for _ in range(200):
        if pending.size == 0:
            break
        m = pending.size
        u = np.asarray(rng.random(m)) - 0.5
        v = np.asarray(rng.random(m))
        us = 0.5 - np.abs(u)
        k = np.floor((2.0 * a / us + b) * u + mean + 0.43).astype(np.int64)
        accept = (us >= 0.07) & (v <= v_r)
        evaluate = ~accept & (k >= 0) & ((us >= 0.013) | (v <= us))
        if evaluate.any():
            ke = k[evaluate].astype(np.float64)
            lhs = np.log(v[evaluate] * inv_alpha / (a / us[evaluate] ** 2 + b))
            rhs = ke * log_mean - mean - lgamma(ke + 1.0).astype(np.float64)
            acc2 = lhs <= rhs
            sel = np.flatnonzero(evaluate)[acc2]
            out[pending[sel]] = k[sel]
            done_eval = np.zeros(m, dtype=bool)
            done_eval[sel] = True
        else:
            done_eval = np.zeros(m, dtype=bool)
        out[pending[accept]] = k[accept]
        pending = pending[~(accept | done_eval)]
    else:
        raise RuntimeError("poisson rejection failed to terminate")
    return out


def poisson_samples(mean: float, count: int, rng) -> np.ndarray:
    """Poisson(mean) draws as int64, from a sequential uniform source.

    Inversion below mean 10, transformed rejection (PTRS) above; both
    consume only rng.random() so any uniform stream works.
    """
    mean = float(mean)
    if not math.isfinite(mean) or mean < 0.0:
        raise ValueError(f"poisson mean must be finite and >= 0, got {mean}")
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if count == 0 or mean == 0.0:
        return np.zeros(count, dtype=np.int64)
    if mean <= 10.0:
        return _poisson_by_inversion(mean, count, rng)
    return _poisson_by_rejection(mean, count, rng)


def poisson_sample(mean: float, rng) -> int:
    """Single Poisson(mean) draw."""
    return int(poisson_samples(mean, 1, rng)[0])
