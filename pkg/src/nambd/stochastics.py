"""Seedable random streams and the samplers the Brownian stepper needs.

Two generator families are available:

* ``MersenneTwister`` -- MT19937-64, bit-compatible with ``std::mt19937_64``.
* ``BaselineLcg`` -- the 48-bit linear congruential generator of
  ``java.util.Random`` (multiplier 0x5DEECE66D, addend 11), including its
  seed scrambling and 53-bit ``nextDouble`` construction.

Normals come from the Marsaglia polar method; each accepted pair yields two
variates and the second is cached in the stream.  Rejection makes the number
of uniforms per normal variable, but the sequence is still a pure function
of ``(kind, seed)``.
"""
from __future__ import annotations

import numpy as np

from . import _kernels as K
from . import _numpy_backend as NB
from ._jit import USE_NUMBA
from .errors import NonPositiveRadius
from .model import RngKind, Vec3

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """splitmix64 finaliser: a bijective avalanche mix on 64-bit integers."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replication_seed(master_seed: int, replication_index: int) -> int:
    return mix64((mix64(master_seed) + (replication_index + 1) * GOLDEN_GAMMA) & MASK64)


def replication_seeds(master_seed: int, start: int, count: int) -> np.ndarray:
    """Seeds for replications ``start .. start+count-1`` as a uint64 array."""
    return np.array([replication_seed(master_seed, i) for i in range(start, start + count)],
                    dtype=np.uint64)


def cell_seed(master_seed: int, cell_index: int) -> int:
    return (master_seed ^ mix64(cell_index + GOLDEN_GAMMA)) & MASK64


class RandomStream:
    """A single-owner random stream.

    ``backend`` selects which implementation advances the state ("numba" or
    "numpy"); both produce the same uniform sequence.
    """

    def __init__(self, kind: RngKind | str = RngKind.MERSENNE_TWISTER, seed: int = 5489,
                 backend: str | None = None):
        self.kind = RngKind(kind)
        self.seed = int(seed) & MASK64
        self.backend = backend or ("numba" if USE_NUMBA else "numpy")
        self.state = np.zeros(K.STATE_WORDS, dtype=np.uint64)
        self.spare = np.zeros(2)
        if self.backend == "numba":
            K.seed_stream(self.state, self.spare, self.kind.code, np.uint64(self.seed))
        else:
            st, sp = NB.seed_streams(self.kind.code, [self.seed])
            self.state[:] = st[0]
            self.spare[:] = sp[0]

    def __repr__(self):
        return f"RandomStream({self.kind.value!r}, seed={self.seed}, backend={self.backend!r})"

    def copy(self) -> "RandomStream":
        other = object.__new__(RandomStream)
        other.kind, other.seed, other.backend = self.kind, self.seed, self.backend
        other.state = self.state.copy()
        other.spare = self.spare.copy()
        return other

    @property
    def code(self) -> int:
        return self.kind.code

    def next_u64(self) -> int:
        """Raw 64-bit output (Mersenne Twister only)."""
        if self.kind is not RngKind.MERSENNE_TWISTER:
            raise TypeError("raw 64-bit output is only defined for the Mersenne Twister")
        if self.backend == "numba":
            return int(K.mt_next_u64(self.state))
        return int(NB.mt_u64_bulk(self.state, 1)[0])

    def next_bits(self, bits: int) -> int:
        """``java.util.Random.next(bits)`` as a signed 32-bit value (LCG only)."""
        if self.kind is not RngKind.BASELINE_LCG:
            raise TypeError("next_bits is only defined for the LCG")
        v = int(K.lcg_next_bits(self.state, bits))
        return v - (1 << 32) if bits == 32 and v >= 1 << 31 else v

    def u64s(self, n: int) -> np.ndarray:
        if self.kind is not RngKind.MERSENNE_TWISTER:
            raise TypeError("raw 64-bit output is only defined for the Mersenne Twister")
        if self.backend == "numba":
            out = np.empty(n, dtype=np.uint64)
            K.fill_u64(self.state, out)
            return out
        return NB.mt_u64_bulk(self.state, n)

    def next_uniform(self) -> float:
        if self.backend == "numba":
            return K.next_uniform(self.state, self.code)
        return float(NB.uniform_bulk(self.state, self.code, 1)[0])

    def uniforms(self, n: int) -> np.ndarray:
        if self.backend == "numba":
            out = np.empty(n)
            K.fill_uniform(self.state, self.code, out)
            return out
        return NB.uniform_bulk(self.state, self.code, n)

    def next_standard_normal(self) -> float:
        if self.backend == "numba":
            return K.next_normal(self.state, self.spare, self.code)
        return float(NB.normal_bulk(self.state, self.spare, self.code, 1)[0])

    def standard_normals(self, n: int) -> np.ndarray:
        if self.backend == "numba":
            out = np.empty(n)
            K.fill_normal(self.state, self.spare, self.code, out)
            return out
        return NB.normal_bulk(self.state, self.spare, self.code, n)

    def sphere_points(self, radius: float, n: int) -> np.ndarray:
        if not radius > 0:
            raise NonPositiveRadius(f"sphere radius must be > 0, got {radius}")
        if self.backend == "numba":
            out = np.empty((n, 3))
            K.fill_sphere(self.state, self.spare, self.code, float(radius), out)
            return out
        g = self.standard_normals(3 * n).reshape(n, 3)
        return g * (radius / np.sqrt((g * g).sum(axis=1)))[:, None]


def next_uniform(stream: RandomStream) -> float:
    return stream.next_uniform()


def next_standard_normal(stream: RandomStream) -> float:
    return stream.next_standard_normal()


def sample_uniform_on_sphere(stream: RandomStream, radius: float) -> Vec3:
    """Uniform point on the sphere of the given radius about the origin.

    Three standard normals are drawn and rescaled, so exactly three normal
    variates are consumed per point.
    """
    return Vec3.of(stream.sphere_points(radius, 1)[0])


def derive_replication_stream(master_seed: int, replication_index: int,
                              kind: RngKind | str = RngKind.MERSENNE_TWISTER,
                              backend: str | None = None) -> RandomStream:
    return RandomStream(kind, replication_seed(master_seed, replication_index), backend)
