"""Counter-based random streams (Philox4x32-10).

Every uniform is a pure function of ``(seed, stream_id, counter)``, so
simulations that assign one stream per trajectory give bit-identical results
under any thread count or evaluation order.
"""

from __future__ import annotations

import os

import numba as nb
import numpy as np

# TBB on this class of hosts is too old for numba and only produces warnings.
nb.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


@nb.njit(inline="always", cache=True)
def _philox_u64(c0, c1, c2, c3, k0, k1):
    # 32-bit words carried in uint64 lanes so that loops over streams vectorise
    for _ in range(10):
        p0 = np.uint64(0xD2511F53) * c0
        p1 = np.uint64(0xCD9E8D57) * c2
        c0, c1, c2, c3 = (p1 >> _S32) ^ c1 ^ k0, p1 & _M32, (p0 >> _S32) ^ c3 ^ k1, p0 & _M32
        k0 = (k0 + np.uint64(0x9E3779B9)) & _M32
        k1 = (k1 + np.uint64(0xBB67AE85)) & _M32
    return c0, c1, c2, c3


@nb.njit(inline="always", cache=True)
def _philox_block(c, st, k):
    return _philox_u64(c & _M32, c >> _S32, st & _M32, st >> _S32, k & _M32, k >> _S32)


def philox_block(counter: int, stream: int, seed: int) -> tuple[int, int, int, int]:
    """Raw 4x32-bit Philox output for a single (counter, stream, seed)."""
    r = _philox_block(np.uint64(counter), np.uint64(stream), np.uint64(seed))
    return tuple(int(v) for v in r)


@nb.njit(inline="always", cache=True)
def _to_uniforms(r0, r1, r2, r3):
    w0 = (r0 << _S32) | r1
    w1 = (r2 << _S32) | r3
    u0 = (np.float64(w0 >> np.uint64(11)) + 0.5) * 1.1102230246251565e-16
    u1 = (np.float64(w1 >> np.uint64(11)) + 0.5) * 1.1102230246251565e-16
    sign = 1.0 - 2.0 * np.float64(w0 & np.uint64(1))
    return u0, u1, sign


@nb.njit(inline="always", cache=True)
def _block_uniforms(counter, stream, seed):
    r0, r1, r2, r3 = _philox_block(counter, stream, seed)
    return _to_uniforms(r0, r1, r2, r3)


@nb.njit(cache=True)
def _fill(seed, stream0, dstream, counter0, dcounter, u0, u1, sign):
    for i in range(u0.shape[0]):
        j = np.uint64(i)
        r0, r1, r2, r3 = _philox_block(counter0 + j * dcounter, stream0 + j * dstream, seed)
        u0[i], u1[i], sign[i] = _to_uniforms(r0, r1, r2, r3)


_ZERO = np.uint64(0)
_ONE = np.uint64(1)


def fill_uniforms(seed, stream0, counter, u0, u1, sign):
    """Fill ``u0, u1, sign`` for streams ``stream0 + i`` at a fixed counter.

    ``u0`` and ``u1`` are uniform on the open interval (0, 1); ``sign`` is a
    fair +-1 taken from a bit not used by ``u0``.
    """
    _fill(np.uint64(seed), np.uint64(stream0), _ONE, np.uint64(counter), _ZERO, u0, u1, sign)


def fill_uniforms_counters(seed, stream, counter0, u0, u1, sign):
    """Same as :func:`fill_uniforms` but along the counter axis of one stream."""
    _fill(np.uint64(seed), np.uint64(stream), _ZERO, np.uint64(counter0), _ONE, u0, u1, sign)


def derive_seed(seed: int, *tags: int) -> int:
    """Deterministically derive a 64-bit seed from ``seed`` and integer tags."""
    key = int(seed) & 0xFFFFFFFFFFFFFFFF
    for tag in tags:
        r = philox_block(int(tag) & 0xFFFFFFFFFFFFFFFF, 0x5EED, key)
        key = (int(r[0]) << 32) | int(r[1])
    return key


def set_threads_from_env() -> int:
    """Apply ``HTEM_THREADS`` to numba's worker pool; returns the count used."""
    wanted = os.environ.get("HTEM_THREADS")
    if not wanted:
        return nb.get_num_threads()
    n = max(1, min(int(wanted), nb.config.NUMBA_NUM_THREADS))
    nb.set_num_threads(n)
    return n


class RngStream:
    """A position in the counter space of ``(seed, stream_id)``.

    Draws advance an internal block counter; copying a stream (``fork``)
    gives an independent cursor over the same sequence.
    """

    __slots__ = ("seed", "stream_id", "counter")

    def __init__(self, seed: int, stream_id: int = 0, counter: int = 0):
        if not (0 <= seed < 2**64 and 0 <= stream_id < 2**64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.counter = int(counter)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"

    def fork(self) -> RngStream:
        return RngStream(self.seed, self.stream_id, self.counter)

    def blocks(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Consume ``n`` counter blocks; return ``(u0, u1, sign)`` arrays."""
        u0 = np.empty(n)
        u1 = np.empty(n)
        sign = np.empty(n)
        if n:
            fill_uniforms_counters(self.seed, self.stream_id, self.counter, u0, u1, sign)
        self.counter += n
        return u0, u1, sign

    def uniform(self, n: int) -> np.ndarray:
        return self.blocks(n)[0]
