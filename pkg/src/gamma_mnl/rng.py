"""Counter-based random streams.

Every variate is a pure function of ``(seed, scan, unit, tag, index)`` through
the Philox4x32-10 block cipher, so a value never depends on how many draws came
before it, how work is split across threads, or in which order units are
visited.  This is what lets per-observation and per-category updates run as
parallel maps while the chain stays bit-for-bit reproducible.
"""

from __future__ import annotations

import numpy as np

from . import _kernels

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)

# stream tags (third counter word)
TAG_PHI = 1
TAG_MH = 2
TAG_ESS = 3
TAG_ESS_SHRINK = 4

_TWO_PI = 2.0 * np.pi


def philox4x32(counter, key, rounds: int = 10) -> np.ndarray:
    """Philox4x32 block function, vectorized over leading axes.

    ``counter`` has shape ``(..., 4)`` and ``key`` shape ``(2,)`` (or
    broadcastable to ``(..., 2)``); entries are 32-bit words.  Returns a uint32
    array with the same shape as ``counter``.  This is the plain numpy
    version of the cipher the compiled stream kernels use.
    """
    ctr = np.asarray(counter, dtype=np.uint64) & _MASK
    k = np.asarray(key, dtype=np.uint64) & _MASK
    c0, c1, c2, c3 = ctr[..., 0], ctr[..., 1], ctr[..., 2], ctr[..., 3]
    k0, k1 = k[..., 0], k[..., 1]
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = c0 * _M0
        p1 = c2 * _M1
        c0, c1, c2, c3 = (
            (p1 >> _S32) ^ c1 ^ k0,
            p1 & _MASK,
            (p0 >> _S32) ^ c3 ^ k1,
            p0 & _MASK,
        )
    return np.stack([c0, c1, c2, c3], axis=-1).astype(np.uint32)


def seed_to_key(seed: int) -> np.ndarray:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.array([seed & 0xFFFFFFFF, seed >> 32], dtype=np.uint64)


def _flat_counters(scan, unit):
    scan = np.asarray(scan, dtype=np.int64)
    unit = np.asarray(unit, dtype=np.int64)
    shape = np.broadcast_shapes(scan.shape, unit.shape)
    if np.any(scan < 0) or np.any(unit < 0):
        raise ValueError("scan and unit indices must be non-negative")
    return (
        shape,
        np.ascontiguousarray(np.broadcast_to(scan, shape)).ravel(),
        np.ascontiguousarray(np.broadcast_to(unit, shape)).ravel(),
    )


class CounterRNG:
    """Stateless generator keyed by a 64-bit seed.

    ``scan`` and ``unit`` may be scalars or integer arrays that broadcast
    against each other; the outputs carry the broadcast shape plus a trailing
    axis of length ``n``.  Uniforms take 53 bits from two 32-bit words and lie
    strictly inside (0, 1); each cipher block yields two.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.key = seed_to_key(seed)
        self._k0 = np.uint64(self.key[0])
        self._k1 = np.uint64(self.key[1])

    def __repr__(self) -> str:
        return f"CounterRNG(seed={self.seed})"

    def uniform(self, scan, unit, tag: int, n: int, offset: int = 0) -> np.ndarray:
        """``n`` uniforms per (scan, unit), starting ``offset`` (even) variates in."""
        if offset % 2:
            raise ValueError("offset must be even")
        shape, s, u = _flat_counters(scan, unit)
        out = np.empty((s.size, n))
        _kernels.fill_uniform(self._k0, self._k1, s, u, int(tag), int(offset), out)
        return out.reshape(shape + (n,))

    def normal(self, scan, unit, tag: int, n: int, offset: int = 0) -> np.ndarray:
        """Standard normals via Box-Muller; both branches of each pair are used."""
        m = (n + 1) // 2
        u = self.uniform(scan, unit, tag, 2 * m, offset=offset)
        r = np.sqrt(-2.0 * np.log(u[..., 0::2]))
        a = _TWO_PI * u[..., 1::2]
        z = np.stack([r * np.cos(a), r * np.sin(a)], axis=-1)
        z = z.reshape(z.shape[:-2] + (2 * m,))
        return z[..., :n]

    def standard_gamma(self, scan, unit, shape, tag: int = TAG_PHI, max_rounds: int = 64) -> np.ndarray:
        """Gamma(shape, 1) draws by Marsaglia-Tsang; requires shape >= 1.

        Rejection round ``r`` reads its own counter blocks, so one unit's
        rejections never shift another unit's stream.
        """
        scan_b, unit_b, a = np.broadcast_arrays(
            np.asarray(scan, dtype=np.int64),
            np.asarray(unit, dtype=np.int64),
            np.asarray(shape, dtype=np.float64),
        )
        out_shape, s, u = _flat_counters(scan_b, unit_b)
        a = np.ascontiguousarray(a).ravel()
        if np.any(a < 1.0):
            raise ValueError("standard_gamma requires shape >= 1")
        out = np.empty(a.size)
        failed = _kernels.fill_standard_gamma(self._k0, self._k1, s, u, a, int(tag), max_rounds, out)
        if failed:
            raise RuntimeError("gamma rejection sampler did not terminate")
        return out.reshape(out_shape)
