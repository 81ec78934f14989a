"""Portable random streams.

Every random quantity in the package comes from :class:`PortableRNG`, which
reads raw 64-bit words from numpy's Philox4x64-10 counter-based generator and
applies its own fixed transforms (53-bit uniforms, Box-Muller normals,
partial Fisher-Yates sampling).  numpy does not promise that the output of
``Generator.standard_normal`` stays the same across releases; the raw Philox
stream and the transforms below do.
"""

import hashlib

import numpy as np

ALGORITHM = "philox4x64-10/box-muller"

_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def derive_seed(seed, *keys):
    """Combine a master seed with cell/trial keys into an independent seed.

    The result is ``seed XOR blake2b(keys)`` truncated to 64 bits, so it does
    not depend on evaluation order or on Python's salted ``hash``.
    """
    digest = hashlib.blake2b(repr(tuple(keys)).encode(), digest_size=8).digest()
    return (int(seed) ^ int.from_bytes(digest, "little")) & 0xFFFFFFFFFFFFFFFF


class PortableRNG:
    """Seeded stream of uniforms and standard normals.

    Parameters
    ----------
    seed : int
        Non-negative integer, at most 64 bits.
    """

    def __init__(self, seed):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._bitgen = np.random.Philox(seed)

    def raw(self, n):
        return np.asarray(self._bitgen.random_raw(int(n)), dtype=np.uint64)

    def uniform(self, n):
        """``n`` doubles in [0, 1) built from the top 53 bits of each word."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def standard_normal(self, n):
        """``n`` iid N(0, 1) draws by Box-Muller.

        Uniforms are consumed in pairs ``(u1, u2)``; each pair yields
        ``r cos(2 pi u2)`` then ``r sin(2 pi u2)`` with
        ``r = sqrt(-2 log(1 - u1))``.  An odd ``n`` discards the last sine.
        """
        n = int(n)
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = _TWO_PI * u[:, 1]
        z = np.empty((pairs, 2))
        z[:, 0] = r * np.cos(theta)
        z[:, 1] = r * np.sin(theta)
        return z.reshape(-1)[:n]

    def choice(self, n, k):
        """``k`` distinct indices from ``range(n)`` in draw order (partial Fisher-Yates)."""
        n, k = int(n), int(k)
        if not 0 <= k <= n:
            raise ValueError(f"cannot draw {k} distinct items from {n}")
        pool = np.arange(n)
        u = self.uniform(k)
        for i in range(k):
            j = i + int(u[i] * (n - i))
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k].copy()

    def permutation(self, n):
        return self.choice(n, n)
