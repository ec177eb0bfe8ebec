"""64-bit linear congruential generator shared by noise init and weight init.

The generator is fixed (rather than delegating to numpy's bit generators) so
that a given seed yields the same noise image and the same default network
on every platform and in every implementation of the format.
"""

import numpy as np

MULTIPLIER = 6364136223846793005
INCREMENT = 1442695040888963407
_MASK64 = (1 << 64) - 1
_BLOCK = 4096


def _affine_table(length):
    # k-step maps state -> mult[k-1] * state + add[k-1] (mod 2**64), k = 1..length
    mult = np.empty(length, dtype=np.uint64)
    add = np.empty(length, dtype=np.uint64)
    m, a = 1, 0
    for k in range(length):
        m = (m * MULTIPLIER) & _MASK64
        a = (a * MULTIPLIER + INCREMENT) & _MASK64
        mult[k] = m
        add[k] = a
    return mult, add


_TABLE = _affine_table(_BLOCK)


class Lcg64:
    """x <- x * 6364136223846793005 + 1442695040888963407 (mod 2**64).

    Each draw advances the state once and emits its high 32 bits.
    """

    def __init__(self, seed):
        self.state = int(seed) & _MASK64

    def next_u32(self, n):
        out = np.empty(n, dtype=np.uint64)
        mult, add = _TABLE
        pos = 0
        with np.errstate(over="ignore"):
            while pos < n:
                k = min(_BLOCK, n - pos)
                s = np.uint64(self.state)
                block = mult[:k] * s + add[:k]
                out[pos:pos + k] = block
                self.state = int(block[-1])
                pos += k
        return (out >> np.uint64(32)).astype(np.uint32)

    def uniform(self, n):
        """Draws in [0, 1): high word divided by 2**32."""
        return self.next_u32(n).astype(np.float64) / 4294967296.0

    def centered(self, n):
        """Draws in (-1, 1), symmetric about zero."""
        u = (self.next_u32(n).astype(np.float64) + 0.5) / 4294967296.0
        return 2.0 * u - 1.0
