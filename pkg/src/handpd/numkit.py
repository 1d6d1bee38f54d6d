"""Dense numeric primitives and the seeded random source.

Matrices are plain 2-D ``float64`` numpy arrays (row-major). The random
source is a xorshift64* generator so every fold split, shuffle, dropout
mask and initialization replays bit-for-bit on any platform:

    seed   -> state = splitmix64(seed)   (a zero state is replaced by a constant)
    step   -> x ^= x >> 12; x ^= x << 25; x ^= x >> 27
    output -> (x * 0x2545F4914F6CDD1D mod 2**64) >> 11, scaled by 2**-53 into [0, 1)
"""
import numpy as np

from . import kernels
from .errors import ParameterError, ShapeError

MASK64 = (1 << 64) - 1


def as_matrix(a):
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b):
    """Matrix product with an explicit conformability check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul: left operand is {a.shape[0]}x{a.shape[1]}, "
            f"right operand is {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class Rng:
    """xorshift64* stream; single owner, use :meth:`spawn` for parallel work."""

    def __init__(self, seed=0):
        if seed < 0:
            raise ParameterError("seed must be non-negative")
        state = splitmix64(int(seed) & MASK64)
        self.state = state or 0x9E3779B97F4A7C15

    def random(self, n):
        """``n`` draws in [0, 1)."""
        if n < 0:
            raise ParameterError("draw count must be non-negative")
        out, self.state = kernels.xorshift_uniform(self.state, int(n))
        return out

    def uniform(self, lo, hi, n):
        if not lo < hi:
            raise ParameterError(f"uniform: need lo < hi, got lo={lo}, hi={hi}")
        u = self.random(n)
        out = lo + (hi - lo) * u
        # rounding in lo + (hi-lo)*u can land on hi for u just below 1
        return np.minimum(out, np.nextafter(hi, lo))

    def normal(self, n):
        """Standard normal draws by Box-Muller."""
        m = (n + 1) // 2
        u = self.random(2 * m)
        u1 = 1.0 - u[:m]  # (0, 1], keeps log finite
        r = np.sqrt(-2.0 * np.log(u1))
        th = 2.0 * np.pi * u[m:]
        return np.concatenate([r * np.cos(th), r * np.sin(th)])[:n]

    def randbelow(self, n):
        return int(self.random(1)[0] * n)

    def permutation(self, n):
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.random(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = int(u[k] * (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def spawn(self, n):
        """Independent child generators seeded from this stream."""
        seeds = []
        for _ in range(n):
            out, self.state = kernels.xorshift_uniform(self.state, 1)
            seeds.append(int(out[0] * 2.0**53))
        return [Rng(s) for s in seeds]
