"""Table-driven arithmetic over GF(2^a), 1 <= a <= 10.

Each field uses the lexicographically smallest primitive polynomial of its
degree (found by search, see ``primitive_polynomial``):

    a=1  0b11           x + 1
    a=2  0b111          x^2 + x + 1
    a=3  0b1011         x^3 + x + 1
    a=4  0b10011        x^4 + x + 1
    a=5  0b100101       x^5 + x^2 + 1
    a=6  0b1000011      x^6 + x + 1
    a=7  0b10000011     x^7 + x + 1
    a=8  0b100011101    x^8 + x^4 + x^3 + x^2 + 1
    a=9  0b1000010001   x^9 + x^4 + 1
    a=10 0b10000001001  x^10 + x^3 + 1

Elements are integers whose binary digits are polynomial coefficients.
"""
from __future__ import annotations

from functools import cache, cached_property

import numpy as np

MAX_BITS = 10


class FieldError(ValueError):
    """Element or field width outside the supported domain."""


def _order_of_x(poly: int, a: int) -> int:
    # multiplicative order of x modulo poly, 0 if x^k never returns to 1
    size = 1 << a
    x = 1
    for k in range(1, size):
        x <<= 1
        if x & size:
            x ^= poly
        if x == 1:
            return k
    return 0


@cache
def primitive_polynomial(a: int) -> int:
    """Smallest degree-``a`` polynomial over GF(2) whose root generates the field."""
    if not 1 <= a <= MAX_BITS:
        raise FieldError(f"field bit-width must be in [1, {MAX_BITS}], got {a}")
    for poly in range(1 << a, 1 << (a + 1)):
        if _order_of_x(poly, a) == (1 << a) - 1:
            return poly
    raise AssertionError("unreachable: primitive polynomials exist for every degree")


class GF:
    """Arithmetic context for GF(2^a). Immutable after construction."""

    def __init__(self, a: int):
        self.a = int(a)
        self.poly = primitive_polynomial(self.a)
        self.size = 1 << self.a
        order = self.size - 1
        exp = np.zeros(2 * order, dtype=np.int64)
        log = np.zeros(self.size, dtype=np.int64)
        x = 1
        for i in range(order):
            exp[i] = x
            log[x] = i
            x <<= 1
            if x & self.size:
                x ^= self.poly
        exp[order:] = exp[:order]
        exp.flags.writeable = False
        log.flags.writeable = False
        self.exp_table = exp
        self.log_table = log

    def __repr__(self):
        return f"GF(2^{self.a}, poly={self.poly:#b})"

    def _check(self, *xs):
        for x in xs:
            if not 0 <= x < self.size:
                raise FieldError(f"{x} is not an element of GF(2^{self.a})")

    def add(self, x: int, y: int) -> int:
        self._check(x, y)
        return x ^ y

    sub = add

    def mul(self, x: int, y: int) -> int:
        self._check(x, y)
        if x == 0 or y == 0:
            return 0
        return int(self.exp_table[self.log_table[x] + self.log_table[y]])

    def inv(self, x: int) -> int:
        self._check(x)
        if x == 0:
            raise FieldError("zero has no multiplicative inverse")
        return int(self.exp_table[(self.size - 1 - self.log_table[x]) % (self.size - 1)])

    def div(self, x: int, y: int) -> int:
        return self.mul(x, self.inv(y))

    @cached_property
    def mul_table(self) -> np.ndarray:
        """Full ``size x size`` product table, used for vectorized work."""
        logs = self.log_table
        table = self.exp_table[(logs[:, None] + logs[None, :]) % (self.size - 1)]
        table[0, :] = 0
        table[:, 0] = 0
        table.flags.writeable = False
        return table

    @cached_property
    def inv_table(self) -> np.ndarray:
        table = np.zeros(self.size, dtype=np.int64)
        nz = np.arange(1, self.size)
        table[nz] = self.exp_table[(self.size - 1 - self.log_table[nz]) % (self.size - 1)]
        table.flags.writeable = False
        return table


@cache
def field(a: int) -> GF:
    """Shared (cached) field context for bit-width ``a``."""
    return GF(a)
