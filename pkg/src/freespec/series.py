"""Truncated power series on plain Python lists.

A series is a list ``a`` with ``a[k]`` the coefficient of ``z**k``.  All
routines are generic over the coefficient type, so ``int``,
:class:`fractions.Fraction`, ``float`` and ``complex`` all work; exact
inputs give exact outputs (except :func:`sqrt`, which needs a field with
square roots).
"""
from __future__ import annotations

import cmath
import math
from fractions import Fraction
from typing import Sequence


def _zero(a):
    return a[0] * 0 if a else 0


def _field(a: Sequence) -> list:
    """Promote ints to Fractions so division stays exact."""
    return [Fraction(c) if isinstance(c, int) else c for c in a]


def trunc(a: Sequence, order: int) -> list:
    """First ``order + 1`` coefficients, zero padded."""
    out = list(a[: order + 1])
    z = _zero(a)
    out.extend([z] * (order + 1 - len(out)))
    return out


def add(a: Sequence, b: Sequence, order: int) -> list:
    a, b = trunc(a, order), trunc(b, order)
    return [x + y for x, y in zip(a, b)]


def scale(a: Sequence, c) -> list:
    return [c * x for x in a]


def mul(a: Sequence, b: Sequence, order: int) -> list:
    z = _zero(a) * _zero(b) if a and b else 0
    out = [z] * (order + 1)
    for i, ai in enumerate(a[: order + 1]):
        if ai == 0:
            continue
        for j, bj in enumerate(b[: order + 1 - i]):
            out[i + j] += ai * bj
    return out


def inv(a: Sequence, order: int) -> list:
    """Multiplicative inverse; needs ``a[0] != 0``."""
    if not a or a[0] == 0:
        raise ZeroDivisionError("series has zero constant term")
    a = _field(trunc(a, order))
    out = [1 / a[0]]
    for k in range(1, order + 1):
        s = sum(a[j] * out[k - j] for j in range(1, k + 1))
        out.append(-s * out[0])
    return out


def shift_down(a: Sequence, k: int = 1) -> list:
    """Divide by ``z**k``; the dropped coefficients must vanish."""
    if any(c != 0 for c in a[:k]):
        raise ValueError("series not divisible by z**%d" % k)
    return list(a[k:])


def shift_up(a: Sequence, k: int = 1) -> list:
    return [_zero(a)] * k + list(a)


def compose(a: Sequence, b: Sequence, order: int) -> list:
    """``a(b(z))`` for ``b[0] == 0``, by Horner's rule on series."""
    if b and b[0] != 0:
        raise ValueError("inner series must have zero constant term")
    a = trunc(a, order)
    out = [a[order]] + [_zero(a)] * order
    for k in range(order - 1, -1, -1):
        out = mul(out, b, order)
        out[0] += a[k]
    return out


def revert(a: Sequence, order: int) -> list:
    """Compositional inverse of ``a`` (``a[0] == 0``, ``a[1] != 0``).

    Lagrange inversion: the coefficient of ``z**k`` in the inverse is
    ``(1/k) [u**(k-1)] (u / a(u))**k``.
    """
    a = _field(trunc(a, order + 1))
    if a[0] != 0 or a[1] == 0:
        raise ValueError("reversion needs a[0] == 0 and a[1] != 0")
    phi = inv(a[1:], order)  # u / a(u)
    out = [_zero(a)] * (order + 1)
    pw = [phi[0] / phi[0]] + [_zero(phi)] * order
    for k in range(1, order + 1):
        pw = mul(pw, phi, order)
        out[k] = pw[k - 1] / k
    return out


def sqrt(a: Sequence, order: int) -> list:
    """Square root with the principal value of ``sqrt(a[0])`` as constant term."""
    a = trunc(a, order)
    a0 = a[0]
    if isinstance(a0, complex):
        r0 = cmath.sqrt(a0)
    else:
        if a0 < 0:
            r0 = cmath.sqrt(complex(a0))
        else:
            r0 = math.sqrt(a0)
    if r0 == 0:
        raise ZeroDivisionError("square root of a series with zero constant term")
    out = [r0]
    for k in range(1, order + 1):
        s = sum(out[j] * out[k - j] for j in range(1, k))
        out.append((a[k] - s) / (2 * r0))
    return out


def power(a: Sequence, n: int, order: int) -> list:
    if n < 0:
        return power(inv(a, order), -n, order)
    out = [1] + [0] * order
    base = trunc(a, order)
    while n:
        if n & 1:
            out = mul(out, base, order)
        base = mul(base, base, order)
        n >>= 1
    return out


def evaluate(a: Sequence, z):
    """Horner evaluation; ``z`` may be a scalar or a numpy array."""
    acc = 0 * z
    for c in reversed(list(a)):
        acc = acc * z + c
    return acc
