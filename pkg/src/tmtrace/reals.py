"""Arbitrary-precision real plumbing shared by every module.

All numerics run on gmpy2 (MPFR) binary floats. A value's working precision
travels with the value itself (``mpfr.precision``), and every computation
happens inside an explicit precision context so that results are a pure
function of (inputs, precision_bits), with no hidden global state and no
caching across precisions.

The stability policy implemented by :func:`stable_value`: compute at P and
at 2P bits, accept when the two agree to P/2 bits relative, otherwise double
the precision and retry up to a cap. Callers that manage their own error
budgets (bisection sign checks, jet propagation) use :func:`context`
directly and re-verify at doubled precision at the end.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable

import gmpy2
from gmpy2 import mpfr

Real = mpfr

MIN_PRECISION_BITS = 64


class PrecisionError(ArithmeticError):
    """Raised when precision escalation hits its cap without agreement."""


def context(bits: int) -> gmpy2.context:
    """Fresh context at ``bits`` precision, usable as a context manager.

    Full MPFR exponent range so tree-scale jet coefficients (exponents in
    the tens of thousands) never flush to zero or infinity silently.
    """
    if bits < MIN_PRECISION_BITS:
        raise ValueError(f"precision_bits must be >= {MIN_PRECISION_BITS}, got {bits}")
    return gmpy2.context(precision=bits)


def parse_exact(value: str | int | Fraction) -> Fraction:
    """Parse a decimal or rational string to an exact rational.

    Accepts "3", "-1.25", "7/2", Fraction, int. The exact rational is the
    source of truth; binary realization happens per precision context.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a decimal or rational literal: {value!r}") from exc
    raise TypeError(f"cannot parse {type(value).__name__} exactly")


def to_real(value: Fraction | int | str | mpfr, bits: int) -> mpfr:
    """Realize an exact value as a binary float at ``bits`` precision.

    mpfr inputs are NOT re-rounded (they already carry their precision);
    everything else goes through the exact-rational path.
    """
    if isinstance(value, mpfr):
        return value
    frac = parse_exact(value) if not isinstance(value, Fraction) else value
    with context(bits):
        return mpfr(frac.numerator) / mpfr(frac.denominator)


def agrees(a: mpfr, b: mpfr, bits: int) -> bool:
    """True when a and b agree to ``bits`` bits relative.

    Zero is special-cased: if one side is exactly zero the other must be
    at most 2^-bits in absolute value.
    """
    prec = max(a.precision, b.precision, bits + 8)
    with context(prec):
        diff = abs(a - b)
        if diff == 0:
            return True
        if a == 0 or b == 0:
            return diff <= gmpy2.exp2(-bits)
        scale = max(abs(a), abs(b))
        return diff <= scale * gmpy2.exp2(-bits)


def stable_value(
    compute: Callable[[int], mpfr],
    bits: int,
    *,
    max_escalations: int = 3,
) -> tuple[mpfr, int]:
    """Run ``compute`` at P and 2P bits until both runs agree to P/2 bits.

    Returns (value from the 2P run, P actually used). Escalates P by
    doubling up to ``max_escalations`` times, then raises PrecisionError.
    """
    p = bits
    for _ in range(max_escalations + 1):
        lo = compute(p)
        hi = compute(2 * p)
        if agrees(lo, hi, p // 2):
            return hi, p
        p *= 2
    raise PrecisionError(
        f"no agreement to {p // 4} bits after escalating to {p // 2} bits"
    )


def real_str(x: mpfr) -> str:
    """Round-trip decimal string for x at its own precision.

    gmpy2's str() emits enough decimal digits to reconstruct the binary
    value exactly at the same precision.
    """
    return str(x)


def real_from_str(s: str, bits: int) -> mpfr:
    with context(bits):
        return mpfr(s)


def check_finite(x: mpfr, what: str) -> mpfr:
    """Overflow/NaN guard; MPFR's huge exponent range makes this a tripwire
    for genuine logic errors rather than an expected path."""
    if not gmpy2.is_finite(x):
        raise OverflowError(f"non-finite value in {what}")
    return x


def frac_str(q: Fraction) -> str:
    """Exact rational as 'num/den' (den omitted when 1)."""
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"
