"""Trace polynomials of the Thue-Morse substitution and their jets.

The substitution is a -> ab, b -> ba. For the two-letter transfer matrices

    T(a) = [[x - lam, -1], [1, 0]],   T(b) = [[x + lam, -1], [1, 0]]

the n-th trace polynomial is h_n(x) = tr T(s^n(a)), where a word's matrix is
the product of its letters' matrices taken right-to-left. h_1 and h_2 have
closed forms and the rest follow the recurrence

    h_{n+1} = h_{n-1}^2 (h_n - 2) + 2          (n >= 2),

which this module evaluates in deviation space: with g = h - 2 the step is
g_{n+1} = (g_{n-1} + 2)^2 g_n, a pure product. Near the tangency structure
every h is exponentially close to 2, and the product form keeps rounding
errors relative (O(n) ulps) instead of amplifying them by 4 per level, which
is what an h-space "+2" absorption does. All deep-index evaluation and all
jets run in deviation space; the +2 is reapplied only on output.

Two independent evaluation routes are kept deliberately separate and are
never allowed to share code: eval_trace (recurrence) and eval_trace_oracle
(explicit transfer-matrix product over the substitution word). Tests and the
acceptance suite compare them bit-for-bit at tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr

from .reals import (
    MIN_PRECISION_BITS,
    Real,
    agrees,
    check_finite,
    context,
    frac_str,
    parse_exact,
    real_str,
)

__all__ = [
    "ModelParams",
    "TransferMatrix",
    "Jet",
    "tm_word",
    "eval_trace",
    "eval_trace_dev",
    "eval_trace_oracle",
    "trace_jet",
    "trace_jet_dev",
    "trace_jet_pair_dev",
]

MAX_WORD_LEVEL = 30     # word length 2^n guard
MAX_ORACLE_LEVEL = 20   # 2^n matrix products guard

_SUB = {ord("a"): "ab", ord("b"): "ba"}


def _ambient_real(x: mpfr | str | int | Fraction) -> mpfr:
    """Realize x in the current context; mpfr values pass through unrounded."""
    if isinstance(x, mpfr):
        return x
    f = parse_exact(x)
    return mpfr(f.numerator) / mpfr(f.denominator)


@dataclass(frozen=True)
class ModelParams:
    """Model parameters: coupling and working precision.

    The coupling is stored as an exact rational (decimal and p/q strings
    parse exactly) and realized in binary per precision context, so changing
    precision re-derives every constant instead of rounding a cached value.
    """

    lam_exact: Fraction
    precision_bits: int = 256
    max_level: int = 2000            # runtime guard for n
    oracle_reverses_word: bool = True  # T(w) = T(w_k)...T(w_1); audit flag

    def __init__(
        self,
        lam: str | int | Fraction | mpfr = 0,
        precision_bits: int = 256,
        max_level: int = 2000,
        oracle_reverses_word: bool = True,
    ):
        if isinstance(lam, mpfr):
            if not gmpy2.is_finite(lam):
                raise ValueError("lambda must be finite")
            lam = Fraction(lam)
        object.__setattr__(self, "lam_exact", parse_exact(lam))
        if precision_bits < MIN_PRECISION_BITS:
            raise ValueError(
                f"precision_bits must be >= {MIN_PRECISION_BITS}, got {precision_bits}"
            )
        object.__setattr__(self, "precision_bits", int(precision_bits))
        object.__setattr__(self, "max_level", int(max_level))
        object.__setattr__(self, "oracle_reverses_word", bool(oracle_reverses_word))

    def lam_real(self, bits: int | None = None) -> mpfr:
        bits = bits or self.precision_bits
        with context(bits):
            return mpfr(self.lam_exact.numerator) / mpfr(self.lam_exact.denominator)

    @property
    def lam(self) -> mpfr:
        return self.lam_real()

    def with_precision(self, bits: int) -> "ModelParams":
        return ModelParams(
            self.lam_exact, bits, self.max_level, self.oracle_reverses_word
        )

    def check_level(self, n: int, what: str = "n") -> int:
        if not isinstance(n, int):
            raise TypeError(f"{what} must be an int, got {type(n).__name__}")
        if n > self.max_level:
            raise ValueError(f"{what}={n} exceeds configured maximum {self.max_level}")
        return n

    def snapshot(self) -> dict:
        return {
            "lambda": frac_str(self.lam_exact),
            "precision_bits": self.precision_bits,
        }


def tm_word(n: int) -> str:
    """n-th substitution iterate of 'a'; length 2^n."""
    if not 0 <= n <= MAX_WORD_LEVEL:
        raise ValueError(f"word level must be in [0, {MAX_WORD_LEVEL}], got {n}")
    word = "a"
    for _ in range(n):
        word = word.translate(_SUB)
    return word


@dataclass(frozen=True)
class TransferMatrix:
    """2x2 real matrix; determinant 1 for the letter matrices."""

    a11: mpfr
    a12: mpfr
    a21: mpfr
    a22: mpfr

    @classmethod
    def identity(cls) -> "TransferMatrix":
        one, zero = mpfr(1), mpfr(0)
        return cls(one, zero, zero, one)

    @classmethod
    def letter(cls, ch: str, x: mpfr, lam: mpfr) -> "TransferMatrix":
        if ch == "a":
            diag = x - lam
        elif ch == "b":
            diag = x + lam
        else:
            raise ValueError(f"letter must be 'a' or 'b', got {ch!r}")
        return cls(diag, mpfr(-1), mpfr(1), mpfr(0))

    def mul(self, other: "TransferMatrix") -> "TransferMatrix":
        return TransferMatrix(
            self.a11 * other.a11 + self.a12 * other.a21,
            self.a11 * other.a12 + self.a12 * other.a22,
            self.a21 * other.a11 + self.a22 * other.a21,
            self.a21 * other.a12 + self.a22 * other.a22,
        )

    def trace(self) -> mpfr:
        return self.a11 + self.a22

    def det(self) -> mpfr:
        return self.a11 * self.a22 - self.a12 * self.a21


def _trace_dev_scalar(n: int, x: mpfr, lam: mpfr) -> mpfr:
    """g_n(x) = h_n(x) - 2 via the product-form recurrence."""
    x2 = x * x
    lam2 = lam * lam
    h1 = x2 - lam2 - 2
    if n == 1:
        return h1 - 2
    g2 = (x2 - lam2) ** 2 - 4 * x2  # h_2 - 2 directly; avoids a +2/-2 round trip
    if n == 2:
        return g2
    gp, gc = g2, h1 * h1 * g2
    for _ in range(n - 3):
        gp, gc = gc, (gp + 2) ** 2 * gc
    return gc


def eval_trace_dev(
    n: int,
    x: mpfr | str | int | Fraction,
    params: ModelParams,
    *,
    bits: int | None = None,
) -> mpfr:
    """h_n(x) - 2 at working precision, computed without the final +2.

    This is the quantity the tangency structure lives on; callers that test
    |h - 2| against tiny tolerances must use it to avoid re-subtracting 2
    from a rounded sum.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    params.check_level(n)
    bits = bits or params.precision_bits
    with context(bits):
        xr = _ambient_real(x)
        lam = params.lam_real(bits)
        return check_finite(_trace_dev_scalar(n, xr, lam), f"h_{n} evaluation")


def eval_trace(
    n: int,
    x: mpfr | str | int | Fraction,
    params: ModelParams,
    *,
    verify: bool = True,
) -> mpfr:
    """h_n(x) via the trace recurrence.

    With verify=True (the default) the value is recomputed at doubled
    precision and must agree to precision_bits/2 relative; disagreement
    raises PrecisionError. Bulk callers that certify results separately
    (root scans) pass verify=False.
    """
    bits = params.precision_bits
    with context(bits):
        value = eval_trace_dev(n, x, params) + 2
    if verify:
        from .reals import PrecisionError

        with context(2 * bits):
            value2 = eval_trace_dev(n, x, params, bits=2 * bits) + 2
        if not agrees(value, value2, bits // 2):
            raise PrecisionError(
                f"h_{n} evaluation unstable under precision doubling at {bits} bits"
            )
    return value


def eval_trace_oracle(
    n: int,
    x: mpfr | str | int | Fraction,
    params: ModelParams,
) -> mpfr:
    """h_n(x) by explicit transfer-matrix product over the substitution word.

    Independent of the recurrence on purpose: this is the cross-check route.
    Cost is 2^n matrix products. n = 0 is the single letter 'a'.
    """
    if not 0 <= n <= MAX_ORACLE_LEVEL:
        raise ValueError(f"oracle level must be in [0, {MAX_ORACLE_LEVEL}], got {n}")
    bits = params.precision_bits
    with context(bits):
        xr = _ambient_real(x)
        lam = params.lam_real(bits)
        word = tm_word(n)
        acc = TransferMatrix.identity()
        letters = {
            "a": TransferMatrix.letter("a", xr, lam),
            "b": TransferMatrix.letter("b", xr, lam),
        }
        seq = reversed(word) if params.oracle_reverses_word else iter(word)
        for ch in seq:
            acc = acc.mul(letters[ch])
        return check_finite(acc.trace(), f"oracle h_{n}")


@dataclass(frozen=True)
class Jet:
    """Truncated power series about a center: sum coeffs[k] (x-center)^k."""

    center: mpfr
    order: int
    coeffs: tuple[mpfr, ...]
    precision_bits: int

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("jet order must be >= 0")
        if len(self.coeffs) != self.order + 1:
            raise ValueError(
                f"jet of order {self.order} needs {self.order + 1} coefficients, "
                f"got {len(self.coeffs)}"
            )

    def coeff(self, k: int) -> mpfr:
        return self.coeffs[k]

    def evaluate(self, dx: mpfr) -> mpfr:
        """Horner evaluation of the truncated series at center + dx."""
        with context(self.precision_bits):
            acc = mpfr(0)
            for c in reversed(self.coeffs):
                acc = acc * dx + c
            return acc

    def to_json_dict(self) -> dict:
        return {
            "center": real_str(self.center),
            "order": self.order,
            "coeffs": [real_str(c) for c in self.coeffs],
            "precision_bits": self.precision_bits,
        }


def _jet_mul(a: list, b: list, order: int) -> list:
    """Truncated convolution; plain quadratic loop, precision from context."""
    zero = mpfr(0)
    out = [zero] * (order + 1)
    for i in range(order + 1):
        ai = a[i]
        if ai == 0:
            continue
        for j in range(order + 1 - i):
            bj = b[j]
            if bj == 0:
                continue
            out[i + j] = out[i + j] + ai * bj
    return out


def _jet_sqr(a: list, order: int) -> list:
    """Truncated square; exploits symmetry for ~2x fewer multiplications."""
    zero = mpfr(0)
    out = [zero] * (order + 1)
    for i in range(order + 1):
        ai = a[i]
        if ai == 0:
            continue
        t = ai * ai
        if 2 * i <= order:
            out[2 * i] = out[2 * i] + t
        for j in range(i + 1, min(order - i, order) + 1):
            bj = a[j]
            if bj == 0:
                continue
            t = ai * bj
            out[i + j] = out[i + j] + t + t
    return out


def _trace_dev_jet(n: int, c: mpfr, lam: mpfr, order: int) -> list:
    """Coefficient list of h_n - 2 about c, truncated at ``order``.

    Same deviation-space recurrence as the scalar route; only coefficient 0
    carries the +2 shift when a previous-level h is reconstructed.
    """
    lam2 = lam * lam
    # jet of x^2 about c, truncated
    u2 = [c * c, 2 * c, mpfr(1)][: order + 1]
    u2 += [mpfr(0)] * (order + 1 - len(u2))
    h1 = list(u2)
    h1[0] = h1[0] - lam2 - 2
    if n == 1:
        g1 = list(h1)
        g1[0] = g1[0] - 2
        return g1
    a = list(u2)
    a[0] = a[0] - lam2
    g2 = _jet_sqr(a, order)
    for k in range(min(2, order) + 1):
        g2[k] = g2[k] - 4 * u2[k]
    if n == 2:
        return g2
    gp, gc = g2, _jet_mul(_jet_sqr(h1, order), g2, order)
    for _ in range(n - 3):
        h = list(gp)
        h[0] = h[0] + 2
        gp, gc = gc, _jet_mul(_jet_sqr(h, order), gc, order)
    return gc


def _dev_jet_pair(
    n: int, c: mpfr, lam: mpfr, order: int
) -> tuple[list, list]:
    """(h_{n-1} - 2, h_n - 2) jets about c in one propagation pass."""
    if n < 2:
        raise ValueError("pair needs n >= 2")
    if n == 2:
        return (
            _trace_dev_jet(1, c, lam, order),
            _trace_dev_jet(2, c, lam, order),
        )
    lam2 = lam * lam
    u2 = [c * c, 2 * c, mpfr(1)][: order + 1]
    u2 += [mpfr(0)] * (order + 1 - len(u2))
    h1 = list(u2)
    h1[0] = h1[0] - lam2 - 2
    a = list(u2)
    a[0] = a[0] - lam2
    g2 = _jet_sqr(a, order)
    for k in range(min(2, order) + 1):
        g2[k] = g2[k] - 4 * u2[k]
    gp, gc = g2, _jet_mul(_jet_sqr(h1, order), g2, order)
    for _ in range(n - 3):
        h = list(gp)
        h[0] = h[0] + 2
        gp, gc = gc, _jet_mul(_jet_sqr(h, order), gc, order)
    return gp, gc


def trace_jet_dev(
    n: int,
    center: mpfr,
    order: int,
    params: ModelParams,
    *,
    bits: int | None = None,
) -> Jet:
    """Jet of h_n - 2 about ``center`` to ``order``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    params.check_level(n)
    if order < 0:
        raise ValueError("order must be >= 0")
    bits = bits or params.precision_bits
    with context(bits):
        lam = params.lam_real(bits)
        coeffs = _trace_dev_jet(n, center, lam, order)
        for k, cf in enumerate(coeffs):
            check_finite(cf, f"jet coefficient {k} of h_{n}")
        return Jet(center, order, tuple(coeffs), bits)


def trace_jet(
    n: int,
    center: mpfr,
    order: int,
    params: ModelParams,
    *,
    verify: bool = True,
) -> Jet:
    """Jet of h_n about ``center`` to ``order``.

    verify=True recomputes at doubled precision and requires coefficientwise
    agreement to precision_bits/2 relative.
    """
    bits = params.precision_bits
    dev = trace_jet_dev(n, center, order, params)
    with context(bits):
        coeffs = list(dev.coeffs)
        coeffs[0] = coeffs[0] + 2
    jet = Jet(center, order, tuple(coeffs), bits)
    if verify:
        from .reals import PrecisionError

        dev2 = trace_jet_dev(n, center, order, params, bits=2 * bits)
        with context(2 * bits):
            c0 = dev2.coeffs[0] + 2
            # tangency centers cancel single coefficients all the way to the
            # noise floor, so "agrees" is relative to the jet's own scale
            mag = max(max(abs(c) for c in jet.coeffs), mpfr(1))
            floor = mag * gmpy2.exp2(-(bits // 2))
            refs = [c0, *dev2.coeffs[1:]]
            for k, (ours, ref) in enumerate(zip(jet.coeffs, refs)):
                if agrees(ours, ref, bits // 2) or abs(ours - ref) <= floor:
                    continue
                raise PrecisionError(
                    f"jet of h_{n}: coefficient {k} unstable under "
                    "precision doubling"
                )
    return jet


def trace_jet_pair_dev(
    n: int,
    center: mpfr,
    order: int,
    params: ModelParams,
    *,
    bits: int | None = None,
) -> tuple[Jet, Jet]:
    """Jets of (h_{n-1} - 2, h_n - 2) about ``center`` in one pass.

    The recurrence walks through every intermediate level anyway, so
    consecutive pairs come at the cost of one propagation. This is the
    workhorse for regularity certificates.
    """
    if n < 2:
        raise ValueError(f"pair needs n >= 2, got {n}")
    params.check_level(n)
    bits = bits or params.precision_bits
    with context(bits):
        lam = params.lam_real(bits)
        prev, cur = _dev_jet_pair(n, center, lam, order)
        for k, cf in enumerate(cur):
            check_finite(cf, f"jet coefficient {k} of h_{n}")
        return (
            Jet(center, order, tuple(prev), bits),
            Jet(center, order, tuple(cur), bits),
        )
