"""Shared fixtures and independent test-side oracles.

Test values come from two places: closed forms frozen below as 50-digit
decimal strings (computed once with mpmath at 60 significant digits), and
small mpmath routines that recompute package results through a completely
separate code path. Package sweeps are deterministic: sample points are
exact rationals from a golden-ratio lattice, never a seeded RNG.
"""

from __future__ import annotations

from fractions import Fraction

import gmpy2
import mpmath as mp
import pytest
from gmpy2 import mpfr

from tmtrace import ModelParams
from tmtrace.reals import context, to_real

# 50-digit closed forms, frozen from an mpmath run at dps=60.
FROZEN = {
    "sqrt2": "1.4142135623730950488016887242096980785696718753769",
    "sqrt3": "1.7320508075688772935274463415058723669428052538104",
    "sqrt11": "3.3166247903553998491149327366706866839270885455894",
    # positive zeros of the level-2 polynomial at coupling 0: x^2 = 2 +- sqrt 2
    "h2_zero_inner_lam0": "0.76536686473017954345691996806079773352268912497125",
    "h2_zero_outer_lam0": "1.8477590650225735122563663787935765736448332517273",
    # positive zeros of the level-2 polynomial at coupling 3: x^2 = 11 +- sqrt 38
    "h2_zero_inner_lam3": "2.1989965886810792298705328189405807506237144554425",
    "h2_zero_outer_lam3": "4.1429957763638833391508846782061800566018302378380",
    # tau(lam) = 8 (1 + 2 lam^2) sqrt((1 + lam^2)(2 + lam^2))
    "tau_lam0": "11.313708498984760390413509793677584628557375003016",
    "tau_lam1": "58.787753826796274356734817792941393407182739535760",
    "tau_lam3": "1594.1894492186303514270093407935051496824132236759",
    "dim_bound_140": "0.0066731393491451734002009030234370134200475051397069",
    "ln2_over_ln3": "0.63092975357145743709952711434276085429958564013188",
    "pi_over_2": "1.5707963267948966192313216916397514420985846996876",
}


def frozen(name: str, bits: int = 320) -> mpfr:
    with context(bits):
        return mpfr(FROZEN[name])


GOLDEN_STEP = Fraction(610, 987)  # consecutive Fibonacci numbers


def golden_points(lo: Fraction, hi: Fraction, count: int) -> list[Fraction]:
    """Low-discrepancy exact-rational lattice in [lo, hi]."""
    span = hi - lo
    out = []
    for i in range(1, count + 1):
        t = (i * GOLDEN_STEP) % 1
        out.append(lo + span * t)
    return out


def rel_err(a, b, bits: int = 512) -> mpfr:
    """|a - b| / max(1, |b|) in a wide ambient context."""
    with context(bits):
        return abs(mpfr(a) - mpfr(b)) / max(mpfr(1), abs(mpfr(b)))


def mk_params(lam, bits: int = 256, **kw) -> ModelParams:
    return ModelParams(Fraction(lam), bits, **kw)


def _mp_letter(ch: str, x, lam):
    if ch == "a":
        return (x - lam, mp.mpf(-1), mp.mpf(1), mp.mpf(0))
    return (x + lam, mp.mpf(-1), mp.mpf(1), mp.mpf(0))


def _mp_mul(m, n):
    a, b, c, d = m
    e, f, g, h = n
    return (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)


def mp_trace(n: int, x: Fraction, lam: Fraction, dps: int = 80) -> mp.mpf:
    """Trace of the transfer-matrix product over the level-n substitution
    word, built entirely with mpmath. The independent cross-check route."""
    with mp.workdps(dps):
        xv = mp.mpf(x.numerator) / x.denominator
        lv = mp.mpf(lam.numerator) / lam.denominator
        word = "a"
        for _ in range(n):
            word = "".join("ab" if ch == "a" else "ba" for ch in word)
        acc = (mp.mpf(1), mp.mpf(0), mp.mpf(0), mp.mpf(1))
        for ch in reversed(word):
            acc = _mp_mul(acc, _mp_letter(ch, xv, lv))
        return acc[0] + acc[3]


@pytest.fixture(scope="session")
def params0():
    return mk_params(0)


@pytest.fixture(scope="session")
def params1():
    return mk_params(1)


@pytest.fixture(scope="session")
def params3():
    return mk_params(3)


def exp2(e: int, bits: int = 320) -> mpfr:
    with context(bits):
        return gmpy2.exp2(mpfr(e))
