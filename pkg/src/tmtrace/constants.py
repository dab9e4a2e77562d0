"""Exact tolerance ledger shared across modules.

These four constants pin the certificate hierarchy together; the inequalities
among them (verified exactly in germ.verify_constants) are what let a weak
closeness level at one scale imply a strong one a fixed number of doubling
steps later. Everything here is an exact rational so the checks are never a
matter of floating-point luck.
"""

from __future__ import annotations

from fractions import Fraction

# closeness tolerances, loosest to tightest
DELTA0 = Fraction(1, 10**2)
DELTA1 = Fraction(1, 10**4)
DELTA2 = Fraction(1, 10**16)

# doubling steps per construction stage
K_DEFAULT = 140

# geometric decay bases for the coefficient envelopes
BETA_WEAK = 1
BETA_CLOSE = 2
BETA_STRONG = 4

# iteration-bound prefactor: a (1,1)-regular pair's k-th iterate satisfies
# the (ITER_PREFACTOR * 2^(-k/2), 4) envelope for k >= 4
ITER_PREFACTOR = 3200
