"""Tangency germs and cosine-closeness certificates.

At a simple zero x0 of h_m (with h_{m+1}(x0) strictly between the fixed
values 0 and 2 avoided), the pair (h_{m+3}, h_{m+4}) is tangent to the value
2 at x0 from below:

    h_{m+4}(x) = 2 - (2 rho)^2 (x - x0)^2 + O((x - x0)^3),
    h_{m+3}(x) = 2 -      rho^2 (x - x0)^2 + O((x - x0)^3),

with rho = sqrt(2 - h_{m+1}(x0)) * |h_m'(x0) h_{m+1}(x0)|. Each recurrence
step doubles the factor exactly: coefficient 2 of the k-th iterate is
4^k times coefficient 2 of the base. A Germ records the anchor, the factor
of its newer element, and the trace-index pair.

Rescaling by the factor turns the pair into candidate approximations of
2 cos: with Q_k(y) = P_k(x0 + y / (2^k rho_pair)), the deviation jet is
Delta_k = Q_k - 2 cos. A pair is (delta, beta)-regular to order N when both
deviation jets have vanishing coefficients 0..2 and |Delta_{.,n}| <=
delta / beta^n for 3 <= n <= N. The three closeness levels are
weak = (1, 1), close = (delta1, 2), strong = (delta2, 4); lower delta and
higher beta are strictly stronger, and regularity is monotone in both.

The exact-rational constants ledger and its inequalities live in
verify_constants; they are what make "iterate a weak germ K steps and get a
strong one" a checked arithmetic fact rather than folklore.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr

from .constants import (
    BETA_CLOSE,
    BETA_STRONG,
    BETA_WEAK,
    DELTA0,
    DELTA1,
    DELTA2,
    ITER_PREFACTOR,
    K_DEFAULT,
)
from .reals import check_finite, context, frac_str, real_str
from .rootfind import Enclosure
from .tracepoly import Jet, ModelParams, trace_jet_pair_dev

__all__ = [
    "Germ",
    "Closeness",
    "RegularityCheck",
    "ConstantsLedger",
    "GermConsistencyError",
    "DegenerateGermError",
    "initial_point",
    "initial_germ",
    "germ_from_zero",
    "rescaled_delta",
    "rescaled_delta_pair",
    "check_regularity",
    "closeness",
    "closeness_from_deltas",
    "verify_constants",
]


class GermConsistencyError(ArithmeticError):
    """The two independent factor computations disagree."""


class DegenerateGermError(ValueError):
    """A germ precondition (nonzero derivative, h_{m+1} not in {0, 2}) failed."""


class Closeness(enum.Enum):
    STRONG = "strong"
    CLOSE = "close"
    WEAK = "weak"
    NONE = "none"


@dataclass(frozen=True)
class Germ:
    """Tangency germ: anchor x0, factor of the newer pair element, indices.

    pair = (i, j) are consecutive trace indices with the j-element carrying
    factor rho and the i-element carrying rho/2. scale(m) extends the exact
    per-index doubling to any index at or above the pair.
    """

    x0: mpfr
    rho: mpfr
    pair: tuple[int, int]
    source_index: int
    precision_bits: int
    margins: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        i, j = self.pair
        if j != i + 1:
            raise ValueError("germ pair must be consecutive trace indices")
        if not (gmpy2.is_finite(self.rho) and self.rho > 0):
            raise ValueError("germ factor must be finite and positive")

    def scale(self, index: int) -> mpfr:
        """Local frequency of h_index at x0: rho * 2^(index - pair[1])."""
        shift = index - self.pair[1]
        if index < self.pair[0]:
            raise ValueError(
                f"index {index} below germ pair base {self.pair[0]}"
            )
        # exponent-only shift; context at rho's own precision keeps it exact
        with context(self.rho.precision):
            if shift >= 0:
                return gmpy2.mul_2exp(self.rho, shift)
            return gmpy2.div_2exp(self.rho, -shift)

    def iterate(self, k: int) -> "Germ":
        """Germ of the pair k steps up the recurrence (factor doubles per step)."""
        if k < 0 and self.pair[0] + k < 1:
            raise ValueError("iterate would go below trace index 1")
        with context(self.rho.precision):
            rho = (
                gmpy2.mul_2exp(self.rho, k)
                if k >= 0
                else gmpy2.div_2exp(self.rho, -k)
            )
        return Germ(
            x0=self.x0,
            rho=rho,
            pair=(self.pair[0] + k, self.pair[1] + k),
            source_index=self.source_index,
            precision_bits=self.precision_bits,
            margins=dict(self.margins),
        )

    def to_json_dict(self) -> dict:
        return {
            "x0": real_str(self.x0),
            "rho": real_str(self.rho),
            "pair": list(self.pair),
            "source_index": self.source_index,
            "precision_bits": self.precision_bits,
        }


@dataclass(frozen=True)
class RegularityCheck:
    """Result of a (delta, beta) prefix check on a deviation-jet pair.

    margin = min over both jets and 3 <= n <= order of delta/beta^n -
    |Delta_n| (>= 0 iff the envelope holds); low_order_max is the largest
    |coefficient| among orders 0..2, which must sit below vanish_tol.
    """

    delta: mpfr
    beta: int
    order_checked: int
    margin: mpfr
    low_order_max: mpfr
    vanish_tol: mpfr
    passed: bool
    x0: mpfr | None = None
    rho: mpfr | None = None
    pair: tuple[int, int] | None = None

    def to_json_dict(self) -> dict:
        d = {
            "delta": real_str(self.delta),
            "beta": self.beta,
            "order_checked": self.order_checked,
            "margin": real_str(self.margin),
            "low_order_max": real_str(self.low_order_max),
            "vanish_tol": real_str(self.vanish_tol),
            "passed": self.passed,
        }
        if self.x0 is not None:
            d["x0"] = real_str(self.x0)
        if self.rho is not None:
            d["rho"] = real_str(self.rho)
        if self.pair is not None:
            d["pair"] = list(self.pair)
        return d


@dataclass(frozen=True)
class ConstantsLedger:
    """The exact tolerance constants and the inequalities tying them together."""

    delta0: Fraction = DELTA0
    delta1: Fraction = DELTA1
    delta2: Fraction = DELTA2
    K: int = K_DEFAULT

    def inequalities(self) -> list[dict]:
        """Each inequality evaluated in exact rational arithmetic.

        The third involves 2^(-(K-4)/2); for odd K that is irrational, so it
        is checked squared: ITER_PREFACTOR^2 * 2^(-(K-4)) < delta2^2.
        """
        checks = []
        lhs1 = 20 * self.delta1
        checks.append(
            {
                "name": "20*delta1 <= delta0",
                "lhs": lhs1,
                "rhs": self.delta0,
                "relation": "<=",
                "holds": lhs1 <= self.delta0,
            }
        )
        lhs2 = Fraction(400) ** 4 * 4 * 3 * self.delta2
        checks.append(
            {
                "name": "400^4 * 4 * 3 * delta2 <= delta1",
                "lhs": lhs2,
                "rhs": self.delta1,
                "relation": "<=",
                "holds": lhs2 <= self.delta1,
            }
        )
        lhs3 = Fraction(ITER_PREFACTOR) ** 2 * Fraction(1, 2 ** (self.K - 4))
        rhs3 = self.delta2**2
        checks.append(
            {
                "name": f"{ITER_PREFACTOR}*2^(-(K-4)/2) < delta2  [squared form]",
                "lhs": lhs3,
                "rhs": rhs3,
                "relation": "<",
                "holds": lhs3 < rhs3,
            }
        )
        return checks


def verify_constants(ledger: ConstantsLedger | None = None) -> dict:
    """Exact-rational verification of the constants ledger.

    Returns a JSON-ready report; every lhs/rhs is an exact fraction string,
    so the result is identical on every machine and precision setting.
    """
    ledger = ledger or ConstantsLedger()
    checks = ledger.inequalities()
    return {
        "constants": {
            "delta0": frac_str(ledger.delta0),
            "delta1": frac_str(ledger.delta1),
            "delta2": frac_str(ledger.delta2),
            "K": ledger.K,
        },
        "checks": [
            {
                "name": c["name"],
                "lhs": frac_str(c["lhs"]),
                "rhs": frac_str(c["rhs"]),
                "relation": c["relation"],
                "holds": c["holds"],
            }
            for c in checks
        ],
        "all_hold": all(c["holds"] for c in checks),
    }


def initial_point(params: ModelParams) -> mpfr:
    """The distinguished simple zero of h_1: sqrt(2 + lam^2)."""
    bits = params.precision_bits
    with context(bits):
        lam = params.lam_real(bits)
        return gmpy2.sqrt(2 + lam * lam)


def germ_from_zero(
    m: int,
    x0: Enclosure,
    params: ModelParams,
    *,
    crosscheck_rel_tol: float = 1e-8,
) -> Germ:
    """Germ of the pair (h_{m+3}, h_{m+4}) at a certified zero of h_m.

    The factor is computed twice, independently: from the closed formula
    rho = sqrt(2 - h_{m+1}) * |h_m' * h_{m+1}| at the enclosure midpoint, and
    from the second-order jet coefficient of h_{m+4} (which must equal
    -(2 rho)^2). Disagreement beyond crosscheck_rel_tol aborts: it means the
    enclosure is not actually resolving a simple zero of h_m.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if x0.n != m:
        raise ValueError(f"enclosure certifies a zero of h_{x0.n}, not h_{m}")
    if not x0.certified:
        raise DegenerateGermError("germ anchor enclosure is not certified")
    bits = params.precision_bits
    mid = x0.mid
    with context(bits):
        if m == 1:
            lam = params.lam_real(bits)
            f0_jet, f1_jet = trace_jet_pair_dev(2, mid, 2, params)
        else:
            f0_jet, f1_jet = trace_jet_pair_dev(m + 1, mid, 2, params)
        f0_deriv = f0_jet.coeffs[1]
        f1_val = f1_jet.coeffs[0] + 2
        # precondition margins; tol tracks both rounding and bracket width
        tol = gmpy2.exp2(-(bits // 2)) * max(mpfr(1), abs(f1_val), abs(f0_deriv))
        margins = {
            "f1_below_2": 2 - f1_val,
            "f1_nonzero": abs(f1_val),
            "deriv_nonzero": abs(f0_deriv),
        }
        for name, value in margins.items():
            if value <= tol:
                raise DegenerateGermError(
                    f"germ precondition {name} fails at x0={real_str(mid)}: "
                    f"margin {real_str(value)} <= tol {real_str(tol)}"
                )
        rho_formula = gmpy2.sqrt(2 - f1_val) * abs(f0_deriv * f1_val)
        factor = 2 * rho_formula
        # independent route: coefficient 2 of h_{m+4} must be -(2 rho)^2
        _, top_jet = trace_jet_pair_dev(m + 4, mid, 2, params)
        c2 = top_jet.coeffs[2]
        if not (gmpy2.is_finite(c2) and c2 < 0):
            raise GermConsistencyError(
                f"coefficient 2 of h_{m + 4} at x0 is {real_str(c2)}, "
                "not a downward tangency"
            )
        rho_jet = gmpy2.sqrt(-c2)
        rel = abs(rho_jet - factor) / factor
        if rel > mpfr(crosscheck_rel_tol):
            raise GermConsistencyError(
                f"germ factor mismatch at x0={real_str(mid)}: formula "
                f"{real_str(factor)} vs jet {real_str(rho_jet)} "
                f"(rel {real_str(rel)}); enclosure too wide or zero not simple"
            )
        margins = {k: real_str(v) for k, v in margins.items()}
        margins["factor_crosscheck_rel"] = real_str(rel)
        return Germ(
            x0=mid,
            rho=factor,
            pair=(m + 3, m + 4),
            source_index=m,
            precision_bits=bits,
            margins=margins,
        )


def initial_germ(params: ModelParams) -> Germ:
    """Base germ at sqrt(2 + lam^2): pair (h_4, h_5) with factor 2 tau,
    tau = 8 (1 + 2 lam^2) sqrt((1 + lam^2)(2 + lam^2))."""
    from .rootfind import bracket_point

    anchor = bracket_point(1, initial_point(params), params)
    return germ_from_zero(1, anchor, params)


def _cos_dev_coeffs(order: int, bits: int) -> list:
    """Coefficients of 2 cos(y) - 2 about 0 up to ``order``."""
    with context(bits):
        out = [mpfr(0)] * (order + 1)
        for n in range(2, order + 1, 2):
            c = mpfr(2) / gmpy2.factorial(n)
            out[n] = c if n % 4 == 0 else -c
        return out


def _delta_from_dev_jet(dev: Jet, scale: mpfr, order: int, bits: int) -> Jet:
    """Rescale a deviation jet by ``scale`` and subtract the cosine model."""
    cos_dev = _cos_dev_coeffs(order, bits)
    with context(bits):
        coeffs = []
        power = mpfr(1)
        for n in range(order + 1):
            q_n = dev.coeffs[n] / power if n else dev.coeffs[0]
            coeffs.append(check_finite(q_n - cos_dev[n], f"Delta coefficient {n}"))
            power = power * scale
        return Jet(mpfr(0), order, tuple(coeffs), bits)


def rescaled_delta(
    k: int,
    germ: Germ,
    order: int,
    params: ModelParams,
) -> Jet:
    """Deviation-from-cosine jet Delta_k of the germ's k-th iterate.

    k >= -1; k = 0 is the germ's newer element itself, k = -1 the older one
    (rescaled by half the factor). The jet lives in the rescaled coordinate
    y = 2^k rho (x - x0) and has order+1 coefficients about 0.
    """
    if k < -1:
        raise ValueError("k must be >= -1")
    if order < 8:
        raise ValueError("rescaled deviation jets need order >= 8")
    index = germ.pair[1] + k
    bits = params.precision_bits
    from .tracepoly import trace_jet_dev

    dev = trace_jet_dev(index, germ.x0, order, params)
    return _delta_from_dev_jet(dev, germ.scale(index), order, bits)


def rescaled_delta_pair(
    k: int,
    germ: Germ,
    order: int,
    params: ModelParams,
) -> tuple[Jet, Jet]:
    """(Delta_{k-1}, Delta_k) in one propagation pass; k >= 0."""
    if k < 0:
        raise ValueError("pair needs k >= 0")
    if order < 8:
        raise ValueError("rescaled deviation jets need order >= 8")
    index = germ.pair[1] + k
    bits = params.precision_bits
    dev_prev, dev_cur = trace_jet_pair_dev(index, germ.x0, order, params)
    return (
        _delta_from_dev_jet(dev_prev, germ.scale(index - 1), order, bits),
        _delta_from_dev_jet(dev_cur, germ.scale(index), order, bits),
    )


def check_regularity(
    delta_pair: tuple[Jet, Jet],
    delta,
    beta: int,
    *,
    order: int | None = None,
    bits: int | None = None,
) -> RegularityCheck:
    """(delta, beta) prefix check on a pair of deviation jets.

    Coefficientwise: orders 0..2 must vanish to tolerance, orders 3..N must
    sit inside the envelope delta / beta^n. The reported margin is the worst
    slack; it is monotone in delta (up) and beta (down), matching the
    regularity partial order.
    """
    d_prev, d_cur = delta_pair
    if d_prev.order != d_cur.order:
        raise ValueError("deviation jets must share their order")
    order = order or d_prev.order
    if order > d_prev.order:
        raise ValueError("requested order exceeds jet order")
    bits = bits or min(d_prev.precision_bits, d_cur.precision_bits)
    with context(bits):
        if isinstance(delta, Fraction):
            delta_r = mpfr(delta.numerator) / delta.denominator
        else:
            delta_r = mpfr(delta)
        if delta_r <= 0 or beta < 1:
            raise ValueError("need delta > 0 and beta >= 1")
        rescale_mag = mpfr(1)
        cos_dev = _cos_dev_coeffs(order, bits)
        for jet in delta_pair:
            for n in range(order + 1):
                rescale_mag = max(rescale_mag, abs(jet.coeffs[n] + cos_dev[n]))
        vanish_tol = gmpy2.exp2(-(bits // 3)) * rescale_mag
        low = max(
            abs(c) for jet in delta_pair for c in jet.coeffs[: min(3, order + 1)]
        )
        margin = None
        envelope = delta_r / mpfr(beta) ** 3
        for n in range(3, order + 1):
            for jet in delta_pair:
                slack = envelope - abs(jet.coeffs[n])
                if margin is None or slack < margin:
                    margin = slack
            envelope = envelope / beta
        if margin is None:  # order < 3: only the vanishing prefix is checkable
            margin = mpfr(0)
        passed = bool(margin >= 0 and low <= vanish_tol)
        return RegularityCheck(
            delta=delta_r,
            beta=int(beta),
            order_checked=order,
            margin=margin,
            low_order_max=low,
            vanish_tol=vanish_tol,
            passed=passed,
        )


def certify_pair(
    germ: Germ,
    k: int,
    delta,
    beta: int,
    order: int,
    params: ModelParams,
) -> RegularityCheck:
    """check_regularity on the germ's k-th iterate pair, with provenance."""
    pair = rescaled_delta_pair(k, germ, order, params)
    check = check_regularity(pair, delta, beta, order=order)
    return RegularityCheck(
        delta=check.delta,
        beta=check.beta,
        order_checked=check.order_checked,
        margin=check.margin,
        low_order_max=check.low_order_max,
        vanish_tol=check.vanish_tol,
        passed=check.passed,
        x0=germ.x0,
        rho=germ.scale(germ.pair[1] + k),
        pair=(germ.pair[0] + k, germ.pair[1] + k),
    )


_LEVELS = (
    (Closeness.STRONG, DELTA2, BETA_STRONG),
    (Closeness.CLOSE, DELTA1, BETA_CLOSE),
    (Closeness.WEAK, Fraction(1), BETA_WEAK),
)


def closeness_from_deltas(
    delta_pair: tuple[Jet, Jet],
    *,
    order: int | None = None,
) -> tuple[Closeness, dict]:
    """Best closeness level a deviation-jet pair satisfies, with all checks."""
    results = {}
    best = Closeness.NONE
    for level, delta, beta in _LEVELS:
        check = check_regularity(delta_pair, delta, beta, order=order)
        results[level.value] = check
        if check.passed and best is Closeness.NONE:
            best = level
    return best, results


def closeness(
    germ: Germ,
    order: int,
    params: ModelParams,
    *,
    k: int = 0,
) -> tuple[Closeness, dict]:
    """Closeness level of the germ's own pair (or its k-th iterate)."""
    pair = rescaled_delta_pair(k, germ, order, params)
    return closeness_from_deltas(pair, order=order)
