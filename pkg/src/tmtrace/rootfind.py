"""Certified zero enclosures for trace polynomials.

Everything here is derivative-free sign-change bisection. An enclosure is
only returned once its bracket's endpoint signs are verified at working
precision AND at doubled precision (the certificate); a sign that cannot be
stabilized within the escalation budget raises UnresolvedWindowError naming
the offending subinterval rather than guessing.

Directional queries (first_zero_after / last_zero_before) take a local
frequency hint s: near a tangency point h_n behaves like 2 cos(s (x - x0)),
so the first zero sits near x0 + (pi/2)/s. The scan steps a fixed fraction
of that predicted quarter period and brackets the first sign change. When a
caller certifies that the relevant pair is close to the cosine model, the
zero's position is additionally checked against the quarter-period window
|s (y - x0) - pi/2| <= delta0 and the enclosure is marked
minimality="certified"; otherwise minimality stays "heuristic" (no sign
change at scan resolution before the bracket).

Multiple zeros (tangential sign-preserving touches) are invisible to sign
scans by nature; windows where a sign cannot be resolved are reported, never
silently skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr

from .constants import DELTA0
from .reals import Real, check_finite, context, real_str
from .tracepoly import ModelParams, eval_trace_dev, trace_jet_dev

__all__ = [
    "Enclosure",
    "ScanPolicy",
    "NotFoundError",
    "UnresolvedWindowError",
    "isolate_zeros",
    "first_zero_after",
    "last_zero_before",
    "bracket_point",
    "newton_polish",
]


class NotFoundError(LookupError):
    """Directional query found no zero within its search span."""


class UnresolvedWindowError(ArithmeticError):
    """A sign could not be stabilized within the escalation budget."""


@dataclass(frozen=True)
class ScanPolicy:
    """Knobs for scanning and refinement.

    step_fraction: scan step as a fraction of the predicted quarter period
    (must be <= 1/4 so a quarter period cannot be stepped over).
    target_width: absolute enclosure width target; None means
    2^-(precision/2) x (local bracket width), so accuracy scales with the
    structure being resolved.
    """

    step_fraction: Fraction = Fraction(1, 8)
    max_escalations: int = 3
    target_width: mpfr | None = None
    span_half_periods: int = 3      # directional search span before giving up
    fallback_samples: int = 1024    # scan resolution without a frequency hint

    def __post_init__(self):
        if not 0 < self.step_fraction <= Fraction(1, 4):
            raise ValueError("step_fraction must be in (0, 1/4]")
        if self.max_escalations < 0:
            raise ValueError("max_escalations must be >= 0")


@dataclass(frozen=True)
class Enclosure:
    """Certified bracket [lo, hi] with sign(h_n(lo)) != sign(h_n(hi)).

    certified means the endpoint signs were re-verified at doubled
    precision. minimality records whether directional callers proved there
    is no earlier zero ("certified" via the quarter-period localization,
    "heuristic" via scan resolution, "n/a" for plain isolation).
    """

    n: int
    lo: mpfr
    hi: mpfr
    precision_bits: int
    certified: bool
    minimality: str = "n/a"
    params_snapshot: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("enclosure needs lo < hi")

    @property
    def width(self) -> mpfr:
        with context(max(self.lo.precision, self.hi.precision)):
            return self.hi - self.lo

    @property
    def mid(self) -> mpfr:
        with context(max(self.lo.precision, self.hi.precision)):
            return (self.lo + self.hi) / 2

    def contains(self, x) -> bool:
        return bool(self.lo <= x <= self.hi)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "lo": real_str(self.lo),
            "hi": real_str(self.hi),
            "width": real_str(self.width),
            "certified": self.certified,
            "minimality": self.minimality,
            "precision_bits": self.precision_bits,
        }


def _noise_floor(n: int, g: mpfr, bits: int) -> mpfr:
    # conservative absolute error of h = g + 2: deviation-space evaluation
    # keeps errors relative to |g| (+2 reassembly), O(n) ulps with slack
    return (abs(g) + 2) * (n + 16) * gmpy2.exp2(-bits + 6)


def _sign_once(n: int, t: mpfr, params: ModelParams, bits: int) -> int | None:
    """Sign of h_n(t) at ``bits``, or None when below the noise floor."""
    with context(bits):
        g = eval_trace_dev(n, t, params, bits=bits)
        h = g + 2
        if abs(h) <= _noise_floor(n, g, bits):
            return None
        return 1 if h > 0 else -1


def _stable_sign(
    n: int,
    t: mpfr,
    params: ModelParams,
    policy: ScanPolicy,
    *,
    what: str = "sample",
) -> int:
    """Sign of h_n(t), escalating precision until resolved."""
    bits = params.precision_bits
    for _ in range(policy.max_escalations + 1):
        s = _sign_once(n, t, params, bits)
        if s is not None:
            return s
        bits *= 2
    raise UnresolvedWindowError(
        f"sign of h_{n} at {what} x={real_str(t)} unresolved at {bits // 2} bits"
    )


def _certify(
    n: int,
    lo: mpfr,
    hi: mpfr,
    params: ModelParams,
    policy: ScanPolicy,
    minimality: str,
) -> Enclosure:
    """Build the enclosure, re-verifying endpoint signs at P and 2P."""
    bits = params.precision_bits
    s_lo = _sign_once(n, lo, params, bits)
    s_hi = _sign_once(n, hi, params, bits)
    s_lo2 = _sign_once(n, lo, params, 2 * bits)
    s_hi2 = _sign_once(n, hi, params, 2 * bits)
    certified = (
        s_lo is not None
        and s_hi is not None
        and s_lo == s_lo2
        and s_hi == s_hi2
        and s_lo != s_hi
    )
    if not certified:
        raise UnresolvedWindowError(
            f"enclosure certificate for h_{n} failed on "
            f"[{real_str(lo)}, {real_str(hi)}]"
        )
    return Enclosure(
        n=n,
        lo=lo,
        hi=hi,
        precision_bits=bits,
        certified=True,
        minimality=minimality,
        params_snapshot=params.snapshot(),
    )


def _bisect(
    n: int,
    lo: mpfr,
    hi: mpfr,
    s_lo: int,
    params: ModelParams,
    policy: ScanPolicy,
    target: mpfr,
    work_bits: int,
) -> tuple[mpfr, mpfr]:
    """Shrink a sign-change bracket below ``target`` width."""
    with context(work_bits):
        width = hi - lo
        while width > target:
            mid = lo + width / 2
            s_mid = _sign_once(n, mid, params, work_bits)
            if s_mid is None:
                # possibly dead on the zero; nudge once, then escalate
                mid = lo + width * mpfr(33) / 64
                s_mid = _sign_once(n, mid, params, work_bits)
            if s_mid is None:
                s_mid = _stable_sign(
                    n, mid, params, policy, what="bisection midpoint"
                )
            if s_mid == s_lo:
                lo = mid
            else:
                hi = mid
            width = hi - lo
    return lo, hi


def _resolve_target(
    policy: ScanPolicy, bracket_width: mpfr, bits: int
) -> mpfr:
    if policy.target_width is not None:
        return policy.target_width
    return bracket_width * gmpy2.exp2(-(bits // 2))


def _directional(
    n: int,
    x0: mpfr,
    scale_hint: mpfr | int,
    params: ModelParams,
    policy: ScanPolicy,
    direction: int,
    certified_regular: bool,
) -> Enclosure:
    params.check_level(n)
    bits = params.precision_bits
    work_bits = bits
    with context(bits):
        x0 = x0 if isinstance(x0, mpfr) else mpfr(x0)
        s = mpfr(scale_hint) if scale_hint else mpfr(0)
        if s < 0:
            raise ValueError("scale_hint must be >= 0")
        if s == 0:
            # local frequency from the order-2 jet at a tangency anchor
            jet = trace_jet_dev(n, x0, 2, params)
            c2 = jet.coeffs[2]
            if c2 < 0:
                s = gmpy2.sqrt(-c2)
        pi = gmpy2.const_pi()
        if s > 0:
            quarter = (pi / 2) / s
            step = quarter * mpfr(
                policy.step_fraction.numerator
            ) / policy.step_fraction.denominator
            n_steps = int(
                2 * policy.span_half_periods / policy.step_fraction
            )
        else:
            # no tangency structure at the anchor: sweep toward the edge of
            # the admissible zero region (approximant spectra live within
            # |x| <= lam + 2 < lam + 3)
            lam = abs(params.lam_real(bits))
            edge = lam + 3
            span = (edge - direction * x0) if direction > 0 else (x0 + edge)
            if span <= 0:
                raise NotFoundError(
                    f"no search span {'right' if direction > 0 else 'left'} of "
                    f"x0={real_str(x0)}"
                )
            step = span / policy.fallback_samples
            n_steps = policy.fallback_samples
        s_prev = _stable_sign(n, x0, params, policy, what="anchor")
        t_prev = x0
        bracket = None
        for i in range(1, n_steps + 1):
            t = x0 + direction * step * i
            s_t = _stable_sign(n, t, params, policy, what=f"scan point {i}")
            if s_t != s_prev:
                bracket = (t_prev, t) if direction > 0 else (t, t_prev)
                break
            t_prev = t
        if bracket is None:
            raise NotFoundError(
                f"no sign change of h_{n} within "
                f"{n_steps} steps {'after' if direction > 0 else 'before'} "
                f"x0={real_str(x0)}"
            )
        lo, hi = bracket
        target = _resolve_target(policy, hi - lo, bits)
        s_lo = _stable_sign(n, lo, params, policy, what="bracket low")
    lo, hi = _bisect(n, lo, hi, s_lo, params, policy, target, work_bits)
    minimality = "heuristic"
    if certified_regular and s > 0:
        with context(bits):
            mid = (lo + hi) / 2
            dev = abs(s * abs(mid - x0) - pi / 2)
            d0 = mpfr(DELTA0.numerator) / DELTA0.denominator
            # quarter-period localization: the cosine model pins the first
            # zero; anything outside the window would not be minimal
            if dev <= d0 * mpfr("1.5"):
                minimality = "certified"
    return _certify(n, lo, hi, params, policy, minimality)


def first_zero_after(
    n: int,
    x0: mpfr,
    scale_hint: mpfr | int,
    params: ModelParams,
    policy: ScanPolicy | None = None,
    *,
    certified_regular: bool = False,
) -> Enclosure:
    """Smallest zero of h_n strictly right of x0, as a certified enclosure.

    scale_hint is the local frequency of h_n at x0 (pass 0 to derive it from
    the order-2 jet, or to fall back to a plain sweep when x0 is not a
    tangency anchor). certified_regular asserts that the caller holds a
    close-to-cosine certificate for the pair ending at h_n, enabling the
    certified minimality label.
    """
    return _directional(
        n, x0, scale_hint, params, policy or ScanPolicy(), +1, certified_regular
    )


def last_zero_before(
    n: int,
    y0: mpfr,
    scale_hint: mpfr | int,
    params: ModelParams,
    policy: ScanPolicy | None = None,
    *,
    certified_regular: bool = False,
) -> Enclosure:
    """Largest zero of h_n strictly left of y0; mirror of first_zero_after."""
    return _directional(
        n, y0, scale_hint, params, policy or ScanPolicy(), -1, certified_regular
    )


def isolate_zeros(
    n: int,
    window: tuple[mpfr, mpfr],
    params: ModelParams,
    policy: ScanPolicy | None = None,
) -> list[Enclosure]:
    """All sign-change zeros of h_n in [lo, hi], sorted, pairwise disjoint.

    The sampling density adapts to the polynomial degree (h_n has at most
    2^n real zeros); tangential zeros without a sign change are out of scope
    for a sign scan and will not be reported.
    """
    params.check_level(n)
    policy = policy or ScanPolicy()
    bits = params.precision_bits
    out: list[Enclosure] = []
    with context(bits):
        lo = window[0] if isinstance(window[0], mpfr) else mpfr(str(window[0]))
        hi = window[1] if isinstance(window[1], mpfr) else mpfr(str(window[1]))
        if not lo < hi:
            raise ValueError("window must satisfy lo < hi")
        samples = max(policy.fallback_samples, 1 << min(n + 2, 14))
        step = (hi - lo) / samples
        t_prev = lo
        s_prev = _stable_sign(n, lo, params, policy, what="window start")
        brackets = []
        for i in range(1, samples + 1):
            t = lo + step * i if i < samples else hi
            s_t = _stable_sign(n, t, params, policy, what=f"window sample {i}")
            if s_t != s_prev:
                brackets.append((t_prev, t, s_prev))
            t_prev, s_prev = t, s_t
    for b_lo, b_hi, s_lo in brackets:
        target = _resolve_target(policy, b_hi - b_lo, bits)
        r_lo, r_hi = _bisect(n, b_lo, b_hi, s_lo, params, policy, target, bits)
        out.append(_certify(n, r_lo, r_hi, params, policy, "n/a"))
    return out


def bracket_point(
    n: int,
    x: mpfr,
    params: ModelParams,
    policy: ScanPolicy | None = None,
) -> Enclosure:
    """Certified enclosure around a known simple zero given to full precision.

    Grows a symmetric bracket from the last few ulps of x outward until the
    signs differ; used to wrap closed-form anchors such as sqrt(2 + lam^2).
    """
    policy = policy or ScanPolicy()
    bits = params.precision_bits
    with context(max(bits, x.precision)):
        eps = max(abs(x), mpfr(1)) * gmpy2.exp2(-min(bits, x.precision) + 4)
        for _ in range(12):
            lo, hi = x - eps, x + eps
            s_lo = _sign_once(n, lo, params, bits)
            s_hi = _sign_once(n, hi, params, bits)
            if s_lo is not None and s_hi is not None and s_lo != s_hi:
                return _certify(n, lo, hi, params, policy, "n/a")
            eps *= 16
    raise UnresolvedWindowError(
        f"no sign change of h_{n} bracketing x={real_str(x)}"
    )


def newton_polish(
    enc: Enclosure,
    params: ModelParams,
    *,
    steps: int = 2,
) -> Enclosure:
    """Optional Newton refinement, run strictly inside the verified bracket.

    Uses a short jet for the derivative. Each iterate is clamped to the
    bracket; the polished point is re-bracketed by a few ulps and the
    certificate re-verified, so failure can only widen back to the input.
    """
    n = enc.n
    bits = params.precision_bits
    with context(max(bits, enc.lo.precision)):
        lo, hi = enc.lo, enc.hi
        x = (lo + hi) / 2
        for _ in range(steps):
            jet = trace_jet_dev(n, x, 2, params)
            deriv = jet.coeffs[1]
            if deriv == 0:
                return enc
            x_next = x - (jet.coeffs[0] + 2) / deriv
            if not (lo < x_next < hi):
                return enc
            x = x_next
        eps = max(abs(x), mpfr(1)) * gmpy2.exp2(-bits + 8)
        for _ in range(8):
            c_lo, c_hi = max(lo, x - eps), min(hi, x + eps)
            s_lo = _sign_once(n, c_lo, params, bits)
            s_hi = _sign_once(n, c_hi, params, bits)
            if s_lo is not None and s_hi is not None and s_lo != s_hi:
                polished = _certify(
                    n, c_lo, c_hi, params, ScanPolicy(), enc.minimality
                )
                return polished if polished.width < enc.width else enc
            eps *= 16
    return enc
