"""Nested interval tree with certified gaps, ratios, and endpoint tangency.

The construction: start from the distinguished tangency anchor a = the
positive zero of h_1 and let b be the first zero of h_{K+5} to its right.
Splitting a generation-g interval [a_w, b_w] uses the trace polynomial at
level m = (g + 2) K + 5: the left child keeps a_w and ends at the first zero
of h_m after it, the right child starts at the last zero of h_m before b_w.
Each endpoint carries a tangency germ; before an interval is split the
closeness level of both endpoint pairs at (m - 1, m) is measured, and the
split's minimality label is "certified" only when both are at least close
(the quarter-period localization needs that much and no more).

What full certification buys: when every endpoint pair is strongly
cosine-close, every child/parent width ratio is bounded below by 2.1^-K and
siblings are separated by a genuine gap, giving the dimension lower bound

    dim >= log 2 / (K log 2.1)

for the limit set. All three ingredients are checked on the actual numbers:
strong prefix certificates per endpoint, strict enclosure-level gap
comparisons, and conservative ratio bounds (child widths from inner
enclosure endpoints, parent widths from outer ones) compared exactly
against the rational floor (10/21)^K.

Small-K trees are legitimate exploratory objects: their strong certificates
generally fail (the iterate count K - 4 is too small for the decay to reach
delta_2) and are recorded as problems rather than raised, ratio and gap
checks still run, and the dimension report withholds nothing unless a gap
check fails, since gaps are what the covering bound actually needs.

Precision schedule: the deepest trace level a depth-d build touches is
(d + 2) K + 5, where stable sign queries need roughly 2 K (d + 2) bits;
build_tree raises the working precision to 128 + 2 K (depth + 2) when the
caller's setting is lower.

Anchor sharpness: a germ anchored at an enclosure midpoint off the true
tangency point by u has first rescaled coefficient about 2 * scale(m) * u
at level m, so bisection-level localization (half the working precision)
would poison the vanishing check K levels further down. Fresh zero
enclosures are therefore Newton-polished to ulp-level before germs are
attached; that keeps the low-order coefficients hundreds of bits under
tolerance through every level the build certifies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr, mpq

from .constants import K_DEFAULT
from .germ import (
    Closeness,
    Germ,
    RegularityCheck,
    closeness,
    germ_from_zero,
    initial_germ,
)
from .reals import context, real_str
from .rootfind import (
    Enclosure,
    bracket_point,
    first_zero_after,
    last_zero_before,
    newton_polish,
)
from .tracepoly import ModelParams, eval_trace

__all__ = [
    "CantorNode",
    "CantorTree",
    "TreeCertificateError",
    "GapError",
    "RatioError",
    "build_root",
    "split_node",
    "build_tree",
    "certify_endpoints",
    "dimension_report",
    "effective_precision",
    "split_level",
    "dimension_lower_bound",
]


class TreeCertificateError(ArithmeticError):
    """An endpoint failed its strong closeness certificate (strict mode)."""


class GapError(ArithmeticError):
    """Sibling intervals failed strict disjointness (strict mode)."""


class RatioError(ArithmeticError):
    """A child/parent width ratio fell below the floor (strict mode)."""


def split_level(gen: int, K: int) -> int:
    """Trace level used to split a generation-``gen`` interval."""
    return (gen + 2) * K + 5


def effective_precision(user_bits: int, K: int, depth: int) -> int:
    """Bits for a depth-``depth`` build: at least 128 + 2 K (depth + 2).

    Interval widths shrink by about 2^-K per generation, so locating
    generation-d endpoints to below their own width costs ~2K(d + 2) bits;
    the extra 128 keeps certificates far above the noise floor.
    """
    return max(user_bits, 128 + 2 * K * (depth + 2))


def dimension_lower_bound(K: int) -> float:
    """log 2 / (K log 2.1), the certified Hausdorff/box lower bound."""
    return math.log(2) / (K * math.log(2.1))


_OK_FOR_MINIMALITY = (Closeness.STRONG, Closeness.CLOSE)


@dataclass
class CantorNode:
    """One interval [a, b] of the nested construction.

    Endpoint enclosures and germs always exist. Closeness levels and strong
    certificates at this generation's split level, the width ratio to the
    parent, and the child-gap flag are filled in as they are established.
    """

    word: str
    gen: int
    lo: Enclosure
    hi: Enclosure
    germ_lo: Germ
    germ_hi: Germ
    precision_bits: int
    ratio: mpfr | None = None          # measured |self| / |parent|
    ratio_lower: mpfr | None = None    # conservative from enclosure endpoints
    ratio_ok: bool | None = None       # ratio_lower > 2.1^-K (exact compare)
    level_lo: Closeness | None = None  # closeness at this gen's split pair
    level_hi: Closeness | None = None
    cert_lo: RegularityCheck | None = None   # the strong check, pass or fail
    cert_hi: RegularityCheck | None = None
    gap_ok: bool | None = None         # strict child disjointness; on parents
    children: list["CantorNode"] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def a(self) -> mpfr:
        return self.lo.mid

    @property
    def b(self) -> mpfr:
        return self.hi.mid

    @property
    def width(self) -> mpfr:
        with context(self.precision_bits):
            return self.hi.mid - self.lo.mid

    @property
    def width_lower(self) -> mpfr:
        """Certain width: inner endpoints of the two enclosures."""
        with context(self.precision_bits):
            return self.hi.lo - self.lo.hi

    @property
    def width_upper(self) -> mpfr:
        with context(self.precision_bits):
            return self.hi.hi - self.lo.lo

    @property
    def created_level(self) -> int:
        """Deepest trace index among the endpoint-defining polynomials."""
        return max(self.lo.n, self.hi.n)

    @property
    def left_ratio(self) -> mpfr | None:
        return self.children[0].ratio if self.children else None

    @property
    def right_ratio(self) -> mpfr | None:
        return self.children[-1].ratio if len(self.children) > 1 else None

    @property
    def certs_passed(self) -> bool:
        return bool(
            self.cert_lo is not None
            and self.cert_hi is not None
            and self.cert_lo.passed
            and self.cert_hi.passed
        )

    def label(self) -> str:
        return self.word or "root"

    def to_json_dict(self, *, include_certs: bool = True) -> dict:
        d = {
            "word": self.word,
            "gen": self.gen,
            "lo": self.lo.to_json_dict(),
            "hi": self.hi.to_json_dict(),
            "width": real_str(self.width),
            "germ_lo": self.germ_lo.to_json_dict(),
            "germ_hi": self.germ_hi.to_json_dict(),
            "ratio": None if self.ratio is None else real_str(self.ratio),
            "ratio_lower": (
                None if self.ratio_lower is None else real_str(self.ratio_lower)
            ),
            "ratio_ok": self.ratio_ok,
            "gap_ok": self.gap_ok,
            "closeness_lo": None if self.level_lo is None else self.level_lo.value,
            "closeness_hi": None if self.level_hi is None else self.level_hi.value,
        }
        if include_certs:
            d["cert_lo"] = None if self.cert_lo is None else self.cert_lo.to_json_dict()
            d["cert_hi"] = None if self.cert_hi is None else self.cert_hi.to_json_dict()
        return d


def _flag(problems: list[str] | None, strict: bool, kind, msg: str):
    if strict:
        raise kind(msg)
    if problems is not None:
        problems.append(msg)


def build_root(
    params: ModelParams,
    K: int = K_DEFAULT,
    *,
    certificate_order: int = 40,
    side: str = "right",
) -> CantorNode:
    """Root interval with the anchor zero of h_1 as one endpoint.

    side "right" (the default construction): [a, b] with b the first zero of
    h_{K+5} after the anchor a. side "left" mirrors it: [b, a] with b the
    last zero of h_{K+5} before the anchor. The closeness report of the pair
    (h_{K+4}, h_{K+5}) at the anchor is attached under
    meta["root_closeness"]; the directional search for b is labeled
    minimality-certified only when that level is close or strong.
    """
    if K < 4:
        raise ValueError("K must be >= 4")
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    base = initial_germ(params)
    level, checks = closeness(base, certificate_order, params, k=K)
    anchor_enc = bracket_point(1, base.x0, params)
    search = first_zero_after if side == "right" else last_zero_before
    b_enc = search(
        K + 5,
        base.x0,
        base.scale(K + 5),
        params,
        certified_regular=level in _OK_FOR_MINIMALITY,
    )
    b_enc = newton_polish(b_enc, params, steps=3)
    germ_b = germ_from_zero(K + 5, b_enc, params)
    if side == "right":
        lo, hi, germ_lo, germ_hi = anchor_enc, b_enc, base, germ_b
    else:
        lo, hi, germ_lo, germ_hi = b_enc, anchor_enc, germ_b, base
    node = CantorNode(
        word="",
        gen=0,
        lo=lo,
        hi=hi,
        germ_lo=germ_lo,
        germ_hi=germ_hi,
        precision_bits=params.precision_bits,
    )
    node.meta["root_closeness_level"] = level.value
    node.meta["root_closeness"] = checks[Closeness.STRONG.value]
    node.meta["side"] = side
    return node


def certify_endpoints(
    node: CantorNode,
    params: ModelParams,
    K: int,
    *,
    order: int = 40,
    problems: list[str] | None = None,
    strict: bool = False,
) -> tuple[RegularityCheck, RegularityCheck]:
    """Measure both endpoint pairs at this generation's split level.

    Stores the closeness level and the strong (delta_2, 4) check per
    endpoint (the check object records pass or fail either way) and returns
    the two strong checks. Failures are recorded, not raised, unless strict.
    """
    m = split_level(node.gen, K)
    out = []
    for side, germ in (("lo", node.germ_lo), ("hi", node.germ_hi)):
        k = m - germ.pair[1]
        if k < 0:
            raise ValueError(f"split level {m} below germ pair {germ.pair}")
        level, checks = closeness(germ, order, params, k=k)
        strong = checks[Closeness.STRONG.value]
        strong = replace(
            strong,
            x0=germ.x0,
            rho=germ.scale(m),
            pair=(m - 1, m),
        )
        setattr(node, f"level_{side}", level)
        setattr(node, f"cert_{side}", strong)
        out.append(strong)
        if not strong.passed:
            _flag(
                problems,
                strict,
                TreeCertificateError,
                f"node {node.label()} endpoint {side} is {level.value}, not "
                f"strong, at levels ({m - 1}, {m}); margin "
                f"{real_str(strong.margin)}",
            )
    return out[0], out[1]


def split_node(
    node: CantorNode,
    params: ModelParams,
    K: int = K_DEFAULT,
    *,
    certificate_order: int = 40,
    problems: list[str] | None = None,
    strict: bool = False,
) -> tuple[CantorNode, CantorNode]:
    """Children [a_w, b_{w0}] and [a_{w1}, b_w] cut at the extreme zeros of
    the level-m polynomial, m = (gen + 2) K + 5.

    Ratio and gap assertions are recorded on the nodes (kept and marked,
    never silently dropped); hard search failures propagate as exceptions.
    """
    if node.level_lo is None or node.level_hi is None:
        certify_endpoints(
            node, params, K,
            order=certificate_order, problems=problems, strict=strict,
        )
    m = split_level(node.gen, K)
    regular = (
        node.level_lo in _OK_FOR_MINIMALITY
        and node.level_hi in _OK_FOR_MINIMALITY
    )
    b_new = first_zero_after(
        m, node.germ_lo.x0, node.germ_lo.scale(m), params,
        certified_regular=regular,
    )
    a_new = last_zero_before(
        m, node.germ_hi.x0, node.germ_hi.scale(m), params,
        certified_regular=regular,
    )
    b_new = newton_polish(b_new, params, steps=3)
    a_new = newton_polish(a_new, params, steps=3)
    left = CantorNode(
        word=node.word + "0",
        gen=node.gen + 1,
        lo=node.lo,
        hi=b_new,
        germ_lo=node.germ_lo,
        germ_hi=germ_from_zero(m, b_new, params),
        precision_bits=params.precision_bits,
    )
    right = CantorNode(
        word=node.word + "1",
        gen=node.gen + 1,
        lo=a_new,
        hi=node.hi,
        germ_lo=germ_from_zero(m, a_new, params),
        germ_hi=node.germ_hi,
        precision_bits=params.precision_bits,
    )
    # strict gap: certified right end of the left child left of the
    # certified left end of the right child
    node.gap_ok = bool(b_new.hi < a_new.lo)
    if not node.gap_ok:
        _flag(
            problems, strict, GapError,
            f"children of {node.label()} are not strictly separated",
        )
    floor = mpq(Fraction(10, 21) ** K)
    for child in (left, right):
        with context(params.precision_bits):
            child.ratio = child.width / node.width
            wl = child.width_lower
            wu = node.width_upper
            child.ratio_lower = wl / wu if (wl > 0 and wu > 0) else mpfr(0)
        child.ratio_ok = bool(child.ratio_lower > floor)
        if not child.ratio_ok:
            _flag(
                problems, strict, RatioError,
                f"interval {child.label()}: width ratio lower bound "
                f"{real_str(child.ratio_lower)} under the floor 2.1^-{K}",
            )
    node.children = [left, right]
    return left, right


def build_tree(
    params: ModelParams,
    K: int = K_DEFAULT,
    depth: int = 2,
    *,
    side: str | None = None,
    certificate_order: int = 40,
    strict: bool = False,
    progress=None,
) -> "CantorTree":
    """Full binary tree to ``depth``, on either side of the anchor.

    side "right" (the default) grows the tree to the right of the anchor
    zero of h_1; side "left" builds the mirrored construction to its left.
    Working precision is raised to the schedule 128 + 2K(depth + 2) when the
    caller's is lower. Assertion failures (certificates, ratios, gaps) are
    collected on the returned tree; hard failures (no zero found, unstable
    signs, degenerate germs) raise.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if side not in (None, "left", "right"):
        raise ValueError("side must be None, 'left', or 'right'")
    bits = effective_precision(params.precision_bits, K, depth)
    needed_level = split_level(depth, K)
    eff = params.with_precision(bits)
    if eff.max_level < needed_level:
        eff = ModelParams(
            eff.lam_exact, bits, needed_level + 8, eff.oracle_reverses_word
        )
    tree = CantorTree(
        params=eff,
        K=K,
        depth=depth,
        side=side,
        certificate_order=certificate_order,
    )

    def say(msg):
        if progress is not None:
            progress(msg)

    say(f"root interval at K={K}, {bits} bits")
    root = build_root(
        eff, K, certificate_order=certificate_order, side=side or "right"
    )
    tree.root = root
    tree.generations = [[root]]
    for gen in range(depth):
        nxt: list[CantorNode] = []
        for node in tree.generations[gen]:
            say(f"certify + split {node.label()} (gen {gen})")
            left, right = split_node(
                node, eff, K,
                certificate_order=certificate_order,
                problems=tree.problems, strict=strict,
            )
            nxt.extend([left, right])
        tree.generations.append(nxt)
    for node in tree.generations[depth]:
        say(f"certify leaf {node.label()}")
        certify_endpoints(
            node, eff, K,
            order=certificate_order, problems=tree.problems, strict=strict,
        )
    return tree


@dataclass
class CantorTree:
    """Result container: parameters, per-generation node lists, problems."""

    params: ModelParams
    K: int
    depth: int
    side: str | None = None
    certificate_order: int = 40
    root: CantorNode | None = None
    generations: list[list[CantorNode]] = field(default_factory=list)
    problems: list[str] = field(default_factory=list)

    @classmethod
    def build(cls, params, K=K_DEFAULT, depth=2, **kw) -> "CantorTree":
        return build_tree(params, K, depth, **kw)

    # -- queries -----------------------------------------------------------

    def nodes(self):
        for gen_nodes in self.generations:
            yield from gen_nodes

    def leaves(self) -> list[CantorNode]:
        return self.generations[-1] if self.generations else []

    def endpoint_slots(self, gen: int | None = None):
        """(node, side, Enclosure) per endpoint slot; shared endpoints recur
        across generations by construction."""
        gens = self.generations if gen is None else [self.generations[gen]]
        for gen_nodes in gens:
            for node in gen_nodes:
                yield node, "lo", node.lo
                yield node, "hi", node.hi

    def unique_endpoints(self) -> list[mpfr]:
        seen = {}
        for _, _, enc in self.endpoint_slots():
            seen.setdefault(real_str(enc.mid), enc.mid)
        return sorted(seen.values())

    def ratios(self) -> list[mpfr]:
        return [n.ratio for n in self.nodes() if n.ratio is not None]

    def min_ratio(self) -> mpfr | None:
        vals = self.ratios()
        return min(vals) if vals else None

    def min_ratio_lower(self) -> mpfr | None:
        vals = [n.ratio_lower for n in self.nodes() if n.ratio_lower is not None]
        return min(vals) if vals else None

    def box_scales(self) -> list[mpfr]:
        """One box width per split generation: the geometric midpoint of the
        median widths of consecutive generations.

        Sitting a factor ~2^(K/2) from both generations keeps box counts
        insensitive to grid alignment, which makes the log-log fit stable.
        """
        meds = []
        for gen_nodes in self.generations:
            ws = sorted(n.width for n in gen_nodes)
            meds.append(ws[len(ws) // 2])
        with context(self.params.precision_bits):
            return [
                gmpy2.sqrt(meds[g - 1] * meds[g])
                for g in range(1, len(meds))
            ]

    def gaps_ok(self) -> bool:
        parents = [n for n in self.nodes() if n.children]
        return bool(parents) and all(n.gap_ok for n in parents)

    def certs_ok(self) -> bool:
        return all(n.certs_passed for n in self.nodes())

    def ratios_ok(self) -> bool:
        kids = [n for n in self.nodes() if n.gen > 0]
        return bool(kids) and all(n.ratio_ok for n in kids)

    def verified(self) -> bool:
        return self.certs_ok() and self.gaps_ok() and self.ratios_ok()

    def dimension_report(self) -> dict:
        return dimension_report(self)

    # -- serialization -----------------------------------------------------

    def to_json_dict(self, *, include_certs: bool = True) -> dict:
        return {
            "model": self.params.snapshot(),
            "K": self.K,
            "depth": self.depth,
            "side": self.side,
            "certificate_order": self.certificate_order,
            "root_closeness_level": (
                None if self.root is None
                else self.root.meta.get("root_closeness_level")
            ),
            "generations": [
                [n.to_json_dict(include_certs=include_certs) for n in gen_nodes]
                for gen_nodes in self.generations
            ],
            "dimension": self.dimension_report(),
            "problems": list(self.problems),
        }

    def to_csv_rows(self) -> list[list[str]]:
        rows = [[
            "word", "gen", "a", "b", "width", "ratio", "ratio_lower",
            "ratio_ok", "gap_ok", "closeness_lo", "closeness_hi",
            "cert_lo_passed", "cert_hi_passed",
        ]]
        for node in self.nodes():
            rows.append([
                node.label(),
                str(node.gen),
                real_str(node.a),
                real_str(node.b),
                real_str(node.width),
                "" if node.ratio is None else real_str(node.ratio),
                "" if node.ratio_lower is None else real_str(node.ratio_lower),
                "" if node.ratio_ok is None else str(node.ratio_ok),
                "" if node.gap_ok is None else str(node.gap_ok),
                "" if node.level_lo is None else node.level_lo.value,
                "" if node.level_hi is None else node.level_hi.value,
                "" if node.cert_lo is None else str(node.cert_lo.passed),
                "" if node.cert_hi is None else str(node.cert_hi.passed),
            ])
        return rows

    def plot_data(self, samples_per_node: int = 65) -> list[str]:
        """(x, h_m(x)) sample columns per node, m the node's creating level.

        A node's width is about a quarter period of its creating polynomial,
        so the samples trace one clean arc through the tangency.
        """
        lines = ["# word gen m x h_m(x)"]
        for node in self.nodes():
            m = node.created_level
            with context(self.params.precision_bits):
                a, b = node.a, node.b
                stepw = (b - a) / (samples_per_node - 1)
                for i in range(samples_per_node):
                    x = a + stepw * i if i < samples_per_node - 1 else b
                    h = eval_trace(m, x, self.params, verify=False)
                    lines.append(
                        f"{node.label()} {node.gen} {m} "
                        f"{real_str(x)} {real_str(h)}"
                    )
        return lines


def dimension_report(tree: CantorTree) -> dict:
    """Theoretical bound next to what the measured ratios support.

    empirical_bound = log 2 / (-log min_ratio) over recorded splits. It is
    withheld (None) when any child gap failed its strict check: without gaps
    the two-branch covering bound does not apply at all. Failed ratio or
    certificate checks do not withhold it; they are reported alongside, and
    the caller decides what the numbers are worth (exploratory small-K runs
    land here by design).
    """
    theoretical = dimension_lower_bound(tree.K)
    min_ratio = tree.min_ratio()
    empirical = None
    if tree.gaps_ok() and min_ratio is not None and min_ratio > 0:
        with context(tree.params.precision_bits):
            empirical = float(gmpy2.log(2) / -gmpy2.log(min_ratio))
    min_rl = tree.min_ratio_lower()
    return {
        "K": tree.K,
        "depth": tree.depth,
        "side": tree.side,
        "precision_bits": tree.params.precision_bits,
        "certificates_ok": tree.certs_ok(),
        "gaps_ok": tree.gaps_ok(),
        "ratios_ok": tree.ratios_ok(),
        "theoretical_bound": theoretical,
        "min_ratio": None if min_ratio is None else real_str(min_ratio),
        "min_ratio_lower": None if min_rl is None else real_str(min_rl),
        "empirical_bound": empirical,
        "problems": list(tree.problems),
    }
