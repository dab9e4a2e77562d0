"""Approximant band spectra, tangency-point enumeration, box dimension.

The trace value classifies: |h_n(x)| <= 2 puts x in the level-n band set, a
periodic-approximant stand-in used purely as a cross-check against the
nested-interval construction (no claim about exact spectral equality at
finite n is made or needed). Band edges solve |h_n| = 2 and are refined by
bisection; points where h_n touches +-2 from inside a band are the tangency
points the rest of the package is built on, so they are detected and
reported rather than split on.

sigma_points enumerates certified zeros of h_1..h_{n_max}: each such zero
carries h_k = 2 for all k >= n + 2 and is a point of the limit set. Zeros
of different levels are distinct unless genuinely equal as reals, so
overlap-merging of enclosures is the correct dedup.

box_dimension is a plain log-log box-counting fit over caller-chosen
scales. Counting uses exact floor arithmetic on the working reals; binary64
would collapse distinct deep-level endpoints (they differ by ~2^-K per
generation) into equal doubles and silently undercount.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr

from .reals import context, real_str, to_real
from .rootfind import Enclosure, ScanPolicy, isolate_zeros
from .tracepoly import ModelParams, eval_trace, trace_jet_dev

__all__ = [
    "Band",
    "SigmaSample",
    "approximant_bands",
    "sigma_points",
    "box_dimension",
]

MIN_RESOLUTION = 256
MIN_BOX_POINTS = 100
MIN_BOX_SCALES = 4
MIN_SCALE_DECADES = 2.0


@dataclass(frozen=True)
class Band:
    """Closed maximal subinterval of a window where |h_n| <= 2.

    widened_* marks an edge that could not be certified by sign bisection
    and was rounded outward to the nearest out-sample (conservative: the
    reported band only ever over-covers). truncated_* marks an edge cut by
    the window rather than by |h_n| = 2. tangencies are interior points
    where h_n touches +-2 with vanishing derivative.
    """

    n: int
    lo: mpfr
    hi: mpfr
    precision_bits: int
    widened_lo: bool = False
    widened_hi: bool = False
    truncated_lo: bool = False
    truncated_hi: bool = False
    tangencies: tuple = ()

    @property
    def flagged(self) -> bool:
        return self.widened_lo or self.widened_hi

    @property
    def width(self) -> mpfr:
        with context(self.precision_bits):
            return self.hi - self.lo

    def contains(self, x) -> bool:
        return bool(self.lo <= x <= self.hi)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "lo": real_str(self.lo),
            "hi": real_str(self.hi),
            "widened_lo": self.widened_lo,
            "widened_hi": self.widened_hi,
            "truncated_lo": self.truncated_lo,
            "truncated_hi": self.truncated_hi,
            "tangencies": [real_str(t) for t in self.tangencies],
        }

    def to_csv_row(self) -> list[str]:
        return [str(self.n), real_str(self.lo), real_str(self.hi)]


@dataclass(frozen=True)
class SigmaSample:
    """Certified tangency points of levels 1..n_max inside a window.

    points[i] is the narrowest certifying enclosure; levels[i] lists every
    trace index whose zero enclosure merged into that point.
    """

    points: tuple
    levels: tuple
    n_max: int
    window: tuple
    precision_bits: int

    def __len__(self):
        return len(self.points)

    def mids(self) -> list[mpfr]:
        return [enc.mid for enc in self.points]

    def to_json_dict(self) -> dict:
        return {
            "n_max": self.n_max,
            "window": [real_str(self.window[0]), real_str(self.window[1])],
            "count": len(self.points),
            "points": [
                dict(enc.to_json_dict(), levels=list(lv))
                for enc, lv in zip(self.points, self.levels)
            ],
        }

    def to_csv_rows(self) -> list[list[str]]:
        rows = [["n", "lo", "hi"]]
        for enc, lv in zip(self.points, self.levels):
            rows.append([
                ";".join(str(n) for n in lv),
                real_str(enc.lo),
                real_str(enc.hi),
            ])
        return rows


def _band_value(n: int, x: mpfr, params: ModelParams) -> mpfr:
    """|h_n(x)| - 2 in the ambient context."""
    h = eval_trace(n, x, params, verify=False)
    return abs(h) - 2


def _refine_edge(
    n: int,
    x_out: mpfr,
    x_in: mpfr,
    params: ModelParams,
    bits: int,
    target: mpfr,
):
    """Bisect the inside predicate |h_n| <= 2 between two samples.

    Returns (edge, certified); certified is False only when the iteration
    cap ran out before the bracket reached the target width, in which case
    the caller rounds outward.
    """
    lo, hi = x_out, x_in
    for _ in range(bits + 64):
        if abs(hi - lo) <= target:
            return (lo + hi) / 2, True
        mid = (lo + hi) / 2
        if _band_value(n, mid, params) <= 0:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2, False


def _polish_tangency(
    n: int,
    x: mpfr,
    lo: mpfr,
    hi: mpfr,
    params: ModelParams,
    bits: int,
):
    """Newton on h_n' from x, clamped to [lo, hi]; None if it leaves or stalls."""
    for _ in range(8):
        jet = trace_jet_dev(n, x, 2, params)
        c1, c2 = jet.coeffs[1], jet.coeffs[2]
        if c2 == 0:
            return None
        step = c1 / (2 * c2)
        x_next = x - step
        if not (lo <= x_next <= hi):
            return None
        if abs(step) <= abs(x) * gmpy2.exp2(-bits + 4) + gmpy2.exp2(-4 * bits):
            return x_next
        x = x_next
    return x


def approximant_bands(
    n: int,
    window: tuple,
    params: ModelParams,
    resolution: int = MIN_RESOLUTION,
) -> list[Band]:
    """Maximal closed subintervals of the window where |h_n| <= 2.

    A uniform scan at the given resolution classifies sample points, runs of
    inside samples become candidate bands, and each free edge is refined by
    bisection on |h_n| - 2 down to a 2^(-precision/2) fraction of the
    window. Interior tangencies (local extrema of h_n of height +-2) are
    located from the sampled shape and polished by Newton on the derivative.
    """
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution must be >= {MIN_RESOLUTION}")
    params.check_level(n)
    bits = params.precision_bits
    with context(bits):
        w_lo = to_real(window[0], bits)
        w_hi = to_real(window[1], bits)
        if not w_lo < w_hi:
            raise ValueError("window must have lo < hi")
        span = w_hi - w_lo
        step = span / (resolution - 1)
        xs, hs = [], []
        for i in range(resolution):
            x = w_lo + step * i if i < resolution - 1 else w_hi
            xs.append(x)
            hs.append(eval_trace(n, x, params, verify=False))
        inside = [bool(abs(h) <= 2) for h in hs]

        target = span * gmpy2.exp2(-(bits // 2))
        bands: list[Band] = []
        i = 0
        while i < resolution:
            if not inside[i]:
                i += 1
                continue
            j = i
            while j + 1 < resolution and inside[j + 1]:
                j += 1
            # edges
            truncated_lo = i == 0
            truncated_hi = j == resolution - 1
            widened_lo = widened_hi = False
            if truncated_lo:
                edge_lo = w_lo
            else:
                edge_lo, ok = _refine_edge(
                    n, xs[i - 1], xs[i], params, bits, target
                )
                if not ok:
                    edge_lo, widened_lo = xs[i - 1], True
            if truncated_hi:
                edge_hi = w_hi
            else:
                edge_hi, ok = _refine_edge(
                    n, xs[j + 1], xs[j], params, bits, target
                )
                if not ok:
                    edge_hi, widened_hi = xs[j + 1], True
            # interior tangencies: sampled local extrema reaching toward +-2
            tangencies = []
            for t in range(max(i, 1), min(j, resolution - 2) + 1):
                d_prev = hs[t] - hs[t - 1]
                d_next = hs[t + 1] - hs[t]
                if d_prev * d_next > 0:
                    continue
                if abs(hs[t]) < mpfr(3) / 2:
                    continue
                x_star = _polish_tangency(
                    n, xs[t], xs[t - 1], xs[t + 1], params, bits
                )
                if x_star is None:
                    continue
                h_star = eval_trace(n, x_star, params, verify=False)
                if abs(abs(h_star) - 2) <= gmpy2.exp2(-(bits // 3)):
                    if not any(abs(x_star - u) <= step / 4 for u in tangencies):
                        tangencies.append(x_star)
            bands.append(Band(
                n=n,
                lo=edge_lo,
                hi=edge_hi,
                precision_bits=bits,
                widened_lo=widened_lo,
                widened_hi=widened_hi,
                truncated_lo=truncated_lo,
                truncated_hi=truncated_hi,
                tangencies=tuple(tangencies),
            ))
            i = j + 1
        # merge bands whose refined edges touch or cross (tangency between
        # two runs that a coarse grid separated)
        merged: list[Band] = []
        for band in bands:
            if merged and band.lo <= merged[-1].hi + target:
                prev = merged.pop()
                touch = (prev.hi + band.lo) / 2
                merged.append(Band(
                    n=n,
                    lo=prev.lo,
                    hi=band.hi,
                    precision_bits=bits,
                    widened_lo=prev.widened_lo,
                    widened_hi=band.widened_hi,
                    truncated_lo=prev.truncated_lo,
                    truncated_hi=band.truncated_hi,
                    tangencies=prev.tangencies + (touch,) + band.tangencies,
                ))
            else:
                merged.append(band)
        return merged


def sigma_points(
    n_max: int,
    window: tuple,
    params: ModelParams,
    policy: ScanPolicy | None = None,
) -> SigmaSample:
    """Union of certified zero enclosures of h_1..h_{n_max} in the window.

    Enclosures from different levels that overlap as intervals are merged
    into one point tagged with every contributing level; the narrowest
    enclosure represents the merged point.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    params.check_level(n_max)
    bits = params.precision_bits
    with context(bits):
        w_lo = to_real(window[0], bits)
        w_hi = to_real(window[1], bits)
    if not w_lo < w_hi:
        raise ValueError("window must have lo < hi")
    found: list[tuple[Enclosure, int]] = []
    for n in range(1, n_max + 1):
        for enc in isolate_zeros(n, (w_lo, w_hi), params, policy):
            found.append((enc, n))
    found.sort(key=lambda pair: (pair[0].lo, pair[0].hi))
    points: list[Enclosure] = []
    levels: list[tuple] = []
    for enc, n in found:
        if points and enc.lo <= points[-1].hi:
            prev = points[-1]
            if enc.width < prev.width:
                points[-1] = enc
            levels[-1] = tuple(sorted(set(levels[-1]) | {n}))
        else:
            points.append(enc)
            levels.append((n,))
    return SigmaSample(
        points=tuple(points),
        levels=tuple(levels),
        n_max=n_max,
        window=(w_lo, w_hi),
        precision_bits=bits,
    )


def _as_point_list(points) -> list[mpfr]:
    if isinstance(points, SigmaSample):
        return points.mids()
    out = []
    for p in points:
        if isinstance(p, Enclosure):
            out.append(p.mid)
        else:
            out.append(to_real(p, 256) if not isinstance(p, mpfr) else p)
    return out


def _count_boxes(pts: list[mpfr], lo: mpfr, eps: mpfr) -> int:
    occupied = set()
    for x in pts:
        occupied.add(int(gmpy2.floor((x - lo) / eps)))
    return len(occupied)


def _fit_line(xs: list[float], ys: list[float]):
    m = len(xs)
    mean_x = math.fsum(xs) / m
    mean_y = math.fsum(ys) / m
    sxx = math.fsum((x - mean_x) ** 2 for x in xs)
    if sxx == 0:
        raise ValueError("scales are degenerate (zero spread)")
    sxy = math.fsum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = mean_y - slope * mean_x
    residuals = [y - (intercept + slope * x) for x, y in zip(xs, ys)]
    rms = math.sqrt(math.fsum(r * r for r in residuals) / m)
    return slope, intercept, rms, max(abs(r) for r in residuals)


def box_dimension(points, scales, *, window: tuple | None = None) -> dict:
    """Least-squares box-counting slope over the given scales.

    points: SigmaSample, enclosures, or reals (>= 100 of them, >= 2
    distinct); scales: >= 4 box widths spanning >= 2 decades. Boxes are
    half-open, aligned at the window's left edge; the fit is repeated with
    the grid shifted by half a box and the slope difference reported as the
    alignment sensitivity.
    """
    pts = _as_point_list(points)
    if len(pts) < MIN_BOX_POINTS:
        raise ValueError(f"need at least {MIN_BOX_POINTS} points, got {len(pts)}")
    if len(scales) < MIN_BOX_SCALES:
        raise ValueError(f"need at least {MIN_BOX_SCALES} scales")
    bits = max(64, max(p.precision for p in pts))
    with context(bits):
        eps_list = sorted(
            (s if isinstance(s, mpfr) else to_real(s, bits) for s in scales),
            reverse=True,
        )
        if eps_list[-1] <= 0:
            raise ValueError("scales must be positive")
        if len({real_str(e) for e in eps_list}) != len(eps_list):
            raise ValueError("scales must be distinct")
        decades = float(gmpy2.log10(eps_list[0] / eps_list[-1]))
        if decades < MIN_SCALE_DECADES:
            raise ValueError(
                f"scales span {decades:.2f} decades, need >= {MIN_SCALE_DECADES}"
            )
        if len({real_str(p) for p in pts}) < 2:
            raise ValueError("degenerate point set (all points coincide)")
        if window is None:
            lo = min(pts)
            hi = max(pts)
        else:
            lo = to_real(window[0], bits)
            hi = to_real(window[1], bits)
        if not lo <= min(pts) or not hi >= max(pts):
            raise ValueError("window does not cover the points")

        counts, counts_offset = [], []
        for eps in eps_list:
            counts.append(_count_boxes(pts, lo, eps))
            counts_offset.append(_count_boxes(pts, lo - eps / 2, eps))
        xs = [float(-gmpy2.log(e)) for e in eps_list]
        ys = [math.log(c) for c in counts]
        ys_off = [math.log(c) for c in counts_offset]
    slope, intercept, rms, max_res = _fit_line(xs, ys)
    slope_off, _, _, _ = _fit_line(xs, ys_off)
    return {
        "slope": slope,
        "intercept": intercept,
        "rms_residual": rms,
        "max_residual": max_res,
        "offset_slope": slope_off,
        "alignment_delta": abs(slope - slope_off),
        "counts": [
            [real_str(e), c, co]
            for e, c, co in zip(eps_list, counts, counts_offset)
        ],
        "n_points": len(pts),
        "scale_decades": decades,
        "window": [real_str(lo), real_str(hi)],
    }
