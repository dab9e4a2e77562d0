"""Tangency germs, rescaled deviation jets, and regularity certificates.

The base germ's factor has the closed form 8 (1 + 2 lam^2) sqrt((1 + lam^2)
(2 + lam^2)); frozen 50-digit values of that expression are the oracle here.
Envelope checks are exercised both on synthetic jets (where the expected
margin is exact) and on real trace data.
"""

from fractions import Fraction

import gmpy2
import pytest
from gmpy2 import mpfr

from conftest import frozen, mk_params, rel_err
from tmtrace.constants import (
    BETA_STRONG,
    DELTA0,
    DELTA1,
    DELTA2,
    ITER_PREFACTOR,
)
from tmtrace.germ import (
    Closeness,
    DegenerateGermError,
    Germ,
    certify_pair,
    check_regularity,
    closeness,
    closeness_from_deltas,
    germ_from_zero,
    initial_germ,
    initial_point,
    rescaled_delta,
    rescaled_delta_pair,
    verify_constants,
)
from tmtrace.reals import context
from tmtrace.rootfind import Enclosure, first_zero_after, newton_polish
from tmtrace.tracepoly import Jet, eval_trace_dev, trace_jet_dev


# -- anchor point and base germ ----------------------------------------------


@pytest.mark.parametrize(
    "lam,name",
    [(0, "sqrt2"), (1, "sqrt3"), (3, "sqrt11")],
)
def test_initial_point_closed_form(lam, name):
    params = mk_params(lam)
    a = initial_point(params)
    assert rel_err(a, frozen(name)) <= mpfr("1e-48")
    dev = eval_trace_dev(1, a, params)
    with context(512):
        assert abs(dev + 2) <= gmpy2.exp2(-240)


@pytest.mark.parametrize(
    "lam,name",
    [(0, "tau_lam0"), (1, "tau_lam1"), (3, "tau_lam3")],
)
def test_initial_germ_factor_closed_form(lam, name):
    germ = initial_germ(mk_params(lam))
    assert germ.pair == (4, 5)
    assert germ.source_index == 1
    with context(512):
        half = germ.rho / 2
    assert rel_err(half, frozen(name)) <= mpfr("1e-40")


def test_initial_germ_margins_recorded(params3):
    germ = initial_germ(params3)
    assert {
        "f1_below_2",
        "f1_nonzero",
        "deriv_nonzero",
        "factor_crosscheck_rel",
    } <= set(germ.margins)
    assert float(germ.margins["factor_crosscheck_rel"]) <= 1e-8


def test_factor_matches_jet_curvature(params3):
    """Second jet coefficient at the anchor is minus the squared factor."""
    germ = initial_germ(params3)
    jet = trace_jet_dev(5, germ.x0, 2, params3)
    with context(512):
        assert rel_err(jet.coeffs[2], -(germ.rho**2)) <= mpfr("1e-10")


def test_curvature_tracks_scale_squared(params3):
    germ = initial_germ(params3)
    for level in range(5, 11):
        jet = trace_jet_dev(level, germ.x0, 2, params3)
        s = germ.scale(level)
        with context(512):
            assert rel_err(abs(jet.coeffs[2]), s * s) <= mpfr("1e-10")


# -- scale and iterate bookkeeping --------------------------------------------


def test_scale_doubles_exactly(params3):
    germ = initial_germ(params3)
    assert germ.scale(5) == germ.rho
    with context(germ.rho.precision):
        assert germ.scale(6) == gmpy2.mul_2exp(germ.rho, 1)
        assert germ.scale(4) == gmpy2.div_2exp(germ.rho, 1)
        assert germ.scale(25) == gmpy2.mul_2exp(germ.rho, 20)
    with pytest.raises(ValueError):
        germ.scale(3)


def test_iterate_shifts_pair_and_factor(params3):
    germ = initial_germ(params3)
    up = germ.iterate(2)
    assert up.pair == (6, 7)
    assert up.x0 == germ.x0
    with context(germ.rho.precision):
        assert up.rho == gmpy2.mul_2exp(germ.rho, 2)
    back = up.iterate(-2)
    assert back.pair == germ.pair
    assert back.rho == germ.rho
    with pytest.raises(ValueError):
        germ.iterate(-4)  # pair base would drop below the first trace index


def test_germ_validation(params3):
    germ = initial_germ(params3)
    with pytest.raises(ValueError):
        Germ(germ.x0, germ.rho, (4, 6), 1, 256)
    with pytest.raises(ValueError):
        Germ(germ.x0, mpfr(0), (4, 5), 1, 256)


def test_germ_json_schema(params3):
    d = initial_germ(params3).to_json_dict()
    assert {"x0", "rho", "pair", "source_index", "precision_bits"} <= set(d)
    assert d["pair"] == [4, 5]


# -- rescaled deviation jets ---------------------------------------------------


def test_base_pair_low_orders_vanish(params3):
    d_prev, d_cur = rescaled_delta_pair(0, initial_germ(params3), 12, params3)
    with context(512):
        for jet in (d_prev, d_cur):
            for c in jet.coeffs[:3]:
                assert abs(c) <= mpfr("1e-20")


def test_solo_delta_matches_pair_route(params3):
    germ = initial_germ(params3)
    solo = rescaled_delta(-1, germ, 10, params3)
    paired = rescaled_delta_pair(0, germ, 10, params3)[0]
    with context(512):
        for a, b in zip(solo.coeffs, paired.coeffs):
            assert abs(a - b) <= gmpy2.exp2(-200) * max(1, abs(b))


def test_delta_guards(params3):
    germ = initial_germ(params3)
    with pytest.raises(ValueError):
        rescaled_delta(-2, germ, 10, params3)
    with pytest.raises(ValueError):
        rescaled_delta(0, germ, 4, params3)
    with pytest.raises(ValueError):
        rescaled_delta_pair(-1, germ, 10, params3)


def test_delta_coefficients_decay_along_iterates(params3):
    germ = initial_germ(params3)
    for k in range(1, 6):
        pair = rescaled_delta_pair(2 * k, germ, 12, params3)
        with context(512):
            worst = max(abs(c) for jet in pair for c in jet.coeffs[3:])
            assert worst <= gmpy2.exp2(-k)


# -- regularity checks ----------------------------------------------------------


@pytest.mark.parametrize("lam", [0, 1, 3])
def test_base_pair_weak_regularity_order_40(lam):
    params = mk_params(lam)
    check = certify_pair(initial_germ(params), 0, Fraction(1), 1, 40, params)
    assert check.passed
    assert check.margin >= 0


@pytest.mark.parametrize("k", [4, 6])
def test_iterate_envelope(params3, k):
    germ = initial_germ(params3)
    with context(256):
        delta = mpfr(ITER_PREFACTOR) * gmpy2.exp2(mpfr(-k) / 2)
    check = certify_pair(germ, k, delta, BETA_STRONG, 40, params3)
    assert check.passed


def test_zero_jets_give_exact_margin():
    with context(128):
        coeffs = [mpfr(0)] * 9
        z = Jet(mpfr(0), 8, coeffs, 128)
    check = check_regularity((z, z), Fraction(1, 4), 2)
    assert check.passed
    assert check.low_order_max == 0
    # the tightest slack sits at the top order: delta / beta^order, exact
    # here because halving is exact in binary
    assert check.margin == gmpy2.exp2(-10)


def test_regularity_monotone_in_delta_and_beta(params3):
    pair = rescaled_delta_pair(8, initial_germ(params3), 16, params3)
    deltas = [Fraction(1, 1000), Fraction(1, 100), Fraction(1, 10), 1, 10]
    betas = [1, 2, 3, 4, 6]
    table = {
        (d, b): check_regularity(pair, d, b).passed for d in deltas for b in betas
    }
    for di, d in enumerate(deltas):
        for bi, b in enumerate(betas):
            if not table[(d, b)]:
                continue
            # weaker requirements must also pass
            for d2 in deltas[di:]:
                for b2 in betas[: bi + 1]:
                    assert table[(d2, b2)], (d, b, d2, b2)


def test_corrupted_jet_fails_all_levels(params3):
    d_prev, d_cur = rescaled_delta_pair(0, initial_germ(params3), 10, params3)
    with context(d_cur.precision_bits):
        bad = list(d_cur.coeffs)
        bad[3] = mpfr(2)
        corrupt = Jet(d_cur.center, d_cur.order, bad, d_cur.precision_bits)
    best, results = closeness_from_deltas((d_prev, corrupt))
    assert best is Closeness.NONE
    assert not any(check.passed for check in results.values())


def test_closeness_of_base_pair_is_weak(params3):
    level, results = closeness(initial_germ(params3), 40, params3)
    assert level is Closeness.WEAK
    assert results[Closeness.WEAK.value].passed
    assert not results[Closeness.STRONG.value].passed


def test_closeness_improves_along_iterates(params3):
    germ = initial_germ(params3)
    level8, _ = closeness(germ, 16, params3, k=8)
    level64, _ = closeness(germ, 16, params3, k=64)
    assert level8 in (Closeness.CLOSE, Closeness.STRONG)
    assert level64 is Closeness.STRONG


def test_certify_pair_provenance_and_json(params3):
    germ = initial_germ(params3)
    check = certify_pair(germ, 3, DELTA0, 1, 12, params3)
    assert check.x0 == germ.x0
    assert check.pair == (7, 8)
    assert check.rho == germ.scale(8)
    d = check.to_json_dict()
    assert {"delta", "beta", "order_checked", "margin", "passed"} <= set(d)
    assert d["beta"] == 1
    assert d["order_checked"] == 12


def test_check_regularity_validation(params3):
    pair = rescaled_delta_pair(0, initial_germ(params3), 8, params3)
    with pytest.raises(ValueError):
        check_regularity(pair, Fraction(0), 2)
    with pytest.raises(ValueError):
        check_regularity(pair, Fraction(1, 10), 0)
    with pytest.raises(ValueError):
        check_regularity(pair, Fraction(1, 10), 2, order=40)


# -- constants ledger -----------------------------------------------------------


def test_verify_constants_all_hold():
    report = verify_constants()
    assert report["all_hold"] is True
    assert all(row["holds"] for row in report["checks"])
    names = {row["name"] for row in report["checks"]}
    assert len(names) == len(report["checks"])


def test_threshold_chain_exact_arithmetic():
    # the three budget inequalities, re-derived with exact rationals
    assert 20 * DELTA1 <= DELTA0
    assert Fraction(400) ** 4 * 12 * DELTA2 <= DELTA1
    assert Fraction(ITER_PREFACTOR) * Fraction(1, 2**68) < DELTA2


# -- derived germs ---------------------------------------------------------------


def test_germ_from_zero_rejects_mismatched_level(params3):
    from tmtrace.rootfind import bracket_point

    enc = bracket_point(1, initial_point(params3), params3)
    with pytest.raises(ValueError):
        germ_from_zero(2, enc, params3)


def test_germ_from_zero_rejects_uncertified(params3):
    with context(256):
        lo = frozen("sqrt11") - mpfr("0.001")
        hi = frozen("sqrt11") + mpfr("0.001")
        enc = Enclosure(1, mpfr(lo), mpfr(hi), 256, False)
    with pytest.raises(DegenerateGermError):
        germ_from_zero(1, enc, params3)


def test_derived_germ_at_next_tangency(params3):
    """A germ planted at the first zero one octave stack up inherits the
    parent's frequency times the period-doubling gain."""
    base = initial_germ(params3)
    level = base.pair[1] + 8
    s = base.scale(level)
    enc = first_zero_after(level, base.x0, s, params3)
    enc = newton_polish(enc, params3, steps=3)
    derived = germ_from_zero(level, enc, params3)
    assert derived.pair == (level + 3, level + 4)
    assert derived.source_index == level
    with context(512):
        ratio = (derived.rho / 2) / (8 * s)
        assert abs(ratio - 1) <= mpfr("1e-4")
    lvl, _ = closeness(derived, 16, params3)
    assert lvl in (Closeness.CLOSE, Closeness.STRONG)
