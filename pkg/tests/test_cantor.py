"""Nested interval tree: geometry, certificates, ratios, gaps, reports.

K = 8 keeps builds under a second while exercising every code path. Small K
cannot reach the strong certificate level (too few doublings between split
levels), so those failures are expected to land in tree.problems; geometry
(gaps, ratios, endpoint tangency) must still hold exactly.
"""

from fractions import Fraction

import gmpy2
import pytest
from gmpy2 import mpfr

from conftest import frozen, mk_params, rel_err
from tmtrace.cantor import (
    CantorTree,
    TreeCertificateError,
    build_root,
    build_tree,
    certify_endpoints,
    dimension_lower_bound,
    dimension_report,
    effective_precision,
    split_level,
    split_node,
)
from tmtrace.germ import Closeness, initial_point
from tmtrace.reals import context
from tmtrace.tracepoly import eval_trace_dev

K = 8


@pytest.fixture(scope="module")
def tree8(params3):
    return build_tree(params3, K, depth=2)


@pytest.fixture(scope="module")
def tree8_left(params3):
    return build_tree(params3, K, depth=1, side="left")


# -- schedule helpers ----------------------------------------------------------


def test_split_level_schedule():
    assert split_level(0, 8) == 21
    assert split_level(1, 8) == 29
    assert split_level(0, 140) == 285
    levels = [split_level(g, 11) for g in range(5)]
    assert levels == sorted(levels)
    assert all(b - a == 11 for a, b in zip(levels, levels[1:]))


def test_effective_precision_schedule():
    assert effective_precision(256, 140, 2) == 1248
    assert effective_precision(4096, 8, 2) == 4096
    assert effective_precision(64, 8, 0) == 128 + 2 * 8 * 2


def test_dimension_lower_bound_value():
    assert abs(dimension_lower_bound(140) - float(frozen("dim_bound_140"))) <= 1e-15


# -- root interval ---------------------------------------------------------------


def test_root_geometry(params3):
    root = build_root(params3, K)
    assert root.word == ""
    assert root.gen == 0
    assert root.lo.n == 1
    assert root.hi.n == K + 5
    assert rel_err(root.a, initial_point(params3)) <= gmpy2.exp2(-200)
    assert root.lo.certified and root.hi.certified
    assert root.meta["side"] == "right"
    assert root.meta["root_closeness_level"] == Closeness.CLOSE.value
    # K = 8 puts the anchor pair in the close regime, so the directional
    # search for b runs with its minimality certificate
    assert root.hi.minimality == "certified"


def test_root_width_is_quarter_period(params3):
    root = build_root(params3, K)
    s = root.germ_lo.scale(K + 5)
    with context(512):
        assert abs(root.width * s - frozen("pi_over_2")) <= mpfr("0.02")


def test_root_rejects_bad_arguments(params3):
    with pytest.raises(ValueError):
        build_root(params3, 3)
    with pytest.raises(ValueError):
        build_root(params3, K, side="up")


# -- tree shape -------------------------------------------------------------------


def test_tree_shape(tree8):
    assert [len(g) for g in tree8.generations] == [1, 2, 4]
    assert len(list(tree8.nodes())) == 7
    words = [n.word for n in tree8.nodes()]
    assert words == ["", "0", "1", "00", "01", "10", "11"]
    assert [n.gen for n in tree8.nodes()] == [0, 1, 1, 2, 2, 2, 2]
    assert tree8.root.label() == "root"
    assert len(tree8.leaves()) == 4


def test_children_share_outer_endpoints(tree8):
    for node in tree8.nodes():
        if not node.children:
            continue
        left, right = node.children
        assert left.lo is node.lo
        assert right.hi is node.hi
        assert left.germ_lo is node.germ_lo
        assert right.germ_hi is node.germ_hi


def test_children_strictly_separated(tree8):
    for node in tree8.nodes():
        if not node.children:
            continue
        left, right = node.children
        assert left.hi.hi < right.lo.lo
        assert node.gap_ok is True
    assert tree8.gaps_ok()


def test_endpoints_are_tangency_zeros(tree8):
    """Every endpoint is a zero of its creating polynomial, and two levels
    up the trace returns to the tangency value."""
    params = tree8.params
    for node, _, enc in tree8.endpoint_slots():
        with context(512):
            on_level = eval_trace_dev(enc.n, enc.mid, params) + 2
            assert abs(on_level) <= mpfr("1e-30"), node.label()
            two_up = eval_trace_dev(enc.n + 2, enc.mid, params)
            assert abs(two_up) <= mpfr("1e-30"), node.label()


def test_endpoint_slot_counts(tree8):
    assert len(list(tree8.endpoint_slots())) == 14
    assert len(list(tree8.endpoint_slots(gen=2))) == 8
    uniq = tree8.unique_endpoints()
    assert len(uniq) == 8
    assert uniq == sorted(uniq)


def test_leaves_sorted_and_disjoint(tree8):
    leaves = tree8.leaves()
    for prev, cur in zip(leaves, leaves[1:]):
        assert prev.hi.hi < cur.lo.lo


# -- ratios ----------------------------------------------------------------------


def test_ratios_near_one_over_2_to_K(tree8):
    ratios = tree8.ratios()
    assert len(ratios) == 6
    for r in ratios:
        assert mpfr("0.0038") <= r <= mpfr("0.0040")
    assert tree8.ratios_ok()
    for node in tree8.nodes():
        if node.gen > 0:
            assert node.ratio_ok is True
            assert node.ratio_lower < node.ratio


def test_min_ratio_bounds(tree8):
    floor = Fraction(10, 21) ** K
    assert tree8.min_ratio_lower() > mpfr(floor.numerator) / mpfr(floor.denominator)
    assert tree8.min_ratio() >= tree8.min_ratio_lower()


# -- certificates and exploratory semantics ---------------------------------------


def test_small_K_certificates_fail_into_problems(tree8):
    # fourteen endpoint slots, none can reach the strong envelope at K = 8
    assert not tree8.certs_ok()
    assert len(tree8.problems) == 14
    assert all("strong" in msg for msg in tree8.problems)
    for node in tree8.nodes():
        assert node.cert_lo is not None and node.cert_hi is not None
        assert not node.cert_lo.passed
        assert node.level_lo in (Closeness.WEAK, Closeness.CLOSE)
    assert not tree8.verified()


def test_strict_mode_raises_on_small_K(params3):
    with pytest.raises(TreeCertificateError):
        build_tree(params3, K, depth=1, strict=True)


def test_certificate_provenance(tree8):
    root = tree8.root
    m = split_level(0, K)
    assert root.cert_lo.pair == (m - 1, m)
    assert root.cert_lo.x0 == root.germ_lo.x0
    assert root.cert_lo.rho == root.germ_lo.scale(m)


# -- dimension report --------------------------------------------------------------


def test_report_shape_and_formulas(tree8):
    rep = tree8.dimension_report()
    assert rep["K"] == K
    assert rep["depth"] == 2
    assert rep["certificates_ok"] is False
    assert rep["gaps_ok"] is True
    assert rep["ratios_ok"] is True
    assert rep["theoretical_bound"] == dimension_lower_bound(K)
    assert rep["empirical_bound"] is not None
    # the ratios sit at ~2^-K, so the measured exponent is ~1/K
    assert abs(rep["empirical_bound"] - 0.125) <= 0.003
    assert rep["empirical_bound"] >= rep["theoretical_bound"]
    with context(tree8.params.precision_bits):
        recomputed = float(gmpy2.log(2) / -gmpy2.log(tree8.min_ratio()))
    assert rep["empirical_bound"] == recomputed
    assert rep["problems"] == tree8.problems


def test_report_withholds_empirical_without_gaps(params3):
    tree = build_tree(params3, K, depth=1)
    assert tree.dimension_report()["empirical_bound"] is not None
    tree.root.gap_ok = False
    rep = tree.dimension_report()
    assert rep["empirical_bound"] is None
    assert rep["gaps_ok"] is False
    # ratio data is still reported
    assert rep["min_ratio"] is not None


def test_depth_zero_tree(params3):
    tree = build_tree(params3, K, depth=0)
    assert len(list(tree.nodes())) == 1
    assert tree.min_ratio() is None
    assert not tree.gaps_ok()  # vacuous gap set never certifies
    rep = tree.dimension_report()
    assert rep["empirical_bound"] is None
    assert rep["min_ratio"] is None


# -- standalone build steps ---------------------------------------------------------


def test_manual_certify_and_split(params3):
    node = build_root(params3, K)
    lo_cert, hi_cert = certify_endpoints(node, params3, K)
    assert node.level_lo is not None
    assert lo_cert is node.cert_lo and hi_cert is node.cert_hi
    left, right = split_node(node, params3, K)
    assert node.children == [left, right]
    assert (left.word, right.word) == ("0", "1")
    assert left.gen == right.gen == 1
    assert node.gap_ok is True
    for child in (left, right):
        assert child.ratio is not None and child.ratio_ok is True
    # left child's new endpoint is a zero of the gen-0 split polynomial
    assert left.hi.n == split_level(0, K)
    assert right.lo.n == split_level(0, K)


# -- mirrored construction -----------------------------------------------------------


def test_left_side_tree(tree8_left, params3):
    root = tree8_left.root
    assert root.meta["side"] == "left"
    anchor = initial_point(params3)
    assert rel_err(root.b, anchor) <= gmpy2.exp2(-200)
    assert root.a < root.b
    assert root.lo.n == K + 5
    assert root.hi.n == 1
    assert [len(g) for g in tree8_left.generations] == [1, 2]
    assert tree8_left.gaps_ok() and tree8_left.ratios_ok()


def test_left_and_right_roots_mirror(tree8, tree8_left):
    with context(512):
        ratio = tree8_left.root.width / tree8.root.width
        assert abs(ratio - 1) <= mpfr("0.05")


def test_build_tree_validation(params3):
    with pytest.raises(ValueError):
        build_tree(params3, K, depth=-1)
    with pytest.raises(ValueError):
        build_tree(params3, K, depth=1, side="middle")


# -- determinism across precision -----------------------------------------------------


def test_endpoints_stable_under_precision_change(tree8):
    hi_tree = build_tree(mk_params(3, 512), K, depth=1)
    with context(768):
        assert abs(hi_tree.root.b - tree8.root.b) <= mpfr("1e-50")
        for a, b in zip(hi_tree.generations[1], tree8.generations[1]):
            assert abs(a.hi.mid - b.hi.mid) <= mpfr("1e-50")
            assert abs(a.lo.mid - b.lo.mid) <= mpfr("1e-50")


# -- serialization ---------------------------------------------------------------------


def test_tree_json_schema(tree8):
    d = tree8.to_json_dict()
    assert {
        "model", "K", "depth", "side", "certificate_order",
        "root_closeness_level", "generations", "dimension", "problems",
    } <= set(d)
    assert d["K"] == K
    assert len(d["generations"]) == 3
    node_d = d["generations"][0][0]
    assert {"word", "gen", "lo", "hi", "width", "germ_lo", "germ_hi",
            "ratio", "gap_ok", "closeness_lo", "closeness_hi",
            "cert_lo", "cert_hi"} <= set(node_d)
    slim = tree8.to_json_dict(include_certs=False)
    assert "cert_lo" not in slim["generations"][0][0]


def test_tree_csv_rows(tree8):
    rows = tree8.to_csv_rows()
    assert len(rows) == 8
    assert rows[0][0] == "word" and "ratio_lower" in rows[0]
    assert rows[1][0] == "root"
    assert all(len(r) == len(rows[0]) for r in rows)


def test_tree_plot_data(tree8):
    lines = tree8.plot_data()
    assert len(lines) == 1 + 7 * 65
    assert lines[0].startswith("#")
    first = lines[1].split()
    assert first[0] == "root" and first[1] == "0"
    assert first[2] == str(tree8.root.created_level)
