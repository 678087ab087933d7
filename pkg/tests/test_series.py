"""Exact-arithmetic tests for the moduli-counting series calculus.

Expected matrices and pairs below were computed by hand with Fractions
and frozen; everything here must hold exactly, no tolerances.
"""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbinv.errors import CapExceededError, InputError
from fbinv.series import (
    MSeries,
    NSBounds,
    ParamMatrix,
    PolyQ,
    characteristic_matrix,
    characteristic_pair,
    charn_closed_form,
    elementary_transform,
    format_matrix,
    is_nice,
    lemma2_check,
    norm_closed_form,
    norm_matrix,
    ns_bounds,
    parse_matrix_text,
    parse_series_text,
    scalar_counts_matrix,
    series_from_matrix,
    two_input_counts_matrix,
    wl_representation,
)


def mat(rows, n1, w1):
    return ParamMatrix.from_rows(rows, n1=n1, w1=w1)


# frozen fixtures
P13 = mat([[2, 0], [0, 1]], n1=2, w1=1)
P13_PRE = mat([[1, 0], [1, 0]], n1=2, w1=1)
P14 = mat([[0, 4], [0, 4], [2, 0]], n1=2, w1=2)
P15 = mat([[5], [10], [10], [3]], n1=2, w1=3)
P16 = mat([[0, 6], [6, 6], [12, 6], [12, 6], [0, 4]], n1=2, w1=3)
P25 = mat([[0, 0, 0, 5], [0, 0, 0, 10], [0, 0, 0, 10], [1, 0, 0, 3]], n1=2, w1=0)

NORM14 = mat([[2, 4], [0, 6], [0, 2]], n1=2, w1=2)
NORM16 = mat([[30, 6], [0, 36], [0, 30], [0, 18], [0, 4]], n1=2, w1=3)
NORM25 = mat([[1, 3, 6, 5], [0, 0, 0, 16], [0, 0, 0, 13], [0, 0, 0, 4]], n1=2, w1=0)


class TestPolyQ:
    def test_divmod_one_minus_t(self):
        p = PolyQ([2, 8, -12, 4])  # 2 + 8t - 12t^2 + 4t^3
        q, r = p.divmod_one_minus_t()
        assert r == p(1) == 2
        assert q * PolyQ([1, -1]) + PolyQ([r]) == p

    def test_expand_in_one_minus_t(self):
        p = PolyQ([0, 2, -1])  # 2t - t^2 = 1 - (1-t)^2
        s = p.expand_in_one_minus_t()
        rebuilt = PolyQ()
        for m, c in enumerate(s):
            rebuilt = rebuilt + PolyQ([1, -1]).pow(m) * c
        assert rebuilt == p

    def test_zero_degree(self):
        assert PolyQ().degree == -1
        assert PolyQ([0, 0]).is_zero()


class TestMSeriesCanonical:
    def test_dim3(self):
        m = MSeries.from_terms([(1, 1, 2), (1, 1, 3)])
        assert m.w0 == 1
        assert m.npole == 3
        assert m.numer == PolyQ([2, -1])
        assert m == series_from_matrix(P13)

    def test_dim4(self):
        m = series_from_matrix(P14)
        assert (m.w0, m.npole) == (2, 4)
        assert m.numer == PolyQ([2, 8, -12, 4])
        assert m.d_infinity == 0

    def test_two_input_dim5(self):
        m = series_from_matrix(P25)
        assert (m.w0, m.npole) == (0, 5)
        assert m.numer == PolyQ([1, 0, 0, 28, -45, 25, -5])
        assert m.numer(1) != 0
        assert m.d_infinity == 0

    def test_coefficients_match_binomial_expansion(self):
        m = series_from_matrix(P14)
        for k in range(12):
            expected = sum(
                P14.entry(i, j)
                * _count(P14.var_count(i), k - P14.weight(j))
                for i in range(1, P14.k1 + 1)
                for j in range(1, P14.k2 + 1)
            )
            assert m.coefficient(k) == expected

    def test_add_sub_roundtrip(self):
        a = series_from_matrix(P14)
        b = series_from_matrix(P15)
        assert (a + b) - b == a
        assert (a - a).is_zero()

    def test_text_roundtrip(self):
        for m in (
            series_from_matrix(P13),
            series_from_matrix(P14),
            series_from_matrix(P25),
            MSeries.zero(),
        ):
            assert parse_series_text(m.to_text()) == m

    def test_parse_sum_of_fractions(self):
        m = parse_series_text("t^3 * (10/(1-t)^5 + 10/(1-t)^4 + 5/(1-t)^3 + 3/(1-t)^6)")
        assert m == series_from_matrix(P15)

    def test_parse_spec_form(self):
        m = parse_series_text("t^2 * (2 + 8 t - 12 t^2 + 4 t^3) / (1-t)^5")
        assert m == series_from_matrix(P14)

    def test_parse_rejects_garbage(self):
        with pytest.raises(InputError):
            parse_series_text("t^2 * (1 + x) / (1-t)^3")
        with pytest.raises(InputError):
            parse_series_text("1 / (1 - 2t)")
        with pytest.raises(InputError):
            parse_series_text("")


def _count(l, k):
    # coefficients contributed at weight offset k by one function of l variables
    import math

    return math.comb(l + k, l) if k >= 0 else 0


class TestRepresentations:
    def test_dim3_pair(self):
        m = series_from_matrix(P13)
        rep = wl_representation(m, 1, 2)
        assert rep.r == ()
        assert rep.q == {2: 1, 3: 1}
        assert is_nice(rep)
        assert characteristic_pair(m) == (1, 2)
        c = characteristic_matrix(m)
        assert c.rows() == [[1], [1]]
        assert (c.n1, c.w1) == (2, 1)

    def test_dim3_elementary_transform(self):
        assert elementary_transform(P13_PRE, 2, 1) == P13
        assert series_from_matrix(P13_PRE) == series_from_matrix(P13)

    def test_dim4_rep(self):
        m = series_from_matrix(P14)
        rep = wl_representation(m, 3, 2)
        assert rep.r == (Fraction(2),)
        assert rep.q == {2: 4, 3: 6, 4: 2}
        assert is_nice(rep)

    def test_dim4_lower_pair_not_nice(self):
        m = series_from_matrix(P14)
        assert not is_nice(wl_representation(m, 2, 1))

    def test_dim4_characteristic(self):
        m = series_from_matrix(P14)
        assert characteristic_pair(m) == (3, 2)
        assert characteristic_matrix(m) == NORM14

    def test_dim5_characteristic(self):
        m = series_from_matrix(P15)
        assert characteristic_pair(m) == (3, 2)
        assert characteristic_matrix(m) == P15

    def test_two_input_characteristic(self):
        m = series_from_matrix(P25)
        assert characteristic_pair(m) == (3, 2)
        assert characteristic_matrix(m) == NORM25

    def test_reconstruct_is_inverse(self):
        m = series_from_matrix(P25)
        for w in range(0, 5):
            for l in range(1, 7):
                assert wl_representation(m, w, l).reconstruct() == m

    def test_w_below_onset_rejected(self):
        m = series_from_matrix(P15)
        with pytest.raises(ValueError):
            wl_representation(m, 2, 2)


class TestBounds:
    def test_dim4(self):
        b = ns_bounds(series_from_matrix(P14))
        assert b.d == 0
        assert b.w_min == 2
        assert b.l_max(3) == 2

    def test_two_input_dim5(self):
        # the numerator does not vanish at 1, so the degree at infinity is 0
        # and weights below 2 cannot carry a nice representation
        b = ns_bounds(series_from_matrix(P25))
        assert b.d == 0
        assert b.w_min == 2

    def test_scalar_family(self):
        for n in range(6, 10):
            b = ns_bounds(series_from_matrix(scalar_counts_matrix(n)))
            assert b.d == n - 5
            assert b.w_min == n - 3

    def test_cap_exceeded(self):
        # irrational-looking series: fractional head coefficients never clear
        m = MSeries.from_terms([(Fraction(1, 2), 0, 2)])
        with pytest.raises(CapExceededError):
            characteristic_pair(m, w_cap=8)


class TestNorm:
    def test_dim4(self):
        assert norm_matrix(P14) == NORM14
        assert norm_closed_form(P14) == NORM14

    def test_dim6(self):
        assert norm_matrix(P16) == NORM16
        assert norm_closed_form(P16) == NORM16

    def test_two_input(self):
        assert norm_matrix(P25) == NORM25
        assert norm_closed_form(P25) == NORM25

    def test_preserves_series(self):
        for p in (P13, P14, P16, P25):
            assert series_from_matrix(norm_matrix(p)) == series_from_matrix(p)

    def test_elementary_validation(self):
        with pytest.raises(ValueError):
            elementary_transform(P14, 1, 1)
        with pytest.raises(ValueError):
            elementary_transform(P14, 2, 2)
        with pytest.raises(ValueError):
            elementary_transform(P14, 2, 1)  # zero entry


class TestCountTables:
    def test_scalar_counts(self):
        assert scalar_counts_matrix(4) == P14
        assert scalar_counts_matrix(5) == P15
        assert scalar_counts_matrix(6) == P16
        assert two_input_counts_matrix() == P25

    def test_scalar_totals(self):
        # tuple sizes: dim 4 has 4+4+2, dim 5 has 15+5+5+3
        assert scalar_counts_matrix(4).total() == 10
        assert scalar_counts_matrix(5).total() == 28

    def test_closed_form_matches_pipeline(self):
        for n in (6, 7, 8):
            m = series_from_matrix(scalar_counts_matrix(n))
            pair = characteristic_pair(m)
            assert pair == (n - 2, 2)
            assert characteristic_matrix(m, pair) == charn_closed_form(n)

    def test_closed_form_equals_norm(self):
        # for this family the normal form of the counts table is already
        # the characteristic matrix
        for n in (6, 7, 9):
            assert norm_matrix(scalar_counts_matrix(n)) == charn_closed_form(n)

    def test_dim6_closed_form_values(self):
        assert charn_closed_form(6) == NORM16


class TestDescent:
    def test_lemma2_examples(self):
        m14 = series_from_matrix(P14)
        # (3, 2) is nice with a 2-variable tail entry, so (2, 1) cannot be
        assert not lemma2_check(m14, 3, 2)
        m25 = series_from_matrix(P25)
        assert not lemma2_check(m25, 3, 2)

    def test_lemma2_out_of_range(self):
        m = series_from_matrix(P13)
        assert lemma2_check(m, 1, 2) is False  # w-1 below onset
        assert lemma2_check(m, 3, 1) is False  # l-1 would be 0


class TestMatrixText:
    def test_roundtrip(self):
        for p in (P13, P14, P25, charn_closed_form(7)):
            assert parse_matrix_text(format_matrix(p)) == p

    def test_comments_and_semicolons(self):
        p = parse_matrix_text("# counts\nn1=2 w1=2\n0 4\n0 4\n2 0\n")
        assert p == P14

    def test_missing_header(self):
        with pytest.raises(InputError):
            parse_matrix_text("0 4\n0 4\n")

    def test_bad_row(self):
        with pytest.raises(InputError):
            parse_matrix_text("n1=2 w1=2\n0 four\n")


# --- property tests -------------------------------------------------------

matrices = st.integers(1, 4).flatmap(
    lambda k1: st.integers(1, 4).flatmap(
        lambda k2: st.lists(
            st.lists(st.integers(0, 9), min_size=k2, max_size=k2),
            min_size=k1,
            max_size=k1,
        )
    )
)


def _nonzero(rows):
    return any(v for row in rows for v in row)


@given(rows=matrices.filter(_nonzero), n1=st.integers(1, 3), w1=st.integers(0, 3))
@settings(max_examples=150, deadline=None)
def test_norm_agrees_with_closed_form(rows, n1, w1):
    p = mat(rows, n1, w1)
    assert norm_matrix(p) == norm_closed_form(p)
    assert series_from_matrix(norm_matrix(p)) == series_from_matrix(p)


@given(
    rows=matrices.filter(_nonzero),
    n1=st.integers(1, 3),
    w1=st.integers(0, 3),
    dw=st.integers(0, 5),
    l=st.integers(1, 6),
)
@settings(max_examples=150, deadline=None)
def test_representation_reconstructs(rows, n1, w1, dw, l):
    m = series_from_matrix(mat(rows, n1, w1))
    rep = wl_representation(m, m.w0 + dw, l)
    assert rep.reconstruct() == m
    assert len(rep.r) == dw


@given(rows=matrices.filter(_nonzero), n1=st.integers(2, 3), w1=st.integers(0, 3))
@settings(max_examples=100, deadline=None)
def test_elementary_transform_preserves_series(rows, n1, w1):
    p = mat(rows, n1, w1)
    for i0 in range(2, p.k1 + 1):
        for j0 in range(1, p.k2):
            if p.entry(i0, j0) >= 1:
                assert series_from_matrix(elementary_transform(p, i0, j0)) == series_from_matrix(p)
                return


@given(rows=matrices.filter(_nonzero), n1=st.integers(1, 3), w1=st.integers(0, 3))
@settings(max_examples=80, deadline=None)
def test_descent_lemma(rows, n1, w1):
    # a nice pair whose tail starts exactly at l variables kills (w-1, l-1)
    m = series_from_matrix(mat(rows, n1, w1))
    b = ns_bounds(m)
    for w in range(b.w_min, b.w_min + 6):
        for l in range(min(b.l_max(w), m.npole), 0, -1):
            rep = wl_representation(m, w, l)
            if is_nice(rep) and rep.q.get(l, 0) > 0:
                assert lemma2_check(m, w, l) is False
                return


@given(rows=matrices.filter(_nonzero), n1=st.integers(2, 4), w1=st.integers(0, 3))
@settings(max_examples=80, deadline=None)
def test_corner_positive_blocks_descent(rows, n1, w1):
    # matrix form of the descent rule: a table whose top-right entry is
    # positive parameterizes at (w2, n1) and rules out (w2-1, n1-1)
    p = mat(rows, n1, w1)
    if p.entry(1, p.k2) <= 0:
        return
    # only normalized tables parameterize at the printed pair
    cols = list(zip(*p.entries))
    if not (any(p.entries[0]) and any(p.entries[-1]) and any(cols[0]) and any(cols[-1])):
        return
    m = series_from_matrix(p)
    w2 = p.w1 + p.k2 - 1
    if w2 - 1 < m.w0 or n1 - 1 < 1:
        return
    assert not is_nice(wl_representation(m, w2 - 1, n1 - 1))


@given(n=st.integers(0, 12), k=st.integers(0, 12))
def test_binomial_column_sum(n, k):
    import math

    assert sum(math.comb(i + k - 1, k) for i in range(1, n + 1)) == math.comb(n + k, k + 1)


@given(
    rows=matrices.filter(_nonzero),
    n1=st.integers(1, 3),
    w1=st.integers(0, 3),
    k=st.integers(0, 14),
)
@settings(max_examples=100, deadline=None)
def test_coefficient_semantics(rows, n1, w1, k):
    import math

    p = mat(rows, n1, w1)
    m = series_from_matrix(p)
    expected = 0
    for i in range(1, p.k1 + 1):
        for j in range(1, p.k2 + 1):
            off = k - p.weight(j)
            if off >= 0:
                expected += p.entry(i, j) * math.comb(p.var_count(i) + off, p.var_count(i))
    assert m.coefficient(k) == expected
