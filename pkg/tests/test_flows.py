import numpy as np
import pytest
from scipy.linalg import expm

from fbinv import exprs as ex
from fbinv.errors import InputError, NumericalError
from fbinv.fields import (
    SymbolicField,
    combine,
    coordinate_field,
    field_from_exprs,
    lie_bracket,
)
from fbinv.flows import Chart, chart_forward, chart_inverse, flow

from util import rand_field, rand_point


def test_flow_zero_time_and_reversibility():
    rng = np.random.default_rng(3)
    f = rand_field(rng, 4)
    q = rand_point(rng, 4, radius=0.2)
    assert np.array_equal(flow(f, q, 0.0), q)
    for _ in range(10):
        q = rand_point(rng, 4, radius=0.2)
        t = float(rng.uniform(-0.3, 0.3))
        there = flow(f, q, t)
        back = flow(f, there, -t)
        assert np.max(np.abs(back - q)) < 1e-8


def test_flow_linear_field_matches_matrix_exponential():
    A = np.array([[0.0, 1.0, 0.0], [-0.5, 0.0, 0.25], [0.0, 0.3, -0.2]])
    comps = []
    for k in range(3):
        comps.append(
            ex.add(*[ex.mul(ex.const(A[k, l].item()), ex.var(l + 1)) for l in range(3)])
        )
    f = SymbolicField(comps, 3)
    q = np.array([0.4, -0.2, 0.1])
    for t in (0.5, -0.7, 1.3):
        want = expm(t * A) @ q
        assert np.max(np.abs(flow(f, q, t) - want)) < 1e-8


def test_flow_jacobian_matches_matrix_exponential():
    A = np.array([[0.1, 0.8], [-0.6, -0.3]])
    f = SymbolicField(
        [
            ex.add(ex.mul(ex.const(0.1), ex.var(1)), ex.mul(ex.const(0.8), ex.var(2))),
            ex.add(
                ex.mul(ex.const(-0.6), ex.var(1)), ex.mul(ex.const(-0.3), ex.var(2))
            ),
        ],
        2,
    )
    q = np.array([0.2, 0.3])
    p, M = flow(f, q, 0.9, with_jacobian=True)
    assert np.max(np.abs(M - expm(0.9 * A))) < 1e-8


def test_flow_blowup_raises():
    f = field_from_exprs(["x1^2", "0"], 2)
    with pytest.raises(NumericalError):
        flow(f, [1.0, 0.0], 5.0)


# ---------------------------------------------------------------------------
# charts


def chart_fixture():
    # mildly curved frame fields around the origin
    v1 = field_from_exprs(["1", "x1/4", "0", "x3/8"], 4)
    v2 = field_from_exprs(["0", "1 + x1/8", "x2/8", "0"], 4)
    v3 = field_from_exprs(["x2/8", "0", "1", "x1/8"], 4)
    v4 = field_from_exprs(["0", "x4/8", "0", "1 + x2/8"], 4)
    return Chart([v1, v2, v3, v4], [0.0, 0.0, 0.0, 0.0])


def test_chart_at_origin_is_base_point():
    ch = chart_fixture()
    assert np.allclose(chart_forward(ch, [0.0] * 4), ch.q0, atol=1e-14)


def test_chart_order_last_field_acts_first():
    # V1 = d1, V2 = x1 d2: starting at (1, 0), the x2 flow sees x1 = 1,
    # then the x1 flow shifts the first slot only.
    v1 = coordinate_field(2, 1)
    v2 = SymbolicField([ex.ZERO, ex.var(1)], 2)
    ch = Chart([v1, v2], [1.0, 0.0])
    got = chart_forward(ch, [0.25, 0.4])
    assert np.max(np.abs(got - np.array([1.25, 0.4]))) < 1e-9
    # the reversed listing applies the d1 flow first
    ch2 = Chart([v2, v1], [1.0, 0.0])
    got2 = chart_forward(ch2, [0.4, 0.25])
    assert np.max(np.abs(got2 - np.array([1.25, 0.4 * 1.25]))) < 1e-9


def test_trivial_bracket_chart_is_affine():
    z = SymbolicField([ex.ZERO] * 4, 4)
    ch = Chart([coordinate_field(4, 1), coordinate_field(4, 2), z, z], [0.1] * 4)
    x = [0.3, -0.2, 0.4, 0.1]
    want = np.array([0.4, -0.1, 0.1, 0.1])
    assert np.max(np.abs(chart_forward(ch, x) - want)) < 1e-12


def test_chart_jacobian_columns_at_zero():
    ch = chart_fixture()
    _, D = ch.forward_with_jacobian([0.0] * 4)
    for k, f in enumerate(ch.fields):
        assert np.max(np.abs(D[:, k] - f(ch.q0))) < 1e-6


def test_chart_jacobian_matches_finite_differences():
    ch = chart_fixture()
    rng = np.random.default_rng(9)
    for _ in range(5):
        x = rng.uniform(-0.2, 0.2, size=4)
        _, D = ch.forward_with_jacobian(x)
        h = 1e-5
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            fd = (ch.forward(x + e) - ch.forward(x - e)) / (2 * h)
            assert np.max(np.abs(D[:, k] - fd)) < 1e-6


def test_first_field_pushforward_is_e1():
    # the x1 flow is outermost, so the first chart field pulls back to d/dx1
    ch = chart_fixture()
    rng = np.random.default_rng(13)
    for _ in range(5):
        x = rng.uniform(-0.25, 0.25, size=4)
        a = ch.pushforward_components(ch.fields[0], x)
        assert np.max(np.abs(a - np.array([1.0, 0.0, 0.0, 0.0]))) < 1e-8


def test_pushforward_matches_fd_oracle():
    ch = chart_fixture()
    rng = np.random.default_rng(17)
    w = field_from_exprs(["x2", "x1*x3", "1", "x4/2"], 4)
    for _ in range(8):
        x = rng.uniform(-0.2, 0.2, size=4)
        a = ch.pushforward_components(w, x)
        h = 1e-4
        D = np.empty((4, 4))
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            D[:, k] = (ch.forward(x + e) - ch.forward(x - e)) / (2 * h)
        want = np.linalg.solve(D, w(ch.forward(x)))
        assert np.max(np.abs(a - want)) < 1e-5


def test_chart_inverse_round_trip():
    ch = chart_fixture()
    rng = np.random.default_rng(21)
    for _ in range(10):
        x = rng.uniform(-0.2, 0.2, size=4)
        q = ch.forward(x)
        back = chart_inverse(ch, q)
        assert np.max(np.abs(back - x)) < 1e-8


def test_chart_inverse_far_point_fails():
    ch = chart_fixture()
    with pytest.raises(NumericalError):
        chart_inverse(ch, np.array([5.0, 5.0, 5.0, 5.0]))


def test_chart_box_enforced():
    ch = chart_fixture()
    with pytest.raises(InputError):
        ch.forward([0.9, 0.0, 0.0, 0.0])


def test_chart_cache_consistency():
    # same suffix, different x1: cached tail must give identical results
    ch = chart_fixture()
    x_a = np.array([0.1, 0.05, -0.1, 0.2])
    x_b = np.array([-0.2, 0.05, -0.1, 0.2])
    fresh = Chart(ch.fields, ch.q0)
    pa, pb = ch.forward(x_a), ch.forward(x_b)
    assert np.max(np.abs(pa - fresh.forward(x_a))) < 1e-12
    assert np.max(np.abs(pb - fresh.forward(x_b))) < 1e-12


def test_bracket_field_flows():
    # flowing along a symbolic bracket matches flowing along its components
    rng = np.random.default_rng(25)
    f = rand_field(rng, 3, degree=2)
    g = rand_field(rng, 3, degree=2)
    b = lie_bracket(f, g)
    q = rand_point(rng, 3, radius=0.1)
    p = flow(b, q, 0.2)
    back = flow(b, p, -0.2)
    assert np.max(np.abs(back - q)) < 1e-8
