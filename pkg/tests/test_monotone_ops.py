import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import OPERATORS
from mmsde.errors import NoResolvent, OutsideDomain
from mmsde.monotone_ops import (
    Ball,
    Box,
    ConvexSubdifferential,
    Graph1D,
    HalfSpace,
    IndicatorFunction,
    IndicatorSubdifferential,
    Intersection,
    L1Norm,
    LinearPSD,
    OperatorFamily,
    QuadraticFunction,
    Scaled,
    Sum,
    ZeroOp,
    check_family_convergence,
    check_local_boundedness,
    check_log_lipschitz,
    check_monotonicity,
    minimal_section,
    moreau_envelope,
    op_from_dict,
    operator_property_report,
    resolvent,
    set_from_dict,
    yosida,
)

R_PLUS = IndicatorSubdifferential(HalfSpace(0))
finite = st.floats(-10, 10, allow_nan=False)
alphas = st.floats(1e-3, 10.0)


# -- worked examples ---------------------------------------------------------


@pytest.mark.parametrize(
    "op, alpha, x, expected",
    [
        (R_PLUS, 0.5, -2.0, 0.0),
        (R_PLUS, 0.5, 3.0, 3.0),
        (LinearPSD([[1.0]]), 1.0, 2.0, 1.0),
    ],
)
def test_resolvent_examples(op, alpha, x, expected):
    assert resolvent(op, alpha, x) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize(
    "op, alpha, x, expected",
    [(R_PLUS, 0.1, -1.0, -10.0), (R_PLUS, 0.1, 2.0, 0.0), (LinearPSD([[1.0]]), 1.0, 2.0, 1.0)],
)
def test_yosida_examples(op, alpha, x, expected):
    assert yosida(op, alpha, x) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("op, x, expected", [(R_PLUS, 1.0, 0.0), (R_PLUS, 0.0, 0.0), (LinearPSD([[1.0]]), 3.0, 3.0)])
def test_minimal_section_examples(op, x, expected):
    assert minimal_section(op, x) == pytest.approx(expected, abs=1e-12)


def test_minimal_section_outside_domain():
    with pytest.raises(OutsideDomain):
        minimal_section(R_PLUS, -1.0)


def test_minimal_section_extrapolated_for_subdifferentials():
    # no closed form is registered for subdifferentials, so the alpha schedule is used
    op = ConvexSubdifferential(QuadraticFunction(3.0))
    assert minimal_section(op, np.array([2.0, -1.0])) == pytest.approx([6.0, -3.0], abs=1e-6)
    l1 = ConvexSubdifferential(L1Norm(1.0))
    assert minimal_section(l1, np.array([0.5])) == pytest.approx([1.0], abs=1e-8)


def test_minimal_section_graph_picks_least_norm_element():
    g = Graph1D(((-1.0, -1.0), (0.0, -0.5), (0.0, 2.0), (1.0, 3.0)), 0.0, float("inf"))
    assert minimal_section(g, 0.0) == 0.0  # A(0) = [-0.5, 2]
    assert minimal_section(g, 0.5) == pytest.approx(2.5)
    assert minimal_section(g, -3.0) == pytest.approx(-1.0)  # flat left tail
    with pytest.raises(OutsideDomain):
        minimal_section(g, 1.5)


@pytest.mark.parametrize(
    "f, alpha, x, expected",
    [
        (IndicatorFunction(HalfSpace(0)), 0.5, -1.0, 1.0),
        (IndicatorFunction(HalfSpace(0)), 0.5, 2.0, 0.0),
        # brute force over a fine grid of y gives 1.0; closed form x^2 / (2 (1 + alpha))
        (QuadraticFunction(1.0), 1.0, 2.0, 1.0),
    ],
)
def test_moreau_envelope_examples(f, alpha, x, expected):
    assert moreau_envelope(f, alpha, x) == pytest.approx(expected, abs=1e-12)


def test_family_convergence_linear_perturbation():
    fam = OperatorFamily(lambda e: Sum(R_PLUS, LinearPSD([[e]])), R_PLUS)
    rep = check_family_convergence(fam, 1.0, [-2, -1, 0, 1, 2], [0.1, 0.01, 0.001])
    # brute-force minimization of (y - x)^2 / 2 + eps y^2 / 2 over y >= 0, max over the grid
    assert rep.max_errors == pytest.approx([0.181818, 0.019802, 0.001998], abs=2e-6)
    assert rep.passed and rep.common_domain


def test_family_convergence_constant_family():
    rep = check_family_convergence(OperatorFamily(lambda e: R_PLUS, R_PLUS), 1.0, [-2, -1, 0, 1, 2], [0.1, 0.01])
    assert rep.max_errors == [0.0, 0.0] and rep.passed


def test_family_convergence_moving_domain_fails():
    fam = OperatorFamily(lambda e: IndicatorSubdifferential(Box([e], [np.inf])),
                         IndicatorSubdifferential(Box([1.0], [np.inf])))
    rep = check_family_convergence(fam, 1.0, [-2, -1, 0, 1, 2], [0.1, 0.01, 0.001])
    assert rep.max_errors == pytest.approx([0.9, 0.99, 0.999])
    assert not rep.passed
    assert not fam.common_domain([0.5], [0.1])


@pytest.mark.parametrize(
    "f, pairs, expected",
    [
        (lambda x: 2 * x, [(0.0, 1.0), (3.0, 4.0)], 4.0),
        (lambda x: np.ones_like(x), [(0.0, 1.0), (0.1, 0.3)], 0.0),
    ],
)
def test_log_lipschitz_examples(f, pairs, expected):
    assert check_log_lipschitz(f, pairs) == pytest.approx(expected)


@given(st.lists(st.tuples(finite, finite).filter(lambda p: abs(p[0] - p[1]) > 1e-6), min_size=1, max_size=20))
def test_log_lipschitz_identity_at_most_one(pairs):
    assert check_log_lipschitz(lambda x: x, pairs) <= 1.0 + 1e-12


def test_log_lipschitz_rejects_equal_pair():
    with pytest.raises(ValueError):
        check_log_lipschitz(lambda x: x, [(1.0, 1.0)])


def test_local_boundedness():
    assert check_local_boundedness([R_PLUS], 1.0, 1) == 0.0
    assert check_local_boundedness([LinearPSD([[2.0]])], 1.0, 1) <= 2.0
    fam = [Sum(R_PLUS, LinearPSD([[e]])) for e in (0.1, 1.0, 3.0)]
    assert check_local_boundedness(fam, 2.0, 1) <= 6.0


# -- properties over all kinds --------------------------------------------------


@pytest.mark.parametrize("op, m", OPERATORS, ids=lambda v: getattr(v, "kind", str(v)))
def test_property_report_passes(op, m):
    rep = operator_property_report(op, m, n=200, seed=3)
    assert rep.passed, rep.to_dict()


@pytest.mark.parametrize("op, m", OPERATORS, ids=lambda v: getattr(v, "kind", str(v)))
@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_resolvent_lands_in_domain_and_is_idempotent_on_fixed_points(op, m, data):
    x = np.array(data.draw(st.lists(finite, min_size=m, max_size=m)))
    a = data.draw(alphas)
    y = op.resolvent(a, x[None])[0]
    assert op.in_domain_closure(y[None], 1e-8).all()
    # x - y in alpha A(y)  <=>  y is fixed by J_1 after shifting by (x - y)/alpha
    back = op.resolvent(1.0, (y + (x - y) / a)[None])[0]
    tol = 1e-7 if isinstance(op, Sum) else 1e-9
    assert np.allclose(back, y, atol=tol * (1 + np.abs(x).max() / a))


@pytest.mark.parametrize("cset", [HalfSpace(0), Box((-1.0, 0.0), (2.0, 1.0)), Ball((1.0, 1.0), 0.5),
                                  Intersection((Ball((0.0, 0.0), 1.0), HalfSpace(0)))])
@given(x=st.lists(finite, min_size=2, max_size=2), a=alphas)
def test_indicator_resolvent_is_projection(cset, x, a):
    x = np.array(x)
    op = IndicatorSubdifferential(cset)
    assert np.array_equal(op.resolvent(a, x[None]), cset.project(x[None]))
    p = cset.project(x[None])
    assert np.allclose(cset.project(p), p, atol=1e-12)
    assert cset.contains(p, 1e-9).all()


@given(x=st.lists(finite, min_size=2, max_size=2))
def test_box_projection_fixes_exactly_the_members(x):
    x = np.array(x)[None]
    b = Box((-1.0, 0.0), (2.0, 1.0))
    member = bool(np.all((np.array(b.lo) <= x) & (x <= np.array(b.hi))))
    assert bool(np.array_equal(b.project(x), x)) == member


@pytest.mark.parametrize("f", [QuadraticFunction(0.5), L1Norm(2.0), IndicatorFunction(Ball((0.0, 1.0), 1.0))])
def test_moreau_gradient_identity(f):
    rng = np.random.default_rng(5)
    op = ConvexSubdifferential(f)
    h = 1e-6
    for _ in range(100):
        x, a = rng.uniform(-5, 5, 2), rng.uniform(0.1, 3.0)
        grad = np.array([(moreau_envelope(f, a, x + h * e) - moreau_envelope(f, a, x - h * e)) / (2 * h)
                         for e in np.eye(2)])
        val = moreau_envelope(f, a, x)
        assert np.allclose(grad, yosida(op, a, x), atol=max(1e-6, 1e-3 * abs(val)))
        assert val <= f.value(x) + 1e-12


def test_check_monotonicity_detects_monotone_op():
    rng = np.random.default_rng(0)
    xs, ys = rng.normal(size=(2, 100, 2))
    assert check_monotonicity(LinearPSD([[1.0, 3.0], [-3.0, 0.0]]), 0.5, xs, ys) >= -1e-12


def test_linear_nonmonotone_rejected():
    with pytest.raises(NoResolvent):
        LinearPSD([[1.0, 0.0], [0.0, -1.0]])


def test_sum_iteration_cap_raises():
    op = Sum(IndicatorSubdifferential(Ball((0.0, 0.0), 1.0)), LinearPSD([[0.0, 50.0], [-50.0, 0.0]]), max_iter=2)
    with pytest.raises(NoResolvent):
        op.resolvent(1.0, np.array([[5.0, 3.0]]))


def test_graph_rejects_decreasing_vertices():
    with pytest.raises(NoResolvent):
        Graph1D(((0.0, 1.0), (1.0, 0.0)))


def test_graph_resolvent_matches_brute_force():
    g = Graph1D(((-1.0, -1.0), (0.0, 0.0), (0.0, 1.0), (1.0, 3.0)), 0.5, float("inf"))
    ys = np.union1d(np.linspace(-6, 1, 700001), [-1.0, 0.0, 1.0])
    lo, hi = g.section_bounds(ys)
    for x in [-4.0, -1.2, -0.3, 0.4, 1.5, 3.0, 9.0]:
        a = 0.7
        # y solves x - y in a [lo(y), hi(y)]
        r = (x - ys) / a
        ok = (lo - 5e-5 <= r) & (r <= hi + 5e-5)
        assert abs(ys[ok].mean() - g.resolvent(a, np.array([x]))[0]) < 1e-4


def test_scaled_resolvent_identity():
    base = IndicatorSubdifferential(Ball((1.0, 0.0), 1.0))
    s = Scaled(base, 3.0, 2.0)
    x = np.array([[3.0, 4.0], [0.2, 0.1]])
    # {y : 2 y in ball} is the ball of radius 1/2 around (1/2, 0)
    assert np.allclose(s.resolvent(0.4, x), Ball((0.5, 0.0), 0.5).project(x))


@pytest.mark.parametrize("op, m", OPERATORS, ids=lambda v: getattr(v, "kind", str(v)))
def test_operator_json_round_trip(op, m):
    d = json.loads(json.dumps(op.to_dict()))
    back = op_from_dict(d)
    x = np.random.default_rng(1).uniform(-5, 5, (20, m))
    assert np.array_equal(back.resolvent(0.3, x), op.resolvent(0.3, x))


def test_set_json_round_trip_with_infinite_bounds():
    b = Box((1.0, -np.inf), (np.inf, 2.0))
    d = json.loads(json.dumps(b.to_dict()))
    assert set_from_dict(d) == b
