import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nhtrack import scalar_jet as jet
from nhtrack.maneuver import (AdmissibilityError, NotManeuverableError, ReferenceGenerator,
                              admissibility_report, arc_length_maps, build_transform,
                              build_transform_generic, build_transform_truck, check_maneuverability,
                              jacobian_determinant, lie_derivative_tower, maneuvering_operator,
                              newton_inverse)
from nhtrack.models import (all_components, automobile, automobile_front_axle, chaplygin_sled,
                            component_of, rhs, truck_with_trailers)
from nhtrack.trajectories import Circle, LaneChange, Line, Polynomial

from oracles import circle_steer_angle, five_point

TRUCK4 = truck_with_trailers([1.0, 1.0, 1.0])


def test_lie_tower_automobile():
    L, L2 = lie_derivative_tower(automobile(), [0.0, 0.0], 1)
    assert L == [0.0, 0.0] and L2 == [0.0, 1.0]
    y = [0.4, 0.7]
    L, L2 = lie_derivative_tower(automobile(), y, 1)
    assert L[1] == pytest.approx(math.tan(0.7), rel=1e-15)
    assert L2[1] == pytest.approx(1 / math.cos(0.7) ** 2, rel=1e-15)


def test_lie_tower_front_axle_and_truck():
    rng = np.random.default_rng(0)
    fa = automobile_front_axle()
    for _ in range(20):
        y = list(rng.uniform(-3, 3, 2))
        assert lie_derivative_tower(fa, y, 0)[1][0] == 1.0
    m = truck_with_trailers([0.7, 1.2])
    y = [0.1, 0.4, -0.3]
    assert lie_derivative_tower(m, y, 1)[0][1] == pytest.approx(math.tan(0.4) / 0.7, rel=1e-15)


def test_maneuverability_gate():
    assert check_maneuverability(automobile()).passed
    rep = check_maneuverability(automobile_front_axle())
    assert not rep.passed and rep.witness["i"] == 0
    rep = check_maneuverability(TRUCK4)
    assert rep.passed and rep.y1_invariant
    assert check_maneuverability(chaplygin_sled()).passed
    with pytest.raises(NotManeuverableError):
        build_transform(automobile_front_axle())


def test_automobile_and_sled_transforms():
    tp = build_transform_generic(automobile(), (0,))
    y = [0.3, -0.6]
    assert tp.S(y) == [0.3, pytest.approx(math.tan(-0.6), rel=1e-15)]
    v = tp.input_to_chain(y, [1.0, 0.5])
    assert v[0] == 1.0 and v[1] == pytest.approx(0.5 / math.cos(-0.6) ** 2, rel=1e-15)
    sled = build_transform(chaplygin_sled())
    assert sled.S([1.2]) == [1.2]
    assert sled.F_matrix([1.2]) == [[1.0, 0.0], [0.0, 1.0]]
    assert sled.inverse([0.4]) == [0.4]


@pytest.mark.parametrize("lengths", [[1.0], [1.0, 0.6], [1.0, 1.0, 1.0], [0.8, 1.3, 0.5, 1.1]])
def test_generic_matches_closed_form(lengths):
    m = truck_with_trailers(lengths)
    rng = np.random.default_rng(len(lengths))
    count = 1000 if len(lengths) == 2 else 100
    for k in range(count):
        mu = all_components(m.n)[k % 2 ** (m.n - 1)]
        g, c = build_transform_generic(m, mu, check=False), build_transform_truck(m, mu)
        y = m.sample_y(rng, mu)
        sg, sc = np.array(g.S(y), dtype=float), np.array(c.S(y), dtype=float)
        assert np.max(np.abs(sg - sc)) <= 1e-10 * max(1.0, np.max(np.abs(sc)))
        fg, fc = np.array(g.F(y), dtype=float), np.array(c.F(y), dtype=float)
        assert np.max(np.abs(fg - fc)) <= 1e-10 * max(1.0, np.max(np.abs(fc)))


@pytest.mark.parametrize("mu", all_components(4))
def test_closed_form_round_trip_truck4(mu):
    tp = build_transform_truck(TRUCK4, mu)
    rng = np.random.default_rng(sum(b << i for i, b in enumerate(mu)))
    Y = np.array([TRUCK4.sample_y(rng, mu) for _ in range(1000)])
    s = tp.S([Y[:, i] for i in range(4)])
    back = np.array(tp.inverse([np.broadcast_to(c, Y.shape[:1]) for c in s])).T
    assert np.max(np.abs(back - Y)) <= 1e-10
    again = np.array(tp.S(list(back.T)))
    assert np.max(np.abs(again - np.array(s))) <= 1e-10 * max(1.0, np.max(np.abs(s)))


def test_generic_inverse_round_trip():
    m = truck_with_trailers([1.0, 0.6])
    rng = np.random.default_rng(3)
    for mu in all_components(3):
        tp = build_transform_generic(m, mu, check=False)
        for _ in range(25):
            y = m.sample_y(rng, mu)
            back = tp.inverse(tp.S(y))
            assert np.max(np.abs(np.subtract(back, y))) <= 1e-10
            assert component_of(m, back) == mu


def test_newton_inverse_large_targets():
    tp = build_transform_truck(TRUCK4, (0, 1, 0))
    s = [0.5, 10.0, -50.0, 300.0]
    y = newton_inverse(tp.S, s, (0, 1, 0))
    assert np.allclose(tp.S(y), s, rtol=1e-12)
    assert np.allclose(y, tp.inverse(s), atol=1e-10)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_jacobian_is_product_of_diagonal_slopes(n):
    # S_i depends on y_1..y_i only, so Jac S is triangular
    m = truck_with_trailers([1.0, 0.7, 1.3][: n - 1])
    rng = np.random.default_rng(n)
    for mu in all_components(n):
        tp = build_transform_truck(m, mu)
        for _ in range(20):
            y = m.sample_y(rng, mu)
            _, J = jet.jacobian(lambda ys: list(tp.S(ys)), y)
            J = np.array(J, dtype=float)
            assert np.allclose(np.triu(J, 1), 0.0, atol=0)
            diag = [1.0] + [float(tp.dS_dlast(y, i)) for i in range(2, n + 1)]
            assert np.allclose(np.diag(J), diag, rtol=1e-12)
            det = jacobian_determinant(tp.S, y)
            assert abs(det - np.prod(diag)) <= 1e-10 * abs(det)
            # theta_i multiplies tan y_i
            for i in range(2, n + 1):
                th = float(tp.theta(y, i))
                assert float(tp.dS_dlast(y, i)) == pytest.approx(th / math.cos(y[i - 1]) ** 2, rel=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_F22_is_top_lie_derivative(n):
    m = truck_with_trailers([1.0, 0.7, 1.3][: n - 1])
    rng = np.random.default_rng(10 + n)
    tp = build_transform_truck(m, (0,) * (n - 1))
    for _ in range(10):
        y = m.sample_y(rng, (0,) * (n - 1))
        L, L2 = lie_derivative_tower(m, y, n - 1)
        assert float(tp.F(y)[1]) == pytest.approx(float(L2[n - 1]), rel=1e-12)
        assert abs(float(tp.F(y)[1])) > 0


# reference generation ---------------------------------------------------

def test_line_forward_automobile():
    ref = maneuvering_operator(automobile(), (0,), Line((0.0, 0.0), (1.0, 0.0)), 1)
    for t in [0.0, 1.0, 7.5]:
        p = ref.at(t)
        assert p.sD == [0.0, 0.0] and p.uD == [1.0, 0.0]
        assert p.qD == [t, 0.0, 0.0, 0.0]


def test_line_backward():
    ref = maneuvering_operator(automobile(), (0,), Line((0.0, 0.0), (1.0, 0.0)), -1)
    p = ref.at(0.0)
    assert p.sD[0] == math.pi and p.uD[0] == -1.0
    assert p.uD[1] == pytest.approx(0.0, abs=1e-15)


def test_circle_automobile():
    R = 5.0
    tr = Circle((0.0, 0.0), R, 1.0 / R, 0.0)
    ref = maneuvering_operator(automobile(), (0,), tr, 1)
    for t in [0.0, 3.0, 11.0]:
        p = ref.at(t)
        assert p.sD[1] == pytest.approx(1 / R, rel=1e-12)
        assert p.vD[1] == pytest.approx(0.0, abs=1e-12)
        assert p.qD[3] == pytest.approx(circle_steer_angle(R), rel=1e-12)
    # integrated heading against a finite difference of itself
    h = 1e-3
    ds1 = five_point(lambda s: ref.heading(s), 4.0, h)
    assert ds1 == pytest.approx(ref.at(4.0).sD[1] * ref.at(4.0).vD[0], rel=1e-9)


@pytest.mark.parametrize("direction", [1, -1])
def test_reference_feasible_lane_change_truck(direction):
    m = truck_with_trailers([1.0, 1.0])
    tr = LaneChange(1.0, 0.3, 0.4, 0.0, (0.0, 0.0))
    ref = ReferenceGenerator(m, build_transform(m, (0, 0)), tr, direction)
    h = 1e-4
    for t in [0.5, 2.0, 6.0]:
        qd = five_point(lambda s: np.array(ref.at(s).qD), t, h)
        p = ref.at(t)
        assert np.max(np.abs(qd - np.array(rhs(m, p.qD, p.uD)))) <= 1e-6
        assert np.sign(p.uD[0]) == direction
        assert p.qD[:2] == [float(v) for v in tr.position(t)]


def test_chain_derivatives_match_finite_differences():
    # d/dt s_i = v1 s_(i+1) and d/dt s_n = v2 along the reference
    m = TRUCK4
    tr = LaneChange(1.0, 0.3, 0.4, 0.0, (0.0, 0.0))
    ref = ReferenceGenerator(m, build_transform(m, (0, 0, 0)), tr, 1)
    t, h = 3.0, 1e-3
    ds = five_point(lambda s: np.array(ref.at(s).sD), t, h)
    p = ref.at(t)
    want = np.array([p.vD[0] * v for v in p.sD[1:]] + [p.vD[1]])
    assert np.max(np.abs(ds - want) / np.maximum(1.0, np.abs(want))) <= 1e-5


def test_reference_stays_in_component():
    # even a tight circle maps back inside the chosen component
    m = truck_with_trailers([1.0, 1.0])
    for mu in all_components(3):
        ref = ReferenceGenerator(m, build_transform(m, mu), Circle(radius=0.3, rate=1.0), 1)
        for t in [0.0, 1.0, 4.0]:
            q = ref.at(t).qD
            assert component_of(m, q[2:]) == mu


def test_heading_branches():
    tr = Line((0.0, 0.0), (0.0, -1.0))
    assert ReferenceGenerator(chaplygin_sled(), build_transform(chaplygin_sled()), tr, 1).initial_heading() \
        == pytest.approx(-math.pi / 2)
    assert ReferenceGenerator(chaplygin_sled(), build_transform(chaplygin_sled()), tr, -1).initial_heading() \
        == pytest.approx(math.pi / 2)
    tr = Line((0.0, 0.0), (-1.0, 0.0))
    assert ReferenceGenerator(chaplygin_sled(), build_transform(chaplygin_sled()), tr, 1).initial_heading() \
        == math.pi
    assert ReferenceGenerator(chaplygin_sled(), build_transform(chaplygin_sled()), tr, -1).initial_heading() == 0.0


# arc length and admissibility ------------------------------------------

def test_arc_length_maps():
    tau, tinv = arc_length_maps(Line((0.0, 0.0), (1.0, 0.0)), 10.0)
    assert tau(3.0) == pytest.approx(3.0, rel=1e-13)
    tau, tinv = arc_length_maps(Line((0.0, 0.0), (2.0, 0.0)), 10.0)
    assert tau(3.0) == pytest.approx(6.0, rel=1e-13) and tinv(6.0) == pytest.approx(3.0, rel=1e-12)
    R, w = 2.0, 0.7
    tau, tinv = arc_length_maps(Circle((0.0, 0.0), R, w, 0.3), 10.0)
    for t in [0.1, 2.0, 9.0]:
        assert tau(t) == pytest.approx(R * w * t, rel=1e-12)
        assert abs(tinv(tau(t)) - t) <= 1e-10
    with pytest.raises(AdmissibilityError):
        arc_length_maps(Polynomial((0.0, 0.0, 0.0, 1.0), (0.0,)), 1.0)


def test_admissibility_report():
    rep = admissibility_report(Line((0.0, 0.0), (1.0, 0.0)), 3, 10.0)
    assert rep.admissible and rep.strongly_admissible
    rep = admissibility_report(Polynomial((0.0, 0.0, 0.0, 1.0), (0.0,)), 2, 1.0)
    assert not rep.admissible
    R, w = 3.0, 0.5
    rep = admissibility_report(Circle((0.0, 0.0), R, w, 0.0), 3, 20.0)
    assert rep.admissible and rep.strongly_admissible and rep.analytic
    assert rep.derivative_bounds[1:] == pytest.approx([R * w ** k for k in range(1, 5)], rel=1e-12)
    assert rep.min_speed == pytest.approx(R * w)


@given(st.floats(0.5, 5.0), st.floats(0.05, 1.0), st.floats(-3, 3), st.sampled_from([1, -1]))
def test_direction_persistence(R, w, phase, direction):
    tr = Circle((0.0, 0.0), R, w, phase)
    ref = maneuvering_operator(automobile(), (0,), tr, direction) if R * 1.0 > 1.1 else None
    if ref is None:
        return
    for t in [0.0, 1.0, 2.5]:
        assert np.sign(ref.at(t).uD[0]) == direction
