import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nhtrack.trajectories import Circle, LaneChange, Line, Polynomial, from_params


def test_line_derivatives():
    tr = Line((1.0, 2.0), (3.0, -1.0))
    ders = tr.derivatives(0.5, 3)
    assert ders[0] == [2.5, 1.5] and ders[1] == [3.0, -1.0]
    assert ders[2] == [0.0, 0.0] and ders[3] == [0.0, 0.0]


@given(st.floats(0.1, 10), st.floats(-2, 2), st.floats(-3, 3), st.floats(0, 20))
def test_circle_derivatives(R, w, ph, t):
    tr = Circle((0.5, -1.0), R, w, ph)
    ders = tr.derivatives(t, 4)
    a = w * t + ph
    for k, d in enumerate(ders[1:], start=1):
        # k-th derivative of R e^{i a(t)} is R (i w)^k e^{i a}
        ang = a + k * math.pi / 2
        want = (R * w ** k * math.cos(ang), R * w ** k * math.sin(ang))
        assert np.allclose(d, want, rtol=1e-12, atol=1e-12 * max(1.0, R * abs(w) ** k))
        assert math.hypot(*d) <= tr.derivative_bound(k, t) * (1 + 1e-12) + 1e-15


def test_lane_change_and_polynomial():
    tr = LaneChange(2.0, 0.5, 0.8, 0.1, (1.0, 0.0))
    d = tr.derivatives(1.3, 2)
    assert d[1][0] == 2.0
    assert d[2][1] == pytest.approx(-0.5 * 0.64 * math.sin(0.8 * 1.3 + 0.1), rel=1e-14)
    p = Polynomial((0.0, 1.0, 0.0, 2.0), (1.0, 0.0, -1.0))
    d = p.derivatives(2.0, 3)
    assert d[0] == [18.0, -3.0] and d[1] == [25.0, -4.0] and d[3] == [12.0, 0.0]
    assert Polynomial((0.0, 0.0, 0.0, 1.0), (0.0,)).speed_lower_bound(1.0) == 0.0


def test_from_params_roundtrip():
    for tr in [Line((1.0, 2.0), (0.5, 0.5)), Circle((0.0, 1.0), 2.0, 0.3, 0.1),
               LaneChange(1.0, 0.4, 0.6, 0.0, (0.0, 0.0)), Polynomial((0.0, 1.0), (0.0, 0.0, 0.1))]:
        again = from_params(tr.kind, tr.params())
        assert again == tr
    with pytest.raises(ValueError):
        from_params("spiral", {})
    with pytest.raises(ValueError):
        Circle(radius=0.0)
