import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nhtrack import scalar_jet as jet
from nhtrack.scalar_jet import Dual

from oracles import central, five_point, mp_derivs, mp_sinc, mp_sinh_sq, mp_tanhc

floats = st.floats(-3, 3, allow_nan=False)


def d1(f, x):
    return jet.directional(lambda xs: f(xs[0]), [x], [1.0])[1]


def d2(f, x):
    return d1(lambda s: d1(f, s), x)


# the suite: (jet function, math function, analytic derivative, domain)
SUITE = [
    (jet.sin, math.sin, math.cos, (-3, 3)),
    (jet.cos, math.cos, lambda x: -math.sin(x), (-3, 3)),
    (jet.tan, math.tan, lambda x: 1 / math.cos(x) ** 2, (-1.4, 1.4)),
    (jet.sec, lambda x: 1 / math.cos(x), lambda x: math.sin(x) / math.cos(x) ** 2, (-1.4, 1.4)),
    (jet.arctan, math.atan, lambda x: 1 / (1 + x * x), (-3, 3)),
    (jet.tanh, math.tanh, lambda x: 1 - math.tanh(x) ** 2, (-3, 3)),
    (jet.sinh, math.sinh, math.cosh, (-3, 3)),
    (jet.cosh, math.cosh, math.sinh, (-3, 3)),
    (jet.sqrt, math.sqrt, lambda x: 0.5 / math.sqrt(x), (0.1, 3)),
    (jet.exp, math.exp, math.exp, (-3, 3)),
    (jet.log, math.log, lambda x: 1 / x, (0.1, 3)),
    (lambda x: jet.power(x, 2.5), lambda x: x ** 2.5, lambda x: 2.5 * x ** 1.5, (0.1, 3)),
]


def test_seed_gradient_examples():
    assert jet.seed_gradient(lambda x: jet.sin(x[0]), [0.0]) == (0.0, [1.0])
    val, g = jet.seed_gradient(lambda x: x[0] * x[0] + x[1] * x[1], [1.0, 2.0])
    assert val == 5.0 and g == [2.0, 4.0]


def test_tan_gradient_matches_finite_difference():
    _, g = jet.seed_gradient(lambda x: jet.tan(x[0]), [0.3])
    fd = central(math.tan, 0.3, 1e-5)
    assert abs(g[0] - fd) / abs(fd) <= 1e-7


def test_singularity_error():
    with pytest.raises(jet.SingularityError):
        jet.seed_gradient(lambda x: jet.tan(x[0]), [math.pi / 2])
    with pytest.raises(jet.SingularityError):
        jet.sec(Dual(math.pi / 2, (1.0,), 99))
    with pytest.raises(jet.SingularityError):
        jet.directional(lambda x: 1.0 / x[0], [0.0], [1.0])


@pytest.mark.parametrize("k", range(len(SUITE)))
def test_suite_derivative_rules(k):
    f, g, dg, (lo, hi) = SUITE[k]
    rng = np.random.default_rng(k)
    for x in rng.uniform(lo, hi, 50):
        x = float(x)
        val, d = jet.directional(lambda xs: f(xs[0]), [x], [1.0])
        assert val == pytest.approx(g(x), rel=1e-15, abs=1e-15)
        assert d == pytest.approx(dg(x), rel=1e-12, abs=1e-14)
        fd = central(g, x, 1e-6 * max(1.0, abs(x)))
        assert abs(d - fd) <= 1e-7 * max(abs(fd), 1.0)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_atan2_partials(y, x):
    if math.hypot(x, y) < 0.1:
        return
    _, g = jet.seed_gradient(lambda v: jet.atan2(v[0], v[1]), [y, x])
    r2 = x * x + y * y
    assert g[0] == pytest.approx(x / r2, rel=1e-12, abs=1e-15)
    assert g[1] == pytest.approx(-y / r2, rel=1e-12, abs=1e-15)


@given(st.integers(0, len(SUITE) - 1), st.integers(0, len(SUITE) - 1), st.floats(0, 1))
def test_chain_rule(i, j, frac):
    f, fm, _, (flo, fhi) = SUITE[i]
    g, gm, _, (glo, ghi) = SUITE[j]
    # inner argument chosen so g(x) lands in f's domain
    xs = np.linspace(glo, ghi, 2001)
    ok = [x for x in xs if flo < gm(float(x)) < fhi]
    if len(ok) < 10:
        return
    x = float(ok[int(frac * (len(ok) - 1))])
    if not (glo + 1e-3 < x < ghi - 1e-3 and flo + 1e-3 < gm(x) < fhi - 1e-3):
        return
    d = d1(lambda s: f(g(s)), x)
    fd = five_point(lambda s: fm(gm(s)), x, 1e-3)
    assert abs(d - fd) <= 1e-6 * max(abs(fd), 1.0)


@given(st.floats(-1.4, 1.4))
def test_nested_second_derivative_of_tan(x):
    exact = 2 * math.tan(x) / math.cos(x) ** 2
    assert abs(d2(jet.tan, x) - exact) <= 1e-8 * max(abs(exact), 1e-300) + 1e-300


def test_nested_mixed_partials():
    # d^2/dxdy of sin(x) * exp(x*y)
    def f(v):
        return jet.sin(v[0]) * jet.exp(v[0] * v[1])

    x, y = 0.7, -0.4

    def dx(v):
        return jet.directional(f, v, [1.0, 0.0])[1]

    _, dxy = jet.directional(dx, [x, y], [0.0, 1.0])
    exact = math.exp(x * y) * (math.cos(x) * x + math.sin(x) * (1 + x * y))
    assert dxy == pytest.approx(exact, rel=1e-13)


@given(floats, floats)
def test_zero_partial_embedding(a, b):
    def expr(x, y):
        return jet.sin(x) * jet.cos(y) + jet.tanh(x * y) - jet.arctan(x) / (2.0 + y * y)

    plain = expr(a, b)
    da, db = Dual(a, (0.0,), 7), Dual(b, (0.0,), 7)
    lifted = expr(da, db)
    assert lifted.val == plain
    assert lifted.eps == (0.0,)


def test_directional_multi_matches_single():
    def f(v):
        return [jet.sin(v[0] * v[1]), v[0] ** 3 + jet.cos(v[1])]

    x = [0.3, -1.2]
    dirs = [[1.0, 0.5], [-0.2, 2.0]]
    val, ds = jet.directional_multi(f, x, dirs)
    for d, v in zip(ds, dirs):
        assert d == jet.directional(f, x, v)[1]
    assert val == f(x)


def test_jacobian_and_taylor():
    val, J = jet.jacobian(lambda v: [v[0] * v[1], jet.sin(v[0])], [2.0, 3.0])
    assert val == [6.0, math.sin(2.0)]
    assert J == [[3.0, 2.0], [math.cos(2.0), 0.0]]
    ders = jet.taylor_derivatives(jet.exp, 0.5, 4)
    assert all(d == pytest.approx(math.exp(0.5), rel=1e-15) for d in ders)


def test_tanhc_and_sinh_examples():
    assert jet.tanhc_sq(0.0, 2.0) == 2.0
    assert jet.tanhc_sq(1.0, 1.0) == pytest.approx(math.tanh(1.0), rel=1e-15)
    assert math.tanh(1.0) == pytest.approx(0.76159, abs=1e-5)
    assert jet.sinh_sq_norm(0.0, 1.0) == 0.0
    assert jet.sinh_sq_norm(1.0, 1.0) == pytest.approx(1.38109, abs=1e-5)
    assert d1(lambda r: jet.sinh_sq_norm(r, 2.0), 0.0) == pytest.approx(4.0, rel=1e-15)
    assert jet.sinc(0.0) == 1.0
    with pytest.raises(jet.DomainError):
        jet.tanhc_sq(-1.0, 1.0)
    with pytest.raises(jet.DomainError):
        jet.sinh_sq_norm(-1e-3, 1.0)


def _derivs(f, x, k):
    out, g = [], f
    for _ in range(k + 1):
        out.append(g(x))
        g = (lambda h: (lambda s: d1(h, s)))(g)
    return out


SMOOTH = [
    ("tanhc", lambda r: jet.tanhc_sq(r, 1.3), mp_tanhc(1.3)),
    ("sinh_sq", lambda r: jet.sinh_sq_norm(r, 1.3), mp_sinh_sq(1.3)),
]


@pytest.mark.parametrize("name,f,ref", SMOOTH)
@pytest.mark.parametrize("rho", [0.0, 1e-12, 1e-8, 0.01, 0.0591, 0.0592, 0.06, 0.5, 3.0, 40.0])
def test_smooth_norms_against_high_precision(name, f, ref, rho):
    # derivatives up to order 4 on both sides of the series switch
    # (gamma^2 rho = 0.1 at rho ~ 0.05917)
    got = _derivs(f, rho, 4)
    want = mp_derivs(ref, rho, 4)
    for k, (g, w) in enumerate(zip(got, want)):
        assert abs(g - w) <= 1e-9 * max(1.0, abs(w)), (k, g, w)


@pytest.mark.parametrize("h", [0.0, 1e-7, 0.1, 0.3161, 0.3163, 1.0, 2.5])
def test_sinc_against_high_precision(h):
    got = _derivs(jet.sinc, h, 4)
    want = mp_derivs(mp_sinc, h, 4)
    for g, w in zip(got, want):
        assert abs(g - w) <= 1e-9 * max(1.0, abs(w))


def test_tanhc_derivative_continuous_at_tiny_rho():
    a = d1(lambda r: jet.tanhc_sq(r, 1.0), 1e-12)
    b = d1(lambda r: jet.tanhc_sq(r, 1.0), 0.0)
    assert abs(a - b) <= 1e-9


def test_numpy_leaves():
    x = np.linspace(-1, 1, 7)
    val, d = jet.directional(lambda v: jet.sin(v[0]) * v[0], [x], [np.ones_like(x)])
    assert np.allclose(val, np.sin(x) * x, rtol=0, atol=1e-15)
    assert np.allclose(d, np.cos(x) * x + np.sin(x), rtol=0, atol=1e-15)
    r = np.array([0.0, 0.01, 1.0, 9.0])
    assert np.allclose(jet.tanhc_sq(r, 1.0), [1.0] + [math.tanh(math.sqrt(v)) / math.sqrt(v) for v in r[1:]],
                       rtol=1e-14)


def test_jax_leaves_match_floats():
    jax = pytest.importorskip("jax")
    jax.config.update("jax_enable_x64", True)

    def f(v):
        return jet.tanhc_sq(v[0] * v[0] + v[1] * v[1], 0.7) * jet.atan2(v[1], v[0]) + jet.sec(v[1])

    def grad(a, b):
        return jet.seed_gradient(f, [a, b])

    for a, b in [(0.0, 0.3), (0.1, 0.2), (1.5, -0.3)]:
        val, g = grad(a, b)
        jval, jg = jax.jit(lambda a_, b_: grad(a_, b_))(a, b)
        assert float(jval) == pytest.approx(val, rel=1e-14, abs=1e-15)
        assert [float(v) for v in jg] == pytest.approx(g, rel=1e-13, abs=1e-15)


def test_where_selects_partials():
    x = Dual(2.0, (1.0,), 3)
    assert jet.where(True, x, 0.0) is x
    assert jet.where(False, x, 0.5) == 0.5
    np_cond = np.array([True, False])
    w = jet.where(np_cond, Dual(np.array([1.0, 2.0]), (np.array([3.0, 4.0]),), 5), 0.0)
    assert list(w.val) == [1.0, 0.0] and list(w.eps[0]) == [3.0, 0.0]
