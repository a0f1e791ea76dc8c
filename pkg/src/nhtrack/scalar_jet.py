"""Nestable forward-mode dual numbers.

A :class:`Dual` carries a value and a tuple of partial derivatives, one per
seeded direction.  Both slots may themselves hold duals, so derivatives of
derivatives come from nesting.  Every dual carries an integer tag naming the
perturbation it belongs to; tags are issued in increasing order, so when two
duals with different tags meet, the one with the larger (more recent) tag is
the outer layer and the other is a constant with respect to it.  This avoids
perturbation confusion when a differentiated function itself differentiates.

Leaves can be Python floats, numpy values or jax arrays/tracers.  The
elementary functions below dispatch on the leaf type, which is what lets the
controller code run both as plain Python and under ``jax.jit``.
"""

from __future__ import annotations

import itertools
import math
import sys
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Dual", "SingularityError", "DomainError",
    "sin", "cos", "tan", "sec", "arctan", "atan2", "tanh", "sinh", "cosh",
    "sqrt", "exp", "log", "power", "sign", "where", "primal",
    "directional", "seed_gradient", "jacobian", "taylor_derivatives",
    "tanhc_sq", "sinh_sq_norm", "sinc",
]


class SingularityError(ArithmeticError):
    """An elementary function was evaluated at a pole."""


class DomainError(ValueError):
    """A precondition on a scalar argument does not hold."""


_tags = itertools.count(1)


def _new_tag() -> int:
    return next(_tags)


class Dual:
    """Value plus directional partials for a single perturbation tag."""

    __slots__ = ("val", "eps", "tag")
    # make numpy defer to our operators instead of building object arrays
    __array_ufunc__ = None

    def __init__(self, val, eps: tuple, tag: int):
        self.val = val
        self.eps = eps
        self.tag = tag

    def __repr__(self) -> str:
        return f"Dual({self.val!r}, {self.eps!r}, tag={self.tag})"

    # arithmetic -------------------------------------------------------
    def __add__(self, other):
        return _add(self, other)

    def __radd__(self, other):
        return _add(other, self)

    def __sub__(self, other):
        return _sub(self, other)

    def __rsub__(self, other):
        return _sub(other, self)

    def __mul__(self, other):
        return _mul(self, other)

    def __rmul__(self, other):
        return _mul(other, self)

    def __truediv__(self, other):
        return _div(self, other)

    def __rtruediv__(self, other):
        return _div(other, self)

    def __neg__(self):
        return Dual(_neg(self.val), tuple(_neg(d) for d in self.eps), self.tag)

    def __pos__(self):
        return self

    def __pow__(self, p):
        if isinstance(p, Dual):
            return exp(p * log(self))
        return power(self, p)

    def __rpow__(self, base):
        return exp(self * log(base))

    # comparisons act on the innermost value so that branch decisions on
    # plain floats keep working; they are not differentiable
    def __lt__(self, other):
        return primal(self) < primal(other)

    def __le__(self, other):
        return primal(self) <= primal(other)

    def __gt__(self, other):
        return primal(self) > primal(other)

    def __ge__(self, other):
        return primal(self) >= primal(other)

    def __float__(self):
        return float(primal(self))


def _tag(x) -> int:
    return x.tag if isinstance(x, Dual) else 0


# Leaf arithmetic.  Exact no-ops on Python literals (x*0, x*1, x+0) are
# skipped so that they never become graph nodes, and jax values go straight
# to lax, which traces several times faster than the operator overloads.

_JAX_TYPES: tuple = ()


def _jax_types() -> tuple:
    global _JAX_TYPES
    if not _JAX_TYPES and "jax" in sys.modules:
        import jax
        _JAX_TYPES = (jax.Array, jax.core.Tracer)
    return _JAX_TYPES


def _lax_pair(a, b):
    jt = _jax_types()
    if jt and (isinstance(a, jt) or isinstance(b, jt)):
        from jax import lax
        return lax
    return None


def _is_lit(x, v) -> bool:
    return type(x) in (float, int) and x == v


def _ladd(a, b):
    if _is_lit(b, 0):
        return a
    if _is_lit(a, 0):
        return b
    lax = _lax_pair(a, b)
    return lax.add(*_floats(a, b)) if lax else a + b


def _lsub(a, b):
    if _is_lit(b, 0):
        return a
    lax = _lax_pair(a, b)
    return lax.sub(*_floats(a, b)) if lax else a - b


def _lmul(a, b):
    if _is_lit(a, 0) or _is_lit(b, 0):
        return 0.0
    if _is_lit(a, 1):
        return b
    if _is_lit(b, 1):
        return a
    lax = _lax_pair(a, b)
    return lax.mul(*_floats(a, b)) if lax else a * b


def _ldiv(a, b):
    if _is_lit(b, 1):
        return a
    if _is_lit(a, 0):
        return 0.0
    lax = _lax_pair(a, b)
    return lax.div(*_floats(a, b)) if lax else a / b


def _lneg(a):
    jt = _jax_types()
    if jt and isinstance(a, jt):
        from jax import lax
        return lax.neg(a)
    return -a


def _floats(a, b):
    return (float(a) if type(a) is int else a), (float(b) if type(b) is int else b)


def _add(a, b):
    ta, tb = _tag(a), _tag(b)
    if ta == tb:
        if ta == 0:
            return _ladd(a, b)
        return Dual(_add(a.val, b.val), tuple(_add(x, y) for x, y in zip(a.eps, b.eps)), ta)
    if ta > tb:
        return Dual(_add(a.val, b), a.eps, ta)
    return Dual(_add(a, b.val), b.eps, tb)


def _sub(a, b):
    ta, tb = _tag(a), _tag(b)
    if ta == tb:
        if ta == 0:
            return _lsub(a, b)
        return Dual(_sub(a.val, b.val), tuple(_sub(x, y) for x, y in zip(a.eps, b.eps)), ta)
    if ta > tb:
        return Dual(_sub(a.val, b), a.eps, ta)
    return Dual(_sub(a, b.val), tuple(_neg(d) for d in b.eps), tb)


def _mul(a, b):
    ta, tb = _tag(a), _tag(b)
    if ta == tb:
        if ta == 0:
            return _lmul(a, b)
        av, bv = a.val, b.val
        return Dual(_mul(av, bv), tuple(_add(_mul(av, y), _mul(bv, x)) for x, y in zip(a.eps, b.eps)), ta)
    if ta > tb:
        return Dual(_mul(a.val, b), tuple(_mul(d, b) for d in a.eps), ta)
    return Dual(_mul(a, b.val), tuple(_mul(a, d) for d in b.eps), tb)


def _div(a, b):
    ta, tb = _tag(a), _tag(b)
    if tb == 0:
        _check_nonzero(b)
        if ta == 0:
            return _ldiv(a, b)
        return Dual(_div(a.val, b), tuple(_div(d, b) for d in a.eps), ta)
    bv = b.val
    _check_nonzero(primal(bv))
    if ta == tb:
        q = _div(a.val, bv)
        return Dual(q, tuple(_div(_sub(x, _mul(q, y)), bv) for x, y in zip(a.eps, b.eps)), ta)
    if ta > tb:
        # b is constant w.r.t. a's perturbation
        return Dual(_div(a.val, b), tuple(_div(d, b) for d in a.eps), ta)
    q = _div(a, bv)
    return Dual(q, tuple(_div(_neg(_mul(q, y)), bv) for y in b.eps), tb)


def _neg(a):
    if isinstance(a, Dual):
        return -a
    return _lneg(a)


def _check_nonzero(x) -> None:
    if isinstance(x, (float, int)) and x == 0:
        raise SingularityError("division by zero")


def primal(x):
    """Innermost (non-dual) value of ``x``."""
    while isinstance(x, Dual):
        x = x.val
    return x


# leaf dispatch ---------------------------------------------------------

class _MathNS:
    sin = staticmethod(math.sin)
    cos = staticmethod(math.cos)
    tan = staticmethod(math.tan)
    arctan = staticmethod(math.atan)
    arctan2 = staticmethod(math.atan2)
    tanh = staticmethod(math.tanh)
    sinh = staticmethod(math.sinh)
    cosh = staticmethod(math.cosh)
    sqrt = staticmethod(math.sqrt)
    exp = staticmethod(math.exp)
    log = staticmethod(math.log)

    @staticmethod
    def sign(x):
        return float(x > 0) - float(x < 0)

    @staticmethod
    def power(x, p):
        return x ** p

    @staticmethod
    def where(c, a, b):
        return a if c else b


class _LaxNS:
    """Elementary functions on jax values, bound directly to lax."""

    def __getattr__(self, name):
        from jax import lax
        import jax.numpy as jnp
        table = {"arctan": lax.atan, "arctan2": lax.atan2}
        f = table.get(name) or getattr(lax, name, None)
        if name in ("where", "power") or f is None:
            f = getattr(jnp, name)
        setattr(self, name, f)
        return f


_LAX_NS = _LaxNS()


def _ns(x):
    if isinstance(x, (float, int)):
        return _MathNS
    if isinstance(x, (np.ndarray, np.generic)):
        return np
    jt = _jax_types()
    if jt and isinstance(x, jt):
        return _LAX_NS
    return np


def _is_python_scalar(x) -> bool:
    return isinstance(x, (float, int))


def _lift_unary(x, f: Callable, df: Callable):
    """Apply f with derivative df to a possibly nested dual."""
    if isinstance(x, Dual):
        v = x.val
        d = df(v)
        return Dual(f(v), tuple(_mul(d, e) for e in x.eps), x.tag)
    return f(x)


def _near_pole_cos(x) -> None:
    if _is_python_scalar(x) and abs(math.cos(x)) < 1e-12:
        raise SingularityError(f"tan/sec pole at argument {x!r}")


def sin(x):
    if isinstance(x, Dual):
        return _lift_unary(x, sin, cos)
    return _ns(x).sin(x)


def cos(x):
    if isinstance(x, Dual):
        return _lift_unary(x, cos, lambda v: _neg(sin(v)))
    return _ns(x).cos(x)


def tan(x):
    if isinstance(x, Dual):
        t = tan(x.val)
        d = _add(1.0, _mul(t, t))
        return Dual(t, tuple(_mul(d, e) for e in x.eps), x.tag)
    _near_pole_cos(x)
    return _ns(x).tan(x)


def sec(x):
    if isinstance(x, Dual):
        s = sec(x.val)
        d = _mul(s, tan(x.val))
        return Dual(s, tuple(_mul(d, e) for e in x.eps), x.tag)
    _near_pole_cos(x)
    return _div(1.0, _ns(x).cos(x))


def arctan(x):
    if isinstance(x, Dual):
        return _lift_unary(x, arctan, lambda v: _div(1.0, _add(1.0, _mul(v, v))))
    return _ns(x).arctan(x)


def atan2(y, x):
    """Two-argument arctangent, differentiable in both arguments."""
    if isinstance(y, Dual) or isinstance(x, Dual):
        t = max(_tag(y), _tag(x))
        yv = y.val if _tag(y) == t else y
        xv = x.val if _tag(x) == t else x
        r2 = _add(_mul(xv, xv), _mul(yv, yv))
        dy = y.eps if _tag(y) == t else None
        dx = x.eps if _tag(x) == t else None
        k = len(dy if dy is not None else dx)
        eps = []
        for i in range(k):
            term = 0.0
            if dy is not None:
                term = _add(term, _mul(xv, dy[i]))
            if dx is not None:
                term = _sub(term, _mul(yv, dx[i]))
            eps.append(_div(term, r2))
        return Dual(atan2(yv, xv), tuple(eps), t)
    return _ns(y if not _is_python_scalar(y) else x).arctan2(y, x)


def tanh(x):
    if isinstance(x, Dual):
        t = tanh(x.val)
        d = _sub(1.0, _mul(t, t))
        return Dual(t, tuple(_mul(d, e) for e in x.eps), x.tag)
    return _ns(x).tanh(x)


def sinh(x):
    if isinstance(x, Dual):
        return _lift_unary(x, sinh, cosh)
    return _ns(x).sinh(x)


def cosh(x):
    if isinstance(x, Dual):
        return _lift_unary(x, cosh, sinh)
    return _ns(x).cosh(x)


def sqrt(x):
    if isinstance(x, Dual):
        r = sqrt(x.val)
        r2 = _mul(2.0, r)
        return Dual(r, tuple(_div(e, r2) for e in x.eps), x.tag)
    if _is_python_scalar(x) and x < 0:
        raise DomainError(f"sqrt of negative argument {x!r}")
    return _ns(x).sqrt(x)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.val)
        return Dual(e, tuple(_mul(e, d) for d in x.eps), x.tag)
    return _ns(x).exp(x)


def log(x):
    if isinstance(x, Dual):
        return _lift_unary(x, log, lambda v: _div(1.0, v))
    if _is_python_scalar(x) and x <= 0:
        raise DomainError(f"log of non-positive argument {x!r}")
    return _ns(x).log(x)


def power(x, p: float):
    """``x**p`` for a constant exponent."""
    if isinstance(x, Dual):
        if p == 0:
            return Dual(power(x.val, 0), tuple(0.0 for e in x.eps), x.tag)
        d = _mul(p, power(x.val, p - 1))
        return Dual(power(x.val, p), tuple(_mul(d, e) for e in x.eps), x.tag)
    if p == 2:
        return _mul(x, x)
    if p == 1:
        return x
    return _ns(x).power(x, p)


def sign(x):
    """Sign of the innermost value (derivative zero)."""
    v = primal(x)
    return _ns(v).sign(v)


def where(cond, a, b):
    """Elementwise select that also works on traced leaves.

    With a Python ``bool`` condition this is an ordinary ``if``; only the
    chosen branch matters.  Otherwise values and partials are selected leaf
    by leaf, so both branches must be finite.
    """
    if isinstance(cond, (bool, np.bool_)):
        return a if cond else b
    ta, tb = _tag(a), _tag(b)
    if ta == 0 and tb == 0:
        leaf = a if not _is_python_scalar(a) else b
        if _is_python_scalar(leaf):
            leaf = cond
        return _ns(leaf).where(cond, a, b)
    t = max(ta, tb)
    av, aeps = (a.val, a.eps) if ta == t else (a, None)
    bv, beps = (b.val, b.eps) if tb == t else (b, None)
    k = len(aeps if aeps is not None else beps)
    zero = (0.0,) * k
    aeps = aeps if aeps is not None else zero
    beps = beps if beps is not None else zero
    return Dual(where(cond, av, bv),
                tuple(where(cond, x, y) for x, y in zip(aeps, beps)), t)


# differentiation drivers ---------------------------------------------

def _unpack(out, tag: int, k: int):
    """Split an output (scalar or sequence) into values and partials."""
    if isinstance(out, (list, tuple)):
        pairs = [_unpack(o, tag, k) for o in out]
        return [p[0] for p in pairs], [p[1] for p in pairs]
    if isinstance(out, Dual) and out.tag == tag:
        return out.val, list(out.eps)
    return out, [0.0] * k


def directional(f: Callable, x: Sequence, v: Sequence):
    """Value of ``f(x)`` and its derivative along direction ``v``.

    ``f`` takes a sequence of scalars and returns a scalar or a sequence of
    scalars.  Returns ``(value, derivative)`` with matching structure.
    """
    tag = _new_tag()
    xs = [Dual(xi, (vi,), tag) for xi, vi in zip(x, v)]
    val, eps = _unpack(f(xs), tag, 1)
    if isinstance(val, list):
        return val, [e[0] for e in eps]
    return val, eps[0]


def directional_multi(f: Callable, x: Sequence, vs: Sequence[Sequence]):
    """Like :func:`directional` but with several directions seeded at once.

    ``vs[j][i]`` is component ``i`` of direction ``j``.  Returns the value
    and a list of derivatives, one per direction (each matching the
    structure of the value).
    """
    tag = _new_tag()
    k = len(vs)
    xs = [Dual(xi, tuple(vs[j][i] for j in range(k)), tag) for i, xi in enumerate(x)]
    val, eps = _unpack(f(xs), tag, k)
    if isinstance(val, list):
        return val, [[e[j] for e in eps] for j in range(k)]
    return val, list(eps)


def seed_gradient(f: Callable, point: Sequence):
    """Value and gradient of a scalar function of ``len(point)`` inputs."""
    k = len(point)
    tag = _new_tag()
    xs = [Dual(p, tuple(1.0 if j == i else 0.0 for j in range(k)), tag)
          for i, p in enumerate(point)]
    val, eps = _unpack(f(xs), tag, k)
    return val, eps


def jacobian(f: Callable, point: Sequence):
    """Value and Jacobian (list of rows) of a vector function."""
    k = len(point)
    tag = _new_tag()
    xs = [Dual(p, tuple(1.0 if j == i else 0.0 for j in range(k)), tag)
          for i, p in enumerate(point)]
    val, eps = _unpack(f(xs), tag, k)
    return val, eps


def taylor_derivatives(f: Callable, t, order: int) -> list:
    """``[f(t), f'(t), ..., f^(order)(t)]`` for a scalar-in function.

    ``f`` may return a scalar or a sequence; each entry of the result then
    has the same structure.
    """
    def nth(k):
        if k == 0:
            return f
        prev = nth(k - 1)
        return lambda s: directional(lambda xs: prev(xs[0]), [s], [1.0])[1]
    return [nth(k)(t) for k in range(order + 1)]


# smooth norm functions -------------------------------------------------
#
# tanh(g|x|)/|x|, sinh(g|x|)^2 and sin(h)/h are written as functions of a
# squared argument u.  Below the threshold a power series in u is used; it
# is accurate (with its derivatives) to rounding level there, and above the
# threshold the direct formula loses at most ~4^k * eps in its k-th
# derivative.

_SERIES_U = 0.1
_SERIES_TERMS = 20


def _tanh_coeffs(m: int) -> list[float]:
    # tanh x = sum a_k x^(2k+1); from tanh' = 1 - tanh^2
    from fractions import Fraction
    a = [Fraction(1)]
    for k in range(1, m):
        s = sum(a[i] * a[k - 1 - i] for i in range(k))
        a.append(-s / (2 * k + 1))
    return [float(c) for c in a]


def _sinh_sq_coeffs(m: int) -> list[float]:
    # sinh^2 x = sum_{k>=1} 2^(2k-1) x^(2k) / (2k)!
    out = [0.0]
    for k in range(1, m):
        out.append(2.0 ** (2 * k - 1) / math.factorial(2 * k))
    return out


def _sinc_coeffs(m: int) -> list[float]:
    return [(-1.0) ** k / math.factorial(2 * k + 1) for k in range(m)]


class _PowerSeries:
    """Truncated power series ``sum c_k u^k`` as a liftable primitive.

    On a dual argument the value and slope are computed by the series and
    its formal derivative at the inner value, so nesting costs one scalar
    Horner per derivative order rather than a Horner over nested duals.
    """

    def __init__(self, coeffs: Sequence[float]):
        self.coeffs = list(coeffs)
        self._d = None

    def derivative(self) -> "_PowerSeries":
        if self._d is None:
            self._d = _PowerSeries([k * c for k, c in enumerate(self.coeffs)][1:] or [0.0])
        return self._d

    def __call__(self, u):
        if isinstance(u, Dual):
            v = u.val
            d = self.derivative()(v)
            return Dual(self(v), tuple(_mul(d, e) for e in u.eps), u.tag)
        acc = self.coeffs[-1]
        for c in reversed(self.coeffs[:-1]):
            acc = _add(_mul(acc, u), c)
        return acc


_TANHC = _PowerSeries(_tanh_coeffs(_SERIES_TERMS))
_SINHSQ = _PowerSeries(_sinh_sq_coeffs(_SERIES_TERMS))
_SINC = _PowerSeries(_sinc_coeffs(_SERIES_TERMS))


def _series_or_direct(u, series: _PowerSeries, direct: Callable):
    small = primal(u) < _SERIES_U
    if isinstance(small, (bool, np.bool_)):
        return series(u) if small else direct(u)
    u_safe = where(small, _SERIES_U, u)
    return where(small, series(u), direct(u_safe))


def _check_rho(rho) -> None:
    v = primal(rho)
    if _is_python_scalar(v) and v < 0:
        raise DomainError(f"squared norm must be non-negative, got {v!r}")


def tanhc_sq(rho, gamma: float):
    """``tanh(gamma*sqrt(rho))/sqrt(rho)``, smooth through ``rho = 0``."""
    _check_rho(rho)

    def direct(u):
        r = sqrt(u)
        return tanh(r) / r

    return gamma * _series_or_direct(gamma * gamma * rho, _TANHC, direct)


def sinh_sq_norm(rho, gamma: float):
    """``sinh(gamma*sqrt(rho))**2``, smooth through ``rho = 0``."""
    _check_rho(rho)

    def direct(u):
        s = sinh(sqrt(u))
        return s * s

    return _series_or_direct(gamma * gamma * rho, _SINHSQ, direct)


def sinc(h):
    """``sin(h)/h`` with value 1 at 0; smooth."""
    return _series_or_direct(h * h, _SINC, lambda u: sin(sqrt(u)) / sqrt(u))
