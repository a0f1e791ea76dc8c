"""Reference computations that share no code with the package."""

import math

import mpmath
import numpy as np

mpmath.mp.dps = 40


def five_point(f, x, h):
    """Fourth-order central difference of a scalar or array function."""
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)


def central(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


def trailer_shape_rates(lengths, y, u1, u2):
    """Shape velocity of a truck with trailers from the axle-by-axle kinematics.

    Axle ``i`` moves along its own heading ``psi_i`` with speed ``v_i``;
    rigid hitches give ``v_(i+1) = v_i / cos(psi_(i+1) - psi_i)`` and
    ``psi_i' = v_i tan(psi_(i+1) - psi_i) / l_i``.  The front body heading is
    steered directly (``y_n' = u2``).
    """
    n = len(lengths) + 1
    psi = np.cumsum(y)
    v = [u1]
    for i in range(n - 1):
        v.append(v[-1] / math.cos(psi[i + 1] - psi[i]))
    psid = [v[i] * math.tan(psi[i + 1] - psi[i]) / lengths[i] for i in range(n - 1)]
    yd = [psid[0]] + [psid[i] - psid[i - 1] for i in range(1, n - 1)]
    return yd + [u2]


def mp_derivs(f, x, k):
    """``[f(x), f'(x), ..., f^(k)(x)]`` in 40-digit arithmetic."""
    # near rho = 0 the stencil leaves the real axis; the continuation is real
    return [float(mpmath.re(mpmath.diff(f, mpmath.mpf(x), j))) for j in range(k + 1)]


def mp_tanhc(gamma):
    g = mpmath.mpf(gamma)

    def f(rho):
        r = mpmath.sqrt(rho)
        return g if r == 0 else mpmath.tanh(g * r) / r
    return f


def mp_sinh_sq(gamma):
    g = mpmath.mpf(gamma)
    return lambda rho: mpmath.sinh(g * mpmath.sqrt(rho)) ** 2


def mp_sinc(h):
    return mpmath.sinc(h)


def circle_steer_angle(radius, wheelbase=1.0):
    """Steering angle of a car whose rear axle runs on a circle."""
    return math.atan(wheelbase / radius)
