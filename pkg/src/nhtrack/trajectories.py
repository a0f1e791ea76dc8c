"""Catalog of planar reference curves.

Each curve exposes ``position(t)`` over generic scalars; time derivatives
of any order come from nesting duals through it.  Curves also carry
analytic bounds on their speed and derivative norms over a horizon, which
the admissibility report combines with dense sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import scalar_jet as jet

__all__ = ["Trajectory", "Line", "Circle", "LaneChange", "Polynomial", "from_params"]


class Trajectory:
    """Base class: subclasses implement ``position`` and ``bounds``."""

    kind = "abstract"

    def position(self, t):
        raise NotImplementedError

    def derivatives(self, t, order: int) -> list:
        """``[x(t), x'(t), ..., x^(order)(t)]``, each a 2-list."""
        return jet.taylor_derivatives(self.position, t, order)

    def velocity(self, t):
        return jet.directional(lambda ts: self.position(ts[0]), [t], [1.0])[1]

    def speed_lower_bound(self, horizon: float) -> float | None:
        """Analytic ``inf |x'(t)|`` on ``[0, horizon]``, or None if unknown."""
        return None

    def derivative_bound(self, k: int, horizon: float) -> float | None:
        """Analytic ``sup |x^(k)(t)|`` on ``[0, horizon]``, or None."""
        return None

    def params(self) -> dict:
        raise NotImplementedError


@dataclass
class Line(Trajectory):
    point: Sequence[float] = (0.0, 0.0)
    velocity_vec: Sequence[float] = (1.0, 0.0)
    kind = "line"

    def position(self, t):
        return [self.point[0] + self.velocity_vec[0] * t,
                self.point[1] + self.velocity_vec[1] * t]

    def speed_lower_bound(self, horizon):
        return math.hypot(*self.velocity_vec)

    def derivative_bound(self, k, horizon):
        if k == 0:
            return max(math.hypot(*self.position(0.0)), math.hypot(*self.position(float(horizon))))
        return math.hypot(*self.velocity_vec) if k == 1 else 0.0

    def params(self):
        return {"point": list(self.point), "velocity": list(self.velocity_vec)}


@dataclass
class Circle(Trajectory):
    center: Sequence[float] = (0.0, 0.0)
    radius: float = 1.0
    rate: float = 1.0
    phase: float = 0.0
    kind = "circle"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("circle radius must be positive")

    def position(self, t):
        a = self.rate * t + self.phase
        return [self.center[0] + self.radius * jet.cos(a),
                self.center[1] + self.radius * jet.sin(a)]

    def speed_lower_bound(self, horizon):
        return self.radius * abs(self.rate)

    def derivative_bound(self, k, horizon):
        if k == 0:
            return math.hypot(*self.center) + self.radius
        return self.radius * abs(self.rate) ** k

    def params(self):
        return {"center": list(self.center), "radius": self.radius,
                "rate": self.rate, "phase": self.phase}


@dataclass
class LaneChange(Trajectory):
    """``x = (start + speed*t, amplitude*sin(omega*t + phase))``."""

    speed: float = 1.0
    amplitude: float = 1.0
    omega: float = 0.5
    phase: float = 0.0
    start: Sequence[float] = (0.0, 0.0)
    kind = "lane_change"

    def position(self, t):
        return [self.start[0] + self.speed * t,
                self.start[1] + self.amplitude * jet.sin(self.omega * t + self.phase)]

    def speed_lower_bound(self, horizon):
        return abs(self.speed)

    def derivative_bound(self, k, horizon):
        a = abs(self.amplitude) * abs(self.omega) ** k
        if k == 0:
            return math.hypot(abs(self.start[0]) + abs(self.speed) * horizon,
                              abs(self.start[1]) + abs(self.amplitude))
        if k == 1:
            return math.hypot(self.speed, a)
        return a

    def params(self):
        return {"speed": self.speed, "amplitude": self.amplitude, "omega": self.omega,
                "phase": self.phase, "start": list(self.start)}


@dataclass
class Polynomial(Trajectory):
    """Coordinates as polynomials in ``t``; coefficients lowest degree first."""

    cx: Sequence[float] = (0.0, 1.0)
    cy: Sequence[float] = (0.0,)
    kind = "polynomial"

    @staticmethod
    def _eval(c, t):
        acc = c[-1]
        for a in reversed(c[:-1]):
            acc = acc * t + a
        return acc

    def position(self, t):
        return [self._eval(list(self.cx), t), self._eval(list(self.cy), t)]

    def _deriv_coeffs(self, c, k):
        p = np.polynomial.Polynomial(list(c)).deriv(k) if len(c) > k else np.polynomial.Polynomial([0.0])
        return p

    def speed_lower_bound(self, horizon):
        # |x'|^2 is a polynomial; its minimum on [0, T] is at an endpoint or
        # a real critical point
        px, py = self._deriv_coeffs(self.cx, 1), self._deriv_coeffs(self.cy, 1)
        sq = px * px + py * py
        cands = [0.0, float(horizon)]
        for r in sq.deriv().roots():
            if abs(r.imag) < 1e-12 and 0 <= r.real <= horizon:
                cands.append(float(r.real))
        return math.sqrt(max(0.0, min(sq(c) for c in cands)))

    def derivative_bound(self, k, horizon):
        # sum of |coefficient| * T^j of the k-th derivative bounds it on [0, T]
        out = 0.0
        for c in (self.cx, self.cy):
            p = self._deriv_coeffs(c, k)
            out = math.hypot(out, sum(abs(a) * horizon ** j for j, a in enumerate(p.coef)))
        return out

    def params(self):
        return {"cx": list(self.cx), "cy": list(self.cy)}


def from_params(kind: str, params: dict) -> Trajectory:
    """Build a catalog curve from a kind tag and keyword parameters."""
    p = dict(params)
    if kind == "line":
        return Line(tuple(p.get("point", (0.0, 0.0))), tuple(p.get("velocity", (1.0, 0.0))))
    if kind == "circle":
        return Circle(tuple(p.get("center", (0.0, 0.0))), float(p.get("radius", 1.0)),
                      float(p.get("rate", 1.0)), float(p.get("phase", 0.0)))
    if kind == "lane_change":
        return LaneChange(float(p.get("speed", 1.0)), float(p.get("amplitude", 1.0)),
                          float(p.get("omega", 0.5)), float(p.get("phase", 0.0)),
                          tuple(p.get("start", (0.0, 0.0))))
    if kind == "polynomial":
        return Polynomial(tuple(p.get("cx", (0.0, 1.0))), tuple(p.get("cy", (0.0,))))
    raise ValueError(f"unknown trajectory kind {kind!r}")

