"""Kinematic models of wheeled vehicles in control-affine form.

Every model has the shape

    x' = u1 * (cos y1, sin y1),    y' = u1 * h1(y) + u2 * h2(y)

with ``x`` the planar position of a distinguished point and ``y`` the shape
coordinates (``y1`` the heading).  The vector fields are plain Python
functions over generic scalars, so they can be fed floats, nested duals or
jax tracers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import scalar_jet as jet

__all__ = [
    "WheeledModel", "AxleChain", "BoundaryError", "UnsupportedModelError",
    "chaplygin_sled", "automobile", "automobile_front_axle",
    "truck_with_trailers", "rhs", "component_of", "axle_chain",
    "constraint_residuals", "truck_alternative_input", "angle_distance",
    "wrap_angle", "all_components", "check_y1_invariance",
]

BOUNDARY_TOL = 1e-12


class BoundaryError(ValueError):
    """A joint angle sits on the boundary between two components."""


class UnsupportedModelError(TypeError):
    """The operation needs trailer geometry the model does not have."""


@dataclass(frozen=True)
class WheeledModel:
    """A kinematic model ``(n, h1, h2)`` with optional trailer lengths.

    ``kind`` is ``"truck"`` for the truck family (which includes the sled,
    ``n = 1``, and the unit-wheelbase automobile, ``n = 2``) and
    ``"front_axle"`` for the front-axle automobile.  ``has_components``
    says whether the joint angles split the configuration space into the
    boxes ``|y_i - mu_(i-1)*pi| < pi/2``.
    """

    n: int
    h1: Callable
    h2: Callable
    name: str
    kind: str = "truck"
    lengths: Optional[tuple] = None
    has_components: bool = True

    def check_y(self, y: Sequence) -> None:
        if len(y) != self.n:
            raise ValueError(f"{self.name}: expected {self.n} shape coordinates, got {len(y)}")

    def sample_y(self, rng: np.random.Generator, mu: Sequence[int] = (), margin: float = 0.05):
        """Random shape vector inside component ``mu`` (heading in (-pi, pi])."""
        y = [float(rng.uniform(-math.pi, math.pi))]
        if self.n > 1:
            mu = tuple(mu) if mu else (0,) * (self.n - 1)
            half = math.pi / 2 - margin
            for m in mu:
                y.append(float(m * math.pi + rng.uniform(-half, half)))
        return y

    def components(self) -> list[tuple]:
        return all_components(self.n) if self.has_components else [()]


def all_components(n: int) -> list[tuple]:
    """Every ``mu`` in ``{0,1}^(n-1)``, lexicographic."""
    out = [()]
    for _ in range(n - 1):
        out = [m + (b,) for m in out for b in (0, 1)]
    return out


# catalog ---------------------------------------------------------------

def chaplygin_sled() -> WheeledModel:
    """Knife-edge sled: ``y1' = u2``."""
    return WheeledModel(
        n=1,
        h1=lambda y: [0.0],
        h2=lambda y: [1.0],
        name="chaplygin_sled",
        lengths=(),
    )


def automobile() -> WheeledModel:
    """Rear-axle automobile with unit wheelbase: ``y1' = u1 tan y2``."""
    m = truck_with_trailers([1.0])
    return WheeledModel(m.n, m.h1, m.h2, "automobile", "truck", m.lengths)


def automobile_front_axle() -> WheeledModel:
    """Automobile tracked at the front axle midpoint (not maneuverable)."""
    return WheeledModel(
        n=2,
        h1=lambda y: [jet.sin(y[1]), 0.0],
        h2=lambda y: [1.0, 1.0],
        name="automobile_front_axle",
        kind="front_axle",
        lengths=None,
        has_components=False,
    )


def truck_with_trailers(lengths: Sequence[float]) -> WheeledModel:
    """Truck pulling ``len(lengths) - 1`` trailers; ``n = len(lengths) + 1``.

    ``lengths[i-1]`` is the distance between axles ``i`` and ``i+1``
    counted from the tail.  ``x`` is the tail axle midpoint.
    """
    ls = tuple(float(v) for v in lengths)
    if any(not v > 0 for v in ls):
        raise ValueError(f"trailer lengths must be positive, got {ls}")
    n = len(ls) + 1

    def h1(y):
        out = []
        if n > 1:
            out.append(jet.tan(y[1]) / ls[0])
        sec_prod = 1.0
        for i in range(2, n):  # eta_i, 1-based
            sec_prod = sec_prod * jet.sec(y[i - 1])
            out.append((jet.tan(y[i]) / ls[i - 1] - jet.sin(y[i - 1]) / ls[i - 2]) * sec_prod)
        out.append(0.0)
        return out

    def h2(y):
        return [0.0] * (n - 1) + [1.0]

    if n == 1:
        return chaplygin_sled()
    return WheeledModel(n, h1, h2, f"truck_{n - 2}_trailers", "truck", ls)


# evaluation ------------------------------------------------------------

def rhs(model: WheeledModel, q: Sequence, u: Sequence) -> list:
    """``q' = (u1 cos y1, u1 sin y1, u1 h1(y) + u2 h2(y))``."""
    if len(q) != model.n + 2:
        raise ValueError(f"{model.name}: state must have {model.n + 2} entries, got {len(q)}")
    y = list(q[2:])
    u1, u2 = u[0], u[1]
    a, b = model.h1(y), model.h2(y)
    return [u1 * jet.cos(y[0]), u1 * jet.sin(y[0])] + [u1 * ai + u2 * bi for ai, bi in zip(a, b)]


def component_of(model: WheeledModel, y: Sequence) -> tuple:
    """Bits ``mu`` such that ``cos(y_i - mu_(i-1)*pi) > 0`` for ``i >= 2``."""
    model.check_y(y)
    if not model.has_components:
        return ()
    mu = []
    for i in range(1, model.n):
        c = math.cos(float(jet.primal(y[i])))
        if abs(c) < BOUNDARY_TOL:
            raise BoundaryError(f"joint y{i + 1} = {float(jet.primal(y[i]))!r} is on a component boundary")
        mu.append(0 if c > 0 else 1)
    return tuple(mu)


def wrap_angle(a: float) -> float:
    """Representative of ``a`` in ``(-pi, pi]``."""
    r = math.remainder(a, 2 * math.pi)
    return math.pi if r == -math.pi else r


def angle_distance(y: Sequence[float], y2: Sequence[float]) -> float:
    """``|y1 - y1'|`` plus the chart distance of the remaining angles."""
    d = abs(float(y[0]) - float(y2[0]))
    for a, b in zip(y[1:], y2[1:]):
        d += abs(wrap_angle(float(a) - float(b)))
    return d


@dataclass
class AxleChain:
    chi: list
    psi: list
    tau_vec: list
    nu_vec: list


def _require_lengths(model: WheeledModel) -> tuple:
    if model.kind != "truck" or model.lengths is None:
        raise UnsupportedModelError(f"{model.name} has no trailer geometry")
    return model.lengths


def axle_chain(model: WheeledModel, q: Sequence) -> AxleChain:
    """Axle midpoints from the tail (``chi[0] = x``) to the truck front."""
    ls = _require_lengths(model)
    x, y = q[:2], q[2:]
    model.check_y(y)
    psi, acc = [], 0.0
    for yk in y:
        acc = acc + yk
        psi.append(acc)
    tau = [(jet.cos(p), jet.sin(p)) for p in psi]
    nu = [(-jet.sin(p), jet.cos(p)) for p in psi]
    chi = [(x[0], x[1])]
    for i in range(model.n - 1):
        c = chi[-1]
        chi.append((c[0] + ls[i] * tau[i][0], c[1] + ls[i] * tau[i][1]))
    return AxleChain(chi, psi, tau, nu)


def constraint_residuals(model: WheeledModel, q: Sequence, qdot: Sequence) -> list:
    """No-slip residuals, written as ``sin(a) xdot1 - cos(a) xdot2 + ...``.

    One residual per axle.  They vanish along every motion of the model.
    """
    if len(q) != model.n + 2 or len(qdot) != model.n + 2:
        raise ValueError(f"{model.name}: q and qdot must have {model.n + 2} entries")
    xd1, xd2 = qdot[0], qdot[1]
    y, yd = q[2:], qdot[2:]
    if model.kind == "front_axle":
        th = y[0] - y[1]
        return [jet.sin(y[0]) * xd1 - jet.cos(y[0]) * xd2,
                jet.sin(th) * xd1 - jet.cos(th) * xd2 + (yd[0] - yd[1])]
    ls = _require_lengths(model)
    psi, psid = [], []
    a, ad = 0.0, 0.0
    for yk, ydk in zip(y, yd):
        a, ad = a + yk, ad + ydk
        psi.append(a)
        psid.append(ad)
    out = []
    for i in range(model.n):
        r = jet.sin(psi[i]) * xd1 - jet.cos(psi[i]) * xd2
        for j in range(i):
            r = r - ls[j] * jet.cos(psi[j] - psi[i]) * psid[j]
        out.append(r)
    return out


def truck_alternative_input(model: WheeledModel, y: Sequence, u1):
    """Rear-axle speed of the truck for tail speed ``u1``."""
    _require_lengths(model)
    model.check_y(y)
    out = u1
    for k in range(1, model.n - 1):
        out = out * jet.sec(y[k])
    return out


def check_y1_invariance(model: WheeledModel, y: Sequence, shift: float) -> float:
    """Largest change of ``h1``, ``h2`` under ``y1 -> y1 + shift``."""
    y2 = [y[0] + shift] + list(y[1:])
    d = 0.0
    for f in (model.h1, model.h2):
        for a, b in zip(f(list(y)), f(y2)):
            d = max(d, abs(float(a) - float(b)))
    return d

