"""Chained-form transforms and the maneuvering operator.

``S`` maps shape coordinates ``y`` to chained coordinates ``s`` (``s1 =
y1``, ``s_(i+1) = L_h1 s_i``) and ``F`` maps inputs ``u`` to chained inputs
``v``.  The reference generator lifts a planar curve ``xD(t)`` to a full
reference ``(qD, uD)`` by integrating one scalar ODE for the heading and
differentiating it to get the remaining chained coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from . import scalar_jet as jet
from .models import WheeledModel, component_of, BoundaryError
from .trajectories import Trajectory

__all__ = [
    "lie_derivative_tower", "check_maneuverability", "ManeuverabilityReport",
    "TransformPair", "build_transform_generic", "build_transform_truck",
    "build_transform", "InversionError", "NotManeuverableError",
    "ReferenceGenerator", "ReferencePoint", "maneuvering_operator",
    "arc_length_maps", "admissibility_report", "AdmissibilityReport",
    "AdmissibilityError", "jacobian_determinant", "newton_inverse",
]

ZERO_TOL = 1e-10
NONZERO_FLOOR = 1e-10
SPEED_FLOOR = 1e-9
GROWTH_LIMIT = 1e3


class InversionError(ArithmeticError):
    """Newton inversion of ``S`` did not converge."""


class NotManeuverableError(ValueError):
    """The model fails the maneuverability conditions."""


class AdmissibilityError(ValueError):
    """The reference curve stops or leaves the model's component."""


# Lie derivatives ---------------------------------------------------------

def _lie_functions(model: WheeledModel, depth: int) -> list[Callable]:
    """``[phi_0, ..., phi_depth]`` with ``phi_0 = y1``, ``phi_i = L_h1 phi_(i-1)``."""
    phis = [lambda y: y[0]]
    for _ in range(depth):
        prev = phis[-1]
        phis.append(lambda y, prev=prev: jet.directional(prev, list(y), model.h1(list(y)))[1])
    return phis


def lie_derivative_tower(model: WheeledModel, y: Sequence, depth: int):
    """``([L_h1^i y1], [L_h2 L_h1^i y1])`` for ``i = 0..depth``."""
    model.check_y(y)
    phis = _lie_functions(model, depth)
    y = list(y)
    L = [phi(y) for phi in phis]
    L2 = [jet.directional(phi, y, model.h2(y))[1] for phi in phis]
    return L, L2


@dataclass
class ManeuverabilityReport:
    passed: bool
    model: str
    samples: int
    witness: Optional[dict] = None
    y1_invariant: bool = True

    def summary(self) -> str:
        if self.passed:
            return f"{self.model}: maneuverable ({self.samples} samples)"
        w = self.witness
        return (f"{self.model}: NOT maneuverable, condition i={w['i']} violated "
                f"at y={w['y']} (value {w['value']:.3g})")


def check_maneuverability(model: WheeledModel, sample_count: int = 64, seed: int = 0,
                          components: Optional[Sequence[tuple]] = None) -> ManeuverabilityReport:
    """Test ``L_h2 L_h1^i y1 = 0`` (i < n-1) and ``L_h2 L_h1^(n-1) y1 != 0``.

    Points are sampled in every component (or the given ones); the first
    violation is returned as the witness.
    """
    rng = np.random.default_rng(seed)
    n = model.n
    comps = list(components) if components is not None else model.components()
    y1_ok = True
    for mu in comps:
        for _ in range(sample_count):
            y = model.sample_y(rng, mu)
            _, L2 = lie_derivative_tower(model, y, n - 1)
            for i in range(n - 1):
                if abs(float(L2[i])) > ZERO_TOL:
                    return ManeuverabilityReport(False, model.name, sample_count,
                                                 {"i": i, "y": y, "value": float(L2[i]), "mu": mu})
            if abs(float(L2[n - 1])) < NONZERO_FLOOR:
                return ManeuverabilityReport(False, model.name, sample_count,
                                             {"i": n - 1, "y": y, "value": float(L2[n - 1]), "mu": mu})
            shifted = [y[0] + float(rng.uniform(-10, 10))] + y[1:]
            for f in (model.h1, model.h2):
                if any(abs(float(a) - float(b)) > 0 for a, b in zip(f(y), f(shifted))):
                    y1_ok = False
    return ManeuverabilityReport(True, model.name, sample_count, None, y1_ok)


# transforms --------------------------------------------------------------

@dataclass
class TransformPair:
    """Chained-form transform on the component ``mu``.

    ``S(y)`` returns the chained coordinates, ``F(y)`` the pair ``(F21,
    F22)`` of the lower row of the input matrix ``[[1, 0], [F21, F22]]``
    and ``inverse(s)`` the shape vector in the component.
    """

    n: int
    mu: tuple
    S: Callable
    F: Callable
    inverse: Callable
    kind: str = "generic"

    def F_matrix(self, y):
        f21, f22 = self.F(y)
        return [[1.0, 0.0], [f21, f22]]

    def input_to_chain(self, y, u):
        f21, f22 = self.F(y)
        return [u[0], f21 * u[0] + f22 * u[1]]

    def chain_to_input(self, y, v):
        f21, f22 = self.F(y)
        return [v[0], (v[1] - f21 * v[0]) / f22]


def _to_chart(y, mu):
    return [y[0]] + [math.tan(v - m * math.pi) for v, m in zip(y[1:], mu)]


def _from_chart(z, mu):
    return [z[0]] + [jet.arctan(v) + m * math.pi for v, m in zip(z[1:], mu)]


def _newton_chart(resid, jac, z, s_scale, max_iter, tol, growth):
    """Damped Newton in chart coordinates; returns ``(z, r, converged)``."""
    r = resid(z)
    for _ in range(max_iter):
        if np.max(np.abs(r)) <= tol * s_scale:
            return z, r, True
        step = np.linalg.solve(jac(z), r)
        lam = 1.0
        for _ in range(60):
            cand = z - lam * step
            rc = resid(cand)
            if np.all(np.isfinite(rc)) and np.linalg.norm(rc) <= growth * np.linalg.norm(r):
                break
            lam /= 2
        else:
            return z, r, False
        z, r = cand, rc
    return z, r, bool(np.max(np.abs(r)) <= tol * s_scale)


def newton_inverse(S: Callable, s: Sequence[float], mu: tuple,
                   max_iter: int = 50, tol: float = 1e-12) -> list[float]:
    """Damped Newton for ``S(y) = s`` inside the component box of ``mu``.

    Iterates in the chart ``y_i = mu_(i-1)*pi + arctan(z_i)``, which maps
    ``R^n`` onto the open box, so every iterate stays in the component.
    The start ``z = (s1, 0, ..., 0)`` is the box center.  If the direct
    solve fails, the target is approached along the segment from ``S`` at
    the start, each point solved by Newton from the previous solution.
    """
    s = np.asarray(s, dtype=float)
    scale = max(1.0, float(np.max(np.abs(s))))

    def S_chart(z):
        return np.array([float(v) for v in S(_from_chart(list(z), mu))])

    def make_resid(target):
        def resid(z):
            try:
                return S_chart(z) - target
            except jet.SingularityError:
                # chart point rounded onto the box boundary
                return np.full(len(target), np.inf)
        return resid

    def jac(z):
        _, J = jet.jacobian(lambda zs: list(S(_from_chart(zs, mu))), [float(v) for v in z])
        return np.array(J, dtype=float)

    z0 = np.array([s[0]] + [0.0] * len(mu))
    z, r, ok = _newton_chart(make_resid(s), jac, z0, scale, max_iter, tol, GROWTH_LIMIT)
    if not ok:
        s0 = S_chart(z0)
        z, lam, dlam = z0, 0.0, 0.25
        while lam < 1.0 and dlam > 1e-6:
            nxt = min(1.0, lam + dlam)
            target = (1 - nxt) * s0 + nxt * s
            last = nxt == 1.0
            zc, r, ok = _newton_chart(make_resid(target), jac, z, scale,
                                      max_iter, tol if last else 1e-8, 1.0)
            if ok:
                z, lam, dlam = zc, nxt, dlam * 2
            else:
                dlam /= 4
        r = make_resid(s)(z)
    if np.max(np.abs(r)) <= tol * scale:
        return [float(v) for v in _from_chart(list(z), mu)]
    raise InversionError(f"Newton did not converge: residual {np.max(np.abs(r)):.3e}")


def build_transform_generic(model: WheeledModel, mu: tuple = (), check: bool = True) -> TransformPair:
    """``S`` from the Lie tower of ``y1``; inverse by projected Newton."""
    n = model.n
    mu = tuple(mu) if model.has_components else ()
    if model.has_components and len(mu) != n - 1:
        raise ValueError(f"component must have {n - 1} bits, got {mu}")
    if check:
        rep = check_maneuverability(model, 16, components=[mu] if model.has_components else None)
        if not rep.passed:
            raise NotManeuverableError(rep.summary())
    phis = _lie_functions(model, n)

    def S(y):
        y = list(y)
        return [phis[i](y) for i in range(n)]

    def F(y):
        y = list(y)
        f22 = jet.directional(phis[n - 1], y, model.h2(y))[1]
        return phis[n](y), f22

    def inverse(s):
        return newton_inverse(S, [float(v) for v in s], mu)

    return TransformPair(n, mu, S, F, inverse, "generic")


def _sigma(y, i: int):
    """``prod_{k=2..i} sec y_k`` (1-based ``k``)."""
    out = 1.0
    for k in range(2, i + 1):
        out = out * jet.sec(y[k - 1])
    return out


def _etas(ls, y, count: int) -> list:
    """``eta_1..eta_count`` of the truck drift field; needs ``y[:count+1]``."""
    out = []
    sig = 1.0
    for j in range(1, count + 1):
        if j == 1:
            out.append(jet.tan(y[1]) / ls[0])
        else:
            sig = sig * jet.sec(y[j - 1])
            out.append((jet.tan(y[j]) / ls[j - 1] - jet.sin(y[j - 1]) / ls[j - 2]) * sig)
    return out


def build_transform_truck(model: WheeledModel, mu: tuple = ()) -> TransformPair:
    """Closed-form transform for the truck family.

    ``S_i`` depends on ``y1..y_i`` only and is affine in ``tan y_i``:
    ``S_i = theta_i tan y_i + xi_i``, which gives an explicit inverse.
    """
    if model.kind != "truck" or model.lengths is None:
        raise ValueError(f"{model.name} is not a truck-family model")
    n, ls = model.n, model.lengths
    mu = tuple(mu)
    if len(mu) != n - 1:
        raise ValueError(f"component must have {n - 1} bits, got {mu}")

    def S_k(k: int, yp):
        # S_k from the first k coordinates
        if k == 1:
            return yp[0]
        et = _etas(ls, yp, k - 1)
        return jet.directional(lambda ys: S_k(k - 1, ys), list(yp[: k - 1]), et)[1]

    def prod_sig_l(y, i):
        out = 1.0
        for j in range(1, i):
            out = out * _sigma(y, j) / ls[j - 1]
        return out

    def theta(y, i):
        sg = _sigma(y, i - 1)
        return sg * sg * prod_sig_l(y, i)

    def dS_dlast(y, i):
        sg = _sigma(y, i)
        return sg * sg * prod_sig_l(y, i)

    def S(y):
        y = list(y)
        return [S_k(k, y[:k]) for k in range(1, n + 1)]

    def F(y):
        y = list(y)
        if n == 1:
            return 0.0, 1.0
        last = y[n - 1]
        f21 = jet.directional(lambda ys: S_k(n, list(ys) + [last]), y[: n - 1],
                              _etas(ls, y, n - 1))[1]
        return f21, dS_dlast(y, n)

    def inverse(s):
        y = [s[0]]
        for i in range(2, n + 1):
            probe = y + [0.0]
            xi = S_k(i, probe)
            th = theta(probe, i)
            y.append(jet.arctan((s[i - 1] - xi) / th) + mu[i - 2] * math.pi)
        return y

    tp = TransformPair(n, mu, S, F, inverse, "truck")
    tp.theta = theta  # exposed for tests
    tp.dS_dlast = dS_dlast
    return tp


def build_transform(model: WheeledModel, mu: tuple = ()) -> TransformPair:
    """Closed form for trucks, Lie-tower form otherwise."""
    if model.kind == "truck" and model.lengths is not None:
        return build_transform_truck(model, mu)
    return build_transform_generic(model, mu)


def jacobian_determinant(S: Callable, y: Sequence[float]) -> float:
    """``det Jac S(y)`` with the Jacobian from forward-mode derivatives."""
    _, J = jet.jacobian(lambda ys: list(S(ys)), [float(v) for v in y])
    return float(np.linalg.det(np.array(J, dtype=float)))


# reference generation ------------------------------------------------------

@dataclass
class ReferencePoint:
    t: float
    qD: list
    uD: list
    sD: list
    vD: list
    direction: int


class ReferenceGenerator:
    """Maneuvering operator for one model component and travel direction.

    The heading ``s1`` obeys ``s1' = g(t, s1)``; higher chained
    coordinates are ``s_(i+1) = (d/dt s_i)/v1`` with the total time
    derivative taken along that ODE by forward differentiation.  All of
    ``chain``, ``s1_rate`` and ``speed`` accept generic scalars; ``at``
    integrates the heading and returns floats.
    """

    def __init__(self, model: WheeledModel, transform: TransformPair,
                 trajectory: Trajectory, direction: int, branch: Optional[str] = None):
        if direction not in (1, -1):
            raise ValueError(f"direction must be +1 or -1, got {direction}")
        self.model = model
        self.transform = transform
        self.trajectory = trajectory
        self.direction = direction
        self.branch = branch or ("forward" if direction > 0 else "backward")
        if self.branch not in ("forward", "backward"):
            raise ValueError(f"unknown heading branch {self.branch!r}")
        self.n = model.n
        self._t = 0.0
        self._s1 = self.initial_heading()

    # generic-scalar pieces
    def speed(self, t):
        v = self.trajectory.velocity(t)
        sq = v[0] * v[0] + v[1] * v[1]
        p = jet.primal(sq)
        if isinstance(p, float) and p < SPEED_FLOOR ** 2:
            raise AdmissibilityError(f"reference speed {math.sqrt(p):.3g} below floor at t={jet.primal(t)}")
        return jet.sqrt(sq)

    def v1(self, t):
        return self.direction * self.speed(t)

    def s1_rate(self, t, s1):
        """``(a2 cos s1 - a1 sin s1)/v1`` with ``a`` the reference acceleration."""
        a = jet.taylor_derivatives(self.trajectory.position, t, 2)[2]
        return (a[1] * jet.cos(s1) - a[0] * jet.sin(s1)) / self.v1(t)

    def chain(self, t, s1):
        """``([s1..sn], [v1, v2])`` at time ``t`` and heading ``s1``."""
        n = self.n

        def step(k: int):
            # returns a function (t, s1) -> [s_1..s_k]
            if k == 1:
                return lambda t_, s_: [s_]
            prev = step(k - 1)

            def f(t_, s_):
                vals, ders = jet.directional(lambda a: prev(a[0], a[1]), [t_, s_],
                                             [1.0, self.s1_rate(t_, s_)])
                return vals + [ders[-1] / self.v1(t_)]
            return f

        top = step(n)
        vals, ders = jet.directional(lambda a: top(a[0], a[1]), [t, s1], [1.0, self.s1_rate(t, s1)])
        return vals, [self.v1(t), ders[-1]]

    def initial_heading(self) -> float:
        v = [float(c) for c in self.trajectory.velocity(0.0)]
        if math.hypot(*v) < SPEED_FLOOR:
            raise AdmissibilityError("reference starts at rest")
        sgn = 1.0 if self.branch == "forward" else -1.0
        a = math.atan2(sgn * v[1], sgn * v[0])
        if self.branch == "forward":
            return a + 2 * math.pi if a <= -math.pi else a
        return a + 2 * math.pi if a < 0 else a

    # integration state
    def heading(self, t: float) -> float:
        """``s1(t)`` by high-accuracy integration from the cached state."""
        t = float(t)
        if t < self._t:
            self._t, self._s1 = 0.0, self.initial_heading()
        if t > self._t:
            sol = integrate.solve_ivp(lambda tt, s: [float(self.s1_rate(tt, s[0]))],
                                      (self._t, t), [self._s1], method="DOP853",
                                      rtol=1e-12, atol=1e-12)
            self._t, self._s1 = t, float(sol.y[0, -1])
        return self._s1

    def headings(self, ts: Sequence[float]) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if len(ts) == 0:
            return ts
        s0 = self.initial_heading()
        if ts[-1] == 0:
            return np.full_like(ts, s0)
        sol = integrate.solve_ivp(lambda tt, s: [float(self.s1_rate(tt, s[0]))],
                                  (0.0, float(ts[-1])), [s0], method="DOP853",
                                  t_eval=ts, rtol=1e-12, atol=1e-12)
        return sol.y[0]

    def point_from_heading(self, t: float, s1: float) -> ReferencePoint:
        sD, vD = self.chain(t, s1)
        sD = [float(v) for v in sD]
        vD = [float(v) for v in vD]
        yD = [float(v) for v in self.transform.inverse(sD)]
        if self.model.has_components:
            try:
                mu = component_of(self.model, yD)
            except BoundaryError as e:
                raise AdmissibilityError(f"reference at t={t}: {e}") from None
            if mu != self.transform.mu:
                bad = next(i for i, (a, b) in enumerate(zip(mu, self.transform.mu)) if a != b)
                raise AdmissibilityError(
                    f"reference at t={t} leaves component {self.transform.mu}: joint y{bad + 2} = {yD[bad + 1]:.6g}")
        uD = [float(v) for v in self.transform.chain_to_input(yD, vD)]
        xD = [float(v) for v in self.trajectory.position(float(t))]
        return ReferencePoint(float(t), xD + yD, uD, sD, vD, self.direction)

    def at(self, t: float) -> ReferencePoint:
        return self.point_from_heading(t, self.heading(t))


def maneuvering_operator(model: WheeledModel, mu: tuple, trajectory: Trajectory,
                         direction: int, initial_heading_branch: Optional[str] = None) -> ReferenceGenerator:
    """Reference generator ``t -> (qD, uD, sD, vD)`` on component ``mu``."""
    return ReferenceGenerator(model, build_transform(model, mu), trajectory, direction,
                              initial_heading_branch)


# arc length and admissibility ---------------------------------------------

def arc_length_maps(trajectory: Trajectory, horizon: float):
    """``(tau_of_t, t_of_tau)`` with ``tau' = |x'(t)|`` and ``tau(0) = 0``."""

    def speed(t):
        v = trajectory.velocity(float(t))
        return math.hypot(float(v[0]), float(v[1]))

    lb = trajectory.speed_lower_bound(horizon)
    if lb is not None and lb < SPEED_FLOOR:
        raise AdmissibilityError("trajectory is not admissible (speed reaches zero)")

    def tau_of_t(t: float) -> float:
        return integrate.quad(speed, 0.0, float(t), epsabs=1e-13, epsrel=1e-13, limit=500)[0]

    def t_of_tau(tau: float) -> float:
        if tau == 0:
            return 0.0
        hi = max(float(horizon), 1e-6)
        while tau_of_t(hi) < tau:
            hi *= 2
        return optimize.brentq(lambda t: tau_of_t(t) - tau, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    return tau_of_t, t_of_tau


@dataclass
class AdmissibilityReport:
    min_speed: float
    derivative_bounds: list
    admissible: bool
    strongly_admissible: bool
    analytic: bool = True
    notes: list = field(default_factory=list)


def admissibility_report(trajectory: Trajectory, n: int, horizon: float,
                         samples: int = 2001) -> AdmissibilityReport:
    """Speed floor and derivative bounds up to order ``n + 1`` on ``[0, horizon]``."""
    ts = np.linspace(0.0, float(horizon), samples)
    ders = jet.taylor_derivatives(trajectory.position, ts, n + 1)
    sampled = []
    for k, d in enumerate(ders):
        norm = np.hypot(np.broadcast_to(d[0], ts.shape), np.broadcast_to(d[1], ts.shape))
        sampled.append(float(np.max(norm)) if k else float(np.max(norm)))
        if k == 1:
            sampled_min = float(np.min(norm))
    lb = trajectory.speed_lower_bound(horizon)
    analytic = lb is not None
    min_speed = min(lb, sampled_min) if analytic else sampled_min
    bounds = []
    notes = []
    for k in range(n + 2):
        b = trajectory.derivative_bound(k, horizon)
        if b is None:
            analytic = False
            b = sampled[k]
        elif b < sampled[k] * (1 - 1e-9) - 1e-12:
            notes.append(f"analytic bound for order {k} below sampled value")
            b = sampled[k]
        bounds.append(float(b))
    admissible = min_speed > SPEED_FLOOR
    strong = admissible and all(math.isfinite(b) for b in bounds)
    return AdmissibilityReport(min_speed, bounds, admissible, strong, analytic, notes)
