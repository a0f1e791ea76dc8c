"""Recursive backstepping synthesis of the tracking feedback.

Error coordinates live in arc-length time: ``xt`` is the planar tracking
error, ``st`` the chained-coordinate error, ``p`` the reference signal
vector (``cos sbar1, sin sbar1, sbar2, ...``) and ``wbar`` the direction
sign.  Every function here works over generic scalars (floats, nested
:class:`~nhtrack.scalar_jet.Dual`, jax tracers); derivatives of a stage are taken
by seeding duals into that stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from . import scalar_jet as jet
from .scalar_jet import Dual, SingularityError

__all__ = [
    "Gains", "StabilizerStage", "Cascade", "x_stage", "lam", "alpha0",
    "backstep", "build_cascade", "build_stages", "Psi", "ErrorState",
    "error_coordinates", "w_to_v", "reference_vector", "P_map", "P_prime",
    "FeedbackLaw", "phi", "ControlLaw", "control_law", "ComponentError",
]


@dataclass(frozen=True)
class Gains:
    """Decay rate ``gamma`` and backstepping weights ``deltas``."""

    gamma: float = 1.0
    deltas: tuple = ()

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if any(not d > 0 for d in self.deltas):
            raise ValueError(f"deltas must be positive, got {self.deltas}")
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))

    @classmethod
    def default(cls, n: int, gamma: float = 1.0) -> "Gains":
        return cls(gamma, (1.0,) * n)

    def for_order(self, n: int) -> "Gains":
        """Pad or check ``deltas`` so there is one per recursion step."""
        if not self.deltas:
            return Gains(self.gamma, (1.0,) * n)
        if len(self.deltas) != n:
            raise ValueError(f"need {n} deltas, got {len(self.deltas)}")
        return self


# x-subsystem ---------------------------------------------------------

def _c_vector(xt, pc, ps, wbar, gamma):
    x1, x2 = xt[0], xt[1]
    k = jet.tanhc_sq(x1 * x1 + x2 * x2, gamma)
    g1 = pc * x1 + ps * x2
    g2 = pc * x2 - ps * x1
    return wbar - k * g1, -k * g2


def lam(xt, pc, ps, wbar, gamma):
    """Longitudinal input ``w1 = wbar*|c|`` of the x-stage."""
    c1, c2 = _c_vector(xt, pc, ps, wbar, gamma)
    return wbar * jet.sqrt(c1 * c1 + c2 * c2)


def alpha0(xt, pc, ps, wbar, gamma):
    """Heading virtual control, in (-pi/2, pi/2) since sign c1 = wbar."""
    c1, c2 = _c_vector(xt, pc, ps, wbar, gamma)
    return jet.atan2(wbar * c2, wbar * c1)


def V0(xt, gamma):
    x1, x2 = xt[0], xt[1]
    return jet.sinh_sq_norm(x1 * x1 + x2 * x2, gamma)


def B0(xt, st1, pc, ps, wbar, gamma, lam_value=None):
    """Right side of the planar error equation with ``w1 = lambda``."""
    L = lam(xt, pc, ps, wbar, gamma) if lam_value is None else lam_value
    cs, sn = jet.cos(st1), jet.sin(st1)
    return [-wbar * pc + L * (pc * cs - ps * sn),
            -wbar * ps + L * (ps * cs + pc * sn)]


@dataclass
class StabilizerStage:
    """Virtual control ``alpha_i`` and Lyapunov function ``V_i``.

    ``evaluate(z, r, wbar)`` returns ``(alpha, V, dV_dlast)`` for state ``z``
    (length ``dim_z``) and reference vector ``r``; ``dV_dlast`` is the
    partial of ``V`` in the last state coordinate when the stage knows it in
    closed form, else ``None``.
    """

    index: int
    dim_z: int
    evaluate: Callable

    def alpha(self, z, r, wbar):
        return self.evaluate(z, r, wbar)[0]

    def V(self, z, r, wbar):
        return self.evaluate(z, r, wbar)[1]

    def gradients(self, z, r, wbar):
        """Values and gradients of ``alpha`` and ``V`` w.r.t. ``z + r``."""
        kz = len(z)

        def f(xs):
            return list(self.evaluate(xs[:kz], xs[kz:], wbar)[:2])

        return jet.jacobian(f, list(z) + list(r))


def x_stage(gamma: float) -> StabilizerStage:
    """``(alpha_0, V_0)`` over ``z = xt`` and ``r = (cos sbar1, sin sbar1)``."""

    def evaluate(z, r, wbar):
        return alpha0(z, r[0], r[1], wbar, gamma), V0(z, gamma), None

    return StabilizerStage(0, 2, evaluate)


# one backstepping step ----------------------------------------------

SECANT_SWITCH = 1e-9


def divided_difference(B: Callable, z, zeta, eta, p, wbar):
    """Secant of ``B`` in its scalar argument, derivative when coincident."""
    h = jet.primal(zeta) - jet.primal(eta)
    if isinstance(h, (float, int)):
        if abs(h) < SECANT_SWITCH:
            _, d = jet.directional(lambda xs: B(z, xs[0], p, wbar), [zeta], [1.0])
            return d
        bz = B(z, zeta, p, wbar)
        be = B(z, eta, p, wbar)
        return [(a - b) / (zeta - eta) for a, b in zip(bz, be)]
    small = abs(h) < SECANT_SWITCH
    _, d = jet.directional(lambda xs: B(z, xs[0], p, wbar), [zeta], [1.0])
    den = jet.where(small, 1.0, zeta - eta)
    bz = B(z, zeta, p, wbar)
    be = B(z, eta, p, wbar)
    return [jet.where(small, di, (a - b) / den) for di, a, b in zip(d, bz, be)]


@dataclass
class Cascade:
    """Coefficients of ``z' = B(z, zeta, p)``, ``zeta' = b + beta*upsilon``.

    ``P`` and ``P_prime`` give the previous stage's reference vector and its
    arc-length derivative from ``p``.  ``aux(z, p, wbar)``, if given, is
    computed once per evaluation and passed as the last argument to ``B``,
    ``b``, ``beta``, ``D`` and ``D_last``.  The divided difference of ``B`` in
    ``zeta`` is, in order of preference: ``D_last`` (``B`` is affine in
    ``zeta`` and only its last row depends on it; returns that row's
    slope), ``D`` (closed form equal to the secant), or the switched secant
    of :func:`divided_difference`.
    """

    B: Callable
    b: Callable
    beta: Callable
    P: Callable
    P_prime: Callable
    D: Optional[Callable] = None
    D_last: Optional[Callable] = None
    aux: Optional[Callable] = None


def backstep(stage: StabilizerStage, cascade: Cascade, delta: float,
             gamma: float) -> StabilizerStage:
    """Extend ``stage`` by one integrator through ``cascade``."""
    if not (delta > 0 and gamma > 0):
        raise ValueError("delta and gamma must be positive")
    kz = stage.dim_z

    def evaluate(zhat, p, wbar):
        z, zeta = list(zhat[:kz]), zhat[kz]
        r = cascade.P(p)
        r1 = cascade.P_prime(p, wbar)
        ax = cascade.aux(z, p, wbar) if cascade.aux is not None else None
        Bv = cascade.B(z, zeta, p, wbar, ax)

        def f(xs):
            return list(stage.evaluate(xs[:kz], xs[kz:], wbar))

        if cascade.D_last is not None:
            (a, V, g), (da_dir, _, _) = jet.directional(f, z + list(r), list(Bv) + list(r1))
            if g is None:
                raise ValueError("D_last needs a stage with a closed-form dV/dz_last")
            dV_D = cascade.D_last(z, zeta, p, wbar, ax) * g
        else:
            eta = stage.alpha(z, r, wbar)
            if cascade.D is not None:
                Dv = cascade.D(z, zeta, eta, p, wbar, ax)
            else:
                Dv = divided_difference(
                    lambda z_, zeta_, p_, wbar_: cascade.B(z_, zeta_, p_, wbar_, ax),
                    z, zeta, eta, p, wbar)
            (a, V, _), ((da_dir, _, _), (_, dV_D, _)) = jet.directional_multi(
                lambda xs: f(xs)[:2] + [0.0], z + list(r),
                [list(Bv) + list(r1), list(Dv) + [0.0] * len(r)])
        beta = cascade.beta(z, zeta, p, wbar, ax)
        bp = jet.primal(beta)
        if isinstance(bp, (float, int)) and abs(bp) < 1e-12:
            raise SingularityError(f"cascade gain beta vanished ({bp!r})")
        e = zeta - a
        a_hat = (da_dir - dV_D / delta - cascade.b(z, zeta, p, wbar, ax) - gamma * e) / beta
        V_hat = V + delta * e * e / 2
        return a_hat, V_hat, delta * e

    return StabilizerStage(stage.index + 1, kz + 1, evaluate)


# reference vectors ---------------------------------------------------

def P_map(p, i: int):
    """``p^(i-1)`` from ``p^i``: the first ``i + 1`` entries."""
    return list(p[: i + 1])


def P_prime(p, wbar, i: int):
    """Arc-length derivative of ``p^(i-1)`` expressed through ``p^i``."""
    pc, ps, s2 = p[0], p[1], p[2]
    out = [-ps * s2 * wbar, pc * s2 * wbar]
    for k in range(2, i + 1):
        out.append(wbar * p[k + 1])
    return out


def reference_vector(sbar: Sequence, vbar: Sequence):
    """``p^n = (cos sbar1, sin sbar1, sbar2..sbarn, vbar2/vbar1)``."""
    return [jet.cos(sbar[0]), jet.sin(sbar[0])] + list(sbar[1:]) + [vbar[1] / vbar[0]]


# cascade rows of the error system -------------------------------------

def build_cascade(n: int, gamma: float) -> list[Cascade]:
    """Cascades for steps ``i = 1..n`` of the recursion.

    Step ``i`` has state ``z^(i-1) = (xt, st1..st_{i-1})``, new coordinate
    ``st_i`` and reference vector ``p^i``.  Rows below ``n`` have
    ``b_i = (lambda - wbar)*sbar_{i+1}`` and ``beta_i = lambda``; the last
    has ``b_n = 0``, ``beta_n = 1``.
    """

    def make(i: int) -> Cascade:
        def aux(z, p, wbar):
            return lam(z[:2], p[0], p[1], wbar, gamma)

        def B(z, zeta, p, wbar, L):
            st = list(z[2:]) + [zeta]  # st1..st_i
            rows = B0(z[:2], st[0], p[0], p[1], wbar, gamma, L)
            for j in range(1, i):
                rows.append((L - wbar) * p[j + 1] + L * st[j])
            return rows

        D = D_last = None
        if i == 1:
            def D(z, zeta, eta, p, wbar, L):
                half = (zeta - eta) / 2
                m = (zeta + eta) / 2
                sc = jet.sinc(half)
                dc, ds = -jet.sin(m) * sc, jet.cos(m) * sc
                return [L * (p[0] * dc - p[1] * ds), L * (p[1] * dc + p[0] * ds)]
        else:
            def D_last(z, zeta, p, wbar, L):
                return L

        if i < n:
            def b(z, zeta, p, wbar, L):
                return (L - wbar) * p[i + 1]

            def beta(z, zeta, p, wbar, L):
                return L
        else:
            def b(z, zeta, p, wbar, L):
                return 0.0

            def beta(z, zeta, p, wbar, L):
                return 1.0

        return Cascade(
            B=B, b=b, beta=beta,
            P=lambda p: P_map(p, i),
            P_prime=lambda p, wbar: P_prime(p, wbar, i),
            D=D, D_last=D_last, aux=aux,
        )

    return [make(i) for i in range(1, n + 1)]


def build_stages(n: int, gains: Gains) -> list[StabilizerStage]:
    """``[stage_0, ..., stage_n]`` for an order-``n`` chained system."""
    gains = gains.for_order(n)
    stages = [x_stage(gains.gamma)]
    for i, cas in enumerate(build_cascade(n, gains.gamma), start=1):
        stages.append(backstep(stages[-1], cas, gains.deltas[i - 1], gains.gamma))
    return stages


class Psi:
    """Feedback ``w = (lambda, alpha_n)`` of the error system.

    Also exposes the composite Lyapunov function ``V_n`` used for decay
    checks, evaluated by the same stage functions as the control.
    """

    def __init__(self, n: int, gains: Gains):
        self.n = n
        self.gains = gains.for_order(n)
        self.stages = build_stages(n, self.gains)

    def _args(self, xt, st, sbar, vbar, wbar):
        p = reference_vector(sbar, vbar)
        if wbar is None:
            wbar = jet.sign(vbar[0])
        return list(xt) + list(st), p, wbar

    def __call__(self, xt, st, sbar, vbar, wbar=None):
        return self.with_lyapunov(xt, st, sbar, vbar, wbar)[0]

    def with_lyapunov(self, xt, st, sbar, vbar, wbar=None):
        """``(w, V_n)`` from a single stage evaluation.

        ``wbar`` defaults to the sign of ``vbar[0]``; passing it as a
        constant avoids tracing the sign.
        """
        z, p, wbar = self._args(xt, st, sbar, vbar, wbar)
        a, V, _ = self.stages[-1].evaluate(z, p, wbar)
        return [lam(xt, p[0], p[1], wbar, self.gains.gamma), a], V

    def lyapunov(self, xt, st, sbar, vbar, wbar=None):
        return self.with_lyapunov(xt, st, sbar, vbar, wbar)[1]


# error coordinates -----------------------------------------------------

@dataclass
class ErrorState:
    x_tilde: list
    s_tilde: list
    tau: float = 0.0


def error_coordinates(x, s, xD, sD, v, vD, tau: float = 0.0):
    """Error state and normalized inputs ``w`` for the arc-length system."""
    v1 = jet.primal(vD[0])
    if isinstance(v1, (float, int)) and v1 == 0:
        raise ValueError("reference speed is zero")
    speed = abs(vD[0]) if not isinstance(vD[0], Dual) else jet.sign(vD[0]) * vD[0]
    err = ErrorState([a - b for a, b in zip(x, xD)], [a - b for a, b in zip(s, sD)], tau)
    w = [v[0] / speed, (v[1] - vD[1]) / speed]
    return err, w


def w_to_v(w, vD):
    """Inverse of the input normalization: ``v = |vD1| w + (0, vD2)``."""
    speed = abs(vD[0]) if not isinstance(vD[0], Dual) else jet.sign(vD[0]) * vD[0]
    return [speed * w[0], speed * w[1] + vD[1]]


# feedback in the original coordinates ------------------------------------

class ComponentError(ValueError):
    """A state is outside the component the feedback was built for."""


class FeedbackLaw:
    """Tracking feedback on one component ``mu``.

    ``u = F(y)^-1 (|v1D| * Psi(x - xD, S(y) - sD, sD, vD) + (0, v2D))``
    with ``sD = S(yD)`` and ``vD = F(yD) uD``.
    """

    def __init__(self, model, mu: tuple, gains: Gains, transform=None):
        from .maneuver import build_transform
        self.model = model
        self.mu = tuple(mu)
        self.gains = gains.for_order(model.n)
        self.transform = transform if transform is not None else build_transform(model, self.mu)
        self.psi = Psi(model.n, self.gains)

    def _check_component(self, y, what: str) -> None:
        from .models import component_of
        if not self.model.has_components:
            return
        if all(isinstance(jet.primal(v), (float, int)) for v in y):
            mu = component_of(self.model, y)
            if mu != self.mu:
                raise ComponentError(f"{what} is in component {mu}, feedback built for {self.mu}")

    def from_chain(self, x, y, xD, sD, vD, wbar=None, with_lyapunov: bool = False):
        """Feedback from the reference in chained coordinates."""
        s = self.transform.S(y)
        xt = [x[0] - xD[0], x[1] - xD[1]]
        st = [a - b for a, b in zip(s, sD)]
        w, V = self.psi.with_lyapunov(xt, st, sD, vD, wbar)
        u = self.transform.chain_to_input(y, w_to_v(w, vD))
        return (u, V) if with_lyapunov else u

    def __call__(self, q, qD, uD):
        u1 = jet.primal(uD[0])
        if isinstance(u1, (float, int)) and u1 == 0:
            raise ValueError("reference input u1D is zero")
        y, yD = list(q[2:]), list(qD[2:])
        self._check_component(y, "state")
        self._check_component(yD, "reference")
        sD = self.transform.S(yD)
        vD = self.transform.input_to_chain(yD, uD)
        return self.from_chain(q[:2], y, qD[:2], sD, vD)


def phi(model, mu, gains: Gains, q, qD, uD):
    """One-shot evaluation of the feedback on component ``mu``."""
    return FeedbackLaw(model, mu, gains)(q, qD, uD)


class ControlLaw:
    """Feedback over all components, each with its own reference branch.

    ``direction`` +1 gives positive ``u1`` (forward motion of the
    distinguished point), -1 negative.
    """

    def __init__(self, model, gains: Gains, trajectory, direction: int):
        self.model = model
        self.gains = gains.for_order(model.n)
        self.trajectory = trajectory
        self.direction = direction
        self._laws: dict = {}
        self._refs: dict = {}

    def law(self, mu: tuple):
        from .maneuver import ReferenceGenerator
        if mu not in self._laws:
            law = FeedbackLaw(self.model, mu, self.gains)
            self._laws[mu] = law
            self._refs[mu] = ReferenceGenerator(self.model, law.transform, self.trajectory,
                                                self.direction)
        return self._laws[mu], self._refs[mu]

    def __call__(self, t: float, q):
        from .models import component_of, BoundaryError
        try:
            mu = component_of(self.model, list(q[2:]))
        except BoundaryError as e:
            raise ComponentError(str(e)) from None
        law, ref = self.law(mu)
        s1 = ref.heading(t)
        sD, vD = ref.chain(t, s1)
        xD = self.trajectory.position(float(t))
        return law.from_chain(q[:2], list(q[2:]), xD, sD, vD, wbar=self.direction)


def control_law(model, gains: Gains, trajectory, direction: int) -> ControlLaw:
    return ControlLaw(model, gains, trajectory, direction)
