"""Fixed-step closed-loop simulation.

The augmented state is ``(x, y, s1D, tau)``: the plant, the reference
heading (whose ODE is integrated alongside) and the arc length of the
reference.  The controller code is the same generic-scalar code used
everywhere else; here it is traced once by ``jax.jit`` and the whole RK4
run executes as a compiled loop.
"""

from __future__ import annotations

import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .backstepping import FeedbackLaw, Gains
from .maneuver import ReferenceGenerator
from .models import WheeledModel, component_of, constraint_residuals, rhs
from .trajectories import Trajectory

__all__ = ["Scenario", "Trace", "SimulationFault", "integrate_closed_loop",
           "diagnostics", "Diagnostics", "BOUNDARY_TOL"]

BOUNDARY_TOL = 1e-12
STENCIL = 5  # states kept for the five-point velocity estimate


# The classic CPU runtime compiles and runs the large straight-line
# controller graph noticeably faster than the thunk runtime.
_XLA_CPU_FLAG = "--xla_cpu_use_thunk_runtime=false"


def _jax():
    if "jax" not in sys.modules and _XLA_CPU_FLAG.split("=")[0] not in os.environ.get("XLA_FLAGS", ""):
        os.environ["XLA_FLAGS"] = (os.environ.get("XLA_FLAGS", "") + " " + _XLA_CPU_FLAG).strip()
    import jax
    jax.config.update("jax_enable_x64", True)
    return jax


@dataclass
class Scenario:
    """Everything needed for one closed-loop run (SI units, radians)."""

    model: WheeledModel
    trajectory: Trajectory
    direction: int
    gains: Gains
    initial_state: Sequence[float]
    horizon: float
    step: float = 1e-3
    decimation: int = 10
    name: str = "scenario"

    def validate(self) -> tuple:
        """Check the scenario and return the initial component."""
        n = self.model.n
        if len(self.initial_state) != n + 2:
            raise ValueError(f"initial state needs {n + 2} entries, got {len(self.initial_state)}")
        if not self.step > 0 or not self.horizon > 0:
            raise ValueError("step and horizon must be positive")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        if int(self.decimation) < 2:
            raise ValueError("decimation must be at least 2")
        steps = self.horizon / self.step
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError("horizon must be a whole number of steps")
        if round(steps) % int(self.decimation):
            raise ValueError("number of steps must be a multiple of the decimation")
        return component_of(self.model, list(self.initial_state[2:]))


@dataclass
class Trace:
    """Samples of a run on the decimated grid."""

    t: np.ndarray
    q: np.ndarray
    u: np.ndarray
    qD: np.ndarray
    uD: np.ndarray
    x_err: np.ndarray
    y_dist: np.ndarray
    V: np.ndarray
    residual: np.ndarray
    mu: np.ndarray
    tau: np.ndarray
    s1D: np.ndarray
    sD: np.ndarray
    vD: np.ndarray
    fault: Optional[str] = None
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def u_err(self) -> np.ndarray:
        return np.linalg.norm(self.u - self.uD, axis=1)


class SimulationFault(RuntimeError):
    """A run stopped early; ``trace`` holds the samples before the fault."""

    def __init__(self, message: str, trace: Trace):
        super().__init__(message)
        self.trace = trace


# compiled kernel ---------------------------------------------------------------

def _build_kernel(scenario: Scenario, law: FeedbackLaw, ref: ReferenceGenerator, mu0: tuple):
    jax = _jax()
    jnp = jax.numpy
    lax = jax.lax
    model, traj = scenario.model, scenario.trajectory
    n = model.n
    h = float(scenario.step)
    dec = int(scenario.decimation)
    wbar = float(scenario.direction)
    dim = n + 4
    nobs = 3 + n + 2
    signs0 = [1.0 if m == 0 else -1.0 for m in mu0]

    def f(t, z):
        x = [z[0], z[1]]
        y = [z[2 + i] for i in range(n)]
        s1 = z[2 + n]
        sD, vD = ref.chain(t, s1)
        xD = traj.position(t)
        u, V = law.from_chain(x, y, xD, sD, vD, wbar=wbar, with_lyapunov=True)
        qdot = rhs(model, x + y, u)
        extra = [ref.s1_rate(t, s1), ref.speed(t)]
        zdot = jnp.stack([jnp.asarray(v, dtype=jnp.float64) for v in qdot + extra])
        obs = jnp.stack([jnp.asarray(v, dtype=jnp.float64) for v in list(u) + [V] + list(sD) + list(vD)])
        return zdot, obs

    a_c = jnp.array([0.0, 0.5, 0.5, 1.0])
    b_c = jnp.array([1.0, 2.0, 2.0, 1.0]) / 6.0

    def rk4(z, t):
        def stage(j, c):
            k_prev, acc, obs = c
            k, ob = f(t + a_c[j] * h, z + (a_c[j] * h) * k_prev)
            return k, acc + b_c[j] * k, jnp.where(j == 0, ob, obs)
        zero = jnp.zeros(dim)
        _, acc, obs = lax.fori_loop(0, 4, stage, (zero, zero, jnp.zeros(nobs)))
        return z + h * acc, obs

    def bad_state(z):
        ok = jnp.all(jnp.isfinite(z))
        for i, sg in enumerate(signs0):
            ok = ok & (sg * jnp.cos(z[3 + i]) > BOUNDARY_TOL)
        return ~ok

    def block(carry, m):
        def inner(i, c):
            z, fstep, hist, obs0, stencil = c
            k = m * dec + i
            zn, ob = rk4(z, k * h)
            obs0 = jnp.where(i == 0, ob, obs0)
            fstep = jnp.where((fstep < 0) & bad_state(zn), k + 1, fstep)
            zn = jnp.where(fstep >= 0, z, zn)
            hist = jnp.concatenate([hist[1:], zn[None, :]], axis=0)
            stencil = jnp.where(i == 1, hist, stencil)
            return zn, fstep, hist, obs0, stencil

        z, fstep, hist = carry
        z_start = z
        init = (z, fstep, hist, jnp.zeros(nobs), hist)
        z, fstep, hist, obs0, stencil = lax.fori_loop(0, dec, inner, init)
        return (z, fstep, hist), (z_start, obs0, stencil)

    def run(z0, nblocks_arr):
        hist0 = jnp.tile(z0[None, :], (STENCIL, 1))
        carry = (z0, jnp.array(-1, dtype=jnp.int64), hist0)
        carry, out = lax.scan(block, carry, nblocks_arr)
        return out, carry[1]

    return jax.jit(run)


_KERNELS: dict = {}


def _kernel_key(scenario: Scenario, mu0: tuple):
    m, tr = scenario.model, scenario.trajectory
    return (m.name, m.kind, m.lengths, tr.kind, repr(sorted(tr.params().items())),
            scenario.direction, scenario.gains, mu0, float(scenario.step), int(scenario.decimation))


# post-processing ---------------------------------------------------------

def _inverse_batch(transform, sD: np.ndarray) -> np.ndarray:
    if transform.kind == "truck":
        cols = transform.inverse([sD[:, i] for i in range(sD.shape[1])])
        return np.stack([np.broadcast_to(np.asarray(c, dtype=float), sD.shape[:1]) for c in cols], axis=1)
    return np.array([transform.inverse(list(row)) for row in sD])


def _wrap(a: np.ndarray) -> np.ndarray:
    return np.remainder(a + np.pi, 2 * np.pi) - np.pi


def _components(y: np.ndarray) -> np.ndarray:
    if y.shape[1] <= 1:
        return np.zeros((len(y), 0), dtype=int)
    return (np.cos(y[:, 1:]) < 0).astype(int)


def integrate_closed_loop(scenario: Scenario, raise_on_fault: bool = False) -> Trace:
    """Classical RK4 on ``(x, y, s1D, tau)`` with the feedback at every stage.

    A fault (non-finite state or a joint reaching a component boundary)
    stops the run; the returned trace ends at the last good sample and
    ``trace.fault`` describes the cause.
    """
    mu0 = scenario.validate()
    model, traj = scenario.model, scenario.trajectory
    n = model.n
    law = FeedbackLaw(model, mu0, scenario.gains)
    ref = ReferenceGenerator(model, law.transform, traj, scenario.direction)
    h, dec = float(scenario.step), int(scenario.decimation)
    nsteps = int(round(scenario.horizon / h))
    nblocks = nsteps // dec + 1

    t0 = time.perf_counter()
    key = _kernel_key(scenario, mu0)
    kernel = _KERNELS.get(key)
    if kernel is None:
        kernel = _KERNELS[key] = _build_kernel(scenario, law, ref, mu0)
    jax = _jax()
    z0 = np.array(list(map(float, scenario.initial_state)) + [ref.initial_heading(), 0.0])
    (zs, obs, stencil), fstep = kernel(jax.numpy.asarray(z0), jax.numpy.arange(nblocks))
    zs, obs, stencil = np.asarray(zs), np.asarray(obs), np.asarray(stencil)
    fstep = int(fstep)
    wall = time.perf_counter() - t0

    fault = None
    keep = nblocks
    if 0 <= fstep <= nsteps:
        keep = (fstep - 1) // dec + 1  # samples whose state precedes the fault
        zbad = zs[min(keep, nblocks - 1)]
        fault = f"state left component {mu0} or became non-finite at step {fstep} (t = {fstep * h:.6g} s)"
        if not np.all(np.isfinite(zbad)):
            fault += "; non-finite state"
    zs, obs, stencil = zs[:keep], obs[:keep], stencil[:keep]

    t = np.arange(keep) * dec * h
    q = zs[:, : n + 2]
    u = obs[:, 0:2]
    V = obs[:, 2]
    sD = obs[:, 3: 3 + n]
    vD = obs[:, 3 + n: 5 + n]
    xD = np.stack([np.broadcast_to(np.asarray(c, dtype=float), t.shape)
                   for c in traj.position(t)], axis=1)
    yD = _inverse_batch(law.transform, sD)
    f21, f22 = law.transform.F([yD[:, i] for i in range(n)])
    uD = np.stack([vD[:, 0], (vD[:, 1] - f21 * vD[:, 0]) / f22], axis=1)
    qD = np.concatenate([xD, yD], axis=1)
    x_err = np.linalg.norm(q[:, :2] - xD, axis=1)
    dy = np.abs(q[:, 2] - yD[:, 0])
    if n > 1:
        dy = dy + np.sum(np.abs(_wrap(q[:, 3:] - yD[:, 1:])), axis=1)

    # velocity from the five-point stencil around each sample (the first
    # sample uses the feedback velocity directly)
    qdot = (stencil[:, 0] - 8 * stencil[:, 1] + 8 * stencil[:, 3] - stencil[:, 4]) / (12 * h)
    qdot = qdot[:, : n + 2]
    if keep:
        qdot[0] = np.array([float(v) for v in rhs(model, list(q[0]), list(u[0]))])
    res = constraint_residuals(model, [q[:, i] for i in range(n + 2)],
                               [qdot[:, i] for i in range(n + 2)])
    residual = np.max(np.abs(np.stack([np.broadcast_to(r, t.shape) for r in res], axis=1)), axis=1)

    trace = Trace(t=t, q=q, u=u, qD=qD, uD=uD, x_err=x_err, y_dist=dy, V=V,
                  residual=residual, mu=_components(q[:, 2:]), tau=zs[:, n + 3],
                  s1D=zs[:, n + 2], sD=sD, vD=vD, fault=fault,
                  info={"component": list(mu0), "wall_time": wall, "steps": nsteps,
                        "step": h, "decimation": dec, "gamma": scenario.gains.gamma,
                        "direction": scenario.direction, "scenario": scenario.name})
    if fault and raise_on_fault:
        raise SimulationFault(fault, trace)
    return trace


# diagnostics -------------------------------------------------------------

@dataclass
class Diagnostics:
    decay_ok: bool
    decay_margin: float
    first_violation: Optional[dict]
    terminal: dict
    converged: bool
    max_residual: float
    input_bound: dict
    sign_ok: bool
    component_ok: bool
    time_to_1pct: Optional[float]
    fault: Optional[str]

    @property
    def passed(self) -> bool:
        return (self.decay_ok and self.converged and self.max_residual <= 1e-6 and self.sign_ok
                and self.component_ok and self.fault is None)

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def diagnostics(trace: Trace, gamma: float, decay_slack: float = 1e-3,
                terminal_tol: float = 1e-3, abs_floor: float = 1e-24) -> Diagnostics:
    """Verdicts on a trace.

    The decay check is ``V(tau_k) <= V(0) exp(-2 gamma tau_k) (1 + slack)``
    at every sample; ``abs_floor`` only matters when ``V(0)`` itself is at
    rounding level (exact tracking).
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    env = trace.V[0] * np.exp(-2 * gamma * trace.tau) * (1 + decay_slack) + abs_floor
    ratio = trace.V / np.where(env > 0, env, 1.0)
    viol = np.nonzero(trace.V > env)[0]
    first = None
    if len(viol):
        k = int(viol[0])
        first = {"index": k, "t": float(trace.t[k]), "V": float(trace.V[k]), "envelope": float(env[k])}
    u_err = trace.u_err
    terminal = {"t": float(trace.t[-1]), "x_err": float(trace.x_err[-1]),
                "y_dist": float(trace.y_dist[-1]), "u_err": float(u_err[-1])}
    converged = (trace.fault is None and terminal["x_err"] <= terminal_tol
                 and terminal["y_dist"] <= terminal_tol and terminal["u_err"] <= terminal_tol)
    sup_u = float(np.max(np.linalg.norm(trace.u, axis=1)))
    sup_uD = float(np.max(np.linalg.norm(trace.uD, axis=1)))
    direction = trace.info.get("direction", int(np.sign(trace.uD[0, 0])))
    sign_ok = bool(np.all(np.sign(trace.u[:, 0]) == direction))
    comp_ok = bool(np.all(trace.mu == trace.mu[0])) if trace.mu.size else True
    ttp = None
    if trace.x_err[0] > 0:
        above = np.nonzero(trace.x_err > 0.01 * trace.x_err[0])[0]
        if len(above) == 0:
            ttp = 0.0
        elif above[-1] + 1 < len(trace):
            ttp = float(trace.t[above[-1] + 1])
    return Diagnostics(
        decay_ok=first is None,
        decay_margin=float(np.max(ratio)),
        first_violation=first,
        terminal=terminal,
        converged=bool(converged),
        max_residual=float(np.max(trace.residual)),
        input_bound={"sup_u": sup_u, "sup_uD": sup_uD, "ratio": sup_u / sup_uD if sup_uD else math.inf},
        sign_ok=sign_ok,
        component_ok=comp_ok,
        time_to_1pct=ttp,
        fault=trace.fault,
    )

