"""Modal time integration of the memory/delay system.

Each mode k obeys

    u_k'' = -(1 - mu~) lam_k u_k - lam_k * int mu(s) eta_k(s) ds + f_k(t)

with the feedback ``f = -b(t) u'(t - tau)`` (delayed mode) or
``f = +k(t) u'(t)`` (anti-damping mode).

Time stepping is Crank-Nicolson on (u, v): the elastic and memory forces are
taken at the step midpoint and resolved by a scalar solve per mode, the
delayed velocity is known history.

Two memory backends:

``dafermos``
    The relative history eta(s) = u(t) - u(t - s) lives on the s-grid
    ``s_j = j * ds`` with ``ds = m * dt``.  Transport along the
    characteristics is exact: the state keeps the displacement history in a
    ring buffer, so eta at every node is a stored difference.  For ``m == 1``
    the memory force uses node weights averaged along the characteristic,
    which makes the discrete standard energy exactly non-increasing when the
    feedback is off.
``ode``
    Exponential kernels only.  w = int mu(s) u(t - s) ds and its quadratic
    moment q = int mu(s) u(t - s)^2 ds obey w' = mu0 u - delta w (same for q
    with u^2) and are advanced with an exponential integrator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import energy_sample
from .errors import (
    BufferUnderfilled,
    Diverged,
    KernelNotExponential,
    NonFiniteState,
    ValidationError,
)
from .model import ANTI_DAMPING, DELAYED, Scenario, ValidatedScenario, validate_scenario

logger = logging.getLogger(__name__)

BACKENDS = ("dafermos", "ode")
DIVERGENCE_FACTOR = 1e12


@dataclass(frozen=True, eq=False)
class _Plan:
    """Per-scenario constants shared by every state of one run."""

    problem: ValidatedScenario
    backend: str
    lam: np.ndarray
    elastic: float  # 1 - mu~
    dt: float
    delay_steps: int
    b_mid: np.ndarray  # coefficient at step midpoints (n + 1/2) dt
    n_hist: int = 0
    node_weights: np.ndarray | None = None  # trapezoid weights on the s-grid
    weights: np.ndarray | None = None  # (n_hist, 2): [force, energy] on the history view
    force_mass: float = 0.0
    energy_mass: float = 0.0
    ode: tuple = ()  # (exp(-delta dt), p, r, mu0)


def _trapezoid_weights(kernel, s):
    w = kernel(s) * (s[1] - s[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _make_plan(problem: ValidatedScenario, backend: str) -> _Plan:
    if backend not in BACKENDS:
        raise ValidationError(f"unknown backend {backend!r}")
    kernel = problem.kernel
    dt = problem.dt
    n_mid = problem.n_steps + problem.delay_steps + 1
    b_mid = problem.schedule.coefficients((np.arange(n_mid) + 0.5) * dt)
    common = dict(
        problem=problem,
        backend=backend,
        lam=problem.lam,
        elastic=1.0 - kernel.mass,
        dt=dt,
        delay_steps=problem.delay_steps,
        b_mid=b_mid,
    )
    s = problem.s_grid
    w = _trapezoid_weights(kernel, s)
    if backend == "ode":
        if kernel.form != "exponential":
            raise KernelNotExponential("the ODE memory backend needs an exponential kernel")
        x = kernel.delta * dt
        decay = math.exp(-x)
        one_minus = -math.expm1(-x)
        p = (one_minus - x * decay) / (kernel.delta**2 * dt)
        r = one_minus / kernel.delta - p
        return _Plan(**common, node_weights=w, ode=(decay, p, r, kernel.mu0))

    m = problem.history_stride
    J = problem.history_nodes
    n_hist = (J - 1) * m + 1
    # view index q <-> time t_n - (n_hist - 1 - q) dt, so node j sits at q = n_hist - 1 - j m
    energy_w = np.zeros(n_hist)
    energy_w[::m] = w[::-1]
    force_w = np.zeros(n_hist)
    if m == 1:
        # node j moves from s_j to s_{j+1} during the step; average its weight
        wbar = 0.5 * (w + np.append(w[1:], 0.0))
        force_w[:] = wbar[::-1]
        force_mass = float(wbar.sum())
    else:
        # Eulerian average of the memory integral at t_n and t_{n+1}
        wj = w.copy()
        wj[0] = 0.0
        force_w[::m] += 0.5 * wj[::-1]
        force_w[1::m] += 0.5 * w[1:][::-1]
        force_mass = float(wj.sum())
    return _Plan(
        **common,
        n_hist=n_hist,
        node_weights=w,
        weights=np.column_stack([force_w, energy_w]),
        force_mass=force_mass,
        energy_mass=float(w.sum()),
    )


class _Ring:
    """Fixed-length history of K-vectors with a contiguous oldest-to-newest view."""

    def __init__(self, rows, length):
        self.length = length
        self.data = np.full((rows, 2 * length), np.nan)
        self.pos = length - 1  # slot of the newest entry

    def fill(self, columns):
        """``columns`` has shape (rows, length), oldest first."""
        self.data[:, : self.length] = columns
        self.data[:, self.length :] = columns
        self.pos = self.length - 1

    def push(self, col):
        self.pos = (self.pos + 1) % self.length
        self.data[:, self.pos] = col
        self.data[:, self.pos + self.length] = col

    def view(self):
        start = self.pos + 1
        return self.data[:, start : start + self.length]

    def copy(self):
        new = _Ring.__new__(_Ring)
        new.length, new.pos, new.data = self.length, self.pos, self.data.copy()
        return new


@dataclass(eq=False)
class ModalState:
    """State of all modes at ``t = n * dt``.

    ``step`` advances a state in place.  ``eta`` is the relative history on
    the s-grid (Dafermos backend); ``w`` is the memory integral (ODE backend).
    """

    plan: _Plan = field(repr=False)
    n: int
    u: np.ndarray
    v: np.ndarray
    # histories are stored relative to u0 so that small eta is not lost to cancellation
    hist: _Ring | None = field(default=None, repr=False)  # rows: u - u0 then (u - u0)**2
    vel: _Ring | None = field(default=None, repr=False)
    ws: np.ndarray | None = None  # int mu(s) (u(t - s) - u0) ds
    qs: np.ndarray | None = None  # int mu(s) (u(t - s) - u0)^2 ds
    _cache: tuple = field(default=(-1, None), repr=False)

    @property
    def t(self):
        return self.n * self.plan.dt

    @property
    def K(self):
        return self.u.size

    @property
    def u0(self):
        return self.plan.problem.u0

    @property
    def w(self):
        """Memory integral int mu(s) u(t - s) ds (ODE backend)."""
        if self.ws is None:
            return None
        return self.ws + self.plan.problem.kernel.mass * self.u0

    @property
    def backend(self):
        return self.plan.backend

    @property
    def s_grid(self):
        return self.plan.problem.s_grid

    @property
    def eta(self):
        """eta_k(s_j) = u_k(t) - u_k(t - s_j), shape (K, J); Dafermos backend only."""
        if self.hist is None:
            return None
        m = self.plan.problem.history_stride
        past = self.hist.view()[: self.K, ::m][:, ::-1]
        return (self.u - self.u0)[:, None] - past

    def displacement_history(self):
        """(times, values) of the stored displacement history, oldest first."""
        view = self.hist.view()[: self.K]
        times = (self.n - self.plan.n_hist + 1 + np.arange(self.plan.n_hist)) * self.plan.dt
        return times, view + self.u0[:, None]

    @property
    def delay_buf(self):
        """Velocities on [t - tau, t] at spacing dt, shape (K, D + 1), oldest first."""
        return self.vel.view()

    @property
    def delay_times(self):
        D = self.plan.delay_steps
        return (self.n - D + np.arange(D + 1)) * self.plan.dt

    def products(self):
        """Weighted sums over the shifted history: (force, energy, energy of squares)."""
        if self._cache[0] != self.n:
            out = self.hist.view() @ self.plan.weights
            K = self.K
            self._cache = (self.n, (out[:K, 0], out[:K, 1], out[K:, 1]))
        return self._cache[1]

    def memory_integrals(self):
        """Per-mode int mu(s) eta_k(s) ds and int mu(s) eta_k(s)^2 ds."""
        plan = self.plan
        d = self.u - self.u0
        if plan.backend == "ode":
            mass = plan.problem.kernel.mass
            first = mass * d - self.ws
            second = mass * d**2 - 2 * d * self.ws + self.qs
        else:
            _, a, b = self.products()
            W = plan.energy_mass
            first = W * d - a
            second = W * d**2 - 2 * d * a + b
        return first, np.maximum(second, 0.0)

    def copy(self):
        return ModalState(
            self.plan,
            self.n,
            self.u.copy(),
            self.v.copy(),
            None if self.hist is None else self.hist.copy(),
            self.vel.copy(),
            None if self.ws is None else self.ws.copy(),
            None if self.qs is None else self.qs.copy(),
        )


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    energy: dict  # column name -> array, one entry per step
    snapshot_times: np.ndarray
    snapshot_u: np.ndarray
    snapshot_v: np.ndarray
    dt: float
    backend: str
    schedule: object = None
    diverged: bool = False

    def __len__(self):
        return self.times.size

    @property
    def E_S(self):
        return self.energy["E_S"]

    @property
    def E(self):
        return self.energy["E"]

    def value_at(self, t, column="E_S"):
        """Energy sample at the step nearest to ``t``."""
        idx = np.clip(np.rint(np.asarray(t) / self.dt).astype(int), 0, len(self) - 1)
        return self.energy[column][idx]


ENERGY_COLUMNS = ("E_S", "E", "kinetic", "potential", "memory_term", "delay_term")


def init_state(scenario: Scenario | ValidatedScenario, backend: str = "dafermos") -> ModalState:
    """Initial modal state from u0, u1, the displacement pre-history and z0."""
    problem = validate_scenario(scenario)
    plan = _make_plan(problem, backend)
    K, dt = problem.K, problem.dt
    u0, u1 = problem.u0.copy(), problem.u1.copy()

    D = problem.delay_steps
    vel = _Ring(K, D + 1)
    ph = problem.scenario.pre_history
    tz = (np.arange(D + 1) - D) * dt
    if isinstance(ph, str):
        z0 = np.tile(u1[:, None], (1, D + 1))
    else:
        ahead = problem.pre_history_values(np.minimum(tz + 0.5 * dt, 0.0))
        behind = problem.pre_history_values(tz - 0.5 * dt)
        z0 = ((ahead - behind) / dt).T
    z0[:, -1] = u1
    vel.fill(z0)

    state = ModalState(plan, 0, u0, u1.copy(), vel=vel)
    if backend == "ode":
        mass = problem.kernel.mass
        if ph == "zero":
            state.ws, state.qs = -mass * u0, mass * u0**2
        elif ph in ("constant_equal_to_initial", "constant"):
            state.ws, state.qs = np.zeros(K), np.zeros(K)
        else:
            past = problem.pre_history_values(-problem.s_grid) - u0  # (J, K)
            wts = plan.node_weights[:, None]
            state.ws = (wts * past).sum(0)
            state.qs = (wts * past**2).sum(0)
    else:
        N = plan.n_hist
        past = problem.pre_history_values((np.arange(N) - (N - 1)) * dt).T - u0[:, None]  # (K, N)
        hist = _Ring(2 * K, N)
        hist.fill(np.vstack([past, past**2]))
        state.hist = hist
    return state


def memory_force(state: ModalState) -> np.ndarray:
    """Stiffness plus memory force per mode at the current state.

    Dafermos: ``-(1 - mu~) lam u - lam int mu eta ds``; ODE: ``-lam u + lam w``.
    """
    plan = state.plan
    if plan.backend == "ode":
        return -plan.lam * state.u + plan.lam * state.w
    first, _ = state.memory_integrals()
    return -plan.elastic * plan.lam * state.u - plan.lam * first


def delayed_velocity(state: ModalState) -> np.ndarray:
    """u_t(t - tau) read from the ring buffer (exact, no interpolation)."""
    oldest = state.delay_buf[:, 0]
    if np.any(np.isnan(oldest)):
        raise BufferUnderfilled("delay buffer does not cover [t - tau, t]")
    return oldest.copy()


def step(state: ModalState, scenario=None) -> ModalState:
    """Advance ``state`` by one time step in place and return it."""
    plan = state.plan
    dt, lam = plan.dt, plan.lam
    n = state.n
    if n >= plan.b_mid.size - plan.delay_steps - 1:
        # horizon exhausted for the precomputed coefficient table; extend lazily
        plan = _extend_plan(state)
    coef = plan.b_mid[n]
    mode = plan.problem.schedule.mode
    force = 0.0
    anti = 0.0
    if coef != 0.0:
        if mode == DELAYED:
            buf = state.delay_buf
            if np.any(np.isnan(buf[:, :2])):
                raise BufferUnderfilled("delay buffer does not cover [t - tau, t]")
            force = -coef * 0.5 * (buf[:, 0] + buf[:, 1])
        else:
            anti = coef

    u, v = state.u, state.v
    if plan.backend == "ode":
        decay, p, r, mu0 = plan.ode
        stiff = lam * (1.0 - mu0 * r)
        f0 = -lam * u + lam * (0.5 * (1 + decay) * state.w + 0.5 * mu0 * (p + r) * u)
    else:
        hbar, _, _ = state.products()
        stiff = lam * (plan.elastic + plan.force_mass)
        f0 = -lam * (plan.elastic * u + plan.force_mass * (u - state.u0) - hbar)
    vbar = (v + 0.5 * dt * (f0 + force)) / (1.0 + 0.25 * dt * dt * stiff - 0.5 * dt * anti)
    u_new = u + dt * vbar
    v_new = 2.0 * vbar - v
    if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))):
        raise NonFiniteState(f"non-finite state at t = {(n + 1) * dt:g}")

    if plan.backend == "ode":
        decay, p, r, mu0 = plan.ode
        d, d_new = u - state.u0, u_new - state.u0
        state.ws = decay * state.ws + mu0 * (p * d + r * d_new)
        state.qs = decay * state.qs + mu0 * (p * d**2 + r * d_new**2)
    else:
        d_new = u_new - state.u0
        state.hist.push(np.concatenate([d_new, d_new**2]))
    state.vel.push(v_new)
    state.u, state.v = u_new, v_new
    state.n = n + 1
    return state


def _extend_plan(state):
    plan = state.plan
    dt = plan.dt
    n_mid = 2 * plan.b_mid.size
    b_mid = plan.problem.schedule.coefficients((np.arange(n_mid) + 0.5) * dt)
    new = _Plan(**{**plan.__dict__, "b_mid": b_mid})
    state.plan = new
    return new


def _energy_row(state):
    e = energy_sample(state)
    return (e.E_S, e.E, e.kinetic, e.potential, e.memory_term, e.delay_term)


def simulate(
    scenario: Scenario | ValidatedScenario,
    backend: str = "dafermos",
    stride: int = 1,
    divergence_factor: float = DIVERGENCE_FACTOR,
) -> Trajectory:
    """Run the scenario to its horizon, recording energies every step.

    The delayed term only ever reads velocities already in the ring buffer, so
    each step on an on-interval is one step of the method of steps.  Raises
    :class:`Diverged` (with the partial trajectory attached) when the standard
    energy exceeds ``divergence_factor`` times its initial value.
    """
    problem = validate_scenario(scenario)
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    state = init_state(problem, backend)
    n_steps = problem.n_steps
    rows = np.empty((n_steps + 1, len(ENERGY_COLUMNS)))
    snaps_t, snaps_u, snaps_v = [], [], []

    def finish(count, diverged=False):
        snap_t = np.array(snaps_t)
        return Trajectory(
            times=np.arange(count) * problem.dt,
            energy={c: rows[:count, i].copy() for i, c in enumerate(ENERGY_COLUMNS)},
            snapshot_times=snap_t,
            snapshot_u=np.array(snaps_u).reshape(snap_t.size, problem.K),
            snapshot_v=np.array(snaps_v).reshape(snap_t.size, problem.K),
            dt=problem.dt,
            backend=backend,
            schedule=problem.schedule,
            diverged=diverged,
        )

    rows[0] = _energy_row(state)
    limit = divergence_factor * rows[0, 0] if rows[0, 0] > 0 else math.inf
    for n in range(n_steps + 1):
        if n % stride == 0 or n == n_steps:
            snaps_t.append(state.t)
            snaps_u.append(state.u.copy())
            snaps_v.append(state.v.copy())
        if n == n_steps:
            break
        step(state)
        rows[n + 1] = _energy_row(state)
        if rows[n + 1, 0] > limit:
            logger.warning("energy guard tripped at t = %g", state.t)
            traj = finish(n + 2, diverged=True)
            raise Diverged(
                f"standard energy exceeded {divergence_factor:g} x E_S(0) at t = {state.t:g}",
                traj,
            )
    return finish(n_steps + 1)


def simulate_ode_oracle(scenario, stride: int = 1, **kw) -> Trajectory:
    """Independent reference run: ODE memory backend at half the time step."""
    problem = validate_scenario(scenario)
    if problem.kernel.form != "exponential":
        raise KernelNotExponential("the ODE oracle needs an exponential kernel")
    fine = replace(problem.scenario, dt=problem.dt / 2, horizon=problem.horizon)
    return simulate(fine, backend="ode", stride=stride, **kw)
