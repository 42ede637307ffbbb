"""Problem data: memory kernels, switching schedules, operator spectra, scenarios.

Raw inputs (:class:`MemoryKernel`, :class:`Schedule`, :class:`Scenario`) are
plain frozen records.  The ``validate_*`` functions check the modelling
assumptions and return resolved, immutable objects that the integrator and
the certificate code consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np

from .errors import (
    BeyondSchedule,
    DecayViolated,
    InconsistentModeCount,
    MassNotLessThanOne,
    NegativeArgument,
    NonPositiveBound,
    NonPositiveLength,
    NonPositiveMu0,
    OffIntervalShorterThanDelay,
    TailTooLarge,
    ValidationError,
)

DEFAULT_TAIL_TOL = 1e-10
DECAY_RTOL = 1e-9
DELAYED = "delayed_feedback"
ANTI_DAMPING = "anti_damping"
MODES = (DELAYED, ANTI_DAMPING)
PROFILES = ("constant_at_bound", "scaled")


# ---------------------------------------------------------------------------
# memory kernel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MemoryKernel:
    """Fading-memory density.

    ``form="exponential"`` is ``mu0 * exp(-delta * s)``.  ``form="tabulated"``
    takes ``table`` as ``(s, mu)`` pairs starting at ``s = 0``; ``mu0`` is then
    read from the table and ``delta`` is the decay rate the table must respect.
    """

    form: str = "exponential"
    mu0: float = 0.2
    delta: float = 1.0
    s_max: float | None = None
    table: tuple[tuple[float, float], ...] | None = None
    tail_tol: float = DEFAULT_TAIL_TOL

    @classmethod
    def exponential(cls, mu0, delta, s_max=None, tail_tol=DEFAULT_TAIL_TOL):
        return cls("exponential", float(mu0), float(delta), s_max, None, tail_tol)

    @classmethod
    def tabulated(cls, s, mu, delta, s_max=None, tail_tol=DEFAULT_TAIL_TOL):
        pairs = tuple((float(a), float(b)) for a, b in zip(s, mu))
        mu0 = pairs[0][1] if pairs else 0.0
        return cls("tabulated", mu0, float(delta), s_max, pairs, tail_tol)


@dataclass(frozen=True, eq=False)
class ValidatedKernel:
    kernel: MemoryKernel
    mass: float
    s_max: float
    _s: np.ndarray | None = field(default=None, repr=False)
    _mu: np.ndarray | None = field(default=None, repr=False)

    @property
    def mu0(self):
        return self.kernel.mu0

    @property
    def delta(self):
        return self.kernel.delta

    @property
    def form(self):
        return self.kernel.form

    def __call__(self, s):
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < 0):
            raise NegativeArgument(f"kernel evaluated at negative lag {s!r}")
        if self.form == "exponential":
            out = self.kernel.mu0 * np.exp(-self.kernel.delta * s_arr)
        else:
            out = np.interp(s_arr, self._s, self._mu)
        out = np.where(s_arr > self.s_max, 0.0, out)
        return float(out) if out.ndim == 0 else out


def validate_kernel(kernel: MemoryKernel | ValidatedKernel) -> ValidatedKernel:
    """Check assumptions i)-iv) on the kernel and compute its total mass."""
    if isinstance(kernel, ValidatedKernel):
        return kernel
    if kernel.form not in ("exponential", "tabulated"):
        raise ValidationError(f"unknown kernel form {kernel.form!r}")
    if not kernel.delta > 0:
        raise DecayViolated(f"decay rate delta must be positive, got {kernel.delta}")

    if kernel.form == "exponential":
        mu0, delta = kernel.mu0, kernel.delta
        if not mu0 > 0:
            raise NonPositiveMu0(f"mu(0) = {mu0} must be positive (assumption ii)")
        mass = mu0 / delta
        if mass >= 1:
            raise MassNotLessThanOne(
                f"total kernel mass {mass:g} must be < 1 (assumption iii)"
            )
        s_max = kernel.s_max
        if s_max is None:
            s_max = -math.log(kernel.tail_tol) / delta
        if math.exp(-delta * s_max) > kernel.tail_tol * (1 + 1e-12):
            raise TailTooLarge(
                f"mu(s_max)/mu0 = {math.exp(-delta * s_max):.3g} exceeds {kernel.tail_tol:g}"
            )
        return ValidatedKernel(kernel, mass, float(s_max))

    if not kernel.table or len(kernel.table) < 2:
        raise ValidationError("tabulated kernel needs at least two samples")
    s = np.array([p[0] for p in kernel.table], dtype=float)
    mu = np.array([p[1] for p in kernel.table], dtype=float)
    if s[0] != 0.0 or np.any(np.diff(s) <= 0):
        raise ValidationError("kernel table abscissae must start at 0 and increase")
    if not mu[0] > 0:
        raise NonPositiveMu0(f"mu(0) = {mu[0]} must be positive (assumption ii)")
    if np.any(mu < 0):
        raise DecayViolated("kernel table has negative samples")
    # iv) in discrete form: log mu(s_{j+1}) - log mu(s_j) <= -delta * ds
    bound = np.exp(-kernel.delta * np.diff(s)) * (1 + DECAY_RTOL)
    prev, nxt = mu[:-1], mu[1:]
    bad = np.where(prev > 0, nxt > bound * prev, nxt > 0)
    if np.any(bad):
        j = int(np.argmax(bad))
        raise DecayViolated(
            f"mu'(s) <= -delta mu(s) fails between s={s[j]:g} and s={s[j + 1]:g}"
        )
    s_max = float(s[-1]) if kernel.s_max is None else float(kernel.s_max)
    inside = s <= s_max
    mass = float(np.trapezoid(mu[inside], s[inside]))
    if mass >= 1:
        raise MassNotLessThanOne(f"total kernel mass {mass:g} must be < 1 (assumption iii)")
    tail = float(np.interp(s_max, s, mu))
    if tail > kernel.tail_tol * mu[0]:
        raise TailTooLarge(f"mu(s_max) = {tail:.3g} exceeds {kernel.tail_tol:g} * mu0")
    return ValidatedKernel(replace(kernel, mu0=float(mu[0])), mass, s_max, s, mu)


def kernel_eval(kernel, s):
    """Density at lag ``s`` (scalar or array); zero past ``s_max``."""
    return validate_kernel(kernel)(s)


# ---------------------------------------------------------------------------
# operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OperatorSpec:
    eigenvalues: tuple[float, ...]
    label: str = "custom"

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size < 1:
            raise ValidationError("operator needs at least one eigenvalue")
        if not lam[0] > 0 or np.any(np.diff(lam) <= 0) or not np.all(np.isfinite(lam)):
            raise ValidationError("eigenvalues must be positive, finite and strictly increasing")
        object.__setattr__(self, "eigenvalues", tuple(float(x) for x in lam))

    @property
    def size(self):
        return len(self.eigenvalues)

    def as_array(self):
        return np.array(self.eigenvalues)


def build_operator(kind: str, K: int, L: float = math.pi) -> OperatorSpec:
    """Modal spectrum of the 1-D Dirichlet Laplacian or hinged beam on (0, L)."""
    if K < 1 or L <= 0:
        raise ValidationError("need K >= 1 and L > 0")
    base = (np.arange(1, K + 1) * math.pi / L) ** 2
    if kind == "wave_1d":
        lam = base
    elif kind == "petrovsky_1d":
        lam = base**2
    else:
        raise ValidationError(f"unknown operator kind {kind!r}")
    return OperatorSpec(tuple(lam), kind.replace("_", "-"))


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cycle:
    T_even: float
    T_odd: float
    bound: float


@dataclass(frozen=True)
class Schedule:
    """Alternating off/on structure.

    Each cycle is an off interval of length ``T_even`` followed by an on
    interval of length ``T_odd`` with coefficient bound ``bound``.  An empty
    cycle list means the feedback is identically zero.  With ``periodic`` the
    last cycle repeats forever.
    """

    tau: float
    cycles: tuple[Cycle, ...] = ()
    mode: str = DELAYED
    profile: str = "constant_at_bound"
    fraction: float = 1.0
    periodic: bool = False

    def __post_init__(self):
        cycles = tuple(c if isinstance(c, Cycle) else Cycle(*map(float, c)) for c in self.cycles)
        object.__setattr__(self, "cycles", cycles)

    @classmethod
    def quiet(cls, tau=0.5, mode=DELAYED):
        """b identically zero."""
        return cls(tau=tau, cycles=(), mode=mode)

    @classmethod
    def repeating(cls, tau, T_even, T_odd, bound, **kw):
        return cls(tau=tau, cycles=(Cycle(T_even, T_odd, bound),), periodic=True, **kw)

    @property
    def scale(self):
        return 1.0 if self.profile == "constant_at_bound" else self.fraction


@dataclass(frozen=True)
class GeometricSchedule:
    """Closed-form schedule with bounds ``b0 * ratio**n`` and constant lengths.

    Certificates treat it as an infinite sequence; simulations use the first
    ``n_cycles`` cycles.
    """

    tau: float
    T_even: float
    T_odd: float
    b0: float
    ratio: float
    n_cycles: int = 10
    mode: str = DELAYED
    profile: str = "constant_at_bound"
    fraction: float = 1.0

    def bound(self, n):
        return self.b0 * self.ratio**n

    def materialize(self, n_cycles=None) -> Schedule:
        n = self.n_cycles if n_cycles is None else n_cycles
        cycles = tuple(Cycle(self.T_even, self.T_odd, self.bound(k)) for k in range(n))
        return Schedule(self.tau, cycles, self.mode, self.profile, self.fraction, False)


@dataclass(frozen=True, eq=False)
class ValidatedSchedule:
    schedule: Schedule
    endpoints: np.ndarray = field(repr=False)
    short_delay: tuple[bool, ...]

    @property
    def tau(self):
        return self.schedule.tau

    @property
    def mode(self):
        return self.schedule.mode

    @property
    def cycles(self):
        return self.schedule.cycles

    @property
    def periodic(self):
        return self.schedule.periodic

    @property
    def end(self):
        return float(self.endpoints[-1])

    def is_quiet(self):
        return not self.schedule.cycles

    def coefficients(self, t, strict=False):
        """Vectorised coefficient lookup.

        Outside a non-periodic schedule the value is 0 unless ``strict``, in
        which case :class:`BeyondSchedule` is raised.
        """
        t = np.asarray(t, dtype=float)
        if self.is_quiet():
            return np.zeros_like(t)
        if np.any(t < 0):
            raise NegativeArgument("schedule queried at negative time")
        ends = self.endpoints
        if self.periodic:
            start = ends[-3]
            period = ends[-1] - start
            t = np.where(t >= ends[-1], start + np.mod(t - start, period), t)
        elif strict and np.any(t >= ends[-1]):
            raise BeyondSchedule(f"t exceeds the schedule end {ends[-1]:g}")
        idx = np.searchsorted(ends, t, side="right") - 1
        inside = idx < len(ends) - 1
        on = inside & (idx % 2 == 1)
        bounds = np.array([c.bound for c in self.schedule.cycles])
        cyc = np.clip(idx // 2, 0, len(bounds) - 1)
        return np.where(on, bounds[cyc] * self.schedule.scale, 0.0)

    def coefficient(self, t, strict=True):
        return float(self.coefficients(t, strict=strict))


def validate_schedule(schedule: Schedule | GeometricSchedule | ValidatedSchedule) -> ValidatedSchedule:
    """Check lengths/bounds and the off-interval constraint; compute endpoints."""
    if isinstance(schedule, ValidatedSchedule):
        return schedule
    if isinstance(schedule, GeometricSchedule):
        schedule = schedule.materialize()
    if schedule.mode not in MODES:
        raise ValidationError(f"unknown schedule mode {schedule.mode!r}")
    if schedule.profile not in PROFILES:
        raise ValidationError(f"unknown coefficient profile {schedule.profile!r}")
    if schedule.profile == "scaled" and not 0 < schedule.fraction <= 1:
        raise ValidationError("scaled profile needs a fraction in (0, 1]")
    tau = schedule.tau
    if schedule.mode == DELAYED and not tau > 0:
        raise NonPositiveLength(f"delay tau must be positive, got {tau}")
    if schedule.mode == ANTI_DAMPING and tau < 0:
        raise NonPositiveLength("tau must be non-negative")
    lengths = [0.0]
    for n, c in enumerate(schedule.cycles):
        if not (c.T_even > 0 and c.T_odd > 0):
            raise NonPositiveLength(f"cycle {n}: interval lengths must be positive")
        if not c.bound > 0:
            raise NonPositiveBound(f"cycle {n}: coefficient bound must be positive")
        if schedule.mode == DELAYED and c.T_even < tau:
            raise OffIntervalShorterThanDelay(
                f"cycle {n}: off interval {c.T_even:g} shorter than delay {tau:g}"
            )
        lengths += [c.T_even, c.T_odd]
    endpoints = np.cumsum(lengths)
    short = tuple(bool(c.T_odd <= tau) for c in schedule.cycles)
    return ValidatedSchedule(schedule, endpoints, short)


def coefficient_at(schedule, t: float, strict: bool = True) -> float:
    """Feedback coefficient b(t) (or k(t)); zero on off intervals."""
    if t < 0:
        raise NegativeArgument("schedule queried at negative time")
    return validate_schedule(schedule).coefficient(t, strict=strict)


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HistoryTable:
    """Sampled modal pre-history: ``times`` ascending in [-s_max, 0], ``values`` (len(times), K)."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        vals = np.asarray(self.values, dtype=float)
        return np.stack([np.interp(t, self.times, vals[:, k]) for k in range(vals.shape[1])], axis=-1)


PreHistory = Union[str, HistoryTable, Callable]


@dataclass(frozen=True, eq=False)
class Scenario:
    operator: OperatorSpec
    kernel: MemoryKernel
    schedule: Schedule | GeometricSchedule
    initial_position: Sequence[float]
    initial_velocity: Sequence[float]
    pre_history: PreHistory = "constant_equal_to_initial"
    dt: float = 1 / 512
    horizon: float = 40.0
    history_nodes: int | None = None

    def with_schedule(self, schedule):
        return replace(self, schedule=schedule)

    def scaled(self, gamma):
        """Scenario with every datum multiplied by ``gamma``."""
        ph = self.pre_history
        if isinstance(ph, HistoryTable):
            ph = HistoryTable(ph.times, gamma * np.asarray(ph.values))
        elif callable(ph):
            base = ph
            ph = lambda t: gamma * np.asarray(base(t))  # noqa: E731
        return replace(
            self,
            initial_position=tuple(gamma * np.asarray(self.initial_position, dtype=float)),
            initial_velocity=tuple(gamma * np.asarray(self.initial_velocity, dtype=float)),
            pre_history=ph,
        )


@dataclass(frozen=True, eq=False)
class ValidatedScenario:
    scenario: Scenario
    lam: np.ndarray
    kernel: ValidatedKernel
    schedule: ValidatedSchedule
    u0: np.ndarray
    u1: np.ndarray
    dt: float
    n_steps: int
    delay_steps: int
    history_stride: int
    history_nodes: int

    @property
    def K(self):
        return self.lam.size

    @property
    def horizon(self):
        return self.n_steps * self.dt

    @property
    def ds(self):
        return self.history_stride * self.dt

    @property
    def s_grid(self):
        return np.arange(self.history_nodes) * self.ds

    def pre_history_values(self, t):
        """Modal displacements u0(t) for t <= 0, shape (len(t), K)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        ph = self.scenario.pre_history
        if ph == "zero":
            out = np.zeros((t.size, self.K))
        elif ph in ("constant_equal_to_initial", "constant"):
            out = np.tile(self.u0, (t.size, 1))
        elif callable(ph):
            out = np.asarray(ph(t), dtype=float).reshape(t.size, self.K)
        else:
            raise ValidationError(f"unknown pre-history {ph!r}")
        out = np.array(out)
        out[t >= 0] = self.u0
        return out


def _multiple(x, dt, what):
    n = round(x / dt)
    if abs(n * dt - x) > 1e-9 * max(abs(x), dt):
        raise ValidationError(f"{what} = {x:g} is not an integer multiple of dt = {dt:g}")
    return int(n)


def validate_scenario(scenario: Scenario | ValidatedScenario) -> ValidatedScenario:
    if isinstance(scenario, ValidatedScenario):
        return scenario
    lam = scenario.operator.as_array()
    kernel = validate_kernel(scenario.kernel)
    schedule = validate_schedule(scenario.schedule)
    u0 = np.asarray(scenario.initial_position, dtype=float).ravel()
    u1 = np.asarray(scenario.initial_velocity, dtype=float).ravel()
    if u0.size != lam.size or u1.size != lam.size:
        raise InconsistentModeCount(
            f"{lam.size} eigenvalues but {u0.size} positions / {u1.size} velocities"
        )
    if isinstance(scenario.pre_history, HistoryTable):
        if np.asarray(scenario.pre_history.values).shape[-1] != lam.size:
            raise InconsistentModeCount("pre-history table has the wrong number of modes")
    dt = float(scenario.dt)
    if not dt > 0:
        raise NonPositiveLength("dt must be positive")
    if not scenario.horizon >= 0:
        raise NonPositiveLength("horizon must be non-negative")
    n_steps = int(math.ceil(scenario.horizon / dt - 1e-9))
    delay_steps = 0
    if schedule.mode == DELAYED:
        delay_steps = _multiple(schedule.tau, dt, "tau")
    if scenario.history_nodes is None:
        stride = 1
    else:
        J = int(scenario.history_nodes)
        if J < 2:
            raise ValidationError("history_nodes must be at least 2")
        stride = max(1, round(kernel.s_max / ((J - 1) * dt)))
    nodes = int(math.ceil(kernel.s_max / (stride * dt) - 1e-9)) + 1
    return ValidatedScenario(
        scenario, lam, kernel, schedule, u0, u1, dt, n_steps, delay_steps, stride, nodes
    )
