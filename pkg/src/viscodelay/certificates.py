"""Decay constants, cycle factors, stability verdicts and decay envelopes.

The constants ``C`` and ``alpha`` of the no-feedback estimate
``E_S(t) <= C exp(-alpha t) E_S(0)`` are not available in closed form.
:class:`DecayCalibrator` estimates them from a simulated run with zero
feedback; every verdict built on calibrated constants is a calibrated
certificate, and user-supplied constants can be passed instead.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_consistent_length, check_is_fitted, column_or_1d

from .errors import (
    IntervalTooShort,
    NoContraction,
    NotDecaying,
    NotPeriodicLengths,
    ShortDelayInapplicable,
    ValidationError,
    ZeroInitialEnergy,
)
from .model import ANTI_DAMPING, GeometricSchedule, validate_schedule

VARIANTS = ("general", "short_delay", "anti_damp")
# a factor within this distance of 1 counts as 1: no decay is guaranteed
TIE_TOL = 1e-12
DEFAULT_THRESHOLD = 1e-6


@dataclass(frozen=True)
class DecayConstants:
    C: float
    alpha: float
    fit_r2: float = float("nan")
    source: str = "user_supplied"
    T0: float = field(init=False)

    def __post_init__(self):
        if not self.C > 1:
            raise ValidationError(f"C must exceed 1, got {self.C}")
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be positive, got {self.alpha}")
        if self.source not in ("calibrated", "user_supplied"):
            raise ValidationError(f"unknown constants source {self.source!r}")
        object.__setattr__(self, "T0", math.log(self.C) / self.alpha)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(
            float(d["C"]),
            float(d["alpha"]),
            float(d.get("fit_r2", float("nan"))),
            d.get("source", "user_supplied"),
        )


class DecayCalibrator(BaseEstimator):
    """Fit ``E_S(t) <= C exp(-alpha t) E_S(0)`` to a zero-feedback energy record.

    ``alpha`` is minus the slope of a least-squares line through
    ``log E_S`` on ``[burn_in, t_end]``.  ``C`` is the smallest constant that
    keeps the envelope above every sample, floored by the fitted intercept
    and by ``1 + eps``.

    Parameters
    ----------
    burn_in : float
        Samples before this time are left out of the regression (they still
        count for ``C``).
    eps : float
        Margin that keeps ``C`` strictly above 1.
    """

    def __init__(self, burn_in=0.0, eps=1e-6):
        self.burn_in = burn_in
        self.eps = eps

    def fit(self, t, energy, initial_energy=None):
        t = column_or_1d(t).astype(float)
        energy = column_or_1d(energy).astype(float)
        check_consistent_length(t, energy)
        e0 = float(energy[0]) if initial_energy is None else float(initial_energy)
        if not e0 > 0:
            raise ZeroInitialEnergy("calibration needs E_S(0) > 0")
        keep = (t >= self.burn_in) & (energy > 0)
        if keep.sum() < 2:
            raise NotDecaying("fewer than two positive samples after burn-in")
        fit = stats.linregress(t[keep], np.log(energy[keep]))
        if not fit.slope < 0:
            raise NotDecaying(f"fitted log-energy slope {fit.slope:g} is not negative")
        alpha = -float(fit.slope)
        pos = energy > 0
        sup = float(np.max(energy[pos] * np.exp(alpha * t[pos])) / e0)
        C = max(math.exp(fit.intercept - math.log(e0)), sup, 1 + self.eps)
        self.slope_ = fit.slope
        self.intercept_ = fit.intercept
        self.alpha_ = alpha
        self.C_ = C
        self.T0_ = math.log(C) / alpha
        self.fit_r2_ = float(fit.rvalue**2)
        self.constants_ = DecayConstants(C, alpha, self.fit_r2_, "calibrated")
        return self

    def predict(self, t):
        """Envelope ratio ``C exp(-alpha t)``."""
        check_is_fitted(self, "constants_")
        return self.C_ * np.exp(-self.alpha_ * np.asarray(t, dtype=float))

    def score(self, t, energy):
        """R^2 of the log-linear fit on new data."""
        check_is_fitted(self, "constants_")
        y = np.log(column_or_1d(energy))
        pred = self.intercept_ + self.slope_ * column_or_1d(t)
        return 1 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2)


def calibrate_decay(trajectory, burn_in=0.0, eps=1e-6) -> DecayConstants:
    """Decay constants from a zero-feedback trajectory."""
    est = DecayCalibrator(burn_in=burn_in, eps=eps).fit(trajectory.times, trajectory.E_S)
    return est.constants_


# ---------------------------------------------------------------------------
# per-cycle quantities
# ---------------------------------------------------------------------------


def observability_factor(constants: DecayConstants, T_even: float) -> float:
    """Contraction ``C exp(-alpha T_even)`` of E_S across an off interval."""
    if not T_even > 0:
        raise ValidationError("off interval length must be positive")
    c = constants.C * math.exp(-constants.alpha * T_even)
    if not T_even > constants.T0:
        raise IntervalTooShort(
            f"off interval {T_even:g} <= T0 = {constants.T0:g} gives c = {c:g} >= 1"
        )
    return c


def cycle_factor(variant: str, c: float, bound: float, T_odd: float, tau: float | None = None) -> float:
    """Growth-times-contraction multiplier of E_S over one off+on cycle."""
    if variant not in VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}")
    if not c > 0 or bound < 0 or not T_odd > 0:
        raise ValidationError("need c > 0, bound >= 0 and T_odd > 0")
    x = bound * T_odd
    if variant == "general":
        return math.exp(2 * x) * (c + x)
    if variant == "short_delay":
        if tau is None or T_odd > tau:
            raise ShortDelayInapplicable(f"short-delay factor needs T_odd <= tau (T_odd = {T_odd:g})")
        # exp(x) (c + 1 - exp(-x))
        return math.exp(x) * c + math.expm1(x)
    return math.exp(2 * x) * c


def _variant_for(schedule, T_odd, forced):
    if forced != "auto":
        return forced
    if schedule.mode == ANTI_DAMPING:
        return "anti_damp"
    return "short_delay" if T_odd <= schedule.tau else "general"


@dataclass(frozen=True)
class CycleCertificate:
    index: int
    T_even: float
    T_odd: float
    bound: float
    c: float
    factor: float
    variant: str
    contracting: bool  # T_even > T0


def _cycles(schedule, constants, variant="auto", n_cycles=None):
    """Per-cycle factors; cycles with T_even <= T0 use c = 1 (monotone off interval)."""
    if isinstance(schedule, GeometricSchedule):
        sched = validate_schedule(schedule.materialize(n_cycles))
    else:
        sched = validate_schedule(schedule)
        cyc = sched.cycles
        if n_cycles is not None and sched.periodic and n_cycles > len(cyc):
            cyc = cyc + (cyc[-1],) * (n_cycles - len(cyc))
        elif n_cycles is not None:
            cyc = cyc[:n_cycles]
        sched = validate_schedule(replace(sched.schedule, cycles=cyc))
    out = []
    for n, cy in enumerate(sched.cycles):
        var = _variant_for(sched, cy.T_odd, variant)
        try:
            c = observability_factor(constants, cy.T_even)
            contracting = True
        except IntervalTooShort:
            c, contracting = 1.0, False
        f = cycle_factor(var, c, cy.bound, cy.T_odd, sched.tau)
        out.append(CycleCertificate(n, cy.T_even, cy.T_odd, cy.bound, c, f, var, contracting))
    return sched, out


@dataclass(frozen=True)
class ExponentialCertificate:
    d: float
    beta: float
    gamma: float
    variant: str
    period: float

    def bound(self, t):
        """Certified ratio bound gamma exp(-beta t)."""
        return self.gamma * np.exp(-self.beta * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class Envelope:
    """Certified upper bounds on E_S(t)/E_S(0).

    ``times``/``values`` hold t = 0 and every cycle end t_{2n+2};
    ``pieces`` are piecewise-constant intra-cycle bounds ``(start, end, bound)``.
    """

    times: tuple[float, ...]
    values: tuple[float, ...]
    pieces: tuple[tuple[float, float, float], ...]

    @property
    def at_cycle_ends(self):
        return self.values[1:]

    def bound_at(self, t):
        for a, b, v in self.pieces:
            if a <= t < b:
                return v
        return self.values[-1] if t >= self.times[-1] else 1.0


@dataclass
class CertificateReport:
    constants: DecayConstants
    cycles: list[CycleCertificate]
    partial_log_sums: list[float]
    asymptotic_verdict: str
    reason: str
    exponential: ExponentialCertificate | None = None
    exponential_reason: str = ""
    envelope: Envelope | None = None
    window_products: list[float] = field(default_factory=list)
    comparison: list[dict] = field(default_factory=list)

    @property
    def offending_cycles(self):
        return [c.index for c in self.cycles if not c.contracting]

    def to_dict(self):
        env = self.envelope
        return {
            "certificate_kind": (
                "calibrated-constants certificate"
                if self.constants.source == "calibrated"
                else "user-supplied constants"
            ),
            "constants": self.constants.to_dict(),
            "cycles": [asdict(c) for c in self.cycles],
            "partial_log_sums": list(self.partial_log_sums),
            "asymptotic_verdict": self.asymptotic_verdict,
            "reason": self.reason,
            "offending_cycles": self.offending_cycles,
            "exponential": None if self.exponential is None else asdict(self.exponential),
            "exponential_reason": self.exponential_reason,
            "envelope": None
            if env is None
            else {
                "times": list(env.times),
                "values": list(env.values),
                "pieces": [list(p) for p in env.pieces],
            },
            "window_products": list(self.window_products),
            "comparison": list(self.comparison),
        }


def _log_sums(cycles):
    return list(np.cumsum([math.log(c.factor) for c in cycles])) if cycles else []


def check_asymptotic(
    schedule, constants, variant="auto", threshold=DEFAULT_THRESHOLD, n_cycles=None
) -> CertificateReport:
    """Asymptotic-stability verdict from the cycle factors.

    * geometric schedules: summable ``b T`` with contracting off intervals
      certifies; constant bounds reduce to the periodic rule;
    * periodic schedules: certified iff the repeating cycle's factor is < 1;
    * finite schedules: certified iff the final envelope value is at most
      ``threshold``.

    Any off interval not longer than T0 makes the verdict inconclusive.
    ``n_cycles`` extends the per-cycle table of periodic and geometric
    schedules; it never truncates a finite schedule.
    """
    if isinstance(schedule, GeometricSchedule):
        n_cycles = n_cycles or schedule.n_cycles
    elif not validate_schedule(schedule).periodic:
        n_cycles = None
    sched, cycles = _cycles(schedule, constants, variant, n_cycles)
    sums = _log_sums(cycles)

    def report(verdict, reason):
        return CertificateReport(constants, cycles, sums, verdict, reason)

    if not cycles:
        return report("certified", "feedback identically zero: E_S <= C exp(-alpha t) E_S(0)")
    short = [c.index for c in cycles if not c.contracting]
    if short:
        return report("inconclusive", f"off intervals not longer than T0 = {constants.T0:g} in cycles {short}")

    if isinstance(schedule, GeometricSchedule):
        if schedule.ratio < 1:
            return report(
                "certified",
                "sum of b T converges and sum of log c_n diverges to -infinity",
            )
        if schedule.ratio > 1:
            return report("not_certified", "bounds grow geometrically; factors diverge")
        factor = cycles[-1].factor
    elif sched.periodic:
        factor = cycles[-1].factor
    else:
        final = math.exp(sums[-1])
        if final <= threshold:
            return report("certified", f"final envelope {final:.3g} <= threshold {threshold:g}")
        return report("not_certified", f"final envelope {final:.3g} > threshold {threshold:g}")

    if factor < 1 - TIE_TOL:
        return report("certified", f"repeating cycle factor {factor:.6g} < 1")
    return report("not_certified", f"repeating cycle factor {factor:.6g} >= 1: no decay guaranteed")


def check_exponential(schedule, constants, variant="auto") -> ExponentialCertificate:
    """Exponential rate for schedules with constant off/on lengths."""
    if isinstance(schedule, GeometricSchedule):
        base = validate_schedule(schedule.materialize(1))
        T_star, T_tilde = schedule.T_even, schedule.T_odd
        if schedule.ratio > 1:
            raise NoContraction("bounds grow without limit: sup of the factors is infinite")
        bounds = [schedule.b0]
    else:
        base = validate_schedule(schedule)
        if not base.cycles:
            raise NotPeriodicLengths("schedule has no cycles")
        T_star, T_tilde = base.cycles[0].T_even, base.cycles[0].T_odd
        for cy in base.cycles:
            if not (math.isclose(cy.T_even, T_star, rel_tol=1e-12) and math.isclose(cy.T_odd, T_tilde, rel_tol=1e-12)):
                raise NotPeriodicLengths("off/on lengths vary between cycles")
        bounds = [cy.bound for cy in base.cycles]
    c = observability_factor(constants, T_star)
    var = _variant_for(base, T_tilde, variant)
    factors = [cycle_factor(var, c, b, T_tilde, base.tau) for b in bounds]
    d = max(factors)
    if not d < 1 - TIE_TOL:
        raise NoContraction(f"sup of cycle factors d = {d:.6g} is not < 1")
    period = T_star + T_tilde
    beta = -math.log(d) / period
    gamma = constants.C * math.exp(2 * max(bounds) * T_tilde) / d
    return ExponentialCertificate(d, beta, gamma, var, period)


def decay_envelope(schedule, constants, variant="auto", n_cycles=None) -> Envelope:
    """Running products of cycle factors plus intra-cycle bounds."""
    if n_cycles is None and isinstance(schedule, GeometricSchedule):
        n_cycles = schedule.n_cycles
    sched, cycles = _cycles(schedule, constants, variant, n_cycles)
    times, values, pieces = [0.0], [1.0], []
    t, U = 0.0, 1.0
    for cy in cycles:
        pieces.append((t, t + cy.T_even, U))
        t += cy.T_even
        pieces.append((t, t + cy.T_odd, U * cy.factor))
        t += cy.T_odd
        U *= cy.factor
        times.append(t)
        values.append(U)
    return Envelope(tuple(times), tuple(values), tuple(pieces))


def window_products(factors, window):
    """Products of the factors over consecutive blocks of ``window`` cycles."""
    f = list(factors)
    return [float(np.prod(f[i : i + window])) for i in range(0, len(f) - window + 1, window)]


def compare_with_trajectory(envelope: Envelope, trajectory, slack=1.1):
    """Measured E_S(t_{2n+2})/E_S(0) against the envelope at every cycle end in range."""
    e0 = trajectory.E_S[0]
    rows = []
    t_end = trajectory.times[-1]
    for n, (t, bound) in enumerate(zip(envelope.times[1:], envelope.values[1:])):
        if t > t_end + 0.5 * trajectory.dt:
            break
        measured = float(trajectory.value_at(t)) / e0
        rows.append({"cycle": n, "t": t, "measured": measured, "envelope": bound, "ok": measured <= bound * slack})
    return rows


def certify(schedule, constants, variant="auto", threshold=DEFAULT_THRESHOLD, n_cycles=None, window=2):
    """Full report: asymptotic verdict, exponential rate if applicable, envelope."""
    report = check_asymptotic(schedule, constants, variant, threshold, n_cycles)
    try:
        report.exponential = check_exponential(schedule, constants, variant)
        report.exponential_reason = "constant lengths with d < 1"
    except (NotPeriodicLengths, NoContraction, IntervalTooShort) as exc:
        report.exponential_reason = f"{type(exc).__name__}: {exc}"
    report.envelope = decay_envelope(schedule, constants, variant, n_cycles)
    if window and len(report.cycles) >= window:
        report.window_products = window_products([c.factor for c in report.cycles], window)
    return report
