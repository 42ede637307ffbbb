import json
import math

import numpy as np
import pytest

from viscodelay import (
    DecayCalibrator,
    DecayConstants,
    GeometricSchedule,
    Schedule,
    check_asymptotic,
    check_exponential,
    certify,
    cycle_factor,
    decay_envelope,
    observability_factor,
)
from viscodelay.certificates import window_products
from viscodelay.errors import (
    IntervalTooShort,
    NoContraction,
    NotDecaying,
    NotPeriodicLengths,
    ShortDelayInapplicable,
    ValidationError,
    ZeroInitialEnergy,
)

TIE_C = math.exp(-0.5) - 0.25
# off length giving c = TIE_C for C = 2, alpha = 1/2
TIE_T = 2 * math.log(2 / TIE_C)
TWO_HALF = DecayConstants(2.0, 0.5)


def tie_schedule(**kw):
    """Constant cycles with b T = 1/4, T_odd = tau, c = exp(-1/2) - 1/4."""
    return Schedule.repeating(0.5, TIE_T, 0.5, 0.5, **kw)


class TestCalibration:
    def test_synthetic(self):
        t = np.linspace(0, 20, 2001)
        est = DecayCalibrator().fit(t, 2 * np.exp(-0.5 * t) * 3.0, initial_energy=3.0)
        assert est.C_ == pytest.approx(2.0, rel=1e-12)
        assert est.alpha_ == pytest.approx(0.5, rel=1e-12)
        assert est.T0_ == pytest.approx(2 * math.log(2), rel=1e-12)
        assert est.constants_.source == "calibrated"
        assert np.allclose(est.predict([0.0, 2.0]), [2.0, 2 * math.exp(-1)])
        assert est.score(t, 6 * np.exp(-0.5 * t)) == pytest.approx(1.0)

    def test_envelope_covers_samples(self):
        t = np.linspace(0, 20, 401)
        e = np.exp(-0.3 * t) * (1.5 + np.cos(3 * t))
        est = DecayCalibrator().fit(t, e)
        assert np.all(e <= est.predict(t) * e[0] * (1 + 1e-12))

    def test_constant_energy(self):
        with pytest.raises(NotDecaying):
            DecayCalibrator().fit(np.arange(10.0), np.ones(10))

    def test_zero_energy(self):
        with pytest.raises(ZeroInitialEnergy):
            DecayCalibrator().fit(np.arange(10.0), np.zeros(10))

    def test_burn_in_excludes_transient(self):
        t = np.linspace(0, 20, 401)
        e = np.where(t < 2, 1.0, np.exp(-0.4 * (t - 2)))
        est = DecayCalibrator(burn_in=2.0).fit(t, e)
        assert est.alpha_ == pytest.approx(0.4, rel=1e-10)

    def test_get_params(self):
        assert DecayCalibrator(burn_in=1.5).get_params() == {"burn_in": 1.5, "eps": 1e-6}

    def test_default_wave(self, calibrated):
        assert calibrated.alpha > 0 and calibrated.fit_r2 >= 0.99
        assert calibrated.T0 == pytest.approx(math.log(calibrated.C) / calibrated.alpha)


class TestConstants:
    @pytest.mark.parametrize("C, alpha", [(1.0, 0.5), (2.0, 0.0), (0.5, 1.0)])
    def test_invalid(self, C, alpha):
        with pytest.raises(ValidationError):
            DecayConstants(C, alpha)

    def test_roundtrip(self):
        d = DecayConstants(2.0, 0.5, 0.99, "calibrated").to_dict()
        assert DecayConstants.from_dict(json.loads(json.dumps(d))) == DecayConstants(2.0, 0.5, 0.99, "calibrated")


class TestObservability:
    def test_boundary(self):
        with pytest.raises(IntervalTooShort):
            observability_factor(TWO_HALF, 2 * math.log(2))

    def test_quarter(self):
        assert observability_factor(TWO_HALF, 4 * math.log(2)) == pytest.approx(0.5, rel=1e-15)

    def test_limit(self):
        assert observability_factor(TWO_HALF, 1e3) < 1e-200

    def test_equivalence_random(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            cons = DecayConstants(1 + rng.uniform(1e-3, 20), rng.uniform(1e-3, 5))
            T = rng.uniform(1e-3, 3 * cons.T0)
            c = cons.C * math.exp(-cons.alpha * T)
            if T > cons.T0:
                assert observability_factor(cons, T) == c < 1
            else:
                assert c >= 1 - 1e-12
                with pytest.raises(IntervalTooShort):
                    observability_factor(cons, T)

    def test_decreasing_in_length(self):
        Ts = np.linspace(1.5, 30, 200)
        cs = [observability_factor(TWO_HALF, T) for T in Ts]
        assert np.all(np.diff(cs) < 0)


class TestCycleFactor:
    def test_general_tie(self):
        assert cycle_factor("general", TIE_C, 0.5, 0.5, 0.5) == pytest.approx(1.0, abs=1e-12)

    def test_short_delay_tie(self):
        f = cycle_factor("short_delay", TIE_C, 0.5, 0.5, 0.5)
        oracle = math.exp(0.25) * (math.exp(-0.5) - 0.25 + 1 - math.exp(-0.25))
        assert f == pytest.approx(oracle, rel=1e-14)
        assert 0.74 < f < 0.75

    def test_anti_damp_zero_rate(self):
        assert cycle_factor("anti_damp", 0.5, 0.0, 1.0) == 0.5

    def test_anti_damp(self):
        assert cycle_factor("anti_damp", 0.4, 0.25, 1.0) == pytest.approx(math.exp(0.5) * 0.4, rel=1e-15)

    def test_short_delay_needs_short_on_interval(self):
        with pytest.raises(ShortDelayInapplicable):
            cycle_factor("short_delay", 0.5, 1.0, 1.0, 0.5)

    def test_unknown_variant(self):
        with pytest.raises(ValidationError):
            cycle_factor("mystery", 0.5, 1.0, 1.0)

    def test_short_below_general_random(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            c = rng.uniform(1e-6, 1.0)
            tau = rng.uniform(0.01, 5.0)
            T = rng.uniform(1e-6, 1.0) * tau
            b = rng.uniform(1e-6, 10.0) / T * rng.uniform(1e-4, 1.0)
            assert cycle_factor("short_delay", c, b, T, tau) < cycle_factor("general", c, b, T, tau)

    def test_monotone_in_bound_random(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            c, T = rng.uniform(1e-6, 1.0), rng.uniform(0.01, 1.0)
            b1, b2 = np.sort(rng.uniform(0, 5, 2))
            for var in ("general", "short_delay", "anti_damp"):
                assert cycle_factor(var, c, b1, T, 1.0) <= cycle_factor(var, c, b2, T, 1.0)


class TestAsymptotic:
    def test_tie_general(self):
        rep = check_asymptotic(tie_schedule(), TWO_HALF, variant="general")
        assert rep.asymptotic_verdict == "not_certified"

    def test_tie_short_delay(self):
        rep = check_asymptotic(tie_schedule(), TWO_HALF, variant="short_delay")
        assert rep.asymptotic_verdict == "certified"
        assert check_asymptotic(tie_schedule(), TWO_HALF).cycles[0].variant == "short_delay"

    def test_geometric_summable(self):
        g = GeometricSchedule(0.5, 3.0, 1.0, 4.0, 0.5)
        rep = check_asymptotic(g, TWO_HALF)
        assert rep.asymptotic_verdict == "certified"
        assert len(rep.cycles) == g.n_cycles

    def test_geometric_growing(self):
        assert check_asymptotic(GeometricSchedule(0.5, 3.0, 1.0, 0.1, 2.0), TWO_HALF).asymptotic_verdict == "not_certified"

    def test_short_off_interval_inconclusive(self):
        sched = Schedule(0.5, [(3.0, 0.5, 0.1), (1.0, 0.5, 0.1), (3.0, 0.5, 0.1)])
        rep = check_asymptotic(sched, TWO_HALF)
        assert rep.asymptotic_verdict == "inconclusive"
        assert rep.offending_cycles == [1]

    def test_finite_threshold(self):
        sched = Schedule(0.5, [(20.0, 0.5, 1e-3)] * 4)
        assert check_asymptotic(sched, TWO_HALF).asymptotic_verdict == "certified"
        assert check_asymptotic(sched, TWO_HALF, threshold=1e-30).asymptotic_verdict == "not_certified"

    def test_partial_log_sums(self):
        sched = Schedule(0.5, [(3.0, 0.5, 0.1), (4.0, 0.25, 0.2)])
        rep = check_asymptotic(sched, TWO_HALF)
        logs = np.cumsum([math.log(c.factor) for c in rep.cycles])
        assert np.allclose(rep.partial_log_sums, logs, rtol=1e-15)

    def test_empty_schedule(self):
        assert check_asymptotic(Schedule.quiet(), TWO_HALF).asymptotic_verdict == "certified"


class TestExponential:
    def test_half_factor(self):
        # anti-damping: C = 2, alpha = 2 ln 2, T* = 1.5 -> c = 1/4; k T~ = ln 2 / 2 -> d = 1/2
        cons = DecayConstants(2.0, 2 * math.log(2))
        sched = Schedule.repeating(0.5, 1.5, 0.5, math.log(2), mode="anti_damping")
        ex = check_exponential(sched, cons)
        assert ex.d == pytest.approx(0.5, rel=1e-14)
        assert ex.beta == pytest.approx(math.log(2) / 2, rel=1e-14)
        assert ex.gamma == pytest.approx(2 * math.exp(2 * math.log(2) * 0.5) / 0.5, rel=1e-14)

    def test_tie_general(self):
        with pytest.raises(NoContraction):
            check_exponential(tie_schedule(), TWO_HALF, variant="general")

    def test_anti_damp_example(self):
        cons = DecayConstants(2.0, 0.5)
        T_star = 2 * math.log(2 / 0.4)  # c = 0.4
        ex = check_exponential(Schedule.repeating(0.5, T_star, 1.0, 0.25, mode="anti_damping"), cons)
        assert ex.d == pytest.approx(math.exp(0.5) * 0.4, rel=1e-14)
        assert ex.d == pytest.approx(0.6595, abs=1e-4)
        assert ex.d == pytest.approx(cycle_factor("anti_damp", 0.4, 0.25, 1.0), rel=1e-14)

    def test_d_is_max_factor(self):
        sched = Schedule(0.5, [(4.0, 0.5, b) for b in (0.1, 0.3, 0.2)])
        ex = check_exponential(sched, TWO_HALF)
        rep = check_asymptotic(sched, TWO_HALF)
        assert ex.d == max(c.factor for c in rep.cycles)

    def test_varying_lengths(self):
        with pytest.raises(NotPeriodicLengths):
            check_exponential(Schedule(0.5, [(4.0, 0.5, 0.1), (5.0, 0.5, 0.1)]), TWO_HALF)

    def test_short_off(self):
        with pytest.raises(IntervalTooShort):
            check_exponential(Schedule.repeating(0.5, 1.0, 0.5, 0.1), TWO_HALF)


class TestEnvelope:
    def test_geometric_product(self):
        cons = DecayConstants(2.0, 0.5)
        T = 6 * math.log(2)  # c = 1/4
        sched = Schedule.repeating(0.5, T, 1.0, math.log(2) / 2, mode="anti_damping")
        env = decay_envelope(sched, cons, n_cycles=3)
        assert np.allclose(env.at_cycle_ends, [0.5, 0.25, 0.125], rtol=1e-14)
        assert env.times[0] == 0.0 and env.values[0] == 1.0

    def test_tie_single_cycle(self):
        env = decay_envelope(Schedule(0.5, [(TIE_T, 0.5, 0.5)]), TWO_HALF, variant="general")
        assert env.values[-1] == pytest.approx(1.0, abs=1e-12)

    def test_empty(self):
        env = decay_envelope(Schedule.quiet(), TWO_HALF)
        assert env.values == (1.0,) and env.times == (0.0,)

    def test_pieces(self):
        sched = Schedule(0.5, [(3.0, 0.5, 0.1), (4.0, 0.25, 0.2)])
        env = decay_envelope(sched, TWO_HALF)
        assert [p[:2] for p in env.pieces] == [(0.0, 3.0), (3.0, 3.5), (3.5, 7.5), (7.5, 7.75)]
        assert env.pieces[0][2] == 1.0 and env.pieces[2][2] == env.values[1]
        assert env.bound_at(3.2) == env.values[1]

    def test_monotone_in_bound(self):
        lo = decay_envelope(Schedule(0.5, [(3.0, 0.5, 0.1), (4.0, 0.5, 0.2)]), TWO_HALF)
        hi = decay_envelope(Schedule(0.5, [(3.0, 0.5, 0.1), (4.0, 0.5, 0.3)]), TWO_HALF)
        assert all(a <= b for a, b in zip(lo.values, hi.values))


class TestReport:
    def test_json_roundtrip(self):
        rep = certify(tie_schedule(), TWO_HALF, n_cycles=4)
        d = json.loads(json.dumps(rep.to_dict()))
        assert d["asymptotic_verdict"] == "certified"
        assert d["exponential"]["variant"] == "short_delay"
        assert len(d["envelope"]["values"]) == 5
        assert d["certificate_kind"] == "user-supplied constants"

    def test_window_products(self):
        assert window_products([0.5, 0.5, 2.0, 0.25, 1.0], 2) == [0.25, 0.5]
        rep = certify(tie_schedule(), TWO_HALF, n_cycles=4, window=2)
        assert len(rep.window_products) == 2
