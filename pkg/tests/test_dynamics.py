import math
from dataclasses import replace

import numpy as np
import pytest

from viscodelay import (
    MemoryKernel,
    OperatorSpec,
    Scenario,
    Schedule,
    init_state,
    simulate,
    simulate_ode_oracle,
    step,
)
from viscodelay.certificates import DecayCalibrator
from viscodelay.dynamics import delayed_velocity, memory_force
from viscodelay.errors import Diverged, KernelNotExponential

from .conftest import small_scenario


def unit_scenario(pre_history="constant_equal_to_initial", lam=1.0, mu0=0.2, delta=1.0, dt=1 / 64, **kw):
    return Scenario(
        OperatorSpec((lam,)),
        MemoryKernel.exponential(mu0, delta),
        kw.pop("schedule", Schedule.quiet(0.5)),
        [1.0],
        [0.0],
        pre_history=pre_history,
        dt=dt,
        horizon=kw.pop("horizon", 1.0),
        **kw,
    )


class TestInit:
    def test_zero_data(self):
        sc = small_scenario()
        sc = replace(sc, initial_position=np.zeros(3), initial_velocity=np.zeros(3))
        s = init_state(sc)
        assert not s.u.any() and not s.v.any() and not s.eta.any() and not s.delay_buf.any()

    def test_constant_pre_history(self):
        s = init_state(unit_scenario())
        assert np.all(s.eta == 0.0)
        o = init_state(unit_scenario(), backend="ode")
        assert o.w[0] == pytest.approx(0.2, rel=1e-15)

    def test_zero_pre_history(self):
        s = init_state(unit_scenario("zero"))
        assert s.eta[0, 0] == 0.0
        assert np.all(s.eta[0, 1:] == 1.0)
        assert init_state(unit_scenario("zero"), backend="ode").w[0] == 0.0

    def test_callable_pre_history_matches_quadrature(self):
        ph = lambda t: np.cos(np.asarray(t))[:, None]  # noqa: E731
        o = init_state(unit_scenario(ph), backend="ode")
        # int_0^inf 0.2 e^{-s} cos(s) ds = 0.1
        assert o.w[0] == pytest.approx(0.1, abs=1e-4)


class TestMemoryForce:
    def test_elastic_only(self):
        assert memory_force(init_state(unit_scenario()))[0] == pytest.approx(-0.8, rel=1e-12)

    def test_unit_eta(self):
        # u = 0 now, u = -1 in the past: eta = 1 for s > 0
        sc = replace(unit_scenario(lambda t: -np.ones((np.size(t), 1))), initial_position=[0.0])
        s = init_state(sc)
        assert np.all(s.eta[0, 1:] == 1.0)
        assert memory_force(s)[0] == pytest.approx(-0.2, abs=2e-3)

    @pytest.mark.parametrize("pre", ["zero", "constant_equal_to_initial"])
    def test_backends_agree(self, pre):
        sc = small_scenario(pre_history=pre, dt=1 / 256)
        a = memory_force(init_state(sc))
        b = memory_force(init_state(sc, backend="ode"))
        assert np.allclose(a, b, rtol=1e-2, atol=1e-3)


class TestDelay:
    def test_constant_buffer(self):
        sc = replace(small_scenario(), initial_velocity=[0.7, 0.7, 0.7])
        s = init_state(sc)
        assert np.all(delayed_velocity(s) == 0.7)

    def test_after_init_returns_u1(self):
        sc = small_scenario()
        assert np.array_equal(delayed_velocity(init_state(sc)), np.asarray(sc.initial_velocity))

    def test_exact_lookup(self):
        # velocity history v(t) = t e1 from a displacement pre-history t^2/2
        ph = lambda t: np.column_stack([0.5 * np.asarray(t) ** 2, np.zeros(np.size(t))])  # noqa: E731
        sc = Scenario(
            OperatorSpec((1e-12, 1.0)),
            MemoryKernel.exponential(1e-12, 50.0),
            Schedule.quiet(0.5),
            [0.0, 0.0],
            [0.0, 0.0],
            pre_history=ph,
            dt=1 / 64,
            horizon=1.0,
        )
        s = init_state(sc)
        assert delayed_velocity(s)[0] == pytest.approx(-0.5, abs=1e-12)
        # with no force, v stays 0 after t = 0, so at t = 0.5 the buffer tail is v(0)
        for _ in range(32):
            step(s)
        assert delayed_velocity(s)[0] == 0.0

    def test_bit_identical(self):
        sched = Schedule(0.5, [(0.5, 2.0, 1.0)])
        sc = small_scenario(sched, horizon=2.0)
        s = init_state(sc)
        seen = []
        for _ in range(64):
            step(s)
            seen.append(s.v.copy())
        D = s.plan.delay_steps
        for k in range(D, 64):
            while s.n < k + 1:
                step(s)
        # replay: the buffer tail D steps after a step equals that step's velocity exactly
        s2 = init_state(sc)
        for n in range(64):
            step(s2)
            if n + 1 >= D:
                assert np.array_equal(delayed_velocity(s2), seen[n - D] if n >= D else np.asarray(sc.initial_velocity))


class TestStep:
    def test_zero_state_invariant(self):
        sc = replace(small_scenario(Schedule(0.5, [(0.5, 1.0, 3.0)])), initial_position=np.zeros(3), initial_velocity=np.zeros(3))
        s = init_state(sc)
        for _ in range(100):
            step(s)
        assert not s.u.any() and not s.v.any()

    def test_harmonic_oscillator(self):
        sc = unit_scenario(mu0=1e-12, delta=50.0, dt=1 / 256, horizon=2 * math.pi)
        tr = simulate(sc)
        err = np.max(np.abs(tr.snapshot_u[:, 0] - np.cos(tr.snapshot_times)))
        assert err < 2 * (1 / 256) ** 2

    def test_mode_decoupling(self):
        sched = Schedule(0.5, [(0.5, 1.0, 2.0), (1.0, 0.5, 0.5)])
        sc = small_scenario(sched, horizon=3.0)
        full = simulate(sc)
        u0 = np.asarray(sc.initial_position).copy()
        u1 = np.asarray(sc.initial_velocity).copy()
        u0[1] = u1[1] = 0.0
        cut = simulate(replace(sc, initial_position=u0, initial_velocity=u1))
        assert np.all(cut.snapshot_u[:, 1] == 0.0) and np.all(cut.snapshot_v[:, 1] == 0.0)
        assert np.allclose(cut.snapshot_u[:, [0, 2]], full.snapshot_u[:, [0, 2]], rtol=0, atol=1e-13)

    @pytest.mark.parametrize("backend", ["dafermos", "ode"])
    def test_linearity(self, backend):
        sched = Schedule(0.5, [(0.5, 1.0, 2.0)], periodic=True)
        sc = small_scenario(sched, horizon=3.0)
        gamma = 3.7
        a = simulate(sc, backend=backend)
        b = simulate(sc.scaled(gamma), backend=backend)
        assert np.allclose(b.snapshot_u, gamma * a.snapshot_u, rtol=1e-12, atol=0)
        for col in a.energy:
            assert np.allclose(b.energy[col], gamma**2 * a.energy[col], rtol=1e-12, atol=1e-300)

    @pytest.mark.parametrize("nodes", [None, 120])
    def test_grid_identity(self, nodes):
        sc = small_scenario(Schedule(0.5, [(0.5, 1.0, 1.0)]), horizon=3.0, history_nodes=nodes)
        tr = simulate(sc)
        s = init_state(sc)
        for _ in range(tr.times.size - 1):
            step(s)
        m = s.plan.problem.history_stride
        idx = tr.snapshot_times.size - 1 - np.arange(s.s_grid.size) * m
        ok = idx >= 0
        expected = s.u[:, None] - tr.snapshot_u[idx[ok]].T
        assert np.allclose(s.eta[:, ok], expected, rtol=0, atol=1e-12 * np.abs(expected).max())

    def test_determinism(self):
        sc = small_scenario(Schedule(0.5, [(0.5, 1.0, 2.0)], periodic=True), horizon=3.0)
        a, b = simulate(sc), simulate(sc)
        for col in a.energy:
            assert np.array_equal(a.energy[col], b.energy[col])


class TestSimulate:
    def test_horizon_zero(self):
        tr = simulate(small_scenario(horizon=0.0))
        assert tr.times.tolist() == [0.0] and len(tr.E_S) == 1

    def test_times_start_at_zero_and_increase(self):
        tr = simulate(small_scenario(), stride=5)
        assert tr.times[0] == 0.0 and np.all(np.diff(tr.times) > 0)
        assert tr.snapshot_times[0] == 0.0 and tr.snapshot_times[-1] == tr.times[-1]

    def test_quiet_dissipation(self):
        tr = simulate(small_scenario(horizon=5.0))
        assert np.max(np.diff(tr.E_S)) <= 1e-12 * tr.E_S[0]

    def test_large_bound_grows(self):
        sc = small_scenario(Schedule(0.5, [(0.5, 10.0, 50.0)]), horizon=3.0)
        try:
            tr = simulate(sc)
        except Diverged as exc:
            tr = exc.trajectory
        assert tr.E_S[-1] > tr.E_S[0]

    def test_diverged_carries_partial_trajectory(self):
        sc = small_scenario(Schedule(0.5, [(0.5, 40.0, 50.0)]), horizon=40.0)
        with pytest.raises(Diverged) as info:
            simulate(sc)
        tr = info.value.trajectory
        assert tr.diverged and tr.E_S[-1] > 1e12 * tr.E_S[0]


class TestOracle:
    def test_needs_exponential_kernel(self):
        s = np.linspace(0, 30, 301)
        sc = replace(small_scenario(), kernel=MemoryKernel.tabulated(s, 0.2 * np.exp(-s), 1.0))
        with pytest.raises(KernelNotExponential):
            simulate_ode_oracle(sc)

    def test_zero_data(self):
        sc = replace(small_scenario(), initial_position=np.zeros(3), initial_velocity=np.zeros(3))
        tr = simulate_ode_oracle(sc)
        assert not tr.E_S.any()
        assert tr.dt == sc.dt / 2

    def test_matches_dafermos(self):
        sc = small_scenario(horizon=2.0, dt=1 / 128)
        a = simulate(sc)
        b = simulate_ode_oracle(sc)
        gap = np.abs(a.E_S - b.E_S[::2]) / a.E_S[0]
        assert gap.max() < 1e-3

    def test_single_mode_decays(self):
        tr = simulate_ode_oracle(unit_scenario(dt=1 / 32, horizon=30.0))
        est = DecayCalibrator().fit(tr.times, tr.E_S)
        assert est.alpha_ > 0
